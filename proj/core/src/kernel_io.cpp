#include "labconv/csv.hpp"
#include "labconv/errors.hpp"
#include "labconv/imputer.hpp"

#include <algorithm>
#include <string>

namespace labconv::imputer {

// Format:
//   target=<lab> M=<int> labs=<lab,lab,...>
//   <lab> <offset> <weight>        one line per (lab, offset), offset in -M..M

void write_kernel(const std::filesystem::path& path, const LearnableKernel2D& kernel) {
    kernel.validate();
    auto out = csv::open_output(path);
    out << "target=" << kernel.target_lab << " M=" << kernel.half_width << " labs=";
    for (std::size_t d = 0; d < kernel.lab_order.size(); ++d) {
        out << (d ? "," : "") << kernel.lab_order[d];
    }
    out << '\n';
    for (std::size_t d = 0; d < kernel.lab_order.size(); ++d) {
        for (int tau = -kernel.half_width; tau <= kernel.half_width; ++tau) {
            out << kernel.lab_order[d] << ' ' << tau << ' '
                << csv::format_double(kernel.at(d, tau)) << '\n';
        }
    }
}

LearnableKernel2D read_kernel(const std::filesystem::path& path) {
    const std::string file = path.string();
    auto in = csv::open_input(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(file, 1, "missing kernel header");
    }
    LearnableKernel2D k;
    bool have_target = false;
    bool have_m = false;
    bool have_labs = false;
    for (auto tok : csv::tokens(line)) {
        if (tok.starts_with("target=")) {
            k.target_lab = std::string(tok.substr(7));
            have_target = true;
        } else if (tok.starts_with("M=")) {
            k.half_width = csv::parse_int(tok.substr(2), file, 1);
            have_m = true;
        } else if (tok.starts_with("labs=")) {
            for (auto lab : csv::split(tok.substr(5))) {
                k.lab_order.emplace_back(lab);
            }
            have_labs = true;
        } else {
            throw ParseError(file, 1, "unknown header field '" + std::string(tok) + "'");
        }
    }
    if (!have_target || !have_m || !have_labs || k.half_width < 1) {
        throw ParseError(file, 1, "header needs target=, M= (>= 1) and labs=");
    }
    const std::size_t taps = k.taps();
    k.weights.assign(k.lab_order.size() * taps, 0.0);
    std::vector<char> seen(k.weights.size(), 0);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto tok = csv::tokens(line);
        if (tok.empty()) {
            continue;
        }
        if (tok.size() != 3) {
            throw ParseError(file, line_no, "expected '<lab> <offset> <weight>'");
        }
        const auto it = std::find(k.lab_order.begin(), k.lab_order.end(), tok[0]);
        if (it == k.lab_order.end()) {
            throw ParseError(file, line_no, "lab '" + std::string(tok[0]) + "' not in header");
        }
        const int offset = csv::parse_int(tok[1], file, line_no);
        if (offset < -k.half_width || offset > k.half_width) {
            throw ParseError(file, line_no, "offset outside [-M, M]");
        }
        const auto idx = static_cast<std::size_t>(it - k.lab_order.begin()) * taps +
                         static_cast<std::size_t>(offset + k.half_width);
        if (seen[idx]) {
            throw ParseError(file, line_no, "duplicate (lab, offset) entry");
        }
        seen[idx] = 1;
        k.weights[idx] = csv::parse_double(tok[2], file, line_no);
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
        throw ParseError(file, line_no, "kernel file is missing weights");
    }
    k.validate();
    return k;
}

void write_kernel(const std::filesystem::path& path, const LearnableKernel1D& kernel,
                  const std::string& lab) {
    write_kernel(path, LearnableKernel2D{lab, kernel.half_width, {lab}, kernel.weights});
}

LearnableKernel1D read_kernel_univariate(const std::filesystem::path& path, std::string* lab) {
    auto k = read_kernel(path);
    if (k.lab_order.size() != 1) {
        throw ParseError(path.string(), 1, "expected a single-lab kernel");
    }
    if (lab != nullptr) {
        *lab = k.target_lab;
    }
    return {k.half_width, std::move(k.weights)};
}

}  // namespace labconv::imputer
