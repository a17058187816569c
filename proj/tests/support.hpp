#pragma once

#include "labconv/diffcore.hpp"
#include "labconv/harness.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testing_support {

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = u(rng);
    }
    return v;
}

inline labconv::diff::Param make_param(const std::string& name, labconv::diff::Shape shape,
                                       std::mt19937_64& rng, double scale = 1.0) {
    const std::size_t n = labconv::diff::shape_size(shape);
    return {name, labconv::diff::Tensor(std::move(shape), random_vector(n, rng, -scale, scale))};
}

/// Fixed random projection so that sum(w * y) is a generic scalar loss.
inline double project(const std::vector<double>& y, const std::vector<double>& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += y[i] * w[i];
    }
    return s;
}

/// Small cohort that runs every pipeline stage in well under a second.
inline labconv::harness::RunConfig tiny_pipeline_config() {
    return labconv::harness::RunConfig::parse(R"(
synth.patients = 400
synth.labs = 3
synth.diseases = 3
synth.latent_dim = 2
synth.threshold = 1.2
imputer.half_width = 4
imputer.epochs = 3
imputer.max_series = 60
cv.bandwidths = 2,6
cv.noise_vars = 0.01,1
cv.folds = 2
predictor.filters = 2
predictor.hidden = 8
predictor.epochs = 2
)");
}

inline std::string file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Relative path -> contents for every regular file under `dir`.
inline std::map<std::string, std::string> tree_bytes(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            out[std::filesystem::relative(e.path(), dir).string()] = file_bytes(e.path());
        }
    }
    return out;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace testing_support
