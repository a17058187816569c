#include "labconv/csv.hpp"
#include "labconv/errors.hpp"
#include "labconv/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

namespace labconv::harness {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kModelColumns{"convnet", "mlp", "logit"};

std::string cell(const std::optional<double>& v) { return v ? csv::format_double(*v) : "NA"; }

void check_auc(const std::optional<double>& v, const std::string& where) {
    if (v && !(*v >= 0.0 && *v <= 1.0)) {
        throw EvaluationError("AUC out of range for " + where);
    }
}

const AucColumn* find_column(const MetricsReport& r, const std::string& model,
                             predictor::InputMode mode) {
    for (const auto& c : r.prediction) {
        if (c.model == model && c.mode == mode) {
            return &c;
        }
    }
    return nullptr;
}

std::optional<double> best_of_modes(const MetricsReport& r, const std::string& model,
                                    std::size_t disease) {
    std::optional<double> best;
    for (const auto& c : r.prediction) {
        if (c.model == model && c.auc[disease] && (!best || *c.auc[disease] > *best)) {
            best = c.auc[disease];
        }
    }
    return best;
}

void write_auc_table(const fs::path& path, const MetricsReport& r,
                     const std::function<std::optional<double>(const std::string&, std::size_t)>&
                         value) {
    auto out = csv::open_output(path);
    out << "disease";
    for (const auto& m : kModelColumns) {
        out << ',' << m;
    }
    out << '\n';
    for (std::size_t d = 0; d < r.diseases.size(); ++d) {
        out << r.diseases[d];
        for (const auto& m : kModelColumns) {
            out << ',' << cell(value(m, d));
        }
        out << '\n';
    }
}

std::string mean_text(const std::vector<std::optional<double>>& values) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (v) {
            s += *v;
            ++n;
        }
    }
    return n ? csv::format_metric(s / static_cast<double>(n)) : "NA";
}

}  // namespace

void write_imputation_table(const fs::path& path, const std::vector<ImputationRow>& rows) {
    auto out = csv::open_output(path);
    out << "lab,gp,kr_univar,convkr_univar,convkr_multivar\n";
    for (const auto& r : rows) {
        for (double v : {r.gp, r.kr_univar, r.convkr_univar, r.convkr_multivar}) {
            if (v < 0.0) {
                throw EvaluationError("negative RMSE for lab " + r.lab);
            }
        }
        out << r.lab << ',' << csv::format_double(r.gp) << ',' << csv::format_double(r.kr_univar)
            << ',' << csv::format_double(r.convkr_univar) << ','
            << csv::format_double(r.convkr_multivar) << '\n';
    }
}

std::vector<ImputationRow> read_imputation_table(const fs::path& path) {
    const std::string file = path.string();
    auto in = csv::open_input(path);
    std::string line;
    if (!std::getline(in, line) ||
        csv::trim(line) != "lab,gp,kr_univar,convkr_univar,convkr_multivar") {
        throw ParseError(file, 1, "unexpected imputation table header");
    }
    std::vector<ImputationRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = csv::split(csv::trim(line));
        if (f.size() != 5) {
            throw ParseError(file, line_no, "expected 5 fields");
        }
        rows.push_back({std::string(f[0]), csv::parse_double(f[1], file, line_no),
                        csv::parse_double(f[2], file, line_no),
                        csv::parse_double(f[3], file, line_no),
                        csv::parse_double(f[4], file, line_no)});
    }
    return rows;
}

std::vector<AucColumn> read_auc_table(const fs::path& path, predictor::InputMode mode,
                                      std::vector<std::string>* diseases) {
    const std::string file = path.string();
    auto in = csv::open_input(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(file, 1, "empty AUC table");
    }
    const auto head = csv::split(csv::trim(line));
    if (head.empty() || head[0] != "disease") {
        throw ParseError(file, 1, "AUC table must start with a disease column");
    }
    std::vector<AucColumn> cols;
    for (std::size_t i = 1; i < head.size(); ++i) {
        cols.push_back({std::string(head[i]), mode, {}});
    }
    if (diseases) {
        diseases->clear();
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = csv::split(csv::trim(line));
        if (f.size() != head.size()) {
            throw ParseError(file, line_no, "expected " + std::to_string(head.size()) + " fields");
        }
        if (diseases) {
            diseases->emplace_back(f[0]);
        }
        for (std::size_t i = 1; i < f.size(); ++i) {
            cols[i - 1].auc.push_back(f[i] == "NA" ? std::nullopt
                                                   : std::optional<double>(csv::parse_double(
                                                         f[i], file, line_no)));
        }
    }
    return cols;
}

void emit_reports(const MetricsReport& report, const RunConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    for (const auto& c : report.prediction) {
        if (c.auc.size() != report.diseases.size()) {
            throw DimensionError("AUC column " + c.model + " has the wrong number of diseases");
        }
        for (const auto& v : c.auc) {
            check_auc(v, c.model);
        }
    }
    write_imputation_table(out_dir / "imputation_rmse.csv", report.imputation);

    write_auc_table(out_dir / "prediction_auc.csv", report,
                    [&](const std::string& m, std::size_t d) { return best_of_modes(report, m, d); });
    std::vector<predictor::InputMode> modes;
    for (const auto& c : report.prediction) {
        if (std::find(modes.begin(), modes.end(), c.mode) == modes.end()) {
            modes.push_back(c.mode);
        }
    }
    for (auto mode : modes) {
        write_auc_table(out_dir / ("prediction_auc_" + std::string(predictor::mode_name(mode)) +
                                   ".csv"),
                        report, [&](const std::string& m, std::size_t d) {
                            const auto* col = find_column(report, m, mode);
                            return col ? col->auc[d] : std::nullopt;
                        });
    }

    auto summary = csv::open_output(out_dir / "summary.txt");
    summary << "Imputation RMSE (test split, leave-one-out)\n";
    summary << "  lab        gp      kr      convkr-uni  convkr-multi\n";
    for (const auto& r : report.imputation) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "  %-9s  %-6s  %-6s  %-10s  %s\n", r.lab.c_str(),
                      csv::format_metric(r.gp).c_str(), csv::format_metric(r.kr_univar).c_str(),
                      csv::format_metric(r.convkr_univar).c_str(),
                      csv::format_metric(r.convkr_multivar).c_str());
        summary << buf;
    }
    summary << "\nPrediction AUC (test split), mean over diseases with both classes\n";
    for (auto mode : modes) {
        summary << "  " << predictor::mode_name(mode) << ':';
        for (const auto& m : kModelColumns) {
            const auto* col = find_column(report, m, mode);
            summary << ' ' << m << '=' << (col ? mean_text(col->auc) : "NA");
        }
        summary << '\n';
    }
    summary << "  best of modes:";
    for (const auto& m : kModelColumns) {
        std::vector<std::optional<double>> best;
        for (std::size_t d = 0; d < report.diseases.size(); ++d) {
            best.push_back(best_of_modes(report, m, d));
        }
        summary << ' ' << m << '=' << mean_text(best);
    }
    summary << "\n\nseed " << report.seed << ", config hash " << report.config_hash << '\n';

    auto manifest = csv::open_output(out_dir / "manifest.txt");
    manifest << "version " << kVersion << '\n';
    manifest << "config_hash " << report.config_hash << '\n';
    manifest << "seed " << report.seed << '\n';
    manifest << "# config\n" << cfg.canonical();
}

}  // namespace labconv::harness
