#include "labconv/csv.hpp"
#include "labconv/errors.hpp"
#include "labconv/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

namespace labconv::harness {

namespace fs = std::filesystem;
using predictor::InputMode;

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{
        "cohort", "prepare", "imputer", "baselines", "imputation_eval", "predictor", "evaluate",
        "report"};
    return names;
}

namespace {

// Seed salts shared with the typed config views live in config.cpp (1..5).
constexpr std::uint64_t kSplitSalt = 2;
constexpr std::uint64_t kCvSalt = 6;

struct Layout {
    fs::path root;
    fs::path data() const { return root / "data"; }
    fs::path prepared() const { return root / "prepared"; }
    fs::path kernels() const { return root / "kernels"; }
    fs::path baselines() const { return root / "baselines"; }
    fs::path models() const { return root / "models"; }
    fs::path scores() const { return root / "scores"; }
    fs::path reports() const { return root / "reports"; }
    fs::path checkpoints() const { return root / "checkpoints"; }
    fs::path marker(const std::string& name) const { return checkpoints() / (name + ".done"); }
};

std::string read_file(const fs::path& path) {
    auto in = csv::open_input(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool marker_matches(const Layout& layout, const std::string& name, const std::string& hash) {
    const auto path = layout.marker(name);
    if (!fs::exists(path)) {
        return false;
    }
    return csv::trim(read_file(path)) == hash;
}

void write_marker(const Layout& layout, const std::string& name, const std::string& hash) {
    auto out = csv::open_output(layout.marker(name));
    out << hash << '\n';
}

std::string uni_kernel_file(const std::string& lab) { return lab + ".uni.kernel"; }
std::string multi_kernel_file(const std::string& lab) { return lab + ".multi.kernel"; }

std::string model_stem(const std::string& model, InputMode mode) {
    return model + "_" + std::string(predictor::mode_name(mode));
}

/// Cohort reloaded from the run directory; every stage starts from disk so a
/// resumed run sees exactly the bytes an uninterrupted run saw.
struct Cohort {
    std::vector<std::string> labs;
    std::vector<std::string> diseases;
    std::vector<cohort::PatientRecord> train, validation, test;
};

std::optional<int> ingest_horizon(const RunConfig& cfg) {
    const auto h = cfg.integer("horizon");
    return h > 0 ? std::optional<int>(static_cast<int>(h)) : std::nullopt;
}

std::vector<cohort::PatientRecord> load_raw(const RunConfig& cfg, const Layout& layout) {
    return cohort::ingest(layout.data() / "observations.csv", layout.data() / "diagnoses.csv",
                          ingest_horizon(cfg));
}

std::map<std::string, std::string> read_split(const fs::path& path) {
    const std::string file = path.string();
    auto in = csv::open_input(path);
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != "person_id,split") {
        throw ParseError(file, 1, "expected header person_id,split");
    }
    std::map<std::string, std::string> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = csv::split(csv::trim(line));
        if (f.size() != 2) {
            throw ParseError(file, line_no, "expected 2 fields");
        }
        out.emplace(std::string(f[0]), std::string(f[1]));
    }
    return out;
}

Cohort load_cohort(const RunConfig& cfg, const Layout& layout) {
    auto raw = load_raw(cfg, layout);
    const auto stats = cohort::read_normalization(layout.prepared() / "normalization.csv");
    const auto split = read_split(layout.prepared() / "split.csv");
    Cohort c;
    c.labs = cohort::lab_codes(raw);
    c.diseases = cohort::disease_codes(raw);
    for (auto& p : cohort::apply_normalization(std::move(raw), stats)) {
        auto it = split.find(p.person_id);
        if (it == split.end()) {
            throw ValidationError("patient " + p.person_id + " missing from split.csv");
        }
        if (it->second == "train") {
            c.train.push_back(std::move(p));
        } else if (it->second == "validation") {
            c.validation.push_back(std::move(p));
        } else {
            c.test.push_back(std::move(p));
        }
    }
    return c;
}

imputer::KernelSet load_kernels(const Layout& layout, const std::vector<std::string>& labs) {
    imputer::KernelSet set;
    for (const auto& lab : labs) {
        set.emplace(lab, imputer::read_kernel(layout.kernels() / multi_kernel_file(lab)));
    }
    return set;
}

template <class T>
std::vector<T> capped(std::vector<T> items, long long cap) {
    if (cap > 0 && items.size() > static_cast<std::size_t>(cap)) {
        items.resize(static_cast<std::size_t>(cap));
    }
    return items;
}

// ---------------------------------------------------------------------------
// Stages

void stage_cohort(const RunConfig& cfg, const Layout& layout, const PipelineOptions& opt) {
    fs::create_directories(layout.data());
    if (opt.data_dir) {
        for (const char* name : {"observations.csv", "diagnoses.csv"}) {
            const auto src = *opt.data_dir / name;
            if (!fs::exists(src)) {
                throw IoError("missing input file '" + src.string() + "'");
            }
            fs::copy_file(src, layout.data() / name, fs::copy_options::overwrite_existing);
        }
        return;
    }
    const auto synth = cohort::synth_generate(cfg.synth());
    cohort::write_observations(layout.data() / "observations.csv", synth.patients);
    cohort::write_diagnoses(layout.data() / "diagnoses.csv", synth.patients);
    cohort::write_ground_truth(layout.data() / "ground_truth.csv", synth.patients, synth.truth);
}

void stage_prepare(const RunConfig& cfg, const Layout& layout) {
    const auto raw = load_raw(cfg, layout);
    const auto split = cohort::split_population(raw, cfg.split_fractions(),
                                                stage_seed(cfg, kSplitSalt));
    std::map<std::string, std::string> where;
    for (const auto& p : split.train) {
        where[p.person_id] = "train";
    }
    for (const auto& p : split.validation) {
        where[p.person_id] = "validation";
    }
    for (const auto& p : split.test) {
        where[p.person_id] = "test";
    }
    auto out = csv::open_output(layout.prepared() / "split.csv");
    out << "person_id,split\n";
    for (const auto& [id, s] : where) {
        out << id << ',' << s << '\n';
    }
    const std::span<const cohort::PatientRecord> fit_on =
        cfg.text("split.normalize_on") == "all" ? std::span(raw) : std::span(split.train);
    cohort::write_normalization(layout.prepared() / "normalization.csv",
                                cohort::fit_normalization(fit_on));
}

void write_kernel_log(const fs::path& path, const imputer::KernelTrainLog& log) {
    auto out = csv::open_output(path);
    out << "epoch,train_loss,validation_mse\n";
    for (std::size_t e = 0; e < log.train_loss.size(); ++e) {
        out << e << ',' << csv::format_double(log.train_loss[e]) << ','
            << csv::format_double(e < log.validation_mse.size() ? log.validation_mse[e] : NAN)
            << '\n';
    }
}

void stage_imputer(const RunConfig& cfg, const Layout& layout, bool verbose) {
    const auto c = load_cohort(cfg, layout);
    const int M = static_cast<int>(cfg.integer("imputer.half_width"));
    const long long cap = cfg.integer("imputer.max_series");
    auto train_cfg = cfg.imputer_training();
    std::vector<cohort::ObservationGrid> grids;
    for (const auto& p : c.train) {
        grids.push_back(cohort::build_full_grid(p, c.labs));
    }
    grids = capped(std::move(grids), cap);
    for (std::size_t d = 0; d < c.labs.size(); ++d) {
        const auto& lab = c.labs[d];
        auto aug = cfg.augment();
        aug.seed += d;
        auto tc = train_cfg;
        tc.sgd.seed += d;
        const auto series = capped(imputer::lab_series(c.train, lab), cap);
        imputer::KernelTrainLog uni_log;
        const auto uni = imputer::train_kernel_univariate(series, M, aug, tc, &uni_log);
        imputer::write_kernel(layout.kernels() / uni_kernel_file(lab), uni, lab);
        write_kernel_log(layout.kernels() / (lab + ".uni.log.csv"), uni_log);

        imputer::KernelTrainLog multi_log;
        const auto multi = imputer::train_kernel_multivariate(grids, lab, M, aug, tc, &multi_log, &uni);
        imputer::write_kernel(layout.kernels() / multi_kernel_file(lab), multi);
        write_kernel_log(layout.kernels() / (lab + ".multi.log.csv"), multi_log);
        if (verbose) {
            std::cerr << "  kernels for " << lab << " trained (best epochs " << uni_log.best_epoch
                      << ", " << multi_log.best_epoch << ")\n";
        }
    }
}

void stage_baselines(const RunConfig& cfg, const Layout& layout) {
    const auto c = load_cohort(cfg, layout);
    const auto grid = cfg.cv_grid();
    const long long cap = cfg.integer("imputer.max_series");
    for (const auto& lab : c.labs) {
        const auto series = capped(imputer::lab_series(c.train, lab), cap);
        for (auto method : {baselines::Method::kr, baselines::Method::gp}) {
            const auto res =
                baselines::cross_validate(series, grid, method, stage_seed(cfg, kCvSalt));
            const std::string stem = std::string(baselines::method_name(method)) + "_" + lab;
            baselines::write_rmse_table(layout.baselines() / ("cv_" + stem + ".csv"), res.table);
            const std::vector<baselines::CvRow> best{res.best};
            baselines::write_rmse_table(layout.baselines() / ("best_" + stem + ".csv"), best);
        }
    }
}

double pooled_rmse(const std::vector<imputer::LooPoint>& points) {
    if (points.empty()) {
        return NAN;
    }
    double s = 0.0;
    for (const auto& p : points) {
        s += (p.prediction - p.target) * (p.prediction - p.target);
    }
    return std::sqrt(s / static_cast<double>(points.size()));
}

void stage_imputation_eval(const RunConfig& cfg, const Layout& layout) {
    const auto c = load_cohort(cfg, layout);
    const double eps = cfg.real("imputer.epsilon");
    const double fallback = cfg.real("imputer.fallback");
    std::vector<cohort::ObservationGrid> grids;
    for (const auto& p : c.test) {
        grids.push_back(cohort::build_full_grid(p, c.labs));
    }
    std::vector<ImputationRow> rows;
    for (const auto& lab : c.labs) {
        ImputationRow row;
        row.lab = lab;
        const auto series = imputer::lab_series(c.test, lab);
        const auto best_gp =
            baselines::read_rmse_table(layout.baselines() / ("best_gp_" + lab + ".csv")).at(0);
        const auto best_kr =
            baselines::read_rmse_table(layout.baselines() / ("best_kr_" + lab + ".csv")).at(0);
        row.gp = baselines::loo_rmse(series, best_gp);
        row.kr_univar = baselines::loo_rmse(series, best_kr);

        std::string kernel_lab;
        const auto uni = imputer::read_kernel_univariate(layout.kernels() / uni_kernel_file(lab),
                                                         &kernel_lab);
        const auto uni2d = imputer::LearnableKernel2D::from_univariate(uni, lab, {lab});
        std::vector<imputer::LooPoint> uni_points;
        for (const auto& s : series) {
            const auto pts =
                imputer::loo_predictions(imputer::series_grid(s, lab), uni2d, false, eps, fallback);
            uni_points.insert(uni_points.end(), pts.begin(), pts.end());
        }
        row.convkr_univar = pooled_rmse(uni_points);

        const auto multi = imputer::read_kernel(layout.kernels() / multi_kernel_file(lab));
        std::vector<imputer::LooPoint> multi_points;
        for (const auto& g : grids) {
            const auto pts = imputer::loo_predictions(g, multi, true, eps, fallback);
            multi_points.insert(multi_points.end(), pts.begin(), pts.end());
        }
        row.convkr_multivar = pooled_rmse(multi_points);
        rows.push_back(row);
    }
    write_imputation_table(layout.reports() / "imputation_rmse.csv", rows);
}

/// Window datasets for one input mode, built from the on-disk cohort and kernels.
struct Splits {
    predictor::Dataset train, validation, test;
};

predictor::Dataset build_dataset(const RunConfig& cfg, const Cohort& c,
                                 const std::vector<cohort::PatientRecord>& patients,
                                 const imputer::KernelSet* kernels, InputMode mode) {
    const auto samples = cohort::emit_samples(patients, static_cast<int>(cfg.integer("stride")),
                                              c.labs, c.diseases);
    std::vector<imputer::ImputedGrid> imputed;
    if (mode != InputMode::raw) {
        imputed = imputer::impute_cohort(samples, *kernels, cfg.real("imputer.epsilon"),
                                         cfg.real("imputer.fallback"));
    }
    return predictor::make_dataset(samples, imputed, mode, c.diseases.size());
}

void write_train_log(const fs::path& path, const predictor::TrainState& state) {
    auto out = csv::open_output(path);
    out << "epoch,learning_rate,train_loss,validation_auc\n";
    for (const auto& e : state.log) {
        out << e.epoch << ',' << csv::format_double(e.learning_rate) << ','
            << csv::format_double(e.train_loss) << ',' << csv::format_double(e.validation_auc)
            << '\n';
    }
    out << "# best_epoch=" << state.best_epoch << '\n';
}

std::vector<InputMode> active_modes(const RunConfig& cfg, const PipelineOptions& opt) {
    const auto all = cfg.modes();
    if (opt.only_modes.empty()) {
        return all;
    }
    std::vector<InputMode> out;
    for (auto m : all) {
        if (std::find(opt.only_modes.begin(), opt.only_modes.end(), m) != opt.only_modes.end()) {
            out.push_back(m);
        }
    }
    if (out.empty()) {
        throw ConfigError("requested input mode is not enabled in predictor.modes");
    }
    return out;
}

/// Trains every (model, mode) pair not already checkpointed. Returns true
/// when anything was (re)trained.
bool stage_predictor(const RunConfig& cfg, const Layout& layout, const PipelineOptions& opt,
                     const std::string& hash, bool force) {
    const auto c = load_cohort(cfg, layout);
    std::optional<imputer::KernelSet> kernels;
    bool trained = false;
    for (auto mode : active_modes(cfg, opt)) {
        std::vector<std::string> todo;
        for (const auto& model : cfg.models()) {
            if (force || !marker_matches(layout, "predictor_" + model_stem(model, mode), hash)) {
                todo.push_back(model);
            }
        }
        if (todo.empty()) {
            continue;
        }
        if (mode != InputMode::raw && !kernels) {
            kernels = load_kernels(layout, c.labs);
        }
        const auto* kp = kernels ? &*kernels : nullptr;
        const auto train_set = build_dataset(cfg, c, c.train, kp, mode);
        const auto val_set = build_dataset(cfg, c, c.validation, kp, mode);
        const auto sgd = cfg.predictor_sgd();
        for (const auto& model : todo) {
            const std::string stem = model_stem(model, mode);
            if (opt.verbose) {
                std::cerr << "  training " << stem << " on " << train_set.size() << " windows\n";
            }
            if (model == "logit") {
                auto res = predictor::train_logit_max(train_set, val_set, mode, sgd);
                predictor::save_logit(layout.models() / (stem + ".logit"), res.model);
                write_train_log(layout.models() / (stem + ".log.csv"), res.state);
            } else {
                const auto kind = predictor::parse_kind(model);
                const auto pc = cfg.predictor_config(mode, c.labs.size(), c.diseases.size());
                auto res = predictor::train(kind, pc, train_set, val_set, sgd);
                res.model.save(layout.models() / (stem + ".model"));
                write_train_log(layout.models() / (stem + ".log.csv"), res.state);
            }
            write_marker(layout, "predictor_" + stem, hash);
            trained = true;
        }
    }
    return trained;
}

void write_auc_scores(const fs::path& path, const std::vector<std::string>& diseases,
                      const std::vector<std::optional<double>>& aucs) {
    auto out = csv::open_output(path);
    out << "disease,auc\n";
    for (std::size_t m = 0; m < diseases.size(); ++m) {
        out << diseases[m] << ',' << (aucs[m] ? csv::format_double(*aucs[m]) : "NA") << '\n';
    }
}

void stage_evaluate(const RunConfig& cfg, const Layout& layout, const PipelineOptions& opt) {
    const auto c = load_cohort(cfg, layout);
    std::optional<imputer::KernelSet> kernels;
    for (auto mode : active_modes(cfg, opt)) {
        if (mode != InputMode::raw && !kernels) {
            kernels = load_kernels(layout, c.labs);
        }
        const auto test_set = build_dataset(cfg, c, c.test, kernels ? &*kernels : nullptr, mode);
        for (const auto& model : cfg.models()) {
            const std::string stem = model_stem(model, mode);
            std::vector<double> scores;
            if (model == "logit") {
                scores = predictor::logit_scores(
                    predictor::load_logit(layout.models() / (stem + ".logit")), test_set, mode);
            } else {
                auto net = predictor::Network::load(layout.models() / (stem + ".model"));
                scores = predictor::predict_proba(net, test_set);
            }
            write_auc_scores(layout.scores() / ("auc_" + stem + ".csv"), c.diseases,
                             predictor::disease_aucs(scores, test_set));
        }
    }
}

std::vector<std::optional<double>> read_auc_scores(const fs::path& path,
                                                   std::vector<std::string>* diseases) {
    const std::string file = path.string();
    auto in = csv::open_input(path);
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != "disease,auc") {
        throw ParseError(file, 1, "expected header disease,auc");
    }
    std::vector<std::optional<double>> out;
    std::size_t line_no = 1;
    diseases->clear();
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = csv::split(csv::trim(line));
        if (f.size() != 2) {
            throw ParseError(file, line_no, "expected 2 fields");
        }
        diseases->emplace_back(f[0]);
        if (f[1] == "NA") {
            out.push_back(std::nullopt);
        } else {
            out.push_back(csv::parse_double(f[1], file, line_no));
        }
    }
    return out;
}

void stage_report(const RunConfig& cfg, const Layout& layout) {
    MetricsReport report;
    report.config_hash = cfg.hash();
    report.seed = cfg.u64("seed");
    report.imputation = read_imputation_table(layout.reports() / "imputation_rmse.csv");
    for (auto mode : cfg.modes()) {
        for (const auto& model : cfg.models()) {
            AucColumn col;
            col.model = model;
            col.mode = mode;
            std::vector<std::string> diseases;
            col.auc = read_auc_scores(layout.scores() / ("auc_" + model_stem(model, mode) + ".csv"),
                                      &diseases);
            if (report.diseases.empty()) {
                report.diseases = diseases;
            }
            report.prediction.push_back(std::move(col));
        }
    }
    emit_reports(report, cfg, layout.reports());
}

}  // namespace

std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, const fs::path& out_dir,
                                       const PipelineOptions& options) {
    const auto& names = stage_names();
    if (!options.stop_after.empty() &&
        std::find(names.begin(), names.end(), options.stop_after) == names.end()) {
        throw ConfigError("unknown stage '" + options.stop_after + "'");
    }
    const Layout layout{out_dir};
    for (const auto& dir : {layout.data(), layout.prepared(), layout.kernels(),
                            layout.baselines(), layout.models(), layout.scores(),
                            layout.reports(), layout.checkpoints()}) {
        fs::create_directories(dir);
    }
    const std::string hash = cfg.hash();
    // Restricting modes leaves the stage-level markers of mode-aware stages unwritten.
    const bool partial = !options.only_modes.empty();

    std::vector<StageOutcome> outcomes;
    bool upstream_ran = false;
    for (const auto& name : names) {
        const auto start = std::chrono::steady_clock::now();
        StageOutcome outcome{name, false, 0.0};
        const bool mode_aware = name == "predictor" || name == "evaluate";
        if (!upstream_ran && marker_matches(layout, name, hash)) {
            outcome.resumed = true;
        } else {
            if (options.verbose) {
                std::cerr << "[" << name << "]\n";
            }
            try {
                if (name == "cohort") {
                    stage_cohort(cfg, layout, options);
                } else if (name == "prepare") {
                    stage_prepare(cfg, layout);
                } else if (name == "imputer") {
                    stage_imputer(cfg, layout, options.verbose);
                } else if (name == "baselines") {
                    stage_baselines(cfg, layout);
                } else if (name == "imputation_eval") {
                    stage_imputation_eval(cfg, layout);
                } else if (name == "predictor") {
                    stage_predictor(cfg, layout, options, hash, upstream_ran);
                } else if (name == "evaluate") {
                    stage_evaluate(cfg, layout, options);
                } else {
                    stage_report(cfg, layout);
                }
            } catch (const StageError&) {
                throw;
            } catch (const std::exception& e) {
                throw StageError(name, e.what());
            }
            if (!(mode_aware && partial)) {
                write_marker(layout, name, hash);
            }
            upstream_ran = true;
        }
        outcome.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        outcomes.push_back(outcome);
        if (name == options.stop_after || (partial && name == "evaluate")) {
            break;
        }
    }

    auto timing = csv::open_output(out_dir / "timing.txt");
    for (const auto& o : outcomes) {
        timing << o.stage << ' ' << (o.resumed ? "resumed" : "ran") << ' '
               << csv::format_metric(o.seconds) << "s\n";
    }
    return outcomes;
}

void impute_histories(const RunConfig& cfg, const fs::path& run_dir,
                      const std::optional<fs::path>& data_dir, const fs::path& output) {
    const Layout layout{run_dir};
    std::vector<cohort::PatientRecord> patients;
    std::vector<std::string> labs;
    if (data_dir) {
        auto raw = cohort::ingest(*data_dir / "observations.csv", *data_dir / "diagnoses.csv",
                                  ingest_horizon(cfg));
        labs = cohort::lab_codes(load_raw(cfg, layout));
        patients = cohort::apply_normalization(
            std::move(raw), cohort::read_normalization(layout.prepared() / "normalization.csv"));
    } else {
        auto c = load_cohort(cfg, layout);
        labs = c.labs;
        patients = std::move(c.test);
    }
    const auto kernels = load_kernels(layout, labs);
    const double eps = cfg.real("imputer.epsilon");
    const double fallback = cfg.real("imputer.fallback");
    auto out = csv::open_output(output);
    out << "person_id,lab,month,value,observed\n";
    for (const auto& p : patients) {
        const auto grid = cohort::build_full_grid(p, labs);
        for (std::size_t d = 0; d < labs.size(); ++d) {
            const auto values =
                imputer::impute_multivariate(grid, kernels.at(labs[d]), eps, fallback);
            for (std::size_t t = 0; t < grid.months; ++t) {
                out << p.person_id << ',' << labs[d] << ',' << t << ','
                    << csv::format_double(values[t]) << ',' << (grid.observed(d, t) ? 1 : 0)
                    << '\n';
            }
        }
    }
    if (!out) {
        throw IoError("failed writing '" + output.string() + "'");
    }
}

std::vector<TuningRow> tune_predictor(const RunConfig& cfg, const fs::path& run_dir,
                                      const std::string& model, InputMode mode) {
    const Layout layout{run_dir};
    const auto c = load_cohort(cfg, layout);
    std::optional<imputer::KernelSet> kernels;
    if (mode != InputMode::raw) {
        kernels = load_kernels(layout, c.labs);
    }
    const auto* kp = kernels ? &*kernels : nullptr;
    const auto train_set = build_dataset(cfg, c, c.train, kp, mode);
    const auto val_set = build_dataset(cfg, c, c.validation, kp, mode);
    auto sgd = cfg.predictor_sgd();
    sgd.epochs = static_cast<std::size_t>(cfg.integer("tune.epochs"));
    std::vector<TuningRow> rows;
    for (double lr : cfg.reals("tune.learning_rates")) {
        for (double decay : cfg.reals("tune.decays")) {
            sgd.learning_rate = lr;
            sgd.decay_per_epoch = decay;
            TuningRow row{lr, decay, NAN, 0};
            try {
                predictor::TrainState state;
                if (model == "logit") {
                    state = predictor::train_logit_max(train_set, val_set, mode, sgd).state;
                } else {
                    const auto pc = cfg.predictor_config(mode, c.labs.size(), c.diseases.size());
                    state = predictor::train(predictor::parse_kind(model), pc, train_set, val_set,
                                             sgd)
                                .state;
                }
                row.validation_auc = state.best_validation_auc;
                row.best_epoch = state.best_epoch;
            } catch (const TrainingError&) {
                // A diverging cell is reported as NaN rather than ending the search.
            }
            rows.push_back(row);
        }
    }
    return rows;
}

void write_tuning_table(const fs::path& path, const std::vector<TuningRow>& rows) {
    auto out = csv::open_output(path);
    out << "learning_rate,decay,validation_auc,best_epoch\n";
    for (const auto& r : rows) {
        out << csv::format_double(r.learning_rate) << ',' << csv::format_double(r.decay) << ','
            << (std::isnan(r.validation_auc) ? std::string("NA")
                                             : csv::format_double(r.validation_auc))
            << ',' << r.best_epoch << '\n';
    }
}

}  // namespace labconv::harness
