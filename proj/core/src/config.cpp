#include "labconv/csv.hpp"
#include "labconv/errors.hpp"
#include "labconv/harness.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <sstream>

namespace labconv::harness {

namespace {

enum class Kind { integer, u64, real, boolean, text, list, reals };

struct KeySpec {
    const char* key;
    const char* value;
    Kind kind;
    const char* doc;
};

// clang-format off
const KeySpec kKeys[] = {
    {"seed", "1", Kind::u64, "master seed; every stage derives its own stream"},
    {"horizon", "120", Kind::integer, "follow-up months (synthetic cohorts; 0 infers it for ingested data)"},
    {"stride", "6", Kind::integer, "months between window anchors"},

    {"synth.patients", "6000", Kind::integer, "synthetic cohort size"},
    {"synth.labs", "6", Kind::integer, "number of labs D"},
    {"synth.diseases", "8", Kind::integer, "number of diseases M"},
    {"synth.latent_dim", "3", Kind::integer, "shared latent AR(1) paths K"},
    {"synth.alpha", "0.9", Kind::real, "AR(1) coefficient of the latent paths"},
    {"synth.mixing_seed", "11", Kind::u64, "seed of the lab mixing matrix"},
    {"synth.base_rate", "0.15", Kind::real, "per-lab monthly observation probability"},
    {"synth.noise_std", "0.1", Kind::real, "lab measurement noise"},
    {"synth.baseline_std", "0.5", Kind::real, "per-patient lab offset spread"},
    {"synth.threshold", "1.5", Kind::real, "latent slope that triggers a disease"},
    {"synth.slope_span", "6", Kind::integer, "months over which the trigger slope is measured"},
    {"synth.gap_lo", "6", Kind::integer, "shortest trigger-to-diagnosis delay"},
    {"synth.gap_hi", "18", Kind::integer, "longest trigger-to-diagnosis delay"},
    {"synth.repeat_lo", "2", Kind::integer, "fewest diagnosis records after onset"},
    {"synth.repeat_hi", "4", Kind::integer, "most diagnosis records after onset"},
    {"synth.utilization_coupling", "0", Kind::real, "extra lab ordering once a disease has triggered"},

    {"split.train", "0.34", Kind::real, "training share of patients"},
    {"split.validation", "0.33", Kind::real, "validation share of patients"},
    {"split.test", "0.33", Kind::real, "test share of patients"},
    {"split.normalize_on", "train", Kind::text, "patients used to fit normalization: train or all"},

    {"imputer.half_width", "12", Kind::integer, "kernel half-width M (2M+1 taps)"},
    {"imputer.learning_rate", "0.05", Kind::real, "kernel SGD learning rate"},
    {"imputer.decay", "0.95", Kind::real, "per-epoch learning-rate decay"},
    {"imputer.batch_size", "16", Kind::integer, "series per kernel minibatch"},
    {"imputer.epochs", "40", Kind::integer, "kernel training epochs"},
    {"imputer.epsilon", "0.05", Kind::real, "denominator guard (kernels are rescaled to unit peak weight)"},
    {"imputer.fallback", "0", Kind::real, "value for cells with no usable neighbours"},
    {"imputer.validation_fraction", "0.2", Kind::real, "share of training series held out for epoch selection"},
    {"imputer.max_series", "0", Kind::integer, "cap on kernel training series per lab (0 = all)"},
    {"augment.value_noise_std", "0.01", Kind::real, "gaussian noise added to observed values"},
    {"augment.time_jitter_std", "2", Kind::real, "std of the floored month jitter"},

    {"cv.families", "gaussian,laplace,triangular", Kind::list, "parametric kernel families"},
    {"cv.bandwidths", "1,2,3,6,12", Kind::reals, "bandwidth grid in months"},
    {"cv.noise_vars", "0.0001,0.01,0.1,1", Kind::reals, "GP noise variance grid"},
    {"cv.folds", "5", Kind::integer, "cross-validation folds over series"},

    {"predictor.filters", "8", Kind::integer, "convolution filters J"},
    {"predictor.filter_length", "3", Kind::integer, "filter length L"},
    {"predictor.pool", "3", Kind::integer, "pooling width p"},
    {"predictor.hidden", "100,100", Kind::reals, "shared dense layer widths"},
    {"predictor.dropout", "0.5", Kind::real, "dropout probability before each dense layer"},
    {"predictor.head_batchnorm", "true", Kind::boolean, "batch norm on the 2-unit disease heads"},
    {"predictor.learning_rate", "0.01", Kind::real, "SGD learning rate"},
    {"predictor.decay", "0.95", Kind::real, "per-epoch learning-rate decay"},
    {"predictor.batch_size", "256", Kind::integer, "minibatch size"},
    {"predictor.epochs", "30", Kind::integer, "training epochs (best validation AUC is kept)"},
    {"predictor.modes", "raw,imputed,two_channel", Kind::list, "input modes to train and evaluate"},
    {"predictor.models", "convnet,mlp,logit", Kind::list, "models to train and evaluate"},

    {"tune.learning_rates", "0.001,0.01,0.05,0.1,1", Kind::reals, "learning-rate grid of the tune command"},
    {"tune.decays", "0.8,0.9,0.95,0.99", Kind::reals, "decay grid of the tune command"},
    {"tune.epochs", "10", Kind::integer, "epochs per tuning cell"},
};
// clang-format on

const KeySpec* find_spec(const std::string& key) {
    for (const auto& s : kKeys) {
        if (key == s.key) {
            return &s;
        }
    }
    return nullptr;
}

bool parse_bool(std::string_view v, bool& out) {
    if (v == "true" || v == "1" || v == "yes") {
        out = true;
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        out = false;
        return true;
    }
    return false;
}

template <class T>
bool parse_number(std::string_view v, T& out) {
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    return ec == std::errc() && p == end;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t stage_seed(const RunConfig& cfg, std::uint64_t salt) {
    return derive_seed(cfg.u64("seed"), salt);
}

RunConfig::RunConfig() {
    for (const auto& s : kKeys) {
        values_[s.key] = s.value;
    }
}

void RunConfig::validate_value(const std::string& key, const std::string& value) const {
    const KeySpec* spec = find_spec(key);
    if (spec == nullptr) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    bool ok = true;
    switch (spec->kind) {
    case Kind::integer: {
        long long v = 0;
        ok = parse_number(value, v);
        break;
    }
    case Kind::u64: {
        std::uint64_t v = 0;
        ok = parse_number(value, v);
        break;
    }
    case Kind::real: {
        double v = 0;
        ok = parse_number(value, v);
        break;
    }
    case Kind::boolean: {
        bool v = false;
        ok = parse_bool(value, v);
        break;
    }
    case Kind::text:
        if (key == "split.normalize_on") {
            ok = value == "train" || value == "all";
        }
        break;
    case Kind::list:
        ok = !value.empty();
        break;
    case Kind::reals:
        for (auto f : csv::split(value)) {
            double v = 0;
            ok = ok && parse_number(csv::trim(f), v);
        }
        break;
    }
    if (!ok) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    validate_value(key, value);
    values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    return it->second;
}

long long RunConfig::integer(const std::string& key) const {
    long long v = 0;
    parse_number(std::string_view(get(key)), v);
    return v;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
    std::uint64_t v = 0;
    parse_number(std::string_view(get(key)), v);
    return v;
}

double RunConfig::real(const std::string& key) const {
    double v = 0;
    parse_number(std::string_view(get(key)), v);
    return v;
}

bool RunConfig::boolean(const std::string& key) const {
    bool v = false;
    parse_bool(get(key), v);
    return v;
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
    std::vector<std::string> out;
    for (auto f : csv::split(get(key))) {
        const auto t = csv::trim(f);
        if (!t.empty()) {
            out.emplace_back(t);
        }
    }
    return out;
}

std::vector<double> RunConfig::reals(const std::string& key) const {
    std::vector<double> out;
    for (auto f : csv::split(get(key))) {
        double v = 0;
        parse_number(csv::trim(f), v);
        out.push_back(v);
    }
    return out;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
    RunConfig cfg;
    std::map<std::string, std::size_t> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = csv::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError(origin, line_no, "expected 'key = value'");
        }
        const std::string key(csv::trim(line.substr(0, eq)));
        const std::string value(csv::trim(line.substr(eq + 1)));
        if (auto it = seen.find(key); it != seen.end()) {
            throw ParseError(origin, line_no,
                             "duplicate key '" + key + "' (first on line " +
                                 std::to_string(it->second) + ")");
        }
        seen[key] = line_no;
        try {
            cfg.set(key, value);
        } catch (const ConfigError& e) {
            throw ParseError(origin, line_no, e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    auto in = csv::open_input(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::string RunConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k + " = " + v + "\n";
    }
    return out;
}

std::string RunConfig::hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

std::string RunConfig::defaults_text() {
    std::string out;
    for (const auto& s : kKeys) {
        out += std::string(s.key) + " = " + s.value + "  # " + s.doc + "\n";
    }
    return out;
}

cohort::SynthConfig RunConfig::synth() const {
    cohort::SynthConfig s;
    s.n_patients = static_cast<std::size_t>(integer("synth.patients"));
    s.n_labs = static_cast<std::size_t>(integer("synth.labs"));
    s.n_diseases = static_cast<std::size_t>(integer("synth.diseases"));
    s.horizon = static_cast<int>(integer("horizon"));
    s.latent_dim = static_cast<std::size_t>(integer("synth.latent_dim"));
    s.alpha = real("synth.alpha");
    s.mixing_seed = u64("synth.mixing_seed");
    s.base_rate = real("synth.base_rate");
    s.noise_std = real("synth.noise_std");
    s.baseline_std = real("synth.baseline_std");
    s.thresholds.assign(s.n_diseases, real("synth.threshold"));
    s.slope_span = static_cast<int>(integer("synth.slope_span"));
    s.gap_lo = static_cast<int>(integer("synth.gap_lo"));
    s.gap_hi = static_cast<int>(integer("synth.gap_hi"));
    s.repeat_lo = static_cast<int>(integer("synth.repeat_lo"));
    s.repeat_hi = static_cast<int>(integer("synth.repeat_hi"));
    s.utilization_coupling = real("synth.utilization_coupling");
    s.seed = stage_seed(*this, 1);
    s.validate();
    return s;
}

cohort::SplitFractions RunConfig::split_fractions() const {
    return {real("split.train"), real("split.validation"), real("split.test")};
}

imputer::AugmentConfig RunConfig::augment() const {
    imputer::AugmentConfig a;
    a.value_noise_std = real("augment.value_noise_std");
    a.time_jitter_std = real("augment.time_jitter_std");
    a.seed = stage_seed(*this, 3);
    return a;
}

imputer::ImputeTrainConfig RunConfig::imputer_training() const {
    imputer::ImputeTrainConfig t;
    t.sgd.learning_rate = real("imputer.learning_rate");
    t.sgd.decay_per_epoch = real("imputer.decay");
    t.sgd.batch_size = static_cast<std::size_t>(integer("imputer.batch_size"));
    t.sgd.epochs = static_cast<std::size_t>(integer("imputer.epochs"));
    t.sgd.seed = stage_seed(*this, 4);
    t.epsilon_denominator = real("imputer.epsilon");
    t.fallback_value = real("imputer.fallback");
    t.validation_fraction = real("imputer.validation_fraction");
    t.sgd.validate();
    return t;
}

baselines::CvGrid RunConfig::cv_grid() const {
    baselines::CvGrid g;
    g.families.clear();
    for (const auto& f : list("cv.families")) {
        g.families.push_back(baselines::parse_family(f));
    }
    g.bandwidths = reals("cv.bandwidths");
    g.noise_vars = reals("cv.noise_vars");
    g.folds = static_cast<std::size_t>(integer("cv.folds"));
    return g;
}

predictor::PredictorConfig RunConfig::predictor_config(predictor::InputMode mode, std::size_t labs,
                                                       std::size_t diseases) const {
    predictor::PredictorConfig c;
    c.filters = static_cast<std::size_t>(integer("predictor.filters"));
    c.filter_length = static_cast<std::size_t>(integer("predictor.filter_length"));
    c.pool = static_cast<std::size_t>(integer("predictor.pool"));
    c.hidden.clear();
    for (double h : reals("predictor.hidden")) {
        c.hidden.push_back(static_cast<std::size_t>(h));
    }
    c.dropout = real("predictor.dropout");
    c.head_batchnorm = boolean("predictor.head_batchnorm");
    c.input_mode = mode;
    c.window = static_cast<std::size_t>(cohort::kWindowMonths);
    c.labs = labs;
    c.diseases = diseases;
    c.validate();
    return c;
}

diff::SgdConfig RunConfig::predictor_sgd() const {
    diff::SgdConfig s;
    s.learning_rate = real("predictor.learning_rate");
    s.decay_per_epoch = real("predictor.decay");
    s.batch_size = static_cast<std::size_t>(integer("predictor.batch_size"));
    s.epochs = static_cast<std::size_t>(integer("predictor.epochs"));
    s.seed = stage_seed(*this, 5);
    s.validate();
    return s;
}

std::vector<predictor::InputMode> RunConfig::modes() const {
    std::vector<predictor::InputMode> out;
    for (const auto& m : list("predictor.modes")) {
        out.push_back(predictor::parse_mode(m));
    }
    return out;
}

std::vector<std::string> RunConfig::models() const {
    auto out = list("predictor.models");
    for (const auto& m : out) {
        if (m != "convnet" && m != "mlp" && m != "logit") {
            throw ConfigError("predictor.models: unknown model '" + m + "'");
        }
    }
    return out;
}

}  // namespace labconv::harness
