#include "labconv/predictor.hpp"

#include "labconv/csv.hpp"
#include "labconv/errors.hpp"
#include "labconv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace labconv::predictor {

using diff::Mode;
using diff::Tensor;

Dataset make_dataset(std::span<const cohort::WindowSample> samples,
                     std::span<const imputer::ImputedGrid> imputed, InputMode mode,
                     std::size_t diseases) {
    if (mode != InputMode::raw && imputed.size() != samples.size()) {
        throw DimensionError("make_dataset: " + std::to_string(imputed.size()) +
                             " imputed grids for " + std::to_string(samples.size()) + " samples");
    }
    Dataset data;
    data.mode = mode;
    data.diseases = diseases;
    if (samples.empty()) {
        return data;
    }
    data.labs = samples.front().input.labs();
    data.window = samples.front().input.months;
    data.rows = mode == InputMode::two_channel ? 2 * data.labs : data.labs;
    const std::size_t cells = data.labs * data.window;
    data.inputs.reserve(samples.size() * data.rows * data.window);
    data.mask.reserve(samples.size() * cells);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.input.labs() != data.labs || s.input.months != data.window) {
            throw DimensionError("make_dataset: sample " + s.person_id + "@" +
                                 std::to_string(s.anchor) + " has a different grid shape");
        }
        if (s.labels.size() != diseases || s.eligible.size() != diseases) {
            throw DimensionError("make_dataset: sample " + s.person_id + " has " +
                                 std::to_string(s.labels.size()) + " labels, expected " +
                                 std::to_string(diseases));
        }
        if (mode != InputMode::raw) {
            const auto& g = imputed[i];
            if (g.lab_order != s.input.lab_order || g.months != data.window) {
                throw DimensionError("make_dataset: imputed grid for " + s.person_id +
                                     " does not match its window");
            }
            data.inputs.insert(data.inputs.end(), g.values.begin(), g.values.end());
            if (mode == InputMode::two_channel) {
                data.inputs.insert(data.inputs.end(), s.input.mask.begin(), s.input.mask.end());
            }
        } else {
            data.inputs.insert(data.inputs.end(), s.input.values.begin(), s.input.values.end());
        }
        data.mask.insert(data.mask.end(), s.input.mask.begin(), s.input.mask.end());
        data.person_ids.push_back(s.person_id);
        data.anchors.push_back(s.anchor);
        data.labels.insert(data.labels.end(), s.labels.begin(), s.labels.end());
        data.eligible.insert(data.eligible.end(), s.eligible.begin(), s.eligible.end());
    }
    return data;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
    Batch b;
    b.size = indices.size();
    b.rows = data.rows;
    b.window = data.window;
    const std::size_t stride = data.rows * data.window;
    b.x.resize(b.size * stride);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= data.size()) {
            throw DimensionError("make_batch: index out of range");
        }
        const auto row = data.input(indices[k]);
        std::copy(row.begin(), row.end(), b.x.begin() + static_cast<std::ptrdiff_t>(k * stride));
    }
    return b;
}

std::vector<double> positive_weights(const Dataset& data) {
    std::vector<double> out(data.diseases, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t m = 0; m < data.diseases; ++m) {
        std::size_t pos = 0;
        std::size_t neg = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.eligible[i * data.diseases + m]) {
                (data.labels[i * data.diseases + m] ? pos : neg) += 1;
            }
        }
        if (pos > 0 && neg > 0) {
            out[m] = static_cast<double>(neg) / static_cast<double>(pos);
        }
    }
    return out;
}

std::vector<std::optional<double>> disease_aucs(std::span<const double> scores,
                                                const Dataset& data) {
    const std::size_t M = data.diseases;
    if (scores.size() != data.size() * M) {
        throw DimensionError("disease_aucs: expected " + std::to_string(data.size() * M) +
                             " scores, got " + std::to_string(scores.size()));
    }
    std::vector<std::optional<double>> out(M);
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t m = 0; m < M; ++m) {
        s.clear();
        y.clear();
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.eligible[i * M + m]) {
                s.push_back(scores[i * M + m]);
                y.push_back(data.labels[i * M + m]);
            }
        }
        out[m] = harness::try_auc(s, y);
    }
    return out;
}

double mean_auc(std::span<const double> scores, const Dataset& data) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& a : disease_aucs(scores, data)) {
        if (a) {
            sum += *a;
            ++n;
        }
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

std::vector<double> predict_proba(Network& model, const Dataset& data) {
    const std::size_t M = model.config().diseases;
    if (data.diseases != M) {
        throw DimensionError("predict_proba: dataset has " + std::to_string(data.diseases) +
                             " diseases, model " + std::to_string(M));
    }
    if (!model.all_finite()) {
        throw InferenceError("predict_proba: model has non-finite parameters");
    }
    std::vector<double> out(data.size() * M);
    constexpr std::size_t chunk = 512;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        const std::size_t end = std::min(data.size(), start + chunk);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor lp = model.forward(make_batch(data, idx), Mode::eval);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            for (std::size_t m = 0; m < M; ++m) {
                out[(start + k) * M + m] = std::exp(lp[(k * M + m) * 2 + 1]);
            }
        }
    }
    model.clear_cache();
    return out;
}

namespace {

constexpr std::uint64_t kShuffleSalt = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kDropoutSalt = 0xD1B54A32D192ED03ULL;

struct TrainingPlan {
    std::vector<double> pos_weight;
    std::vector<std::size_t> skipped;
    std::vector<std::size_t> active;  // samples with at least one trainable label
};

TrainingPlan plan_training(const Dataset& train_set) {
    TrainingPlan plan;
    plan.pos_weight = positive_weights(train_set);
    const std::size_t M = train_set.diseases;
    for (std::size_t m = 0; m < M; ++m) {
        if (std::isnan(plan.pos_weight[m])) {
            plan.skipped.push_back(m);
        }
    }
    if (plan.skipped.size() == M) {
        throw TrainingError("no disease has both positive and negative training windows");
    }
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            if (train_set.eligible[i * M + m] && !std::isnan(plan.pos_weight[m])) {
                plan.active.push_back(i);
                break;
            }
        }
    }
    return plan;
}

/// Sums the per-disease weighted NLL over eligible rows of a batch; writes the
/// gradient into `grad` (batch x M x 2).
double batch_loss(const Tensor& log_probs, const Dataset& data,
                  std::span<const std::size_t> idx, std::span<const double> pos_weight,
                  Tensor& grad) {
    const std::size_t M = data.diseases;
    grad = Tensor(log_probs.shape);
    double total = 0.0;
    std::vector<std::size_t> rows;
    std::vector<int> labels;
    for (std::size_t m = 0; m < M; ++m) {
        if (std::isnan(pos_weight[m])) {
            continue;
        }
        rows.clear();
        labels.clear();
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (data.eligible[idx[k] * M + m]) {
                rows.push_back(k);
                labels.push_back(data.labels[idx[k] * M + m]);
            }
        }
        if (rows.empty()) {
            continue;
        }
        Tensor sub({rows.size(), 2});
        for (std::size_t r = 0; r < rows.size(); ++r) {
            sub[2 * r] = log_probs[(rows[r] * M + m) * 2];
            sub[2 * r + 1] = log_probs[(rows[r] * M + m) * 2 + 1];
        }
        const auto res = diff::weighted_nll(sub, labels, pos_weight[m]);
        total += res.loss;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            grad[(rows[r] * M + m) * 2] += res.grad[2 * r];
            grad[(rows[r] * M + m) * 2 + 1] += res.grad[2 * r + 1];
        }
    }
    return total;
}

bool improves(double candidate, double best, bool have_best) {
    if (!have_best) {
        return true;
    }
    if (std::isnan(candidate)) {
        return false;
    }
    return std::isnan(best) || candidate > best;
}

}  // namespace

TrainResult train(ModelKind kind, const PredictorConfig& cfg, const Dataset& train_set,
                  const Dataset& validation_set, const diff::SgdConfig& sgd) {
    cfg.validate();
    sgd.validate();
    for (const Dataset* d : {&train_set, &validation_set}) {
        if (d->size() > 0 && (d->rows != cfg.rows() || d->window != cfg.window ||
                              d->diseases != cfg.diseases)) {
            throw DimensionError("train: dataset shape " + std::to_string(d->rows) + "x" +
                                 std::to_string(d->window) + " with " +
                                 std::to_string(d->diseases) + " diseases does not match config");
        }
    }
    const TrainingPlan plan = plan_training(train_set);
    if (plan.active.size() < 2) {
        throw TrainingError("train: fewer than two trainable windows");
    }

    Network net(kind, cfg, sgd.seed);
    diff::Rng shuffle_rng(sgd.seed ^ kShuffleSalt);
    diff::Rng dropout_rng(sgd.seed ^ kDropoutSalt);
    auto params = net.parameters();

    TrainState state;
    state.sgd = sgd;
    state.pos_weight = plan.pos_weight;
    state.skipped_diseases = plan.skipped;
    std::optional<Network> best;
    bool have_best = false;

    std::vector<std::size_t> order = plan.active;
    Tensor grad;
    for (std::size_t epoch = 0; epoch < sgd.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += sgd.batch_size) {
            const std::size_t end = std::min(order.size(), start + sgd.batch_size);
            if (end - start < 2) {
                continue;  // batch norm needs two rows
            }
            std::span<const std::size_t> idx(order.data() + start, end - start);
            const Tensor lp = net.forward(make_batch(train_set, idx), Mode::train, &dropout_rng);
            const double loss = batch_loss(lp, train_set, idx, plan.pos_weight, grad);
            if (!std::isfinite(loss)) {
                throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch));
            }
            net.backward(grad);
            diff::sgd_step(params, epoch, sgd);
            loss_sum += loss;
            ++batches;
        }
        if (!net.all_finite()) {
            throw TrainingError("train: non-finite parameters after epoch " +
                                std::to_string(epoch));
        }
        const double val_auc = validation_set.size() > 0
                                   ? mean_auc(predict_proba(net, validation_set), validation_set)
                                   : std::numeric_limits<double>::quiet_NaN();
        state.log.push_back({epoch, sgd.learning_rate_at(epoch),
                             batches ? loss_sum / static_cast<double>(batches) : 0.0, val_auc});
        if (improves(val_auc, state.best_validation_auc, have_best)) {
            have_best = true;
            state.best_epoch = epoch;
            state.best_validation_auc = val_auc;
            net.clear_cache();
            best = net;
        }
    }
    if (!best) {
        net.clear_cache();
        best = net;
    }
    return {std::move(*best), std::move(state)};
}

// ---------------------------------------------------------------------------

std::vector<double> max_features(const Dataset& data, InputMode mode) {
    const std::size_t R = data.rows;
    const std::size_t W = data.window;
    std::vector<double> out(data.size() * R, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.input(i);
        for (std::size_t r = 0; r < R; ++r) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < W; ++t) {
                if (mode == InputMode::raw && data.mask[(i * data.labs + r) * W + t] == 0.0) {
                    continue;
                }
                best = std::max(best, x[r * W + t]);
            }
            out[i * R + r] = std::isfinite(best) ? best : 0.0;
        }
    }
    return out;
}

namespace {

std::vector<double> logit_linear(const LogitMaxModel& model, std::span<const double> f,
                                 std::size_t n) {
    const std::size_t F = model.features;
    const std::size_t M = model.diseases;
    std::vector<double> z(n * M);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            double acc = model.bias[m];
            for (std::size_t k = 0; k < F; ++k) {
                acc += model.weights[m * F + k] * f[i * F + k];
            }
            z[i * M + m] = acc;
        }
    }
    return z;
}

std::vector<double> sigmoid_all(std::vector<double> z) {
    for (auto& v : z) {
        v = 1.0 / (1.0 + std::exp(-v));
    }
    return z;
}

}  // namespace

std::vector<double> logit_scores(const LogitMaxModel& model, const Dataset& data,
                                 InputMode mode) {
    if (data.rows != model.features || data.diseases != model.diseases) {
        throw DimensionError("logit_scores: dataset does not match model");
    }
    const auto f = max_features(data, mode);
    return sigmoid_all(logit_linear(model, f, data.size()));
}

LogitTrainResult train_logit_max(const Dataset& train_set, const Dataset& validation_set,
                                 InputMode mode, const diff::SgdConfig& sgd) {
    sgd.validate();
    const TrainingPlan plan = plan_training(train_set);
    const std::size_t F = train_set.rows;
    const std::size_t M = train_set.diseases;
    const auto features = max_features(train_set, mode);
    const auto val_features = max_features(validation_set, mode);

    diff::Param weights{"logit.weights", Tensor({M, F})};
    diff::Param bias{"logit.bias", Tensor({M})};
    diff::Param* params[] = {&weights, &bias};
    diff::Rng shuffle_rng(sgd.seed ^ kShuffleSalt);

    LogitTrainResult result;
    result.state.sgd = sgd;
    result.state.pos_weight = plan.pos_weight;
    result.state.skipped_diseases = plan.skipped;
    auto model_of = [&] {
        return LogitMaxModel{F, M, weights.tensor.values, bias.tensor.values};
    };
    bool have_best = false;

    std::vector<std::size_t> order = plan.active;
    Tensor grad;
    for (std::size_t epoch = 0; epoch < sgd.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += sgd.batch_size) {
            const std::size_t end = std::min(order.size(), start + sgd.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            std::vector<double> f(idx.size() * F);
            for (std::size_t k = 0; k < idx.size(); ++k) {
                std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(idx[k] * F), F,
                            f.begin() + static_cast<std::ptrdiff_t>(k * F));
            }
            const auto z = logit_linear(model_of(), f, idx.size());
            // Two-class logits [0, z] so that log-softmax gives the logistic model.
            Tensor pair({idx.size(), M, 2});
            for (std::size_t j = 0; j < z.size(); ++j) {
                pair[2 * j + 1] = z[j];
            }
            const Tensor lp = diff::activation(diff::Activation::log_softmax2,
                                               Tensor({idx.size() * M, 2}, pair.values));
            const double loss = batch_loss(Tensor({idx.size(), M, 2}, lp.values), train_set, idx,
                                           plan.pos_weight, grad);
            const Tensor g_pair = diff::activation_backward(
                diff::Activation::log_softmax2, Tensor({idx.size() * M, 2}, pair.values), lp,
                Tensor({idx.size() * M, 2}, grad.values));
            weights.tensor.ensure_grad();
            bias.tensor.ensure_grad();
            for (std::size_t k = 0; k < idx.size(); ++k) {
                for (std::size_t m = 0; m < M; ++m) {
                    const double dz = g_pair[(k * M + m) * 2 + 1];
                    bias.tensor.grad[m] += dz;
                    for (std::size_t q = 0; q < F; ++q) {
                        weights.tensor.grad[m * F + q] += dz * f[k * F + q];
                    }
                }
            }
            diff::sgd_step(params, epoch, sgd);
            loss_sum += loss;
            ++batches;
        }
        if (!weights.tensor.all_finite() || !bias.tensor.all_finite()) {
            throw TrainingError("train_logit_max: non-finite parameters after epoch " +
                                std::to_string(epoch));
        }
        const auto current = model_of();
        const double val_auc =
            validation_set.size() > 0
                ? mean_auc(sigmoid_all(logit_linear(current, val_features, validation_set.size())),
                           validation_set)
                : std::numeric_limits<double>::quiet_NaN();
        result.state.log.push_back({epoch, sgd.learning_rate_at(epoch),
                                    batches ? loss_sum / static_cast<double>(batches) : 0.0,
                                    val_auc});
        if (improves(val_auc, result.state.best_validation_auc, have_best)) {
            have_best = true;
            result.state.best_epoch = epoch;
            result.state.best_validation_auc = val_auc;
            result.model = current;
        }
    }
    if (!have_best) {
        result.model = model_of();
    }
    return result;
}

void save_logit(const std::filesystem::path& path, const LogitMaxModel& model) {
    auto out = csv::open_output(path);
    out << "labconv-logit features=" << model.features << " diseases=" << model.diseases << '\n';
    for (std::size_t m = 0; m < model.diseases; ++m) {
        out << csv::format_double(model.bias[m]);
        for (std::size_t k = 0; k < model.features; ++k) {
            out << ' ' << csv::format_double(model.weights[m * model.features + k]);
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("failed writing logit model to '" + path.string() + "'");
    }
}

LogitMaxModel load_logit(const std::filesystem::path& path) {
    const std::string file = path.string();
    auto in = csv::open_input(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(file, 1, "empty logit model file");
    }
    const auto head = csv::tokens(line);
    if (head.size() != 3 || head[0] != "labconv-logit" || !head[1].starts_with("features=") ||
        !head[2].starts_with("diseases=")) {
        throw ParseError(file, 1, "missing logit model header");
    }
    LogitMaxModel model;
    model.features = static_cast<std::size_t>(csv::parse_int(head[1].substr(9), file, 1));
    model.diseases = static_cast<std::size_t>(csv::parse_int(head[2].substr(9), file, 1));
    model.weights.resize(model.features * model.diseases);
    model.bias.resize(model.diseases);
    for (std::size_t m = 0; m < model.diseases; ++m) {
        const std::size_t line_no = m + 2;
        if (!std::getline(in, line)) {
            throw ParseError(file, line_no, "missing disease row");
        }
        const auto vals = csv::tokens(line);
        if (vals.size() != model.features + 1) {
            throw ParseError(file, line_no, "expected " + std::to_string(model.features + 1) +
                                                " values");
        }
        model.bias[m] = csv::parse_double(vals[0], file, line_no);
        for (std::size_t k = 0; k < model.features; ++k) {
            model.weights[m * model.features + k] = csv::parse_double(vals[k + 1], file, line_no);
        }
    }
    return model;
}

}  // namespace labconv::predictor
