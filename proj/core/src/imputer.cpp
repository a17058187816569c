#include "labconv/imputer.hpp"

#include "labconv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace labconv::imputer {

namespace {

std::vector<double> gaussian_bump(int half_width, diff::Rng& rng, bool with_bump) {
    std::uniform_real_distribution<double> jitter(-0.01, 0.01);
    std::vector<double> w(static_cast<std::size_t>(2 * half_width + 1));
    for (int tau = -half_width; tau <= half_width; ++tau) {
        const double bump = with_bump ? std::exp(-static_cast<double>(tau * tau) / 18.0) : 0.0;
        w[static_cast<std::size_t>(tau + half_width)] = bump + jitter(rng);
    }
    return w;
}

void check_finite(std::span<const double> w, const char* what) {
    for (double v : w) {
        if (!std::isfinite(v)) {
            throw ValidationError(std::string(what) + ": non-finite kernel weight");
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------

LearnableKernel1D LearnableKernel1D::initial(int half_width, std::uint64_t seed) {
    if (half_width < 1) {
        throw ConfigError("kernel half-width must be positive");
    }
    diff::Rng rng(seed);
    return {half_width, gaussian_bump(half_width, rng, true)};
}

void LearnableKernel1D::validate() const {
    if (half_width < 1 || weights.size() != static_cast<std::size_t>(2 * half_width + 1)) {
        throw ConfigError("univariate kernel must have 2M+1 weights with M >= 1");
    }
    check_finite(weights, "univariate kernel");
}

LearnableKernel2D LearnableKernel2D::initial(std::string target_lab,
                                             std::vector<std::string> lab_order, int half_width,
                                             std::uint64_t seed) {
    if (half_width < 1) {
        throw ConfigError("kernel half-width must be positive");
    }
    LearnableKernel2D k;
    k.target_lab = std::move(target_lab);
    k.half_width = half_width;
    k.lab_order = std::move(lab_order);
    const std::size_t target = k.target_row();
    diff::Rng rng(seed);
    for (std::size_t d = 0; d < k.lab_order.size(); ++d) {
        auto row = gaussian_bump(half_width, rng, d == target);
        k.weights.insert(k.weights.end(), row.begin(), row.end());
    }
    return k;
}

LearnableKernel2D LearnableKernel2D::from_univariate(const LearnableKernel1D& kernel,
                                                     std::string target_lab,
                                                     std::vector<std::string> lab_order) {
    LearnableKernel2D k;
    k.target_lab = std::move(target_lab);
    k.half_width = kernel.half_width;
    k.lab_order = std::move(lab_order);
    k.weights.assign(k.lab_order.size() * kernel.taps(), 0.0);
    const std::size_t target = k.target_row();
    std::copy(kernel.weights.begin(), kernel.weights.end(),
              k.weights.begin() + static_cast<std::ptrdiff_t>(target * kernel.taps()));
    return k;
}

std::size_t LearnableKernel2D::target_row() const {
    auto it = std::find(lab_order.begin(), lab_order.end(), target_lab);
    if (it == lab_order.end()) {
        throw ConfigError("target lab '" + target_lab + "' is not in the kernel's lab order");
    }
    return static_cast<std::size_t>(it - lab_order.begin());
}

void LearnableKernel2D::validate() const {
    if (half_width < 1 || lab_order.empty() || weights.size() != lab_order.size() * taps()) {
        throw ConfigError("multivariate kernel for '" + target_lab +
                          "' must have D x (2M+1) weights");
    }
    target_row();
    check_finite(weights, "multivariate kernel");
}

// ---------------------------------------------------------------------------

std::optional<double> nw_oracle(std::span<const LabObservation> observations,
                                const LearnableKernel1D& kernel, int t_query, double eps) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& o : observations) {
        const int offset = o.month - t_query;
        if (offset < -kernel.half_width || offset > kernel.half_width) {
            continue;
        }
        const double w = kernel.at(offset);
        num += o.value * w;
        den += w;
    }
    if (std::abs(den) < eps) {
        return std::nullopt;
    }
    return num / den;
}

std::vector<double> impute_univariate(std::span<const double> values, std::span<const double> mask,
                                      const LearnableKernel1D& kernel, double eps,
                                      double fallback) {
    if (values.size() != mask.size()) {
        throw DimensionError("impute_univariate: values and mask differ in length");
    }
    std::vector<double> masked(values.size());
    for (std::size_t t = 0; t < values.size(); ++t) {
        masked[t] = mask[t] != 0.0 ? values[t] : 0.0;
    }
    const auto num = diff::conv1d_same_centered(masked, kernel.weights);
    const auto den = diff::conv1d_same_centered(mask, kernel.weights);
    std::vector<double> out(values.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
        out[t] = std::abs(den[t]) >= eps ? num[t] / den[t] : fallback;
    }
    return out;
}

std::vector<double> impute_multivariate(const ObservationGrid& grid,
                                        const LearnableKernel2D& kernel, double eps,
                                        double fallback) {
    if (grid.lab_order != kernel.lab_order) {
        throw ConfigError("impute_multivariate: grid lab order does not match kernel for '" +
                          kernel.target_lab + "'");
    }
    const std::size_t T = grid.months;
    std::vector<double> num(T, 0.0);
    std::vector<double> den(T, 0.0);
    std::vector<double> masked(T);
    for (std::size_t d = 0; d < grid.labs(); ++d) {
        const auto values = grid.value_row(d);
        const auto mask = grid.mask_row(d);
        for (std::size_t t = 0; t < T; ++t) {
            masked[t] = mask[t] != 0.0 ? values[t] : 0.0;
        }
        const auto n = diff::conv1d_same_centered(masked, kernel.row(d));
        const auto m = diff::conv1d_same_centered(mask, kernel.row(d));
        for (std::size_t t = 0; t < T; ++t) {
            num[t] += n[t];
            den[t] += m[t];
        }
    }
    std::vector<double> out(T);
    for (std::size_t t = 0; t < T; ++t) {
        out[t] = std::abs(den[t]) >= eps ? num[t] / den[t] : fallback;
    }
    return out;
}

// ---------------------------------------------------------------------------

ObservationGrid series_grid(const Series& series, const std::string& lab) {
    ObservationGrid g({lab}, static_cast<std::size_t>(series.length), 0);
    for (const auto& o : series.obs) {
        if (o.month < 0 || o.month >= series.length) {
            throw ValidationError("series '" + series.id + "' has an observation outside [0, " +
                                  std::to_string(series.length) + ")");
        }
        g.set(0, static_cast<std::size_t>(o.month), o.value);
    }
    return g;
}

AugmentedGrid identity_augmentation(const ObservationGrid& grid) {
    AugmentedGrid out{grid, std::vector<int>(grid.mask.size(), -1)};
    for (std::size_t d = 0; d < grid.labs(); ++d) {
        for (std::size_t t = 0; t < grid.months; ++t) {
            if (grid.observed(d, t)) {
                out.origin[d * grid.months + t] = static_cast<int>(t);
            }
        }
    }
    return out;
}

AugmentedGrid augment(const ObservationGrid& grid, const AugmentConfig& cfg, diff::Rng& rng) {
    constexpr int kMaxAttempts = 8;
    const std::size_t T = grid.months;
    const bool jitter = cfg.time_jitter_std > 0.0;
    const bool noise = cfg.value_noise_std > 0.0;
    if (!jitter && !noise) {
        return identity_augmentation(grid);
    }
    std::normal_distribution<double> value_noise(0.0, noise ? cfg.value_noise_std : 1.0);
    std::normal_distribution<double> time_noise(0.0, jitter ? cfg.time_jitter_std : 1.0);

    AugmentedGrid out{ObservationGrid(grid.lab_order, T, grid.start_month),
                      std::vector<int>(grid.mask.size(), -1)};
    // A cell is occupied by an already placed observation or by the original
    // position of one not yet processed.
    std::vector<char> occupied(grid.mask.size());
    for (std::size_t i = 0; i < grid.mask.size(); ++i) {
        occupied[i] = grid.mask[i] != 0.0;
    }
    for (std::size_t d = 0; d < grid.labs(); ++d) {
        for (std::size_t t = 0; t < T; ++t) {
            if (!grid.observed(d, t)) {
                continue;
            }
            double v = grid.value(d, t);
            if (noise) {
                v += value_noise(rng);
            }
            std::size_t dest = t;
            if (jitter) {
                occupied[d * T + t] = 0;
                for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
                    const auto shift = static_cast<long>(std::floor(time_noise(rng)));
                    const long cand = static_cast<long>(t) + shift;
                    if (cand < 0 || cand >= static_cast<long>(T)) {
                        continue;
                    }
                    if (!occupied[d * T + static_cast<std::size_t>(cand)]) {
                        dest = static_cast<std::size_t>(cand);
                        break;
                    }
                }
                occupied[d * T + dest] = 1;
            }
            out.grid.set(d, dest, v);
            out.origin[d * T + dest] = static_cast<int>(t);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

LooResult loo_loss(const AugmentedGrid& data, std::span<const double> weights, int half_width,
                   std::size_t target_row, bool whole_month, double eps, bool with_grad,
                   double fallback) {
    const auto& g = data.grid;
    const std::size_t T = g.months;
    const std::size_t D = g.labs();
    const auto taps = static_cast<std::size_t>(2 * half_width + 1);
    if (weights.size() != D * taps) {
        throw DimensionError("loo_loss: weight count does not match grid rows and half-width");
    }
    if (target_row >= D) {
        throw DimensionError("loo_loss: target row out of range");
    }

    LooResult r;
    if (with_grad) {
        r.grad.assign(weights.size(), 0.0);
    }
    for (std::size_t t = 0; t < T; ++t) {
        if (!g.observed(target_row, t)) {
            continue;
        }
        const int origin = data.origin[target_row * T + t];
        const long q = origin;
        const double target = g.value(target_row, t);

        double num = 0.0;
        double den = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            for (int tau = -half_width; tau <= half_width; ++tau) {
                const long s = q + tau;
                if (s < 0 || s >= static_cast<long>(T)) {
                    continue;
                }
                const auto cell = d * T + static_cast<std::size_t>(s);
                if (g.mask[cell] == 0.0) {
                    continue;
                }
                if ((d == target_row && static_cast<std::size_t>(s) == t) ||
                    (whole_month && data.origin[cell] == origin)) {
                    continue;
                }
                const double w = weights[d * taps + static_cast<std::size_t>(tau + half_width)];
                num += w * g.values[cell];
                den += w;
            }
        }
        const bool defined = std::abs(den) >= eps;
        const double pred = defined ? num / den : fallback;
        const double err = pred - target;
        r.sum_squared += err * err;
        ++r.held_out;

        if (with_grad && defined) {
            const double scale = 2.0 * err / den;
            for (std::size_t d = 0; d < D; ++d) {
                for (int tau = -half_width; tau <= half_width; ++tau) {
                    const long s = q + tau;
                    if (s < 0 || s >= static_cast<long>(T)) {
                        continue;
                    }
                    const auto cell = d * T + static_cast<std::size_t>(s);
                    if (g.mask[cell] == 0.0) {
                        continue;
                    }
                    if ((d == target_row && static_cast<std::size_t>(s) == t) ||
                        (whole_month && data.origin[cell] == origin)) {
                        continue;
                    }
                    r.grad[d * taps + static_cast<std::size_t>(tau + half_width)] +=
                        scale * (g.values[cell] - pred);
                }
            }
        }
    }
    if (r.held_out > 0) {
        const double n = static_cast<double>(r.held_out);
        r.loss = r.sum_squared / n;
        for (auto& gr : r.grad) {
            gr /= n;
        }
    }
    return r;
}

LooResult loo_loss_univariate(const Series& series, const LearnableKernel1D& kernel, double eps,
                              bool with_grad, double fallback) {
    if (series.obs.size() < 2) {
        LooResult r;
        if (with_grad) {
            r.grad.assign(kernel.taps(), 0.0);
        }
        return r;
    }
    return loo_loss(identity_augmentation(series_grid(series)), kernel.weights, kernel.half_width,
                    0, false, eps, with_grad, fallback);
}

LooResult loo_loss_multivariate(const ObservationGrid& grid, const LearnableKernel2D& kernel,
                                double eps, bool with_grad, double fallback) {
    if (grid.lab_order != kernel.lab_order) {
        throw ConfigError("loo_loss_multivariate: grid lab order does not match kernel");
    }
    const std::size_t target = kernel.target_row();
    std::size_t n_target = 0;
    for (std::size_t t = 0; t < grid.months; ++t) {
        n_target += grid.observed(target, t) ? 1 : 0;
    }
    if (n_target < 2) {
        LooResult r;
        if (with_grad) {
            r.grad.assign(kernel.weights.size(), 0.0);
        }
        return r;
    }
    return loo_loss(identity_augmentation(grid), kernel.weights, kernel.half_width, target, true,
                    eps, with_grad, fallback);
}

std::vector<LooPoint> loo_predictions(const ObservationGrid& grid, const LearnableKernel2D& kernel,
                                      bool whole_month, double eps, double fallback) {
    if (grid.lab_order != kernel.lab_order) {
        throw ConfigError("loo_predictions: grid lab order does not match kernel");
    }
    const std::size_t target = kernel.target_row();
    const std::size_t T = grid.months;
    const int M = kernel.half_width;
    std::vector<LooPoint> out;
    for (std::size_t t = 0; t < T; ++t) {
        if (!grid.observed(target, t)) {
            continue;
        }
        double num = 0.0;
        double den = 0.0;
        for (std::size_t d = 0; d < grid.labs(); ++d) {
            for (int tau = -M; tau <= M; ++tau) {
                const long s = static_cast<long>(t) + tau;
                if (s < 0 || s >= static_cast<long>(T)) {
                    continue;
                }
                const auto su = static_cast<std::size_t>(s);
                if (!grid.observed(d, su) || (su == t && (whole_month || d == target))) {
                    continue;
                }
                const double w = kernel.at(d, tau);
                num += w * grid.value(d, su);
                den += w;
            }
        }
        out.push_back({std::abs(den) >= eps ? num / den : fallback, grid.value(target, t)});
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

struct TrainingMember {
    ObservationGrid grid;
    std::size_t targets = 0;
};

std::vector<double> train_weights(const std::vector<TrainingMember>& members,
                                  std::vector<double> weights, int half_width,
                                  std::size_t target_row, bool whole_month,
                                  const AugmentConfig& augment_cfg, const ImputeTrainConfig& cfg,
                                  KernelTrainLog* log) {
    cfg.sgd.validate();
    if (!(cfg.epsilon_denominator > 0.0)) {
        throw ConfigError("epsilon_denominator must be positive");
    }
    std::vector<std::size_t> usable;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (members[i].targets >= 2) {
            usable.push_back(i);
        } else {
            ++skipped;
        }
    }
    if (usable.empty()) {
        throw TrainingError("no training member has two or more target observations");
    }

    diff::Rng split_rng(cfg.sgd.seed);
    std::shuffle(usable.begin(), usable.end(), split_rng);
    auto n_val = static_cast<std::size_t>(
        std::llround(cfg.validation_fraction * static_cast<double>(usable.size())));
    if (usable.size() >= 2) {
        n_val = std::clamp<std::size_t>(n_val, 1, usable.size() - 1);
    } else {
        n_val = 0;
    }
    std::vector<std::size_t> val(usable.begin(), usable.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(usable.begin() + static_cast<std::ptrdiff_t>(n_val), usable.end());
    if (val.empty()) {
        val = train;
    }
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());

    std::vector<AugmentedGrid> val_data;
    val_data.reserve(val.size());
    for (auto i : val) {
        val_data.push_back(identity_augmentation(members[i].grid));
    }
    auto validation_mse = [&](const std::vector<double>& w) {
        double sq = 0.0;
        std::size_t n = 0;
        for (const auto& v : val_data) {
            const auto r = loo_loss(v, w, half_width, target_row, whole_month,
                                    cfg.epsilon_denominator, false, cfg.fallback_value);
            sq += r.sum_squared;
            n += r.held_out;
        }
        return sq / static_cast<double>(n);
    };

    const std::size_t n_weights = weights.size();
    diff::Param param{"kernel", diff::Tensor({n_weights}, std::move(weights))};
    param.tensor.ensure_grad();
    diff::Param* params[] = {&param};
    diff::Rng order_rng(cfg.sgd.seed ^ 0x5DEECE66DULL);
    diff::Rng aug_rng(augment_cfg.seed);

    // The starting kernel competes too, so a pretrained start is never lost.
    std::vector<double> best = param.tensor.values;
    double best_mse = validation_mse(best);
    if (!std::isfinite(best_mse)) {
        best_mse = INFINITY;
    }
    std::size_t best_epoch = cfg.sgd.epochs;
    KernelTrainLog local;
    local.skipped = skipped;

    for (std::size_t epoch = 0; epoch < cfg.sgd.epochs; ++epoch) {
        std::shuffle(train.begin(), train.end(), order_rng);
        double epoch_sq = 0.0;
        std::size_t epoch_n = 0;
        for (std::size_t start = 0; start < train.size(); start += cfg.sgd.batch_size) {
            const std::size_t stop = std::min(train.size(), start + cfg.sgd.batch_size);
            std::vector<double> grad_sum(param.tensor.size(), 0.0);
            double sq = 0.0;
            std::size_t n = 0;
            for (std::size_t b = start; b < stop; ++b) {
                const auto data = augment(members[train[b]].grid, augment_cfg, aug_rng);
                const auto r = loo_loss(data, param.tensor.values, half_width, target_row,
                                        whole_month, cfg.epsilon_denominator, true,
                                        cfg.fallback_value);
                for (std::size_t k = 0; k < grad_sum.size(); ++k) {
                    grad_sum[k] += r.grad[k] * static_cast<double>(r.held_out);
                }
                sq += r.sum_squared;
                n += r.held_out;
            }
            if (n == 0) {
                continue;
            }
            const double inv = 1.0 / static_cast<double>(n);
            for (std::size_t k = 0; k < grad_sum.size(); ++k) {
                param.tensor.grad[k] = grad_sum[k] * inv;
            }
            if (!std::isfinite(sq)) {
                throw TrainingError("kernel training diverged at epoch " + std::to_string(epoch));
            }
            if (cfg.grad_clip_norm > 0.0) {
                double norm = 0.0;
                for (double g : param.tensor.grad) {
                    norm += g * g;
                }
                norm = std::sqrt(norm);
                if (norm > cfg.grad_clip_norm) {
                    for (double& g : param.tensor.grad) {
                        g *= cfg.grad_clip_norm / norm;
                    }
                }
            }
            diff::sgd_step(params, epoch, cfg.sgd);
            if (cfg.renormalize) {
                double peak = 0.0;
                for (double w : param.tensor.values) {
                    peak = std::max(peak, std::abs(w));
                }
                if (peak > 0.0) {
                    for (double& w : param.tensor.values) {
                        w /= peak;
                    }
                }
            }
            epoch_sq += sq;
            epoch_n += n;
        }
        if (!param.tensor.all_finite()) {
            throw TrainingError("kernel training diverged at epoch " + std::to_string(epoch));
        }
        const double mse = validation_mse(param.tensor.values);
        if (!std::isfinite(mse)) {
            throw TrainingError("kernel training diverged at epoch " + std::to_string(epoch));
        }
        local.train_loss.push_back(epoch_n ? epoch_sq / static_cast<double>(epoch_n) : 0.0);
        local.validation_mse.push_back(mse);
        if (mse < best_mse) {
            best_mse = mse;
            best = param.tensor.values;
            best_epoch = epoch;
        }
    }
    local.best_epoch = best_epoch;
    if (log != nullptr) {
        *log = std::move(local);
    }
    return best;
}

}  // namespace

LearnableKernel1D train_kernel_univariate(std::span<const Series> series, int half_width,
                                          const AugmentConfig& augment_cfg,
                                          const ImputeTrainConfig& cfg, KernelTrainLog* log) {
    if (series.empty()) {
        throw TrainingError("train_kernel_univariate: empty series collection");
    }
    std::vector<TrainingMember> members;
    members.reserve(series.size());
    for (const auto& s : series) {
        members.push_back({series_grid(s), s.obs.size()});
    }
    auto init = LearnableKernel1D::initial(half_width, cfg.sgd.seed + 1);
    auto w = train_weights(members, std::move(init.weights), half_width, 0, false, augment_cfg,
                           cfg, log);
    return {half_width, std::move(w)};
}

LearnableKernel2D train_kernel_multivariate(std::span<const ObservationGrid> grids,
                                            const std::string& target_lab, int half_width,
                                            const AugmentConfig& augment_cfg,
                                            const ImputeTrainConfig& cfg, KernelTrainLog* log,
                                            const LearnableKernel1D* pretrained) {
    if (grids.empty()) {
        throw TrainingError("train_kernel_multivariate: empty cohort");
    }
    const auto& lab_order = grids.front().lab_order;
    auto kernel = LearnableKernel2D::initial(target_lab, lab_order, half_width, cfg.sgd.seed + 1);
    if (pretrained != nullptr) {
        if (pretrained->half_width != half_width) {
            throw ConfigError("train_kernel_multivariate: pretrained kernel has half-width " +
                              std::to_string(pretrained->half_width));
        }
        kernel = LearnableKernel2D::from_univariate(*pretrained, target_lab, lab_order);
    }
    const std::size_t target = kernel.target_row();
    std::vector<TrainingMember> members;
    members.reserve(grids.size());
    for (const auto& g : grids) {
        if (g.lab_order != lab_order) {
            throw ConfigError("train_kernel_multivariate: grids disagree on lab order");
        }
        std::size_t n = 0;
        for (std::size_t t = 0; t < g.months; ++t) {
            n += g.observed(target, t) ? 1 : 0;
        }
        members.push_back({g, n});
    }
    kernel.weights = train_weights(members, std::move(kernel.weights), half_width, target, true,
                                   augment_cfg, cfg, log);
    return kernel;
}

// ---------------------------------------------------------------------------

ImputedGrid impute_window(const ObservationGrid& window, const KernelSet& kernels, double eps,
                          double fallback) {
    ImputedGrid out{window.lab_order, window.months,
                    std::vector<double>(window.values.size()), window.mask};
    for (std::size_t d = 0; d < window.labs(); ++d) {
        auto it = kernels.find(window.lab_order[d]);
        if (it == kernels.end()) {
            throw ConfigError("no imputation kernel for lab '" + window.lab_order[d] + "'");
        }
        const auto row = impute_multivariate(window, it->second, eps, fallback);
        std::copy(row.begin(), row.end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(d * window.months));
    }
    return out;
}

std::vector<ImputedGrid> impute_cohort(std::span<const cohort::WindowSample> samples,
                                       const KernelSet& kernels, double eps, double fallback) {
    std::vector<ImputedGrid> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        out.push_back(impute_window(s.input, kernels, eps, fallback));
    }
    return out;
}

std::vector<Series> lab_series(std::span<const cohort::PatientRecord> patients,
                               const std::string& lab) {
    std::vector<Series> out;
    out.reserve(patients.size());
    for (const auto& p : patients) {
        Series s{p.person_id, p.history_months, {}};
        if (auto it = p.labs.find(lab); it != p.labs.end()) {
            s.obs = it->second;
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace labconv::imputer
