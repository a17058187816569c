#include "labconv/diffcore.hpp"

#include "labconv/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace labconv::diff {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::size_t trailing_dim(const Tensor& t) {
    if (t.shape.empty()) {
        return 1;
    }
    return t.shape.back();
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "," : "") << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), values(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (shape_size(shape) != values.size()) {
        throw DimensionError("tensor shape " + shape_string(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
    }
}

void Tensor::ensure_grad() {
    if (grad.size() != values.size()) {
        grad.assign(values.size(), 0.0);
    }
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

std::size_t Tensor::rows() const {
    const auto c = cols();
    return c == 0 ? 0 : size() / c;
}

std::size_t Tensor::cols() const { return trailing_dim(*this); }

bool Tensor::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

std::vector<double> conv1d_valid(std::span<const double> signal, std::span<const double> kernel,
                                 double bias) {
    const std::size_t n = signal.size();
    const std::size_t len = kernel.size();
    if (len == 0 || len > n) {
        throw DimensionError("conv1d_valid: kernel length " + std::to_string(len) +
                             " incompatible with signal length " + std::to_string(n));
    }
    std::vector<double> out(n - len + 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double acc = bias;
        for (std::size_t l = 0; l < len; ++l) {
            acc += kernel[l] * signal[i + l];
        }
        out[i] = acc;
    }
    return out;
}

void conv1d_valid_backward(std::span<const double> signal, std::span<const double> kernel,
                           std::span<const double> grad_out, std::span<double> grad_signal,
                           std::span<double> grad_kernel, double& grad_bias) {
    const std::size_t len = kernel.size();
    if (grad_out.size() + len != signal.size() + 1) {
        throw DimensionError("conv1d_valid_backward: gradient length mismatch");
    }
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        const double g = grad_out[i];
        grad_bias += g;
        for (std::size_t l = 0; l < len; ++l) {
            grad_kernel[l] += g * signal[i + l];
        }
        if (!grad_signal.empty()) {
            for (std::size_t l = 0; l < len; ++l) {
                grad_signal[i + l] += g * kernel[l];
            }
        }
    }
}

std::vector<double> conv1d_same_centered(std::span<const double> signal,
                                         std::span<const double> kernel) {
    if (kernel.size() % 2 == 0) {
        throw ConfigError("conv1d_same_centered: kernel length " + std::to_string(kernel.size()) +
                          " is not odd");
    }
    const auto n = static_cast<std::ptrdiff_t>(signal.size());
    const auto half = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    std::vector<double> out(signal.size(), 0.0);
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        const std::ptrdiff_t lo = std::max(-half, -t);
        const std::ptrdiff_t hi = std::min(half, n - 1 - t);
        double acc = 0.0;
        for (std::ptrdiff_t tau = lo; tau <= hi; ++tau) {
            acc += kernel[tau + half] * signal[t + tau];
        }
        out[t] = acc;
    }
    return out;
}

void conv1d_same_centered_backward(std::span<const double> signal, std::span<const double> kernel,
                                   std::span<const double> grad_out, std::span<double> grad_signal,
                                   std::span<double> grad_kernel) {
    if (kernel.size() % 2 == 0) {
        throw ConfigError("conv1d_same_centered_backward: kernel length is not odd");
    }
    if (grad_out.size() != signal.size()) {
        throw DimensionError("conv1d_same_centered_backward: gradient length mismatch");
    }
    const auto n = static_cast<std::ptrdiff_t>(signal.size());
    const auto half = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        const double g = grad_out[t];
        const std::ptrdiff_t lo = std::max(-half, -t);
        const std::ptrdiff_t hi = std::min(half, n - 1 - t);
        for (std::ptrdiff_t tau = lo; tau <= hi; ++tau) {
            grad_kernel[tau + half] += g * signal[t + tau];
            if (!grad_signal.empty()) {
                grad_signal[t + tau] += g * kernel[tau + half];
            }
        }
    }
}

PoolResult maxpool(std::span<const double> signal, std::size_t p) {
    if (p == 0 || signal.size() < p) {
        throw DimensionError("maxpool: pool size " + std::to_string(p) +
                             " exceeds signal length " + std::to_string(signal.size()));
    }
    const std::size_t n_out = signal.size() / p;
    PoolResult result;
    result.values.resize(n_out);
    result.argmax.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        std::size_t best = i * p;
        for (std::size_t k = i * p + 1; k < (i + 1) * p; ++k) {
            if (signal[k] > signal[best]) {
                best = k;
            }
        }
        result.values[i] = signal[best];
        result.argmax[i] = best;
    }
    return result;
}

void maxpool_backward(std::span<const double> grad_out, std::span<const std::size_t> argmax,
                      std::span<double> grad_in) {
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        grad_in[argmax[i]] += grad_out[i];
    }
}

// ---------------------------------------------------------------------------

Tensor activation(Activation kind, const Tensor& input) {
    Tensor out(input.shape);
    switch (kind) {
    case Activation::relu:
        for (std::size_t i = 0; i < input.size(); ++i) {
            out[i] = input[i] > 0.0 ? input[i] : 0.0;
        }
        break;
    case Activation::sigmoid:
        for (std::size_t i = 0; i < input.size(); ++i) {
            const double x = input[i];
            // Two branches keep exp() from overflowing.
            if (x >= 0.0) {
                out[i] = 1.0 / (1.0 + std::exp(-x));
            } else {
                const double e = std::exp(x);
                out[i] = e / (1.0 + e);
            }
        }
        break;
    case Activation::log_softmax2: {
        if (trailing_dim(input) != 2) {
            throw DimensionError("log_softmax2 expects a trailing dimension of 2, got shape " +
                                 shape_string(input.shape));
        }
        for (std::size_t i = 0; i < input.size(); i += 2) {
            const double a = input[i];
            const double b = input[i + 1];
            const double hi = std::max(a, b);
            const double lse = hi + std::log(std::exp(a - hi) + std::exp(b - hi));
            out[i] = a - lse;
            out[i + 1] = b - lse;
        }
        break;
    }
    }
    return out;
}

Tensor activation_backward(Activation kind, const Tensor& input, const Tensor& output,
                           const Tensor& grad_out) {
    Tensor grad(input.shape);
    switch (kind) {
    case Activation::relu:
        for (std::size_t i = 0; i < input.size(); ++i) {
            grad[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
        }
        break;
    case Activation::sigmoid:
        for (std::size_t i = 0; i < input.size(); ++i) {
            grad[i] = grad_out[i] * output[i] * (1.0 - output[i]);
        }
        break;
    case Activation::log_softmax2:
        for (std::size_t i = 0; i < input.size(); i += 2) {
            const double gsum = grad_out[i] + grad_out[i + 1];
            grad[i] = grad_out[i] - std::exp(output[i]) * gsum;
            grad[i + 1] = grad_out[i + 1] - std::exp(output[i + 1]) * gsum;
        }
        break;
    }
    return grad;
}

// ---------------------------------------------------------------------------

BatchNormState BatchNormState::make(const std::string& name, std::size_t features) {
    BatchNormState s;
    s.gamma = Param{name + ".gamma", Tensor({features}, 1.0)};
    s.beta = Param{name + ".beta", Tensor({features}, 0.0)};
    s.running_mean.assign(features, 0.0);
    s.running_var.assign(features, 1.0);
    return s;
}

Tensor batchnorm_forward(const Tensor& input, BatchNormState& state, BatchNormCache& cache) {
    const std::size_t f = state.features();
    if (trailing_dim(input) != f) {
        throw DimensionError("batchnorm: input shape " + shape_string(input.shape) +
                             " does not end in " + std::to_string(f) + " features");
    }
    const std::size_t n = input.size() / f;
    cache.rows = n;
    cache.mode = state.mode;
    cache.x_hat.resize(input.size());
    cache.inv_std.resize(f);

    std::vector<double> mean(f, 0.0);
    std::vector<double> var(f, 0.0);
    if (state.mode == Mode::train) {
        if (n < 2) {
            throw TrainingError("batchnorm: train mode needs a batch of at least 2, got " +
                                std::to_string(n));
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < f; ++j) {
                mean[j] += input[i * f + j];
            }
        }
        for (auto& m : mean) {
            m /= static_cast<double>(n);
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < f; ++j) {
                const double d = input[i * f + j] - mean[j];
                var[j] += d * d;
            }
        }
        for (std::size_t j = 0; j < f; ++j) {
            var[j] /= static_cast<double>(n);
            const double unbiased = var[j] * static_cast<double>(n) / static_cast<double>(n - 1);
            state.running_mean[j] =
                (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean[j];
            state.running_var[j] =
                (1.0 - state.momentum) * state.running_var[j] + state.momentum * unbiased;
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }
    for (std::size_t j = 0; j < f; ++j) {
        cache.inv_std[j] = 1.0 / std::sqrt(var[j] + state.epsilon);
    }

    Tensor out(input.shape);
    const auto& gamma = state.gamma.tensor.values;
    const auto& beta = state.beta.tensor.values;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) {
            const std::size_t k = i * f + j;
            const double xh = (input[k] - mean[j]) * cache.inv_std[j];
            cache.x_hat[k] = xh;
            out[k] = gamma[j] * xh + beta[j];
        }
    }
    return out;
}

Tensor batchnorm_backward(const Tensor& grad_out, BatchNormState& state,
                          const BatchNormCache& cache) {
    const std::size_t f = state.features();
    const std::size_t n = cache.rows;
    state.gamma.tensor.ensure_grad();
    state.beta.tensor.ensure_grad();
    auto& dgamma = state.gamma.tensor.grad;
    auto& dbeta = state.beta.tensor.grad;
    const auto& gamma = state.gamma.tensor.values;

    std::vector<double> sum_dy(f, 0.0);
    std::vector<double> sum_dy_xhat(f, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) {
            const std::size_t k = i * f + j;
            sum_dy[j] += grad_out[k];
            sum_dy_xhat[j] += grad_out[k] * cache.x_hat[k];
        }
    }
    for (std::size_t j = 0; j < f; ++j) {
        dgamma[j] += sum_dy_xhat[j];
        dbeta[j] += sum_dy[j];
    }

    Tensor grad_in(grad_out.shape);
    if (cache.mode == Mode::eval) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < f; ++j) {
                const std::size_t k = i * f + j;
                grad_in[k] = grad_out[k] * gamma[j] * cache.inv_std[j];
            }
        }
        return grad_in;
    }
    const double dn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) {
            const std::size_t k = i * f + j;
            grad_in[k] = gamma[j] * cache.inv_std[j] / dn *
                         (dn * grad_out[k] - sum_dy[j] - cache.x_hat[k] * sum_dy_xhat[j]);
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------

Tensor dropout(const Tensor& input, double p_drop, Mode mode, Rng& rng, DropoutMask& mask) {
    if (!(p_drop >= 0.0 && p_drop < 1.0)) {
        throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p_drop));
    }
    if (mode == Mode::eval || p_drop == 0.0) {
        mask.scale.clear();
        return input;
    }
    const double keep_scale = 1.0 / (1.0 - p_drop);
    std::bernoulli_distribution drop(p_drop);
    mask.scale.resize(input.size());
    Tensor out(input.shape);
    for (std::size_t i = 0; i < input.size(); ++i) {
        mask.scale[i] = drop(rng) ? 0.0 : keep_scale;
        out[i] = input[i] * mask.scale[i];
    }
    return out;
}

Tensor dropout_backward(const Tensor& grad_out, const DropoutMask& mask) {
    if (mask.scale.empty()) {
        return grad_out;
    }
    Tensor grad(grad_out.shape);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = grad_out[i] * mask.scale[i];
    }
    return grad;
}

// ---------------------------------------------------------------------------

Tensor dense(const Tensor& input, const Param& weights, const Param& bias) {
    const auto& w = weights.tensor;
    if (w.shape.size() != 2 || trailing_dim(input) != w.shape[0] ||
        bias.tensor.size() != w.shape[1]) {
        throw DimensionError("dense '" + weights.name + "': input " + shape_string(input.shape) +
                             ", weights " + shape_string(w.shape) + ", bias " +
                             shape_string(bias.tensor.shape));
    }
    const auto batch = static_cast<Eigen::Index>(input.rows());
    const auto in = static_cast<Eigen::Index>(w.shape[0]);
    const auto out_dim = static_cast<Eigen::Index>(w.shape[1]);
    Shape out_shape = input.shape;
    out_shape.back() = w.shape[1];
    Tensor out(out_shape);
    ConstMatrixMap x(input.values.data(), batch, in);
    ConstMatrixMap wm(w.values.data(), in, out_dim);
    Eigen::Map<const Eigen::RowVectorXd> b(bias.tensor.values.data(), out_dim);
    MatrixMap y(out.values.data(), batch, out_dim);
    y.noalias() = x * wm;
    y.rowwise() += b;
    return out;
}

Tensor dense_backward(const Tensor& input, Param& weights, Param& bias, const Tensor& grad_out) {
    auto& w = weights.tensor;
    const auto batch = static_cast<Eigen::Index>(input.rows());
    const auto in = static_cast<Eigen::Index>(w.shape[0]);
    const auto out_dim = static_cast<Eigen::Index>(w.shape[1]);
    w.ensure_grad();
    bias.tensor.ensure_grad();

    ConstMatrixMap x(input.values.data(), batch, in);
    ConstMatrixMap dy(grad_out.values.data(), batch, out_dim);
    ConstMatrixMap wm(w.values.data(), in, out_dim);
    MatrixMap dw(w.grad.data(), in, out_dim);
    Eigen::Map<Eigen::RowVectorXd> db(bias.tensor.grad.data(), out_dim);
    dw.noalias() += x.transpose() * dy;
    db += dy.colwise().sum();

    Tensor grad_in(input.shape);
    MatrixMap dx(grad_in.values.data(), batch, in);
    dx.noalias() = dy * wm.transpose();
    return grad_in;
}

// ---------------------------------------------------------------------------

LossResult weighted_nll(const Tensor& log_probs, std::span<const int> labels, double pos_weight) {
    if (trailing_dim(log_probs) != 2 || log_probs.rows() != labels.size()) {
        throw DimensionError("weighted_nll: log_probs " + shape_string(log_probs.shape) +
                             " vs " + std::to_string(labels.size()) + " labels");
    }
    if (!std::isfinite(pos_weight) || pos_weight <= 0.0) {
        throw ConfigError("weighted_nll: pos_weight must be finite and positive");
    }
    LossResult r;
    r.grad = Tensor(log_probs.shape);
    const std::size_t n = labels.size();
    if (n == 0) {
        return r;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        const double w = y == 1 ? pos_weight : 1.0;
        total += -w * log_probs[2 * i + static_cast<std::size_t>(y)];
        r.grad[2 * i + static_cast<std::size_t>(y)] = -w * inv_n;
    }
    r.loss = total / static_cast<double>(n);
    return r;
}

LossResult mse(std::span<const double> pred, std::span<const double> target) {
    if (pred.empty()) {
        throw EvaluationError("mse: empty input");
    }
    if (pred.size() != target.size()) {
        throw DimensionError("mse: prediction length " + std::to_string(pred.size()) +
                             " vs target length " + std::to_string(target.size()));
    }
    LossResult r;
    r.grad = Tensor({pred.size()});
    const double n = static_cast<double>(pred.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        total += d * d;
        r.grad[i] = 2.0 * d / n;
    }
    r.loss = total / n;
    return r;
}

// ---------------------------------------------------------------------------

double SgdConfig::learning_rate_at(std::size_t epoch) const {
    return learning_rate * std::pow(decay_per_epoch, static_cast<double>(epoch));
}

void SgdConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("sgd: learning_rate must be positive");
    }
    if (!(decay_per_epoch > 0.0 && decay_per_epoch <= 1.0)) {
        throw ConfigError("sgd: decay_per_epoch must lie in (0, 1]");
    }
    if (batch_size == 0 || epochs == 0) {
        throw ConfigError("sgd: batch_size and epochs must be positive");
    }
}

void sgd_step(std::span<Param* const> params, std::size_t epoch, const SgdConfig& cfg) {
    for (const Param* p : params) {
        if (!p->tensor.has_grad()) {
            throw TrainingError("sgd_step: parameter '" + p->name + "' has no gradient");
        }
    }
    const double lr = cfg.learning_rate_at(epoch);
    for (Param* p : params) {
        auto& t = p->tensor;
        for (std::size_t i = 0; i < t.size(); ++i) {
            t.values[i] -= lr * t.grad[i];
        }
        t.zero_grad();
    }
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const LossClosure& loss, std::span<Param* const> params, double rel_tol,
                           const GradCheckOptions& options) {
    for (Param* p : params) {
        p->tensor.ensure_grad();
        p->tensor.zero_grad();
    }
    const double base = loss(true);
    const double again = loss(false);
    const double third = loss(false);
    if (!(again == third) || !std::isfinite(base)) {
        throw CheckError("grad_check: loss closure is not deterministic or not finite");
    }

    GradCheckReport report;
    Rng rng(options.seed);
    for (Param* p : params) {
        auto& t = p->tensor;
        const std::vector<double> analytic = t.grad;
        std::vector<std::size_t> idx(t.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (idx.size() > options.max_entries_per_param) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(options.max_entries_per_param);
            std::sort(idx.begin(), idx.end());
        }
        for (std::size_t i : idx) {
            const double saved = t.values[i];
            t.values[i] = saved + options.step;
            const double up = loss(false);
            t.values[i] = saved - options.step;
            const double down = loss(false);
            t.values[i] = saved;
            const double numeric = (up - down) / (2.0 * options.step);
            const double denom =
                std::max({std::abs(numeric), std::abs(analytic[i]), options.abs_floor});
            const double rel = std::abs(numeric - analytic[i]) / denom;
            ++report.entries_checked;
            if (rel > report.max_rel_error || !std::isfinite(rel)) {
                report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
                report.worst_param = p->name;
                report.worst_index = i;
            }
        }
    }
    report.passed = report.max_rel_error < rel_tol;
    return report;
}

}  // namespace labconv::diff
