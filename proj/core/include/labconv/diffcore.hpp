#pragma once

// Minimal differentiable numeric core: a flat tensor type, the layers used by
// the imputer and the predictor with hand-written backward rules, the two
// losses, plain SGD with per-epoch decay, and a finite-difference checker.
//
// Every backward function *accumulates* into parameter gradients and returns
// (or accumulates into) the gradient with respect to its input. Callers own
// the order of operations; there is no tape.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace labconv::diff {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

enum class Mode { train, eval };

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Tensor {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty when absent

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> v);

    std::size_t size() const noexcept { return values.size(); }
    bool has_grad() const noexcept { return !grad.empty(); }
    /// Allocates a zero gradient if none is present.
    void ensure_grad();
    void zero_grad();

    /// Leading extent for a row-major 2-D view (`rows() * cols() == size()`).
    std::size_t rows() const;
    std::size_t cols() const;

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    bool all_finite() const;
};

struct Param {
    std::string name;
    Tensor tensor;
};

// ---------------------------------------------------------------------------
// Convolution and pooling (1-D, single channel; callers loop over channels)

/// out[i] = bias + sum_l kernel[l] * signal[i + l]   (cross-correlation, no flip)
std::vector<double> conv1d_valid(std::span<const double> signal, std::span<const double> kernel,
                                 double bias);

/// Accumulates into grad_signal (skipped when empty), grad_kernel and grad_bias.
void conv1d_valid_backward(std::span<const double> signal, std::span<const double> kernel,
                           std::span<const double> grad_out, std::span<double> grad_signal,
                           std::span<double> grad_kernel, double& grad_bias);

/// Centered, zero-padded correlation with an odd kernel of length 2M+1:
/// out[t] = sum_{tau=-M..M} kernel[tau + M] * signal[t + tau].
std::vector<double> conv1d_same_centered(std::span<const double> signal,
                                         std::span<const double> kernel);

void conv1d_same_centered_backward(std::span<const double> signal, std::span<const double> kernel,
                                   std::span<const double> grad_out, std::span<double> grad_signal,
                                   std::span<double> grad_kernel);

struct PoolResult {
    std::vector<double> values;
    std::vector<std::size_t> argmax;  // index into the input, first maximum on ties
};

/// Non-overlapping max pooling; a trailing partial window is dropped.
PoolResult maxpool(std::span<const double> signal, std::size_t p);

/// Routes each output gradient to its argmax position (accumulating).
void maxpool_backward(std::span<const double> grad_out, std::span<const std::size_t> argmax,
                      std::span<double> grad_in);

// ---------------------------------------------------------------------------
// Pointwise activations

enum class Activation { relu, sigmoid, log_softmax2 };

Tensor activation(Activation kind, const Tensor& input);

/// Gradient w.r.t. the activation input, given the forward input and output.
Tensor activation_backward(Activation kind, const Tensor& input, const Tensor& output,
                           const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Batch normalization over an N x F view (F = trailing dimension)

struct BatchNormState {
    Param gamma;
    Param beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;
    Mode mode = Mode::train;

    static BatchNormState make(const std::string& name, std::size_t features);
    std::size_t features() const noexcept { return running_mean.size(); }
};

struct BatchNormCache {
    std::vector<double> x_hat;
    std::vector<double> inv_std;
    std::size_t rows = 0;
    Mode mode = Mode::eval;
};

Tensor batchnorm_forward(const Tensor& input, BatchNormState& state, BatchNormCache& cache);
Tensor batchnorm_backward(const Tensor& grad_out, BatchNormState& state,
                          const BatchNormCache& cache);

// ---------------------------------------------------------------------------
// Inverted dropout

struct DropoutMask {
    std::vector<double> scale;  // empty means identity
};

Tensor dropout(const Tensor& input, double p_drop, Mode mode, Rng& rng, DropoutMask& mask);
Tensor dropout_backward(const Tensor& grad_out, const DropoutMask& mask);

// ---------------------------------------------------------------------------
// Affine layer: (batch x in) * (in x out) + bias

Tensor dense(const Tensor& input, const Param& weights, const Param& bias);
Tensor dense_backward(const Tensor& input, Param& weights, Param& bias, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Losses

struct LossResult {
    double loss = 0.0;
    Tensor grad;  // d loss / d input, same shape as the input
};

/// Mean over rows of -w_i * log_probs[i, label_i]; w_i = pos_weight for label 1.
LossResult weighted_nll(const Tensor& log_probs, std::span<const int> labels, double pos_weight);

LossResult mse(std::span<const double> pred, std::span<const double> target);

// ---------------------------------------------------------------------------
// Optimization

struct SgdConfig {
    double learning_rate = 0.01;
    double decay_per_epoch = 0.95;
    std::size_t batch_size = 256;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;

    double learning_rate_at(std::size_t epoch) const;
    void validate() const;
};

/// p -= lr_epoch * grad, then zeroes every gradient.
void sgd_step(std::span<Param* const> params, std::size_t epoch, const SgdConfig& cfg);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

/// Evaluates the loss; when `backprop` is true it must also accumulate the
/// analytic gradient into every checked parameter.
using LossClosure = std::function<double(bool backprop)>;

struct GradCheckOptions {
    double step = 1e-5;
    std::size_t max_entries_per_param = 48;
    std::uint64_t seed = 7;
    // Denominator floor for the relative error so that exact zeros compare sanely.
    double abs_floor = 1e-6;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t entries_checked = 0;
    bool passed = false;
};

GradCheckReport grad_check(const LossClosure& loss, std::span<Param* const> params, double rel_tol,
                           const GradCheckOptions& options = {});

}  // namespace labconv::diff
