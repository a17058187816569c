#pragma once

// Differentiable Nadaraya-Watson kernel regression written as a normalized
// convolution: imputed = (K * values) / (K * mask). Kernels are learned by
// SGD on a leave-one-out reconstruction loss with time-jitter augmentation.
//
// Offsets are measured as (observation month - query month), so weight index
// `offset + M` multiplies the observation `offset` months after the query.

#include "labconv/cohort.hpp"
#include "labconv/diffcore.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace labconv::imputer {

using cohort::LabObservation;
using cohort::ObservationGrid;

inline constexpr double kDefaultEpsilon = 1e-8;
inline constexpr int kDefaultHalfWidth = 12;

/// One lab's observations for one person over months [0, length).
struct Series {
    std::string id;
    int length = 0;
    std::vector<LabObservation> obs;
};

struct LearnableKernel1D {
    int half_width = 0;
    std::vector<double> weights;  // 2M + 1 taps

    /// Gaussian bump exp(-tau^2 / 18) with uniform +-0.01 noise.
    static LearnableKernel1D initial(int half_width, std::uint64_t seed);

    std::size_t taps() const noexcept { return weights.size(); }
    double at(int offset) const { return weights[static_cast<std::size_t>(offset + half_width)]; }
    void validate() const;
};

struct LearnableKernel2D {
    std::string target_lab;
    int half_width = 0;
    std::vector<std::string> lab_order;
    std::vector<double> weights;  // D x (2M + 1), row-major

    static LearnableKernel2D initial(std::string target_lab, std::vector<std::string> lab_order,
                                     int half_width, std::uint64_t seed);
    /// Embeds a univariate kernel as the target row; all other rows zero.
    static LearnableKernel2D from_univariate(const LearnableKernel1D& kernel,
                                             std::string target_lab,
                                             std::vector<std::string> lab_order);

    std::size_t taps() const noexcept { return static_cast<std::size_t>(2 * half_width + 1); }
    std::size_t target_row() const;
    double at(std::size_t d, int offset) const {
        return weights[d * taps() + static_cast<std::size_t>(offset + half_width)];
    }
    std::span<const double> row(std::size_t d) const { return {weights.data() + d * taps(), taps()}; }
    void validate() const;
};

struct AugmentConfig {
    double value_noise_std = 0.01;
    double time_jitter_std = 2.0;
    std::uint64_t seed = 0;
};

struct ImputeTrainConfig {
    diff::SgdConfig sgd{0.05, 0.95, 16, 40, 0};
    double epsilon_denominator = kDefaultEpsilon;
    double fallback_value = 0.0;
    /// Share of the training collection held out for best-epoch selection.
    double validation_fraction = 0.2;
    /// Minibatch gradients longer than this (L2) are rescaled to it; 0 disables.
    double grad_clip_norm = 1.0;
    /// Rescale the kernel to unit max |weight| after every step. The loss is
    /// invariant to positive scaling, so this only keeps step sizes comparable.
    bool renormalize = true;
};

// ---------------------------------------------------------------------------
// Estimators

/// Direct-sum reference: sum x_i K(t_i - t) / sum K(t_i - t) over |t_i - t| <= M.
std::optional<double> nw_oracle(std::span<const LabObservation> observations,
                                const LearnableKernel1D& kernel, int t_query,
                                double eps = kDefaultEpsilon);

std::vector<double> impute_univariate(std::span<const double> values, std::span<const double> mask,
                                      const LearnableKernel1D& kernel,
                                      double eps = kDefaultEpsilon, double fallback = 0.0);

/// Imputes the kernel's target lab at every month of the grid.
std::vector<double> impute_multivariate(const ObservationGrid& grid,
                                        const LearnableKernel2D& kernel,
                                        double eps = kDefaultEpsilon, double fallback = 0.0);

// ---------------------------------------------------------------------------
// Augmentation

/// A perturbed grid; `origin[d * months + t]` is the pre-jitter month of the
/// observation now at (d, t), or -1 for an empty cell.
struct AugmentedGrid {
    ObservationGrid grid;
    std::vector<int> origin;
};

AugmentedGrid identity_augmentation(const ObservationGrid& grid);
AugmentedGrid augment(const ObservationGrid& grid, const AugmentConfig& cfg, diff::Rng& rng);

ObservationGrid series_grid(const Series& series, const std::string& lab = "x");

// ---------------------------------------------------------------------------
// Leave-one-out losses

struct LooResult {
    double loss = 0.0;            // mean squared error over held-out points
    double sum_squared = 0.0;
    std::size_t held_out = 0;
    std::vector<double> grad;     // d loss / d weights (empty unless requested)
};

/// Holds out each observation of the series in turn (single-cell masking).
LooResult loo_loss_univariate(const Series& series, const LearnableKernel1D& kernel,
                              double eps = kDefaultEpsilon, bool with_grad = false,
                              double fallback = 0.0);

/// Holds out each observed month of the target lab, masking every lab at that month.
LooResult loo_loss_multivariate(const ObservationGrid& grid, const LearnableKernel2D& kernel,
                                double eps = kDefaultEpsilon, bool with_grad = false,
                                double fallback = 0.0);

/// General form used by training: targets are identified through `origin`;
/// each is queried at its pre-jitter month. With `whole_month` every cell
/// sharing that origin month is masked as well.
LooResult loo_loss(const AugmentedGrid& data, std::span<const double> weights, int half_width,
                   std::size_t target_row, bool whole_month, double eps, bool with_grad,
                   double fallback);

struct LooPoint {
    double prediction = 0.0;
    double target = 0.0;
};

/// Per-held-out predictions without augmentation (used for evaluation tables).
std::vector<LooPoint> loo_predictions(const ObservationGrid& grid, const LearnableKernel2D& kernel,
                                      bool whole_month, double eps = kDefaultEpsilon,
                                      double fallback = 0.0);

// ---------------------------------------------------------------------------
// Training

struct KernelTrainLog {
    std::vector<double> train_loss;
    std::vector<double> validation_mse;
    /// Epoch whose kernel was kept; equals the epoch count when no epoch beat
    /// the starting kernel.
    std::size_t best_epoch = 0;
    std::size_t skipped = 0;  // members with fewer than two target observations
};

LearnableKernel1D train_kernel_univariate(std::span<const Series> series, int half_width,
                                          const AugmentConfig& augment_cfg,
                                          const ImputeTrainConfig& cfg,
                                          KernelTrainLog* log = nullptr);

LearnableKernel2D train_kernel_multivariate(std::span<const ObservationGrid> grids,
                                            const std::string& target_lab, int half_width,
                                            const AugmentConfig& augment_cfg,
                                            const ImputeTrainConfig& cfg,
                                            KernelTrainLog* log = nullptr,
                                            const LearnableKernel1D* pretrained = nullptr);

// ---------------------------------------------------------------------------
// Cohort-level inference

/// One trained kernel per lab, keyed by target lab code.
using KernelSet = std::map<std::string, LearnableKernel2D>;

/// Dense D x T imputed values next to the original observation mask.
struct ImputedGrid {
    std::vector<std::string> lab_order;
    std::size_t months = 0;
    std::vector<double> values;
    std::vector<double> mask;
};

ImputedGrid impute_window(const ObservationGrid& window, const KernelSet& kernels,
                          double eps = kDefaultEpsilon, double fallback = 0.0);

std::vector<ImputedGrid> impute_cohort(std::span<const cohort::WindowSample> samples,
                                           const KernelSet& kernels,
                                           double eps = kDefaultEpsilon, double fallback = 0.0);

/// Splits patient records into per-lab series (id = person id).
std::vector<Series> lab_series(std::span<const cohort::PatientRecord> patients,
                               const std::string& lab);

// ---------------------------------------------------------------------------
// Persistence

void write_kernel(const std::filesystem::path& path, const LearnableKernel2D& kernel);
LearnableKernel2D read_kernel(const std::filesystem::path& path);

void write_kernel(const std::filesystem::path& path, const LearnableKernel1D& kernel,
                  const std::string& lab);
/// Reads a single-lab kernel file; returns the lab code through `lab`.
LearnableKernel1D read_kernel_univariate(const std::filesystem::path& path, std::string* lab);

}  // namespace labconv::imputer
