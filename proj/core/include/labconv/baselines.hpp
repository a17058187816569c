#pragma once

// Classic imputation baselines: Nadaraya-Watson regression with a fixed
// parametric kernel, and univariate Gaussian-process regression, both tuned
// by k-fold cross-validation over series.

#include "labconv/cohort.hpp"
#include "labconv/imputer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace labconv::baselines {

using cohort::LabObservation;

enum class KernelFamily { gaussian, laplace, triangular };

std::string_view family_name(KernelFamily family);
KernelFamily parse_family(std::string_view name);

struct ParametricKernel {
    KernelFamily family = KernelFamily::gaussian;
    double bandwidth = 1.0;
};

/// gaussian exp(-dt^2 / 2h^2), laplace exp(-|dt| / h), triangular max(0, 1 - |dt| / h).
double kernel_eval(const ParametricKernel& kernel, double dt);

/// Undefined when the weight sum falls below 1e-12.
std::optional<double> kr_predict(std::span<const LabObservation> observations,
                                 const ParametricKernel& kernel, double t_query);

struct GpConfig {
    ParametricKernel kernel;
    double noise_var = 0.0;
    double jitter = 1e-9;
};

/// Zero-prior-mean posterior mean k*^T (K + (noise + jitter) I)^-1 y.
double gp_posterior_mean(std::span<const LabObservation> observations, const GpConfig& cfg,
                         double t_query);

/// Leave-one-out predictions for every observation, in observation order.
std::vector<double> gp_loo_predictions(std::span<const LabObservation> observations,
                                       const GpConfig& cfg);
std::vector<double> kr_loo_predictions(std::span<const LabObservation> observations,
                                       const ParametricKernel& kernel, double fallback = 0.0);

enum class Method { kr, gp };

std::string_view method_name(Method method);

struct CvGrid {
    std::vector<KernelFamily> families{KernelFamily::gaussian, KernelFamily::laplace,
                                       KernelFamily::triangular};
    std::vector<double> bandwidths{1, 2, 3, 6, 12};
    std::vector<double> noise_vars{1e-4, 1e-2, 1e-1, 1};
    std::size_t folds = 5;
};

struct CvRow {
    Method method = Method::kr;
    ParametricKernel kernel;
    double noise_var = 0.0;  // gp only
    double rmse = 0.0;
};

struct CvResult {
    CvRow best;
    std::vector<CvRow> table;  // grid order: family, bandwidth, noise
};

/// Folds are keyed by a seeded hash of the series id, so the result does not
/// depend on the order of `series`.
CvResult cross_validate(std::span<const imputer::Series> series, const CvGrid& grid,
                        Method method, std::uint64_t seed);

/// Pooled leave-one-out RMSE of one configuration over a series collection.
double loo_rmse(std::span<const imputer::Series> series, const CvRow& config);

void write_rmse_table(const std::filesystem::path& path, std::span<const CvRow> rows);
std::vector<CvRow> read_rmse_table(const std::filesystem::path& path);

}  // namespace labconv::baselines
