#include "labconv/baselines.hpp"

#include "labconv/csv.hpp"
#include "labconv/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <tuple>

namespace labconv::baselines {

namespace {

std::uint64_t fold_hash(const std::string& id, std::uint64_t seed) {
    std::uint64_t h = 0xCBF29CE484222325ULL ^ seed;
    for (unsigned char c : id) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    h ^= h >> 33;
    h *= 0xFF51AFD7ED558CCDULL;
    h ^= h >> 33;
    return h;
}

void check_bandwidth(const ParametricKernel& k) {
    if (!(k.bandwidth > 0.0) || !std::isfinite(k.bandwidth)) {
        throw ConfigError("kernel bandwidth must be positive, got " + std::to_string(k.bandwidth));
    }
}

Eigen::MatrixXd covariance(std::span<const LabObservation> obs, const GpConfig& cfg) {
    const auto n = static_cast<Eigen::Index>(obs.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = kernel_eval(cfg.kernel, obs[static_cast<std::size_t>(i)].month -
                                                         obs[static_cast<std::size_t>(j)].month);
            k(i, j) = v;
            k(j, i) = v;
        }
        k(i, i) += cfg.noise_var + cfg.jitter;
    }
    return k;
}

Eigen::LLT<Eigen::MatrixXd> factorize(const Eigen::MatrixXd& k) {
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) {
        const Eigen::VectorXd diag = k.diagonal();
        const double cond = diag.maxCoeff() / std::max(diag.minCoeff(), 1e-300);
        throw NumericalError("gp: Cholesky factorization failed (diagonal ratio estimate " +
                             std::to_string(cond) + ")");
    }
    return llt;
}

void check_gp(const GpConfig& cfg) {
    check_bandwidth(cfg.kernel);
    if (cfg.noise_var < 0.0 || !(cfg.jitter > 0.0)) {
        throw ConfigError("gp: noise_var must be >= 0 and jitter > 0");
    }
}

}  // namespace

std::string_view family_name(KernelFamily family) {
    switch (family) {
    case KernelFamily::gaussian:
        return "gaussian";
    case KernelFamily::laplace:
        return "laplace";
    case KernelFamily::triangular:
        return "triangular";
    }
    return "?";
}

KernelFamily parse_family(std::string_view name) {
    if (name == "gaussian") {
        return KernelFamily::gaussian;
    }
    if (name == "laplace") {
        return KernelFamily::laplace;
    }
    if (name == "triangular") {
        return KernelFamily::triangular;
    }
    throw ConfigError("unknown kernel family '" + std::string(name) + "'");
}

std::string_view method_name(Method method) { return method == Method::kr ? "kr" : "gp"; }

double kernel_eval(const ParametricKernel& kernel, double dt) {
    check_bandwidth(kernel);
    const double h = kernel.bandwidth;
    switch (kernel.family) {
    case KernelFamily::gaussian:
        return std::exp(-dt * dt / (2.0 * h * h));
    case KernelFamily::laplace:
        return std::exp(-std::abs(dt) / h);
    case KernelFamily::triangular:
        return std::max(0.0, 1.0 - std::abs(dt) / h);
    }
    return 0.0;
}

std::optional<double> kr_predict(std::span<const LabObservation> observations,
                                 const ParametricKernel& kernel, double t_query) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& o : observations) {
        const double w = kernel_eval(kernel, static_cast<double>(o.month) - t_query);
        num += w * o.value;
        den += w;
    }
    if (den < 1e-12) {
        return std::nullopt;
    }
    return num / den;
}

double gp_posterior_mean(std::span<const LabObservation> observations, const GpConfig& cfg,
                         double t_query) {
    check_gp(cfg);
    if (observations.empty()) {
        throw EvaluationError("gp_posterior_mean: needs at least one observation");
    }
    const auto llt = factorize(covariance(observations, cfg));
    const auto n = static_cast<Eigen::Index>(observations.size());
    Eigen::VectorXd y(n);
    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& o = observations[static_cast<std::size_t>(i)];
        y(i) = o.value;
        k_star(i) = kernel_eval(cfg.kernel, static_cast<double>(o.month) - t_query);
    }
    return k_star.dot(llt.solve(y));
}

std::vector<double> gp_loo_predictions(std::span<const LabObservation> observations,
                                       const GpConfig& cfg) {
    check_gp(cfg);
    const auto n = static_cast<Eigen::Index>(observations.size());
    if (n < 2) {
        return std::vector<double>(observations.size(), 0.0);
    }
    // mean_{-i} = y_i - [A^-1 y]_i / [A^-1]_ii, exact for the noisy GP.
    const auto llt = factorize(covariance(observations, cfg));
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) = observations[static_cast<std::size_t>(i)].value;
    }
    const Eigen::VectorXd alpha = llt.solve(y);
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    std::vector<double> out(observations.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = y(i) - alpha(i) / inv(i, i);
    }
    return out;
}

std::vector<double> kr_loo_predictions(std::span<const LabObservation> observations,
                                       const ParametricKernel& kernel, double fallback) {
    check_bandwidth(kernel);
    std::vector<double> out(observations.size());
    for (std::size_t i = 0; i < observations.size(); ++i) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t j = 0; j < observations.size(); ++j) {
            if (j == i) {
                continue;
            }
            const double w = kernel_eval(
                kernel, static_cast<double>(observations[j].month - observations[i].month));
            num += w * observations[j].value;
            den += w;
        }
        out[i] = den < 1e-12 ? fallback : num / den;
    }
    return out;
}

namespace {

struct SquaredError {
    double sum = 0.0;
    std::size_t n = 0;
};

SquaredError loo_errors(const imputer::Series& s, const CvRow& cfg) {
    SquaredError e;
    if (s.obs.size() < 2) {
        return e;
    }
    const auto pred = cfg.method == Method::kr
                          ? kr_loo_predictions(s.obs, cfg.kernel)
                          : gp_loo_predictions(s.obs, GpConfig{cfg.kernel, cfg.noise_var, 1e-9});
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - s.obs[i].value;
        e.sum += d * d;
        ++e.n;
    }
    return e;
}

}  // namespace

double loo_rmse(std::span<const imputer::Series> series, const CvRow& config) {
    SquaredError total;
    for (const auto& s : series) {
        const auto e = loo_errors(s, config);
        total.sum += e.sum;
        total.n += e.n;
    }
    if (total.n == 0) {
        throw EvaluationError("loo_rmse: no series with two or more observations");
    }
    return std::sqrt(total.sum / static_cast<double>(total.n));
}

CvResult cross_validate(std::span<const imputer::Series> series, const CvGrid& grid,
                        Method method, std::uint64_t seed) {
    if (grid.families.empty() || grid.bandwidths.empty() ||
        (method == Method::gp && grid.noise_vars.empty())) {
        throw ConfigError("cross_validate: empty grid");
    }
    if (grid.folds == 0) {
        throw ConfigError("cross_validate: folds must be positive");
    }
    if (series.size() < grid.folds) {
        throw ConfigError("cross_validate: fewer series than folds");
    }
    std::vector<std::size_t> fold(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        fold[i] = fold_hash(series[i].id, seed) % grid.folds;
    }

    const std::vector<double> no_noise{0.0};
    const auto& noises = method == Method::gp ? grid.noise_vars : no_noise;
    CvResult result;
    for (auto family : grid.families) {
        for (double h : grid.bandwidths) {
            for (double noise : noises) {
                CvRow row{method, {family, h}, noise, 0.0};
                std::vector<SquaredError> per_fold(grid.folds);
                for (std::size_t i = 0; i < series.size(); ++i) {
                    const auto e = loo_errors(series[i], row);
                    per_fold[fold[i]].sum += e.sum;
                    per_fold[fold[i]].n += e.n;
                }
                double acc = 0.0;
                std::size_t used = 0;
                for (const auto& f : per_fold) {
                    if (f.n > 0) {
                        acc += std::sqrt(f.sum / static_cast<double>(f.n));
                        ++used;
                    }
                }
                if (used == 0) {
                    throw EvaluationError("cross_validate: no fold has held-out observations");
                }
                row.rmse = acc / static_cast<double>(used);
                result.table.push_back(row);
            }
        }
    }
    const auto key = [](const CvRow& r) {
        return std::make_tuple(r.rmse, r.kernel.bandwidth, static_cast<int>(r.kernel.family),
                               r.noise_var);
    };
    result.best = *std::min_element(result.table.begin(), result.table.end(),
                                    [&](const CvRow& a, const CvRow& b) { return key(a) < key(b); });
    return result;
}

void write_rmse_table(const std::filesystem::path& path, std::span<const CvRow> rows) {
    auto out = csv::open_output(path);
    out << "method,family,bandwidth,noise_var,rmse\n";
    for (const auto& r : rows) {
        out << method_name(r.method) << ',' << family_name(r.kernel.family) << ','
            << csv::format_double(r.kernel.bandwidth) << ','
            << (r.method == Method::gp ? csv::format_double(r.noise_var) : std::string()) << ','
            << csv::format_double(r.rmse) << '\n';
    }
}

std::vector<CvRow> read_rmse_table(const std::filesystem::path& path) {
    const std::string file = path.string();
    auto in = csv::open_input(path);
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != "method,family,bandwidth,noise_var,rmse") {
        throw ParseError(file, 1, "unexpected RMSE table header");
    }
    std::vector<CvRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) {
            continue;
        }
        const auto f = csv::split(csv::trim(line));
        if (f.size() != 5) {
            throw ParseError(file, line_no, "expected 5 fields");
        }
        CvRow r;
        if (f[0] == "kr") {
            r.method = Method::kr;
        } else if (f[0] == "gp") {
            r.method = Method::gp;
        } else {
            throw ParseError(file, line_no, "unknown method");
        }
        r.kernel.family = parse_family(f[1]);
        r.kernel.bandwidth = csv::parse_double(f[2], file, line_no);
        r.noise_var = f[3].empty() ? 0.0 : csv::parse_double(f[3], file, line_no);
        r.rmse = csv::parse_double(f[4], file, line_no);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace labconv::baselines
