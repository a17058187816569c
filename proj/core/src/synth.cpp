#include "labconv/cohort.hpp"

#include "labconv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace labconv::cohort {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::string code(const char* prefix, std::size_t i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
    return buf;
}

}  // namespace

void SynthConfig::validate() const {
    if (n_patients == 0 || n_labs == 0 || latent_dim == 0) {
        throw ConfigError("synth: n_patients, n_labs and latent_dim must be positive");
    }
    if (horizon <= 0) {
        throw ConfigError("synth: horizon must be positive");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("synth: alpha must lie in (0, 1)");
    }
    if (!mixing.empty() && mixing.size() != n_labs * latent_dim) {
        throw ConfigError("synth: mixing matrix must be n_labs x latent_dim");
    }
    if (!thresholds.empty() && thresholds.size() != n_diseases) {
        throw ConfigError("synth: need one threshold per disease");
    }
    if (!disease_latent.empty()) {
        if (disease_latent.size() != n_diseases) {
            throw ConfigError("synth: need one designated latent per disease");
        }
        for (auto k : disease_latent) {
            if (k >= latent_dim) {
                throw ConfigError("synth: designated latent out of range");
            }
        }
    }
    if (!(base_rate >= 0.0 && base_rate <= 1.0)) {
        throw ConfigError("synth: base_rate must lie in [0, 1]");
    }
    if (noise_std < 0.0 || baseline_std < 0.0 || utilization_coupling < 0.0) {
        throw ConfigError("synth: noise_std, baseline_std and utilization_coupling must be >= 0");
    }
    if (gap_lo < 4 || gap_hi < gap_lo) {
        throw ConfigError("synth: diagnosis gap range must satisfy 4 <= gap_lo <= gap_hi");
    }
    if (repeat_lo < 1 || repeat_hi < repeat_lo) {
        throw ConfigError("synth: repeat range must satisfy 1 <= repeat_lo <= repeat_hi");
    }
    if (slope_span < 1) {
        throw ConfigError("synth: slope_span must be positive");
    }
}

SynthCohort synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t D = cfg.n_labs;
    const std::size_t K = cfg.latent_dim;
    const std::size_t M = cfg.n_diseases;
    const auto T = static_cast<std::size_t>(cfg.horizon);

    SynthCohort out;
    auto& truth = out.truth;
    for (std::size_t d = 0; d < D; ++d) {
        truth.lab_codes.push_back(code("LAB", d + 1, 2));
    }
    for (std::size_t m = 0; m < M; ++m) {
        truth.disease_codes.push_back(code("DX", m + 1, 2));
    }

    if (!cfg.mixing.empty()) {
        truth.mixing = cfg.mixing;
    } else {
        std::mt19937_64 mix_rng(cfg.mixing_seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        truth.mixing.resize(D * K);
        for (std::size_t d = 0; d < D; ++d) {
            double norm = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                truth.mixing[d * K + k] = normal(mix_rng);
                norm += truth.mixing[d * K + k] * truth.mixing[d * K + k];
            }
            norm = std::sqrt(norm);
            for (std::size_t k = 0; k < K; ++k) {
                truth.mixing[d * K + k] /= norm;
            }
        }
    }

    std::vector<double> thresholds = cfg.thresholds;
    if (thresholds.empty()) {
        thresholds.assign(M, 1.5);
    }
    std::vector<std::size_t> designated = cfg.disease_latent;
    if (designated.empty()) {
        for (std::size_t m = 0; m < M; ++m) {
            designated.push_back(m % K);
        }
    }

    const double innovation = std::sqrt(1.0 - cfg.alpha * cfg.alpha);
    const int width = cfg.n_patients >= 1000000 ? 8 : 6;
    out.patients.reserve(cfg.n_patients);
    truth.latent.reserve(cfg.n_patients);
    truth.trigger_month.reserve(cfg.n_patients);

    for (std::size_t i = 0; i < cfg.n_patients; ++i) {
        // One independent stream per patient keeps patients reproducible in isolation.
        std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(i + 1)));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        PatientRecord rec;
        rec.person_id = code("P", i + 1, width);
        rec.history_months = cfg.horizon;

        std::vector<double> z(K * T);
        for (std::size_t k = 0; k < K; ++k) {
            z[k * T] = normal(rng);
            for (std::size_t t = 1; t < T; ++t) {
                z[k * T + t] = cfg.alpha * z[k * T + t - 1] + innovation * normal(rng);
            }
        }
        std::vector<double> baseline(D);
        for (auto& b : baseline) {
            b = cfg.baseline_std * normal(rng);
        }

        std::vector<int> trigger(M, -1);
        int earliest_trigger = -1;
        for (std::size_t m = 0; m < M; ++m) {
            const std::size_t k = designated[m];
            for (std::size_t t = static_cast<std::size_t>(cfg.slope_span); t < T; ++t) {
                if (z[k * T + t] - z[k * T + t - cfg.slope_span] > thresholds[m]) {
                    trigger[m] = static_cast<int>(t);
                    break;
                }
            }
            std::uniform_int_distribution<int> gap(cfg.gap_lo, cfg.gap_hi);
            std::uniform_int_distribution<int> repeats(cfg.repeat_lo, cfg.repeat_hi);
            std::uniform_int_distribution<int> step(1, 4);
            // Draws happen whether or not the disease triggers so streams stay aligned.
            const int g = gap(rng);
            const int n_records = repeats(rng);
            std::vector<int> steps(static_cast<std::size_t>(n_records));
            for (auto& s : steps) {
                s = step(rng);
            }
            if (trigger[m] < 0) {
                continue;
            }
            if (earliest_trigger < 0 || trigger[m] < earliest_trigger) {
                earliest_trigger = trigger[m];
            }
            int month = trigger[m] + g;
            for (int r = 0; r < n_records; ++r) {
                if (month < cfg.horizon) {
                    rec.diagnoses[truth.disease_codes[m]].insert(month);
                }
                month += steps[static_cast<std::size_t>(r)];
            }
        }

        for (std::size_t t = 0; t < T; ++t) {
            const double risk =
                (earliest_trigger >= 0 && static_cast<int>(t) >= earliest_trigger) ? 1.0 : 0.0;
            const double rate =
                std::min(1.0, cfg.base_rate * (1.0 + cfg.utilization_coupling * risk));
            for (std::size_t d = 0; d < D; ++d) {
                const double u = unit(rng);
                const double eps = normal(rng);
                if (u >= rate) {
                    continue;
                }
                double v = baseline[d] + cfg.noise_std * eps;
                for (std::size_t k = 0; k < K; ++k) {
                    v += truth.mixing[d * K + k] * z[k * T + t];
                }
                rec.labs[truth.lab_codes[d]].push_back({static_cast<int>(t), v});
            }
        }

        out.patients.push_back(std::move(rec));
        truth.latent.push_back(std::move(z));
        truth.trigger_month.push_back(std::move(trigger));
    }
    return out;
}

}  // namespace labconv::cohort
