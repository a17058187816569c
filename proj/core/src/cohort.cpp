#include "labconv/cohort.hpp"

#include "labconv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace labconv::cohort {

ObservationGrid::ObservationGrid(std::vector<std::string> labs, std::size_t n_months, int start)
    : lab_order(std::move(labs)),
      months(n_months),
      start_month(start),
      values(lab_order.size() * n_months, 0.0),
      mask(lab_order.size() * n_months, 0.0) {}

std::size_t ObservationGrid::observation_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1.0));
}

bool NormalizationStats::operator==(const NormalizationStats& o) const {
    if (labs.size() != o.labs.size()) {
        return false;
    }
    for (const auto& [code, s] : labs) {
        auto it = o.labs.find(code);
        if (it == o.labs.end() || it->second.mean != s.mean || it->second.std != s.std) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------

NormalizationStats fit_normalization(std::span<const PatientRecord> patients) {
    struct Acc {
        std::size_t n = 0;
        double sum = 0.0;
    };
    std::map<std::string, Acc> acc;
    for (const auto& p : patients) {
        for (const auto& [code, obs] : p.labs) {
            auto& a = acc[code];
            for (const auto& o : obs) {
                a.sum += o.value;
                ++a.n;
            }
        }
    }
    NormalizationStats stats;
    for (const auto& [code, a] : acc) {
        if (a.n < 2) {
            throw ValidationError("lab '" + code + "' has fewer than 2 observations");
        }
        stats.labs[code].mean = a.sum / static_cast<double>(a.n);
    }
    std::map<std::string, double> ss;
    for (const auto& p : patients) {
        for (const auto& [code, obs] : p.labs) {
            const double m = stats.labs[code].mean;
            auto& s = ss[code];
            for (const auto& o : obs) {
                s += (o.value - m) * (o.value - m);
            }
        }
    }
    for (auto& [code, s] : stats.labs) {
        const double var = ss[code] / static_cast<double>(acc[code].n - 1);
        if (!(var > 0.0) || !std::isfinite(var)) {
            throw ValidationError("lab '" + code + "' has zero variance");
        }
        s.std = std::sqrt(var);
    }
    return stats;
}

std::vector<PatientRecord> apply_normalization(std::vector<PatientRecord> patients,
                                               const NormalizationStats& stats) {
    for (auto& p : patients) {
        if (p.normalized) {
            throw ValidationError("patient '" + p.person_id + "' is already normalized");
        }
        for (auto& [code, obs] : p.labs) {
            auto it = stats.labs.find(code);
            if (it == stats.labs.end()) {
                throw ValidationError("no normalization statistics for lab '" + code + "'");
            }
            for (auto& o : obs) {
                o.value = (o.value - it->second.mean) / it->second.std;
            }
        }
        p.normalized = true;
    }
    return patients;
}

// ---------------------------------------------------------------------------

std::vector<std::string> lab_codes(std::span<const PatientRecord> patients) {
    std::set<std::string> codes;
    for (const auto& p : patients) {
        for (const auto& [code, obs] : p.labs) {
            codes.insert(code);
        }
    }
    return {codes.begin(), codes.end()};
}

std::vector<std::string> disease_codes(std::span<const PatientRecord> patients) {
    std::set<std::string> codes;
    for (const auto& p : patients) {
        for (const auto& [code, months] : p.diagnoses) {
            codes.insert(code);
        }
    }
    return {codes.begin(), codes.end()};
}

namespace {

ObservationGrid grid_over(const PatientRecord& patient, int start, int months,
                          const std::vector<std::string>& lab_order,
                          const NormalizationStats* stats) {
    ObservationGrid grid(lab_order, static_cast<std::size_t>(months), start);
    for (std::size_t d = 0; d < lab_order.size(); ++d) {
        auto it = patient.labs.find(lab_order[d]);
        if (it == patient.labs.end()) {
            continue;
        }
        const LabStats* s = nullptr;
        if (stats != nullptr) {
            auto st = stats->labs.find(lab_order[d]);
            if (st == stats->labs.end()) {
                throw ValidationError("no normalization statistics for lab '" + lab_order[d] +
                                      "'");
            }
            s = &st->second;
        }
        for (const auto& o : it->second) {
            if (o.month < start || o.month >= start + months) {
                continue;
            }
            const double v = s ? (o.value - s->mean) / s->std : o.value;
            grid.set(d, static_cast<std::size_t>(o.month - start), v);
        }
    }
    return grid;
}

}  // namespace

ObservationGrid build_window(const PatientRecord& patient, int t,
                             const std::vector<std::string>& lab_order,
                             const NormalizationStats* stats) {
    if (t < kWindowMonths) {
        throw WindowError("anchor month " + std::to_string(t) + " leaves less than " +
                          std::to_string(kWindowMonths) + " months of history");
    }
    return grid_over(patient, t - kWindowMonths, kWindowMonths, lab_order, stats);
}

ObservationGrid build_full_grid(const PatientRecord& patient,
                                const std::vector<std::string>& lab_order) {
    return grid_over(patient, 0, patient.history_months, lab_order, nullptr);
}

Label label_window(const PatientRecord& patient, int t, const std::string& disease) {
    auto it = patient.diagnoses.find(disease);
    if (it == patient.diagnoses.end() || it->second.empty()) {
        return Label::negative;
    }
    const auto& months = it->second;
    if (*months.begin() < t + kGapMonths) {
        return Label::excluded;
    }
    const auto lo = months.lower_bound(t + kGapMonths);
    const auto hi = months.lower_bound(t + kGapMonths + kOutcomeMonths);
    const auto count = std::distance(lo, hi);
    return count >= kMinPositiveMonths ? Label::positive : Label::negative;
}

std::vector<int> window_anchors(int history_months, int stride) {
    if (stride < 1) {
        throw ConfigError("stride must be positive, got " + std::to_string(stride));
    }
    std::vector<int> anchors;
    for (int t = kWindowMonths; t + kGapMonths + kOutcomeMonths <= history_months; t += stride) {
        anchors.push_back(t);
    }
    return anchors;
}

std::vector<WindowSample> emit_samples(std::span<const PatientRecord> patients, int stride,
                                       const std::vector<std::string>& lab_order,
                                       const std::vector<std::string>& disease_order) {
    std::vector<WindowSample> samples;
    for (const auto& p : patients) {
        for (int t : window_anchors(p.history_months, stride)) {
            WindowSample s;
            s.person_id = p.person_id;
            s.anchor = t;
            s.input = build_window(p, t, lab_order);
            s.labels.assign(disease_order.size(), 0);
            s.eligible.assign(disease_order.size(), 0);
            for (std::size_t m = 0; m < disease_order.size(); ++m) {
                switch (label_window(p, t, disease_order[m])) {
                case Label::positive:
                    s.labels[m] = 1;
                    s.eligible[m] = 1;
                    break;
                case Label::negative:
                    s.eligible[m] = 1;
                    break;
                case Label::excluded:
                    break;
                }
            }
            samples.push_back(std::move(s));
        }
    }
    std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
        return std::tie(a.person_id, a.anchor) < std::tie(b.person_id, b.anchor);
    });
    return samples;
}

// ---------------------------------------------------------------------------

PopulationSplit split_population(std::span<const PatientRecord> patients,
                                 const SplitFractions& fractions, std::uint64_t seed) {
    const double parts[] = {fractions.train, fractions.validation, fractions.test};
    for (double f : parts) {
        if (!(f >= 0.0 && f <= 1.0)) {
            throw ConfigError("split fractions must lie in [0, 1]");
        }
    }
    if (std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1");
    }

    std::vector<std::size_t> order(patients.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return patients[a].person_id < patients[b].person_id;
    });
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n = static_cast<double>(patients.size());
    const auto n_train = static_cast<std::size_t>(std::llround(n * fractions.train));
    const auto n_val = std::min(patients.size() - n_train,
                                static_cast<std::size_t>(std::llround(n * fractions.validation)));

    std::vector<int> which(patients.size(), 2);
    for (std::size_t i = 0; i < order.size(); ++i) {
        which[order[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
    }
    std::vector<std::size_t> sorted(patients.size());
    std::iota(sorted.begin(), sorted.end(), std::size_t{0});
    std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
        return patients[a].person_id < patients[b].person_id;
    });
    PopulationSplit split;
    for (std::size_t i : sorted) {
        auto& dest = which[i] == 0 ? split.train : (which[i] == 1 ? split.validation : split.test);
        dest.push_back(patients[i]);
    }
    return split;
}

}  // namespace labconv::cohort
