#pragma once

// Patient records, per-lab normalization, sliding-window sample construction
// with the gap/label/exclusion protocol, population splitting, CSV I/O and a
// synthetic cohort generator with known ground truth.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace labconv::cohort {

/// Months of input preceding the anchor month.
inline constexpr int kWindowMonths = 36;
/// Buffer between the anchor and the start of the outcome window.
inline constexpr int kGapMonths = 3;
/// Length of the outcome window.
inline constexpr int kOutcomeMonths = 24;
/// Distinct diagnosis months needed inside the outcome window for a positive.
inline constexpr int kMinPositiveMonths = 2;
inline constexpr int kDefaultStride = 6;

struct LabObservation {
    int month = 0;
    double value = 0.0;

    bool operator==(const LabObservation&) const = default;
};

struct PatientRecord {
    std::string person_id;
    /// lab code -> observations with strictly increasing months
    std::map<std::string, std::vector<LabObservation>> labs;
    /// disease code -> months with a diagnosis record
    std::map<std::string, std::set<int>> diagnoses;
    /// Follow-up covers months [0, history_months).
    int history_months = 0;
    bool normalized = false;

    bool operator==(const PatientRecord&) const = default;
};

/// Dense D x T view of a patient's labs. `mask` holds 0.0 / 1.0 and every
/// unobserved cell has value 0.
struct ObservationGrid {
    std::vector<std::string> lab_order;
    std::size_t months = 0;
    int start_month = 0;
    std::vector<double> values;
    std::vector<double> mask;

    ObservationGrid() = default;
    ObservationGrid(std::vector<std::string> labs, std::size_t n_months, int start);

    std::size_t labs() const noexcept { return lab_order.size(); }
    double value(std::size_t d, std::size_t t) const { return values[d * months + t]; }
    bool observed(std::size_t d, std::size_t t) const { return mask[d * months + t] != 0.0; }
    void set(std::size_t d, std::size_t t, double v) {
        values[d * months + t] = v;
        mask[d * months + t] = 1.0;
    }
    std::span<const double> value_row(std::size_t d) const {
        return {values.data() + d * months, months};
    }
    std::span<const double> mask_row(std::size_t d) const {
        return {mask.data() + d * months, months};
    }
    std::size_t observation_count() const;
};

struct LabStats {
    double mean = 0.0;
    double std = 1.0;
};

struct NormalizationStats {
    std::map<std::string, LabStats> labs;

    bool operator==(const NormalizationStats& o) const;
};

enum class Label { positive, negative, excluded };

struct WindowSample {
    std::string person_id;
    int anchor = 0;
    ObservationGrid input;
    std::vector<int> labels;
    std::vector<int> eligible;
};

// ---------------------------------------------------------------------------
// Ingestion and CSV formats

/// Reads `person_id,lab_code,month,value` and `person_id,disease_code,month`.
/// Same-month duplicates of a lab are averaged. When `horizon` is given every
/// patient's follow-up is set to it, otherwise to one past the latest record.
std::vector<PatientRecord> ingest(const std::filesystem::path& observations_file,
                                  const std::filesystem::path& diagnoses_file,
                                  std::optional<int> horizon = std::nullopt);

void write_observations(const std::filesystem::path& path,
                        std::span<const PatientRecord> patients);
void write_diagnoses(const std::filesystem::path& path, std::span<const PatientRecord> patients);

void write_normalization(const std::filesystem::path& path, const NormalizationStats& stats);
NormalizationStats read_normalization(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Normalization

NormalizationStats fit_normalization(std::span<const PatientRecord> patients);
std::vector<PatientRecord> apply_normalization(std::vector<PatientRecord> patients,
                                               const NormalizationStats& stats);

// ---------------------------------------------------------------------------
// Windows and labels

std::vector<std::string> lab_codes(std::span<const PatientRecord> patients);
std::vector<std::string> disease_codes(std::span<const PatientRecord> patients);

/// Grid over months [t - 36, t). Values are normalized on the fly when
/// `stats` is given.
ObservationGrid build_window(const PatientRecord& patient, int t,
                             const std::vector<std::string>& lab_order,
                             const NormalizationStats* stats = nullptr);

/// Grid over the whole follow-up [0, history_months).
ObservationGrid build_full_grid(const PatientRecord& patient,
                                const std::vector<std::string>& lab_order);

Label label_window(const PatientRecord& patient, int t, const std::string& disease);

/// Anchors t = 36, 36 + stride, ... while t + 27 <= history_months.
std::vector<int> window_anchors(int history_months, int stride);

std::vector<WindowSample> emit_samples(std::span<const PatientRecord> patients, int stride,
                                       const std::vector<std::string>& lab_order,
                                       const std::vector<std::string>& disease_order);

// ---------------------------------------------------------------------------
// Splitting

struct SplitFractions {
    double train = 0.34;
    double validation = 0.33;
    double test = 0.33;
};

struct PopulationSplit {
    std::vector<PatientRecord> train;
    std::vector<PatientRecord> validation;
    std::vector<PatientRecord> test;
};

PopulationSplit split_population(std::span<const PatientRecord> patients,
                                 const SplitFractions& fractions, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic cohorts

struct SynthConfig {
    std::size_t n_patients = 6000;
    std::size_t n_labs = 6;
    std::size_t n_diseases = 8;
    int horizon = 120;
    std::size_t latent_dim = 3;
    double alpha = 0.9;
    std::uint64_t mixing_seed = 11;
    /// Row-major D x K; drawn from `mixing_seed` (rows unit-norm) when empty.
    std::vector<double> mixing;
    double base_rate = 0.15;
    double noise_std = 0.1;
    /// Per-lab patient offset std.
    double baseline_std = 0.5;
    /// Per-disease slope thresholds; empty means 1.5 for every disease.
    std::vector<double> thresholds;
    /// Latent driving each disease; empty means disease m uses latent m % K.
    std::vector<std::size_t> disease_latent;
    int slope_span = 6;
    int gap_lo = 6;
    int gap_hi = 18;
    int repeat_lo = 2;
    int repeat_hi = 4;
    double utilization_coupling = 0.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct GroundTruth {
    std::vector<std::string> lab_codes;
    std::vector<std::string> disease_codes;
    std::vector<double> mixing;  // D x K
    /// Per patient, K x horizon latent paths (row-major).
    std::vector<std::vector<double>> latent;
    /// Per patient, per disease trigger month or -1.
    std::vector<std::vector<int>> trigger_month;
};

struct SynthCohort {
    std::vector<PatientRecord> patients;
    GroundTruth truth;
};

SynthCohort synth_generate(const SynthConfig& cfg);

/// `person_id,disease_code,trigger_month` with -1 for never triggered.
void write_ground_truth(const std::filesystem::path& path,
                        std::span<const PatientRecord> patients, const GroundTruth& truth);

}  // namespace labconv::cohort
