#pragma once

// Run configuration, the checkpointed end-to-end pipeline, and report files.

#include "labconv/baselines.hpp"
#include "labconv/cohort.hpp"
#include "labconv/diffcore.hpp"
#include "labconv/imputer.hpp"
#include "labconv/metrics.hpp"
#include "labconv/predictor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace labconv::harness {

/// Flat key -> value settings. Every key has a default; unknown keys are rejected.
class RunConfig {
public:
    RunConfig();

    static RunConfig parse(std::string_view text, const std::string& origin = "<config>");
    static RunConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string text(const std::string& key) const { return get(key); }
    long long integer(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    double real(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<std::string> list(const std::string& key) const;
    std::vector<double> reals(const std::string& key) const;

    /// Canonical `key = value` lines in key order.
    std::string canonical() const;
    /// 64-bit FNV-1a of canonical(), as 16 hex digits.
    std::string hash() const;

    /// Documented defaults, one `key = value  # description` line each.
    static std::string defaults_text();

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    // Typed views used by the stages.
    cohort::SynthConfig synth() const;
    cohort::SplitFractions split_fractions() const;
    imputer::AugmentConfig augment() const;
    imputer::ImputeTrainConfig imputer_training() const;
    baselines::CvGrid cv_grid() const;
    predictor::PredictorConfig predictor_config(predictor::InputMode mode, std::size_t labs,
                                                std::size_t diseases) const;
    diff::SgdConfig predictor_sgd() const;
    std::vector<predictor::InputMode> modes() const;
    std::vector<std::string> models() const;

private:
    void validate_value(const std::string& key, const std::string& value) const;
    std::map<std::string, std::string> values_;
};

/// Independent seed for one consumer of the master seed.
std::uint64_t stage_seed(const RunConfig& cfg, std::uint64_t salt);

inline constexpr const char* kVersion = "labconv 0.1.0";

/// Pipeline stages in execution order.
const std::vector<std::string>& stage_names();

struct PipelineOptions {
    /// Stop after this stage (empty: run everything).
    std::string stop_after;
    /// Restrict predictor training/evaluation to these modes (empty: config).
    std::vector<predictor::InputMode> only_modes;
    /// Directory with observations.csv / diagnoses.csv to ingest instead of synthesizing.
    std::optional<std::filesystem::path> data_dir;
    bool verbose = false;
};

struct StageOutcome {
    std::string stage;
    bool resumed = false;  // checkpoint reused
    double seconds = 0.0;
};

/// Runs every stage into `out_dir`, reusing checkpoints whose config hash
/// matches. Stage failures are rethrown as StageError.
std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                       const PipelineOptions& options = {});

/// Imputes every lab over the full follow-up of each patient with the run's
/// trained multivariate kernels; writes `person_id,lab,month,value,observed`.
/// Patients come from `data_dir` when given (normalized with the run's
/// statistics), otherwise from the run's test split.
void impute_histories(const RunConfig& cfg, const std::filesystem::path& run_dir,
                      const std::optional<std::filesystem::path>& data_dir,
                      const std::filesystem::path& output);

struct TuningRow {
    double learning_rate = 0.0;
    double decay = 0.0;
    double validation_auc = 0.0;  // best epoch's validation mean AUC
    std::size_t best_epoch = 0;
};

/// Grid search over the `tune.*` learning rates and decays for one model and
/// input mode, training `tune.epochs` epochs per cell on the run's training
/// split. The run directory must be prepared (and imputed for non-raw modes).
std::vector<TuningRow> tune_predictor(const RunConfig& cfg, const std::filesystem::path& run_dir,
                                      const std::string& model, predictor::InputMode mode);

void write_tuning_table(const std::filesystem::path& path, const std::vector<TuningRow>& rows);

// ---------------------------------------------------------------------------
// Reports

struct ImputationRow {
    std::string lab;
    double gp = 0.0;
    double kr_univar = 0.0;
    double convkr_univar = 0.0;
    double convkr_multivar = 0.0;
};

/// AUC per disease for one (model, input mode); nullopt when undefined.
struct AucColumn {
    std::string model;
    predictor::InputMode mode = predictor::InputMode::raw;
    std::vector<std::optional<double>> auc;
};

struct MetricsReport {
    std::vector<ImputationRow> imputation;
    std::vector<std::string> diseases;
    std::vector<AucColumn> prediction;
    std::string config_hash;
    std::uint64_t seed = 0;
};

void write_imputation_table(const std::filesystem::path& path,
                            const std::vector<ImputationRow>& rows);
std::vector<ImputationRow> read_imputation_table(const std::filesystem::path& path);

/// `disease,convnet,mlp,logit`; one file for the best value across modes and
/// one per mode (`prediction_auc_<mode>.csv`).
void emit_reports(const MetricsReport& report, const RunConfig& cfg,
                  const std::filesystem::path& out_dir);

/// Reads `disease,<model>...` back into columns for `mode`.
std::vector<AucColumn> read_auc_table(const std::filesystem::path& path,
                                      predictor::InputMode mode,
                                      std::vector<std::string>* diseases);

}  // namespace labconv::harness
