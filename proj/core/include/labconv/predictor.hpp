#pragma once

// Multi-task disease-onset classifiers over 36-month lab windows.
//
// The convolutional network runs three resolutions per input row with filters
// shared across rows:
//   C1 = relu(bn(conv(maxpool(x, p^2), K1)))
//   C2 = relu(bn(conv(maxpool(x, p),   K2)))
//   C3 = relu(bn(conv(x, K3)));  C4 = maxpool(C3, p)
//   C5 = relu(bn(sum_k conv(C4[k], K5[., k])))
// The concatenation [C1, C2, C5] over rows and filters feeds two
// dropout -> dense -> bn -> relu blocks, then one dropout -> dense(2) -> bn ->
// log-softmax head per disease. The MLP baseline replaces the convolutional
// stage with the flattened window.

#include "labconv/cohort.hpp"
#include "labconv/diffcore.hpp"
#include "labconv/imputer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace labconv::predictor {

enum class InputMode { raw, imputed, two_channel };
enum class ModelKind { convnet, mlp };

std::string_view mode_name(InputMode mode);
InputMode parse_mode(std::string_view name);
std::string_view kind_name(ModelKind kind);
ModelKind parse_kind(std::string_view name);

struct PredictorConfig {
    std::size_t filters = 8;
    std::size_t filter_length = 3;
    std::size_t pool = 3;
    std::vector<std::size_t> hidden{100, 100};
    double dropout = 0.5;
    InputMode input_mode = InputMode::raw;
    std::size_t window = 36;
    std::size_t diseases = 8;
    std::size_t labs = 6;
    bool head_batchnorm = true;

    /// D for raw / imputed input, 2D for two-channel input.
    std::size_t rows() const;
    /// Per-row, per-filter length of [C1, C2, C5].
    std::size_t per_filter_length() const;
    std::size_t feature_length(ModelKind kind) const;
    void validate() const;
};

/// Closed-form per-row per-filter feature length for window W, filter L, pool p.
std::size_t conv_feature_length(std::size_t window, std::size_t filter_length, std::size_t pool);

/// Inputs and targets for one split, laid out sample-major.
struct Dataset {
    InputMode mode = InputMode::raw;
    std::size_t rows = 0;      // R
    std::size_t window = 0;    // W
    std::size_t labs = 0;      // D
    std::size_t diseases = 0;  // M
    std::vector<std::string> person_ids;
    std::vector<int> anchors;
    std::vector<double> inputs;  // N x R x W
    std::vector<double> mask;    // N x D x W observation mask
    std::vector<int> labels;     // N x M
    std::vector<int> eligible;   // N x M

    std::size_t size() const noexcept { return person_ids.size(); }
    std::span<const double> input(std::size_t i) const {
        return {inputs.data() + i * rows * window, rows * window};
    }
};

/// Builds inputs for `mode`; `imputed` must be parallel to `samples` unless
/// the mode is raw.
Dataset make_dataset(std::span<const cohort::WindowSample> samples,
                     std::span<const imputer::ImputedGrid> imputed, InputMode mode,
                     std::size_t diseases);

struct Batch {
    std::size_t size = 0;
    std::size_t rows = 0;
    std::size_t window = 0;
    std::vector<double> x;  // size x rows x window
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

class Network {
public:
    Network(ModelKind kind, PredictorConfig cfg, std::uint64_t seed);

    /// Returns batch x diseases x 2 log-probabilities. Dropout draws from `rng`
    /// in train mode; batch-norm statistics follow `mode`.
    diff::Tensor forward(const Batch& batch, diff::Mode mode, diff::Rng* rng = nullptr);

    /// Accumulates parameter gradients for the most recent forward pass.
    void backward(const diff::Tensor& grad_log_probs);

    std::vector<diff::Param*> parameters();
    std::size_t parameter_count() const;
    std::size_t feature_length() const { return features_; }

    /// Concatenated feature vector [C] of the most recent forward pass.
    const diff::Tensor& last_features() const { return cache_.features; }

    ModelKind kind() const noexcept { return kind_; }
    const PredictorConfig& config() const noexcept { return cfg_; }

    void save(const std::filesystem::path& path) const;
    static Network load(const std::filesystem::path& path);

    /// Named parameters and batch-norm running statistics, in a fixed order.
    struct StateEntry {
        std::string name;
        diff::Shape shape;
        std::vector<double>* values;
    };
    std::vector<StateEntry> state();

    bool all_finite() const;

    /// Drops activations kept for backward (useful before copying a snapshot).
    void clear_cache();

private:
    struct ConvStage {
        diff::Param k1, b1, k2, b2, k3, b3, k5, b5;
        diff::BatchNormState bn1, bn2, bn3, bn5;
    };
    struct DenseBlock {
        diff::Param weights, bias;
        diff::BatchNormState bn;
    };
    struct Head {
        diff::Param weights, bias;
        diff::BatchNormState bn;
    };
    struct BlockCache {
        diff::Tensor input, dropped, pre_bn, post_bn, output;
        diff::DropoutMask drop;
        diff::BatchNormCache bn;
    };
    struct HeadCache {
        diff::Tensor dropped, logits, post_bn, log_probs;
        diff::DropoutMask drop;
        diff::BatchNormCache bn;
    };
    struct ConvCache {
        std::size_t batch = 0;
        std::vector<double> pooled_coarse, pooled_mid;  // (b, r) x len
        diff::Tensor z1, a1, z2, a2, z3, a3, z5, a5;    // (b, r, pos) x J, pre/post bn
        std::vector<double> c4;                          // (b, r, pos4) x J
        std::vector<std::size_t> c4_argmax;              // index into C3 positions
        diff::BatchNormCache bn1, bn2, bn3, bn5;
    };
    struct Cache {
        diff::Tensor features;
        ConvCache conv;
        std::vector<BlockCache> blocks;
        std::vector<HeadCache> heads;
    };

    void init_params(std::uint64_t seed);
    void set_mode(diff::Mode mode);
    diff::Tensor conv_forward(const Batch& batch);
    void conv_backward(const diff::Tensor& grad_features);

    ModelKind kind_;
    PredictorConfig cfg_;
    std::size_t features_ = 0;
    // Per-row lengths through the convolutional stage.
    std::size_t len_coarse_ = 0, len1_ = 0, len_mid_ = 0, len2_ = 0, len3_ = 0, len4_ = 0,
                len5_ = 0;
    ConvStage conv_;
    std::vector<double> conv_input_;  // batch input kept for the C3 kernel gradient
    std::vector<DenseBlock> blocks_;
    std::vector<Head> heads_;
    Cache cache_;
};

// ---------------------------------------------------------------------------
// Training and scoring

struct EpochLog {
    std::size_t epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0;
    double validation_auc = 0.0;  // mean over diseases with a defined AUC
};

struct TrainState {
    diff::SgdConfig sgd;
    std::vector<double> pos_weight;          // NaN for skipped diseases
    std::vector<std::size_t> skipped_diseases;
    std::size_t best_epoch = 0;
    double best_validation_auc = 0.0;
    std::vector<EpochLog> log;
};

struct TrainResult {
    Network model;
    TrainState state;
};

/// (#eligible negatives) / (#positives) per disease; NaN unless both classes occur.
std::vector<double> positive_weights(const Dataset& data);

TrainResult train(ModelKind kind, const PredictorConfig& cfg, const Dataset& train_set,
                  const Dataset& validation_set, const diff::SgdConfig& sgd);

/// Positive-class probabilities, N x M, eval mode.
std::vector<double> predict_proba(Network& model, const Dataset& data);

/// Mean per-disease AUC over eligible samples; diseases lacking both classes are skipped.
double mean_auc(std::span<const double> scores, const Dataset& data);

/// Per-disease AUC over eligible samples; nullopt when undefined.
std::vector<std::optional<double>> disease_aucs(std::span<const double> scores,
                                                const Dataset& data);

// ---------------------------------------------------------------------------
// Logistic regression on per-row window maxima

struct LogitMaxModel {
    std::size_t features = 0;
    std::size_t diseases = 0;
    std::vector<double> weights;  // diseases x features
    std::vector<double> bias;     // diseases
};

/// Per-row maximum over the window: observed cells only for raw input (0 if
/// none), every cell otherwise.
std::vector<double> max_features(const Dataset& data, InputMode mode);

struct LogitTrainResult {
    LogitMaxModel model;
    TrainState state;
};

LogitTrainResult train_logit_max(const Dataset& train_set, const Dataset& validation_set,
                                 InputMode mode, const diff::SgdConfig& sgd);

std::vector<double> logit_scores(const LogitMaxModel& model, const Dataset& data,
                                 InputMode mode);

void save_logit(const std::filesystem::path& path, const LogitMaxModel& model);
LogitMaxModel load_logit(const std::filesystem::path& path);

}  // namespace labconv::predictor
