#include "labconv/csv.hpp"
#include "labconv/errors.hpp"
#include "labconv/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace labconv::predictor {

using diff::Mode;
using diff::Param;
using diff::Tensor;

std::string_view mode_name(InputMode mode) {
    switch (mode) {
    case InputMode::raw:
        return "raw";
    case InputMode::imputed:
        return "imputed";
    case InputMode::two_channel:
        return "two_channel";
    }
    return "?";
}

InputMode parse_mode(std::string_view name) {
    if (name == "raw") {
        return InputMode::raw;
    }
    if (name == "imputed") {
        return InputMode::imputed;
    }
    if (name == "two_channel") {
        return InputMode::two_channel;
    }
    throw ConfigError("unknown input mode '" + std::string(name) +
                      "' (expected raw, imputed or two_channel)");
}

std::string_view kind_name(ModelKind kind) { return kind == ModelKind::convnet ? "convnet" : "mlp"; }

ModelKind parse_kind(std::string_view name) {
    if (name == "convnet") {
        return ModelKind::convnet;
    }
    if (name == "mlp") {
        return ModelKind::mlp;
    }
    throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

std::size_t conv_feature_length(std::size_t window, std::size_t filter_length, std::size_t pool) {
    const std::size_t L = filter_length;
    const std::size_t p = pool;
    if (L == 0 || p == 0 || window < p * p * L) {
        throw ConfigError("window " + std::to_string(window) + " is too short for pool " +
                          std::to_string(p) + " and filter length " + std::to_string(L));
    }
    return (window / (p * p) - L + 1) + (window / p - L + 1) + ((window - L + 1) / p - L + 1);
}

std::size_t PredictorConfig::rows() const {
    return input_mode == InputMode::two_channel ? 2 * labs : labs;
}

std::size_t PredictorConfig::per_filter_length() const {
    return conv_feature_length(window, filter_length, pool);
}

std::size_t PredictorConfig::feature_length(ModelKind kind) const {
    return kind == ModelKind::convnet ? rows() * filters * per_filter_length() : rows() * window;
}

void PredictorConfig::validate() const {
    if (filters == 0 || labs == 0 || diseases == 0 || hidden.empty()) {
        throw ConfigError("predictor: filters, labs, diseases and hidden sizes must be nonzero");
    }
    for (auto h : hidden) {
        if (h == 0) {
            throw ConfigError("predictor: hidden layer sizes must be positive");
        }
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ConfigError("predictor: dropout must lie in [0, 1)");
    }
    per_filter_length();
}

// ---------------------------------------------------------------------------

Network::Network(ModelKind kind, PredictorConfig cfg, std::uint64_t seed)
    : kind_(kind), cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t W = cfg_.window;
    const std::size_t L = cfg_.filter_length;
    const std::size_t p = cfg_.pool;
    len_coarse_ = W / (p * p);
    len1_ = len_coarse_ - L + 1;
    len_mid_ = W / p;
    len2_ = len_mid_ - L + 1;
    len3_ = W - L + 1;
    len4_ = len3_ / p;
    len5_ = len4_ - L + 1;
    features_ = cfg_.feature_length(kind_);
    init_params(seed);
}

void Network::init_params(std::uint64_t seed) {
    diff::Rng rng(seed);
    auto uniform_param = [&rng](const std::string& name, diff::Shape shape, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Param p{name, Tensor(std::move(shape))};
        for (auto& v : p.tensor.values) {
            v = u(rng);
        }
        return p;
    };
    const std::size_t J = cfg_.filters;
    const std::size_t L = cfg_.filter_length;
    if (kind_ == ModelKind::convnet) {
        conv_.k1 = uniform_param("conv.k1", {J, L}, L);
        conv_.b1 = uniform_param("conv.b1", {J}, L);
        conv_.k2 = uniform_param("conv.k2", {J, L}, L);
        conv_.b2 = uniform_param("conv.b2", {J}, L);
        conv_.k3 = uniform_param("conv.k3", {J, L}, L);
        conv_.b3 = uniform_param("conv.b3", {J}, L);
        conv_.k5 = uniform_param("conv.k5", {J, J, L}, J * L);
        conv_.b5 = uniform_param("conv.b5", {J}, J * L);
        conv_.bn1 = diff::BatchNormState::make("conv.bn1", J);
        conv_.bn2 = diff::BatchNormState::make("conv.bn2", J);
        conv_.bn3 = diff::BatchNormState::make("conv.bn3", J);
        conv_.bn5 = diff::BatchNormState::make("conv.bn5", J);
    }
    std::size_t in = features_;
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
        const std::string name = "dense" + std::to_string(i + 1);
        const std::size_t out = cfg_.hidden[i];
        blocks_.push_back({uniform_param(name + ".weights", {in, out}, in),
                           uniform_param(name + ".bias", {out}, in),
                           diff::BatchNormState::make(name + ".bn", out)});
        in = out;
    }
    for (std::size_t m = 0; m < cfg_.diseases; ++m) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "head%03zu", m);
        const std::string name = buf;
        heads_.push_back({uniform_param(name + ".weights", {in, 2}, in),
                          uniform_param(name + ".bias", {2}, in),
                          diff::BatchNormState::make(name + ".bn", 2)});
    }
}

void Network::set_mode(Mode mode) {
    if (kind_ == ModelKind::convnet) {
        for (auto* bn : {&conv_.bn1, &conv_.bn2, &conv_.bn3, &conv_.bn5}) {
            bn->mode = mode;
        }
    }
    for (auto& b : blocks_) {
        b.bn.mode = mode;
    }
    for (auto& h : heads_) {
        h.bn.mode = mode;
    }
}

std::vector<Param*> Network::parameters() {
    std::vector<Param*> out;
    if (kind_ == ModelKind::convnet) {
        for (auto* p : {&conv_.k1, &conv_.b1, &conv_.k2, &conv_.b2, &conv_.k3, &conv_.b3,
                        &conv_.k5, &conv_.b5}) {
            out.push_back(p);
        }
        for (auto* bn : {&conv_.bn1, &conv_.bn2, &conv_.bn3, &conv_.bn5}) {
            out.push_back(&bn->gamma);
            out.push_back(&bn->beta);
        }
    }
    for (auto& b : blocks_) {
        out.push_back(&b.weights);
        out.push_back(&b.bias);
        out.push_back(&b.bn.gamma);
        out.push_back(&b.bn.beta);
    }
    for (auto& h : heads_) {
        out.push_back(&h.weights);
        out.push_back(&h.bias);
        if (cfg_.head_batchnorm) {
            out.push_back(&h.bn.gamma);
            out.push_back(&h.bn.beta);
        }
    }
    return out;
}

std::size_t Network::parameter_count() const {
    auto* self = const_cast<Network*>(this);
    std::size_t n = 0;
    for (const auto* p : self->parameters()) {
        n += p->tensor.size();
    }
    return n;
}

std::vector<Network::StateEntry> Network::state() {
    std::vector<StateEntry> out;
    for (auto* p : parameters()) {
        out.push_back({p->name, p->tensor.shape, &p->tensor.values});
    }
    auto add_bn = [&out](diff::BatchNormState& bn, const std::string& name) {
        out.push_back({name + ".running_mean", {bn.features()}, &bn.running_mean});
        out.push_back({name + ".running_var", {bn.features()}, &bn.running_var});
    };
    if (kind_ == ModelKind::convnet) {
        add_bn(conv_.bn1, "conv.bn1");
        add_bn(conv_.bn2, "conv.bn2");
        add_bn(conv_.bn3, "conv.bn3");
        add_bn(conv_.bn5, "conv.bn5");
    }
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        add_bn(blocks_[i].bn, "dense" + std::to_string(i + 1) + ".bn");
    }
    if (cfg_.head_batchnorm) {
        for (auto& h : heads_) {
            add_bn(h.bn, h.weights.name.substr(0, h.weights.name.find('.')) + ".bn");
        }
    }
    return out;
}

bool Network::all_finite() const {
    auto* self = const_cast<Network*>(this);
    for (const auto& e : self->state()) {
        for (double v : *e.values) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------

Tensor Network::conv_forward(const Batch& batch) {
    const std::size_t B = batch.size;
    const std::size_t R = batch.rows;
    const std::size_t W = batch.window;
    const std::size_t J = cfg_.filters;
    const std::size_t L = cfg_.filter_length;
    const std::size_t p = cfg_.pool;
    const std::size_t BR = B * R;
    auto& c = cache_.conv;
    c.batch = B;

    c.pooled_coarse.assign(BR * len_coarse_, 0.0);
    c.pooled_mid.assign(BR * len_mid_, 0.0);
    c.z1 = Tensor({BR * len1_, J});
    c.z2 = Tensor({BR * len2_, J});
    c.z3 = Tensor({BR * len3_, J});

    const auto& k1 = conv_.k1.tensor.values;
    const auto& k2 = conv_.k2.tensor.values;
    const auto& k3 = conv_.k3.tensor.values;
    for (std::size_t br = 0; br < BR; ++br) {
        std::span<const double> x(batch.x.data() + br * W, W);
        const auto coarse = diff::maxpool(x, p * p);
        const auto mid = diff::maxpool(x, p);
        std::copy(coarse.values.begin(), coarse.values.end(),
                  c.pooled_coarse.begin() + static_cast<std::ptrdiff_t>(br * len_coarse_));
        std::copy(mid.values.begin(), mid.values.end(),
                  c.pooled_mid.begin() + static_cast<std::ptrdiff_t>(br * len_mid_));
        for (std::size_t j = 0; j < J; ++j) {
            const auto o1 = diff::conv1d_valid(coarse.values, {k1.data() + j * L, L},
                                               conv_.b1.tensor[j]);
            const auto o2 = diff::conv1d_valid(mid.values, {k2.data() + j * L, L},
                                               conv_.b2.tensor[j]);
            const auto o3 = diff::conv1d_valid(x, {k3.data() + j * L, L}, conv_.b3.tensor[j]);
            for (std::size_t pos = 0; pos < len1_; ++pos) {
                c.z1[(br * len1_ + pos) * J + j] = o1[pos];
            }
            for (std::size_t pos = 0; pos < len2_; ++pos) {
                c.z2[(br * len2_ + pos) * J + j] = o2[pos];
            }
            for (std::size_t pos = 0; pos < len3_; ++pos) {
                c.z3[(br * len3_ + pos) * J + j] = o3[pos];
            }
        }
    }
    c.a1 = diff::batchnorm_forward(c.z1, conv_.bn1, c.bn1);
    c.a2 = diff::batchnorm_forward(c.z2, conv_.bn2, c.bn2);
    c.a3 = diff::batchnorm_forward(c.z3, conv_.bn3, c.bn3);

    // C4 = maxpool(relu(a3)) along positions, per (row, filter).
    c.c4.assign(BR * len4_ * J, 0.0);
    c.c4_argmax.assign(BR * len4_ * J, 0);
    std::vector<double> seq(len3_);
    for (std::size_t br = 0; br < BR; ++br) {
        for (std::size_t j = 0; j < J; ++j) {
            for (std::size_t pos = 0; pos < len3_; ++pos) {
                const double a = c.a3[(br * len3_ + pos) * J + j];
                seq[pos] = a > 0.0 ? a : 0.0;
            }
            const auto pooled = diff::maxpool(seq, p);
            for (std::size_t i = 0; i < len4_; ++i) {
                c.c4[(br * len4_ + i) * J + j] = pooled.values[i];
                c.c4_argmax[(br * len4_ + i) * J + j] = pooled.argmax[i];
            }
        }
    }

    c.z5 = Tensor({BR * len5_, J});
    const auto& k5 = conv_.k5.tensor.values;
    for (std::size_t br = 0; br < BR; ++br) {
        for (std::size_t pos = 0; pos < len5_; ++pos) {
            for (std::size_t j = 0; j < J; ++j) {
                double acc = conv_.b5.tensor[j];
                for (std::size_t k = 0; k < J; ++k) {
                    const double* kern = k5.data() + (j * J + k) * L;
                    for (std::size_t l = 0; l < L; ++l) {
                        acc += kern[l] * c.c4[(br * len4_ + pos + l) * J + k];
                    }
                }
                c.z5[(br * len5_ + pos) * J + j] = acc;
            }
        }
    }
    c.a5 = diff::batchnorm_forward(c.z5, conv_.bn5, c.bn5);

    const std::size_t per = len1_ + len2_ + len5_;
    Tensor features({B, features_});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t br = b * R + r;
            for (std::size_t j = 0; j < J; ++j) {
                double* f = features.values.data() + b * features_ + (r * J + j) * per;
                for (std::size_t pos = 0; pos < len1_; ++pos) {
                    f[pos] = std::max(0.0, c.a1[(br * len1_ + pos) * J + j]);
                }
                for (std::size_t pos = 0; pos < len2_; ++pos) {
                    f[len1_ + pos] = std::max(0.0, c.a2[(br * len2_ + pos) * J + j]);
                }
                for (std::size_t pos = 0; pos < len5_; ++pos) {
                    f[len1_ + len2_ + pos] = std::max(0.0, c.a5[(br * len5_ + pos) * J + j]);
                }
            }
        }
    }
    return features;
}

void Network::conv_backward(const Tensor& grad_features) {
    auto& c = cache_.conv;
    const std::size_t B = c.batch;
    const std::size_t R = cfg_.rows();
    const std::size_t W = cfg_.window;
    const std::size_t J = cfg_.filters;
    const std::size_t L = cfg_.filter_length;
    const std::size_t BR = B * R;
    const std::size_t per = len1_ + len2_ + len5_;

    Tensor da1(c.a1.shape);
    Tensor da2(c.a2.shape);
    Tensor da5(c.a5.shape);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t br = b * R + r;
            for (std::size_t j = 0; j < J; ++j) {
                const double* g = grad_features.values.data() + b * features_ + (r * J + j) * per;
                for (std::size_t pos = 0; pos < len1_; ++pos) {
                    const std::size_t k = (br * len1_ + pos) * J + j;
                    da1[k] = c.a1[k] > 0.0 ? g[pos] : 0.0;
                }
                for (std::size_t pos = 0; pos < len2_; ++pos) {
                    const std::size_t k = (br * len2_ + pos) * J + j;
                    da2[k] = c.a2[k] > 0.0 ? g[len1_ + pos] : 0.0;
                }
                for (std::size_t pos = 0; pos < len5_; ++pos) {
                    const std::size_t k = (br * len5_ + pos) * J + j;
                    da5[k] = c.a5[k] > 0.0 ? g[len1_ + len2_ + pos] : 0.0;
                }
            }
        }
    }
    const Tensor dz1 = diff::batchnorm_backward(da1, conv_.bn1, c.bn1);
    const Tensor dz2 = diff::batchnorm_backward(da2, conv_.bn2, c.bn2);
    const Tensor dz5 = diff::batchnorm_backward(da5, conv_.bn5, c.bn5);

    for (auto* p : {&conv_.k1, &conv_.b1, &conv_.k2, &conv_.b2, &conv_.k3, &conv_.b3, &conv_.k5,
                    &conv_.b5}) {
        p->tensor.ensure_grad();
    }
    auto& gk1 = conv_.k1.tensor.grad;
    auto& gb1 = conv_.b1.tensor.grad;
    auto& gk2 = conv_.k2.tensor.grad;
    auto& gb2 = conv_.b2.tensor.grad;
    auto& gk3 = conv_.k3.tensor.grad;
    auto& gb3 = conv_.b3.tensor.grad;
    auto& gk5 = conv_.k5.tensor.grad;
    auto& gb5 = conv_.b5.tensor.grad;
    const auto& k5 = conv_.k5.tensor.values;

    std::vector<double> dc4(BR * len4_ * J, 0.0);
    for (std::size_t br = 0; br < BR; ++br) {
        for (std::size_t j = 0; j < J; ++j) {
            for (std::size_t pos = 0; pos < len1_; ++pos) {
                const double g = dz1[(br * len1_ + pos) * J + j];
                gb1[j] += g;
                for (std::size_t l = 0; l < L; ++l) {
                    gk1[j * L + l] += g * c.pooled_coarse[br * len_coarse_ + pos + l];
                }
            }
            for (std::size_t pos = 0; pos < len2_; ++pos) {
                const double g = dz2[(br * len2_ + pos) * J + j];
                gb2[j] += g;
                for (std::size_t l = 0; l < L; ++l) {
                    gk2[j * L + l] += g * c.pooled_mid[br * len_mid_ + pos + l];
                }
            }
        }
        for (std::size_t pos = 0; pos < len5_; ++pos) {
            for (std::size_t j = 0; j < J; ++j) {
                const double g = dz5[(br * len5_ + pos) * J + j];
                gb5[j] += g;
                for (std::size_t k = 0; k < J; ++k) {
                    for (std::size_t l = 0; l < L; ++l) {
                        const std::size_t ci = (br * len4_ + pos + l) * J + k;
                        gk5[(j * J + k) * L + l] += g * c.c4[ci];
                        dc4[ci] += g * k5[(j * J + k) * L + l];
                    }
                }
            }
        }
    }

    Tensor da3(c.a3.shape);
    for (std::size_t br = 0; br < BR; ++br) {
        for (std::size_t i = 0; i < len4_; ++i) {
            for (std::size_t j = 0; j < J; ++j) {
                const std::size_t src = (br * len4_ + i) * J + j;
                const std::size_t k = (br * len3_ + c.c4_argmax[src]) * J + j;
                if (c.a3[k] > 0.0) {
                    da3[k] += dc4[src];
                }
            }
        }
    }
    const Tensor dz3 = diff::batchnorm_backward(da3, conv_.bn3, c.bn3);
    for (std::size_t br = 0; br < BR; ++br) {
        for (std::size_t pos = 0; pos < len3_; ++pos) {
            for (std::size_t j = 0; j < J; ++j) {
                const double g = dz3[(br * len3_ + pos) * J + j];
                if (g == 0.0) {
                    continue;
                }
                gb3[j] += g;
                for (std::size_t l = 0; l < L; ++l) {
                    gk3[j * L + l] += g * conv_input_[br * W + pos + l];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------

Tensor Network::forward(const Batch& batch, Mode mode, diff::Rng* rng) {
    if (batch.rows != cfg_.rows() || batch.window != cfg_.window ||
        batch.x.size() != batch.size * batch.rows * batch.window) {
        throw DimensionError("predictor input: batch of " + std::to_string(batch.rows) + "x" +
                             std::to_string(batch.window) + " grids, network expects " +
                             std::to_string(cfg_.rows()) + "x" + std::to_string(cfg_.window));
    }
    if (mode == Mode::train && cfg_.dropout > 0.0 && rng == nullptr) {
        throw ConfigError("predictor: train mode with dropout needs a random stream");
    }
    set_mode(mode);
    diff::Rng unused(0);
    diff::Rng& stream = rng != nullptr ? *rng : unused;
    const std::size_t B = batch.size;

    if (kind_ == ModelKind::convnet) {
        conv_input_ = batch.x;
        cache_.features = conv_forward(batch);
    } else {
        cache_.features = Tensor({B, features_}, batch.x);
    }

    cache_.blocks.resize(blocks_.size());
    const Tensor* h = &cache_.features;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        auto& bc = cache_.blocks[i];
        auto& blk = blocks_[i];
        bc.dropped = diff::dropout(*h, cfg_.dropout, mode, stream, bc.drop);
        bc.pre_bn = diff::dense(bc.dropped, blk.weights, blk.bias);
        bc.post_bn = diff::batchnorm_forward(bc.pre_bn, blk.bn, bc.bn);
        bc.output = diff::activation(diff::Activation::relu, bc.post_bn);
        h = &bc.output;
    }

    const std::size_t M = heads_.size();
    cache_.heads.resize(M);
    Tensor out({B, M, 2});
    for (std::size_t m = 0; m < M; ++m) {
        auto& hc = cache_.heads[m];
        auto& head = heads_[m];
        hc.dropped = diff::dropout(*h, cfg_.dropout, mode, stream, hc.drop);
        hc.logits = diff::dense(hc.dropped, head.weights, head.bias);
        hc.post_bn = cfg_.head_batchnorm ? diff::batchnorm_forward(hc.logits, head.bn, hc.bn)
                                         : hc.logits;
        hc.log_probs = diff::activation(diff::Activation::log_softmax2, hc.post_bn);
        for (std::size_t b = 0; b < B; ++b) {
            out[(b * M + m) * 2] = hc.log_probs[b * 2];
            out[(b * M + m) * 2 + 1] = hc.log_probs[b * 2 + 1];
        }
    }
    return out;
}

void Network::backward(const Tensor& grad_log_probs) {
    const std::size_t M = heads_.size();
    const std::size_t B = cache_.features.rows();
    if (grad_log_probs.size() != B * M * 2) {
        throw DimensionError("predictor backward: gradient shape " +
                             diff::shape_string(grad_log_probs.shape) + " does not match batch");
    }
    const Tensor& top = blocks_.empty() ? cache_.features : cache_.blocks.back().output;
    Tensor grad_h(top.shape);
    for (std::size_t m = 0; m < M; ++m) {
        auto& hc = cache_.heads[m];
        auto& head = heads_[m];
        Tensor g({B, 2});
        for (std::size_t b = 0; b < B; ++b) {
            g[b * 2] = grad_log_probs[(b * M + m) * 2];
            g[b * 2 + 1] = grad_log_probs[(b * M + m) * 2 + 1];
        }
        Tensor g_post =
            diff::activation_backward(diff::Activation::log_softmax2, hc.post_bn, hc.log_probs, g);
        Tensor g_logits =
            cfg_.head_batchnorm ? diff::batchnorm_backward(g_post, head.bn, hc.bn) : g_post;
        Tensor g_dropped = diff::dense_backward(hc.dropped, head.weights, head.bias, g_logits);
        Tensor g_in = diff::dropout_backward(g_dropped, hc.drop);
        for (std::size_t i = 0; i < grad_h.size(); ++i) {
            grad_h[i] += g_in[i];
        }
    }
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        auto& bc = cache_.blocks[i];
        auto& blk = blocks_[i];
        Tensor g_post = diff::activation_backward(diff::Activation::relu, bc.post_bn, bc.output,
                                                  grad_h);
        Tensor g_pre = diff::batchnorm_backward(g_post, blk.bn, bc.bn);
        Tensor g_dropped = diff::dense_backward(bc.dropped, blk.weights, blk.bias, g_pre);
        grad_h = diff::dropout_backward(g_dropped, bc.drop);
    }
    if (kind_ == ModelKind::convnet) {
        conv_backward(grad_h);
    }
}

void Network::clear_cache() {
    cache_ = Cache{};
    conv_input_.clear();
}

// ---------------------------------------------------------------------------

void Network::save(const std::filesystem::path& path) const {
    auto out = csv::open_output(path);
    out << "labconv-model kind=" << kind_name(kind_) << " filters=" << cfg_.filters
        << " filter_length=" << cfg_.filter_length << " pool=" << cfg_.pool << " hidden=";
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
        out << (i ? "," : "") << cfg_.hidden[i];
    }
    out << " dropout=" << csv::format_double(cfg_.dropout) << " mode=" << mode_name(cfg_.input_mode)
        << " window=" << cfg_.window << " diseases=" << cfg_.diseases << " labs=" << cfg_.labs
        << " head_bn=" << (cfg_.head_batchnorm ? 1 : 0) << '\n';
    auto* self = const_cast<Network*>(this);
    for (const auto& e : self->state()) {
        out << e.name;
        for (auto d : e.shape) {
            out << ' ' << d;
        }
        out << '\n';
        for (std::size_t i = 0; i < e.values->size(); ++i) {
            out << (i ? " " : "") << csv::format_double((*e.values)[i]);
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("failed writing model to '" + path.string() + "'");
    }
}

Network Network::load(const std::filesystem::path& path) {
    const std::string file = path.string();
    auto in = csv::open_input(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(file, 1, "empty model file");
    }
    const auto head = csv::tokens(line);
    if (head.empty() || head[0] != "labconv-model") {
        throw ParseError(file, 1, "missing model manifest");
    }
    PredictorConfig cfg;
    ModelKind kind = ModelKind::convnet;
    for (std::size_t i = 1; i < head.size(); ++i) {
        const auto eq = head[i].find('=');
        if (eq == std::string_view::npos) {
            throw ParseError(file, 1, "bad manifest field '" + std::string(head[i]) + "'");
        }
        const auto key = head[i].substr(0, eq);
        const auto val = head[i].substr(eq + 1);
        if (key == "kind") {
            kind = parse_kind(val);
        } else if (key == "filters") {
            cfg.filters = static_cast<std::size_t>(csv::parse_int(val, file, 1));
        } else if (key == "filter_length") {
            cfg.filter_length = static_cast<std::size_t>(csv::parse_int(val, file, 1));
        } else if (key == "pool") {
            cfg.pool = static_cast<std::size_t>(csv::parse_int(val, file, 1));
        } else if (key == "hidden") {
            cfg.hidden.clear();
            for (auto h : csv::split(val)) {
                cfg.hidden.push_back(static_cast<std::size_t>(csv::parse_int(h, file, 1)));
            }
        } else if (key == "dropout") {
            cfg.dropout = csv::parse_double(val, file, 1);
        } else if (key == "mode") {
            cfg.input_mode = parse_mode(val);
        } else if (key == "window") {
            cfg.window = static_cast<std::size_t>(csv::parse_int(val, file, 1));
        } else if (key == "diseases") {
            cfg.diseases = static_cast<std::size_t>(csv::parse_int(val, file, 1));
        } else if (key == "labs") {
            cfg.labs = static_cast<std::size_t>(csv::parse_int(val, file, 1));
        } else if (key == "head_bn") {
            cfg.head_batchnorm = csv::parse_int(val, file, 1) != 0;
        } else {
            throw ParseError(file, 1, "unknown manifest key '" + std::string(key) + "'");
        }
    }
    Network net(kind, cfg, 0);
    std::size_t line_no = 1;
    for (auto& e : net.state()) {
        ++line_no;
        if (!std::getline(in, line)) {
            throw ParseError(file, line_no, "missing block '" + e.name + "'");
        }
        const auto hdr = csv::tokens(line);
        if (hdr.empty() || hdr[0] != e.name || hdr.size() != e.shape.size() + 1) {
            throw ParseError(file, line_no, "expected block header '" + e.name + "'");
        }
        for (std::size_t d = 0; d < e.shape.size(); ++d) {
            if (static_cast<std::size_t>(csv::parse_i64(hdr[d + 1], file, line_no)) != e.shape[d]) {
                throw ParseError(file, line_no, "shape mismatch for '" + e.name + "'");
            }
        }
        ++line_no;
        if (!std::getline(in, line)) {
            throw ParseError(file, line_no, "missing values for '" + e.name + "'");
        }
        const auto vals = csv::tokens(line);
        if (vals.size() != e.values->size()) {
            throw ParseError(file, line_no, "expected " + std::to_string(e.values->size()) +
                                                " values for '" + e.name + "'");
        }
        for (std::size_t i = 0; i < vals.size(); ++i) {
            (*e.values)[i] = csv::parse_double(vals[i], file, line_no);
        }
    }
    return net;
}

}  // namespace labconv::predictor
