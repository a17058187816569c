#include "labconv/errors.hpp"
#include "labconv/predictor.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

using namespace labconv;
using namespace labconv::predictor;

namespace {

PredictorConfig small_config(InputMode mode = InputMode::raw) {
    PredictorConfig cfg;
    cfg.filters = 3;
    cfg.hidden = {6, 5};
    cfg.labs = 2;
    cfg.diseases = 2;
    cfg.window = 36;
    cfg.input_mode = mode;
    return cfg;
}

/// Random windows; disease 0 fires when row 0 has a high mean, disease 1 when
/// row 1 rises over the window.
Dataset random_dataset(std::size_t n, std::size_t labs, std::size_t diseases, std::uint64_t seed,
                       InputMode mode = InputMode::raw) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::bernoulli_distribution seen(0.4);
    Dataset d;
    d.mode = mode;
    d.labs = labs;
    d.rows = mode == InputMode::two_channel ? 2 * labs : labs;
    d.window = 36;
    d.diseases = diseases;
    const std::size_t W = d.window;
    for (std::size_t i = 0; i < n; ++i) {
        d.person_ids.push_back("p" + std::to_string(i));
        d.anchors.push_back(0);
        const double level = z(rng);
        const double slope = z(rng);
        std::vector<double> vals(labs * W), mask(labs * W);
        for (std::size_t r = 0; r < labs; ++r) {
            for (std::size_t t = 0; t < W; ++t) {
                mask[r * W + t] = seen(rng) ? 1.0 : 0.0;
                const double v = (r == 0 ? level : slope * (double(t) - 17.5) / 18.0) +
                                 0.3 * z(rng);
                vals[r * W + t] = mode == InputMode::raw ? v * mask[r * W + t] : v;
            }
        }
        d.inputs.insert(d.inputs.end(), vals.begin(), vals.end());
        if (mode == InputMode::two_channel) {
            d.inputs.insert(d.inputs.end(), mask.begin(), mask.end());
        }
        d.mask.insert(d.mask.end(), mask.begin(), mask.end());
        for (std::size_t m = 0; m < diseases; ++m) {
            const bool pos = m % 2 == 0 ? level > 0.5 : slope > 0.5;
            d.labels.push_back(pos ? 1 : 0);
            d.eligible.push_back(1);
        }
    }
    return d;
}

std::vector<std::size_t> first_n(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

diff::SgdConfig quick_sgd(std::size_t epochs = 3) {
    diff::SgdConfig s;
    s.learning_rate = 0.05;
    s.batch_size = 32;
    s.epochs = epochs;
    s.seed = 5;
    return s;
}

std::vector<double> all_values(Network& net) {
    std::vector<double> out;
    for (const auto& e : net.state()) {
        out.insert(out.end(), e.values->begin(), e.values->end());
    }
    return out;
}

/// Per-row lengths measured by actually running pool and convolution.
std::size_t measured_length(std::size_t W, std::size_t L, std::size_t p) {
    const std::vector<double> x(W, 1.0);
    const std::vector<double> k(L, 1.0);
    const auto coarse = diff::maxpool(diff::maxpool(x, p).values, p).values;
    const auto mid = diff::maxpool(x, p).values;
    const auto c3 = diff::conv1d_valid(x, k, 0.0);
    const auto c4 = diff::maxpool(c3, p).values;
    return diff::conv1d_valid(coarse, k, 0.0).size() + diff::conv1d_valid(mid, k, 0.0).size() +
           diff::conv1d_valid(c4, k, 0.0).size();
}

}  // namespace

TEST_SUITE("predictor") {

TEST_CASE("feature length follows the closed form across a window sweep") {
    for (std::size_t W = 9; W <= 48; ++W) {
        for (std::size_t p : {2u, 3u}) {
            for (std::size_t L : {2u, 3u}) {
                if (W < p * p * L) {
                    CHECK_THROWS_AS(conv_feature_length(W, L, p), ConfigError);
                    continue;
                }
                const std::size_t closed =
                    (W / (p * p) - L + 1) + (W / p - L + 1) + ((W - L + 1) / p - L + 1);
                CHECK(conv_feature_length(W, L, p) == closed);
                CHECK(measured_length(W, L, p) == closed);
                PredictorConfig cfg = small_config();
                cfg.window = W;
                cfg.pool = p;
                cfg.filter_length = L;
                Network net(ModelKind::convnet, cfg, 1);
                Batch b{2, cfg.rows(), W, std::vector<double>(2 * cfg.rows() * W, 0.5)};
                net.forward(b, diff::Mode::eval);
                CHECK(net.last_features().size() == 2 * cfg.rows() * cfg.filters * closed);
                CHECK(net.feature_length() == cfg.rows() * cfg.filters * closed);
            }
        }
    }
}

TEST_CASE("default configuration feature lengths") {
    PredictorConfig cfg;
    cfg.labs = 18;
    CHECK(cfg.feature_length(ModelKind::convnet) == 3024);
    cfg.input_mode = InputMode::two_channel;
    CHECK(cfg.feature_length(ModelKind::convnet) == 6048);
    CHECK(cfg.feature_length(ModelKind::mlp) == 36 * 36);
}

TEST_CASE("zero parameters give log(1/2) everywhere") {
    for (auto kind : {ModelKind::convnet, ModelKind::mlp}) {
        Network net(kind, small_config(), 3);
        for (auto* p : net.parameters()) {
            std::fill(p->tensor.values.begin(), p->tensor.values.end(), 0.0);
        }
        const auto data = random_dataset(5, 2, 2, 1);
        const auto idx = first_n(5);
        for (auto mode : {diff::Mode::eval, diff::Mode::train}) {
            diff::Rng rng(1);
            const auto lp = net.forward(make_batch(data, idx), mode, &rng);
            CHECK(lp.shape == diff::Shape{5, 2, 2});
            for (double v : lp.values) {
                CHECK(v == doctest::Approx(std::log(0.5)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("full predictor gradient check at batch 4") {
    for (auto kind : {ModelKind::convnet, ModelKind::mlp}) {
        for (auto input_mode : {InputMode::raw, InputMode::two_channel}) {
            for (auto mode : {diff::Mode::eval, diff::Mode::train}) {
                auto cfg = small_config(input_mode);
                cfg.dropout = 0.0;
                Network net(kind, cfg, 11);
                // Non-trivial running statistics so eval-mode batch norm is not the identity.
                for (auto& e : net.state()) {
                    if (e.name.find("running_var") != std::string::npos) {
                        for (auto& v : *e.values) v = 1.7;
                    } else if (e.name.find("running_mean") != std::string::npos) {
                        for (auto& v : *e.values) v = 0.2;
                    }
                }
                const auto data = random_dataset(4, 2, 2, 9, input_mode);
                const auto batch = make_batch(data, first_n(4));
                std::mt19937_64 rng(3);
                const auto coef = testing_support::random_vector(4 * 2 * 2, rng, -1.0, 1.0);
                auto loss = [&](bool backprop) {
                    const auto lp = net.forward(batch, mode);
                    double s = 0.0;
                    for (std::size_t i = 0; i < coef.size(); ++i) s += coef[i] * lp[i];
                    if (backprop) {
                        net.backward(diff::Tensor(lp.shape, coef));
                    }
                    return s;
                };
                auto params = net.parameters();
                diff::GradCheckOptions opt;
                opt.max_entries_per_param = 24;
                // Biases feeding train-mode batch norm have exactly zero gradient; the floor
                // keeps finite-difference roundoff on those from dominating.
                opt.abs_floor = 1e-5;
                const auto rep = diff::grad_check(loss, params, 1e-4, opt);
                INFO(kind_name(kind), " ", mode_name(input_mode), " ", int(mode), " worst ", rep.worst_param,
                     "[", rep.worst_index, "] rel ", rep.max_rel_error);
                CHECK(rep.passed);
            }
        }
    }
}

TEST_CASE("predict_proba is a repeatable distribution matching the forward pass") {
    const auto data = random_dataset(40, 2, 2, 4);
    Network net(ModelKind::convnet, small_config(), 8);
    const auto p1 = predict_proba(net, data);
    const auto p2 = predict_proba(net, data);
    CHECK(p1 == p2);
    REQUIRE(p1.size() == 40 * 2);
    const auto lp = net.forward(make_batch(data, first_n(40)), diff::Mode::eval);
    for (std::size_t i = 0; i < 40 * 2; ++i) {
        CHECK(p1[i] >= 0.0);
        CHECK(p1[i] <= 1.0);
        CHECK(std::exp(lp[2 * i]) + std::exp(lp[2 * i + 1]) ==
              doctest::Approx(1.0).epsilon(1e-12));
        CHECK(p1[i] == doctest::Approx(std::exp(lp[2 * i + 1])).epsilon(1e-12));
    }
}

TEST_CASE("non-finite parameters are rejected at inference") {
    const auto data = random_dataset(4, 2, 2, 4);
    Network net(ModelKind::mlp, small_config(), 8);
    net.parameters().front()->tensor[0] = NAN;
    CHECK_FALSE(net.all_finite());
    CHECK_THROWS_AS(predict_proba(net, data), InferenceError);
}

TEST_CASE("filters are shared across input rows") {
    // Swapping input rows permutes the convolutional features without changing them.
    auto cfg = small_config();
    Network net(ModelKind::convnet, cfg, 2);
    const auto data = random_dataset(3, 2, 2, 6);
    Batch b = make_batch(data, first_n(3));
    net.forward(b, diff::Mode::eval);
    auto f1 = net.last_features().values;
    Batch swapped = b;
    const std::size_t W = b.window;
    for (std::size_t i = 0; i < b.size; ++i) {
        std::swap_ranges(swapped.x.begin() + (i * 2) * W, swapped.x.begin() + (i * 2 + 1) * W,
                         swapped.x.begin() + (i * 2 + 1) * W);
    }
    net.forward(swapped, diff::Mode::eval);
    auto f2 = net.last_features().values;
    std::sort(f1.begin(), f1.end());
    std::sort(f2.begin(), f2.end());
    REQUIRE(f1.size() == f2.size());
    for (std::size_t i = 0; i < f1.size(); ++i) {
        CHECK(f1[i] == doctest::Approx(f2[i]).epsilon(1e-12));
    }
}

TEST_CASE("training is deterministic and learns a separable signal") {
    const auto train_set = random_dataset(300, 2, 2, 21);
    const auto val_set = random_dataset(200, 2, 2, 22);
    auto a = train(ModelKind::convnet, small_config(), train_set, val_set, quick_sgd(6));
    auto b = train(ModelKind::convnet, small_config(), train_set, val_set, quick_sgd(6));
    CHECK(all_values(a.model) == all_values(b.model));
    CHECK(a.state.best_epoch == b.state.best_epoch);
    CHECK(a.state.log.size() == 6);
    CHECK(a.state.best_validation_auc > 0.8);
    // The kept snapshot is the best logged epoch.
    double best = 0.0;
    for (const auto& e : a.state.log) best = std::max(best, e.validation_auc);
    CHECK(a.state.best_validation_auc == best);
    CHECK(mean_auc(predict_proba(a.model, val_set), val_set) == doctest::Approx(best));
}

TEST_CASE("labels of ineligible windows carry no gradient") {
    auto data = random_dataset(200, 2, 2, 31);
    const auto val_set = random_dataset(60, 2, 2, 32);
    std::mt19937_64 rng(4);
    std::bernoulli_distribution drop(0.3);
    for (std::size_t i = 0; i < data.eligible.size(); ++i) {
        if (drop(rng)) data.eligible[i] = 0;
    }
    auto flipped = data;
    for (std::size_t i = 0; i < flipped.labels.size(); ++i) {
        if (!flipped.eligible[i]) flipped.labels[i] = 1 - flipped.labels[i];
    }
    auto a = train(ModelKind::mlp, small_config(), data, val_set, quick_sgd(2));
    auto b = train(ModelKind::mlp, small_config(), flipped, val_set, quick_sgd(2));
    CHECK(a.state.pos_weight == b.state.pos_weight);
    CHECK(all_values(a.model) == all_values(b.model));
}

TEST_CASE("positive weights are eligible negatives over positives") {
    Dataset d = random_dataset(6, 2, 2, 1);
    d.labels = {1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0};
    d.eligible = {1, 1, 1, 1, 0, 1, 1, 1, 1, 1, 1, 1};
    const auto w = positive_weights(d);
    CHECK(w[0] == doctest::Approx(1.5));  // rows 1, 4, 5 negative and eligible over 2 positives
    CHECK(std::isnan(w[1]));
    auto none = d;
    std::fill(none.labels.begin(), none.labels.end(), 0);
    CHECK_THROWS_AS(train(ModelKind::mlp, small_config(), none, none, quick_sgd(1)),
                    TrainingError);
}

TEST_CASE("network save and load round trip") {
    const auto train_set = random_dataset(80, 2, 2, 41);
    auto res = train(ModelKind::convnet, small_config(), train_set, train_set, quick_sgd(2));
    const auto path = std::filesystem::temp_directory_path() / "labconv_test_net.model";
    res.model.save(path);
    auto back = Network::load(path);
    CHECK(back.kind() == ModelKind::convnet);
    CHECK(all_values(back) == all_values(res.model));
    CHECK(predict_proba(back, train_set) == predict_proba(res.model, train_set));
    std::filesystem::remove(path);
}

TEST_CASE("logistic baseline on window maxima") {
    const auto data = random_dataset(120, 2, 2, 51);
    LogitMaxModel zero;
    zero.features = 2;
    zero.diseases = 2;
    zero.weights.assign(4, 0.0);
    zero.bias.assign(2, 0.0);
    for (double s : logit_scores(zero, data, InputMode::raw)) {
        CHECK(s == doctest::Approx(0.5));
    }
    // Raw maxima skip unobserved cells.
    const auto f = max_features(data, InputMode::raw);
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t r = 0; r < 2; ++r) {
            double best = -INFINITY;
            for (std::size_t t = 0; t < 36; ++t) {
                if (data.mask[(i * 2 + r) * 36 + t] != 0.0) {
                    best = std::max(best, data.inputs[(i * 2 + r) * 36 + t]);
                }
            }
            CHECK(f[i * 2 + r] == (std::isinf(best) ? 0.0 : best));
        }
    }
    auto res = train_logit_max(data, data, InputMode::raw, quick_sgd(5));
    CHECK(res.state.best_validation_auc > 0.6);
    const auto path = std::filesystem::temp_directory_path() / "labconv_test.logit";
    save_logit(path, res.model);
    const auto back = load_logit(path);
    CHECK(back.weights == res.model.weights);
    CHECK(back.bias == res.model.bias);
    std::filesystem::remove(path);
}

TEST_CASE("configuration and shape errors") {
    auto cfg = small_config();
    cfg.window = 10;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    const auto data = random_dataset(20, 3, 2, 1);
    CHECK_THROWS_AS(train(ModelKind::mlp, small_config(), data, data, quick_sgd(1)),
                    DimensionError);
    CHECK(parse_mode("two_channel") == InputMode::two_channel);
    CHECK(parse_kind("mlp") == ModelKind::mlp);
}

}  // TEST_SUITE
