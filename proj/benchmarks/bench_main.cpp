#include "labconv/harness.hpp"
#include "labconv/imputer.hpp"
#include "labconv/predictor.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace labconv;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = z(rng);
    return v;
}

cohort::ObservationGrid random_grid(std::size_t labs, std::size_t months, double keep,
                                    std::uint64_t seed) {
    std::vector<std::string> order;
    for (std::size_t d = 0; d < labs; ++d) order.push_back("L" + std::to_string(d));
    cohort::ObservationGrid g(order, months, 0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t d = 0; d < labs; ++d) {
        for (std::size_t t = 0; t < months; ++t) {
            if (u(rng) < keep) g.set(d, t, z(rng));
        }
    }
    return g;
}

void BM_ImputeUnivariate(benchmark::State& state) {
    const auto len = static_cast<std::size_t>(state.range(0));
    const auto g = random_grid(1, len, 0.15, 1);
    const auto k = imputer::LearnableKernel1D::initial(12, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(imputer::impute_univariate(g.value_row(0), g.mask_row(0), k));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK(BM_ImputeUnivariate)->Arg(36)->Arg(120)->Arg(1200);

void BM_ImputeMultivariate(benchmark::State& state) {
    const auto labs = static_cast<std::size_t>(state.range(0));
    const auto g = random_grid(labs, 120, 0.15, 3);
    const auto k = imputer::LearnableKernel2D::initial(g.lab_order[0], g.lab_order, 12, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(imputer::impute_multivariate(g, k));
    }
}
BENCHMARK(BM_ImputeMultivariate)->Arg(6)->Arg(18);

void BM_LooLossWithGradient(benchmark::State& state) {
    const auto g = random_grid(6, 120, 0.15, 5);
    diff::Rng rng(6);
    const auto data = imputer::augment(g, imputer::AugmentConfig{}, rng);
    const auto k = imputer::LearnableKernel2D::initial(g.lab_order[0], g.lab_order, 12, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            imputer::loo_loss(data, k.weights, 12, 0, true, 0.05, true, 0.0));
    }
}
BENCHMARK(BM_LooLossWithGradient);

void BM_PredictorStep(benchmark::State& state) {
    const bool convnet = state.range(0) == 0;
    predictor::PredictorConfig cfg;
    const auto kind = convnet ? predictor::ModelKind::convnet : predictor::ModelKind::mlp;
    predictor::Network net(kind, cfg, 1);
    const std::size_t batch = 256;
    predictor::Batch b{batch, cfg.rows(), cfg.window,
                       random_values(batch * cfg.rows() * cfg.window, 8)};
    diff::Rng rng(9);
    auto params = net.parameters();
    diff::SgdConfig sgd;
    for (auto _ : state) {
        const auto lp = net.forward(b, diff::Mode::train, &rng);
        net.backward(diff::Tensor(lp.shape, -1.0 / static_cast<double>(batch)));
        diff::sgd_step(params, 0, sgd);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
    state.SetLabel(convnet ? "convnet" : "mlp");
}
BENCHMARK(BM_PredictorStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Auc(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto s = random_values(n, 10);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = s[i] + 0.5 * static_cast<double>(i % 3) > 0.5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(harness::auc(s, y));
    }
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
