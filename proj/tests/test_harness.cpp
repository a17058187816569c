#include "labconv/errors.hpp"
#include "labconv/harness.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace labconv;
using namespace labconv::harness;
namespace fs = std::filesystem;

namespace {

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double credit = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1.0;
                credit += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    return credit / pairs;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("auc examples") {
    CHECK(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1}) == 1.0);
    CHECK(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 1}) == 0.0);
    CHECK(auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
    CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) ==
          doctest::Approx(0.75));
    CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), EvaluationError);
    CHECK_FALSE(try_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}).has_value());
    CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<int>{0, 1}), DimensionError);
}

TEST_CASE("auc matches pair counting and its invariances") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 60;
        std::vector<double> s(n);
        std::vector<int> y(n);
        // Coarse scores force plenty of ties.
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 7) / 7.0;
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 0;
        y[1] = 1;
        const double a = auc(s, y);
        CHECK(std::abs(a - pair_count_auc(s, y)) < 1e-12);
        std::vector<double> mono(n), neg(n);
        for (std::size_t i = 0; i < n; ++i) {
            mono[i] = std::exp(3.0 * s[i]) - 5.0;
            neg[i] = -s[i];
        }
        CHECK(std::abs(auc(mono, y) - a) < 1e-12);
        CHECK(std::abs(auc(neg, y) - (1.0 - a)) < 1e-12);
    }
}

TEST_CASE("masked rmse") {
    const std::vector<double> pred{1, 2, 3, 4};
    const std::vector<double> target{1, 0, 3, 100};
    CHECK(rmse(pred, target, std::vector<double>{1, 1, 1, 0}) ==
          doctest::Approx(std::sqrt(4.0 / 3.0)));
    CHECK(rmse(pred, target, std::vector<double>{1, 0, 1, 0}) == 0.0);
    CHECK_THROWS_AS(rmse(pred, target, std::vector<double>{1, 1}), DimensionError);
}

TEST_CASE("config parsing and validation") {
    const auto cfg = RunConfig::parse("# comment\nseed = 9\n\npredictor.epochs = 4  # trailing\n");
    CHECK(cfg.u64("seed") == 9);
    CHECK(cfg.integer("predictor.epochs") == 4);
    CHECK(cfg.real("imputer.epsilon") == doctest::Approx(0.05));
    CHECK(cfg.list("predictor.models") == std::vector<std::string>{"convnet", "mlp", "logit"});
    CHECK_THROWS_AS(RunConfig::parse("no.such.key = 1\n"), ParseError);
    CHECK_THROWS_AS(RunConfig::parse("seed = 1\nseed = 2\n"), ParseError);
    CHECK_THROWS_AS(RunConfig::parse("seed\n"), ParseError);
    CHECK_THROWS_AS(RunConfig::parse("predictor.epochs = many\n"), ParseError);
    CHECK_THROWS_AS(RunConfig::parse("split.normalize_on = some\n"), ParseError);
    RunConfig c;
    c.set("predictor.models", "convnet,forest");
    CHECK_THROWS_AS(c.models(), ConfigError);
    CHECK_THROWS_AS(c.get("missing"), ConfigError);

    RunConfig a;
    RunConfig b;
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    b.set("seed", "2");
    CHECK(a.hash() != b.hash());
    CHECK(RunConfig::parse(a.canonical()).hash() == a.hash());
    CHECK(RunConfig::defaults_text().find("imputer.epsilon") != std::string::npos);
}

TEST_CASE("stage seeds are distinct per salt and follow the master seed") {
    RunConfig a;
    RunConfig b;
    b.set("seed", "2");
    CHECK(stage_seed(a, 1) != stage_seed(a, 2));
    CHECK(stage_seed(a, 1) == stage_seed(RunConfig(), 1));
    CHECK(stage_seed(a, 1) != stage_seed(b, 1));
}

TEST_CASE("report files round trip") {
    const auto dir = testing_support::fresh_dir("labconv_reports_test");
    MetricsReport r;
    r.imputation = {{"A", 0.5, 0.6, 0.45, 0.3}, {"B", 1.0, 0.9, 0.8, 0.85}};
    r.diseases = {"DX01", "DX02"};
    r.prediction = {{"convnet", predictor::InputMode::raw, {0.7, std::nullopt}},
                    {"convnet", predictor::InputMode::imputed, {0.75, 0.6}},
                    {"logit", predictor::InputMode::raw, {0.55, 0.52}}};
    r.config_hash = RunConfig().hash();
    r.seed = 1;
    emit_reports(r, RunConfig(), dir);

    const auto imp = read_imputation_table(dir / "imputation_rmse.csv");
    REQUIRE(imp.size() == 2);
    CHECK(imp[1].lab == "B");
    CHECK(imp[0].convkr_multivar == 0.3);
    CHECK(testing_support::file_bytes(dir / "prediction_auc.csv").rfind(
              "disease,convnet,mlp,logit\n", 0) == 0);

    std::vector<std::string> diseases;
    const auto raw = read_auc_table(dir / "prediction_auc_raw.csv", predictor::InputMode::raw,
                                    &diseases);
    CHECK(diseases == r.diseases);
    bool found = false;
    for (const auto& c : raw) {
        if (c.model == "convnet") {
            found = true;
            CHECK(c.auc[0] == 0.7);
            CHECK_FALSE(c.auc[1].has_value());
        }
    }
    CHECK(found);
    // The headline table keeps the best mode per disease.
    const auto best = read_auc_table(dir / "prediction_auc.csv", predictor::InputMode::raw,
                                     nullptr);
    for (const auto& c : best) {
        if (c.model == "convnet") {
            CHECK(c.auc[0] == 0.75);
            CHECK(c.auc[1] == 0.6);
        }
    }

    r.prediction[0].auc[0] = 1.5;
    CHECK_THROWS_AS(emit_reports(r, RunConfig(), dir), EvaluationError);
    fs::remove_all(dir);
}

TEST_CASE("tiny pipeline runs, resumes and reports stage failures") {
    const auto cfg = testing_support::tiny_pipeline_config();
    const auto dir = testing_support::fresh_dir("labconv_pipeline_test");
    const auto first = run_pipeline(cfg, dir);
    CHECK(first.size() == stage_names().size());
    for (const auto& o : first) {
        CHECK_FALSE(o.resumed);
    }
    for (const char* f : {"imputation_rmse.csv", "prediction_auc.csv", "summary.txt",
                          "manifest.txt"}) {
        CHECK(fs::exists(dir / "reports" / f));
    }
    const auto second = run_pipeline(cfg, dir);
    for (const auto& o : second) {
        CHECK(o.resumed);
    }

    PipelineOptions opt;
    opt.data_dir = dir / "does-not-exist";
    const auto bad = testing_support::fresh_dir("labconv_pipeline_bad");
    try {
        run_pipeline(cfg, bad, opt);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "cohort");
    }
    fs::remove_all(dir);
    fs::remove_all(bad);
}

}  // TEST_SUITE
