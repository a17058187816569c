// Command-line front end: each subcommand runs the pipeline up to its stage
// inside one run directory, reusing finished checkpoints.

#include "labconv/errors.hpp"
#include "labconv/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Common {
    std::string config;
    std::string out = "run";
    std::string data;
    std::string mode;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_mode) {
    cmd->add_option("--config", c.config, "config file (key = value lines)");
    cmd->add_option("--seed", c.seed, "override the master seed");
    cmd->add_option("--out", c.out, "run directory")->capture_default_str();
    cmd->add_option("--data", c.data,
                    "directory with observations.csv and diagnoses.csv to use instead of a "
                    "synthetic cohort");
    cmd->add_option("--set", c.overrides, "extra key=value overrides");
    cmd->add_flag("--quiet", c.quiet, "no progress output");
    if (with_mode) {
        cmd->add_option("--mode", c.mode, "input mode")
            ->check(CLI::IsMember({"raw", "imputed", "two_channel"}));
    }
}

labconv::harness::RunConfig make_config(const Common& c) {
    using labconv::harness::RunConfig;
    RunConfig cfg = c.config.empty() ? RunConfig() : RunConfig::load(c.config);
    if (c.seed) {
        cfg.set("seed", std::to_string(*c.seed));
    }
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw labconv::ConfigError("--set expects key=value, got '" + kv + "'");
        }
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

int run_until(const Common& c, const std::string& stage) {
    const auto cfg = make_config(c);
    labconv::harness::PipelineOptions opt;
    opt.stop_after = stage;
    opt.verbose = !c.quiet;
    if (!c.data.empty()) {
        opt.data_dir = c.data;
    }
    if (!c.mode.empty()) {
        opt.only_modes.push_back(labconv::predictor::parse_mode(c.mode));
    }
    const auto outcomes = labconv::harness::run_pipeline(cfg, c.out, opt);
    if (!c.quiet) {
        for (const auto& o : outcomes) {
            std::cerr << o.stage << ": " << (o.resumed ? "checkpoint reused" : "done") << '\n';
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learned kernel imputation and convolutional disease-onset prediction"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* stage;
        const char* help;
        bool mode;
    };
    const Sub subs[] = {
        {"synth", "cohort", "generate (or copy in) the cohort", false},
        {"train-imputer", "imputer", "split, normalize and train per-lab kernels", false},
        {"cv-baselines", "imputation_eval",
         "cross-validate parametric baselines and write imputation_rmse.csv", false},
        {"train-predictor", "predictor", "train convnet, MLP and logistic baselines", true},
        {"evaluate", "evaluate", "score the test split", true},
        {"report", "report", "assemble the report files", false},
        {"pipeline", "", "run every stage", false},
    };
    std::vector<Common> commons(std::size(subs));
    std::string stop_after;
    for (std::size_t i = 0; i < std::size(subs); ++i) {
        auto* cmd = app.add_subcommand(subs[i].name, subs[i].help);
        add_common(cmd, commons[i], subs[i].mode);
        if (std::string(subs[i].name) == "pipeline") {
            cmd->add_option("--stop-after", stop_after, "stop after this stage")
                ->check(CLI::IsMember(labconv::harness::stage_names()));
        }
    }

    Common impute;
    std::string impute_output;
    auto* impute_cmd =
        app.add_subcommand("impute", "impute full lab histories with the trained kernels");
    add_common(impute_cmd, impute, false);
    impute_cmd->add_option("--output", impute_output, "output CSV (default <out>/imputed.csv)");

    Common tune;
    std::string tune_model = "convnet";
    auto* tune_cmd = app.add_subcommand(
        "tune", "grid-search predictor learning rate and decay on the validation split");
    add_common(tune_cmd, tune, true);
    tune_cmd->add_option("--model", tune_model, "model to tune")
        ->check(CLI::IsMember({"convnet", "mlp", "logit"}))
        ->capture_default_str();

    bool print_defaults = false;
    auto* defaults_cmd = app.add_subcommand("defaults", "print every config key with its default");
    defaults_cmd->callback([&] { print_defaults = true; });

    CLI11_PARSE(app, argc, argv);

    try {
        if (print_defaults) {
            std::cout << labconv::harness::RunConfig::defaults_text();
            return 0;
        }
        if (impute_cmd->parsed()) {
            run_until(impute, "imputer");
            const auto cfg = make_config(impute);
            const std::filesystem::path out =
                impute_output.empty() ? std::filesystem::path(impute.out) / "imputed.csv"
                                      : std::filesystem::path(impute_output);
            std::optional<std::filesystem::path> data;
            labconv::harness::impute_histories(cfg, impute.out, data, out);
            return 0;
        }
        if (tune_cmd->parsed()) {
            const auto mode = labconv::predictor::parse_mode(tune.mode.empty() ? "imputed"
                                                                               : tune.mode);
            const auto cfg = make_config(tune);
            run_until(tune, mode == labconv::predictor::InputMode::raw ? "prepare" : "imputer");
            const auto rows = labconv::harness::tune_predictor(cfg, tune.out, tune_model, mode);
            const auto path = std::filesystem::path(tune.out) / "tuning" /
                              (tune_model + "_" + (tune.mode.empty() ? "imputed" : tune.mode) +
                               ".csv");
            labconv::harness::write_tuning_table(path, rows);
            std::cout << "learning_rate\tdecay\tvalidation_auc\tbest_epoch\n";
            for (const auto& r : rows) {
                std::cout << r.learning_rate << '\t' << r.decay << '\t' << r.validation_auc
                          << '\t' << r.best_epoch << '\n';
            }
            return 0;
        }
        for (std::size_t i = 0; i < std::size(subs); ++i) {
            if (app.got_subcommand(subs[i].name)) {
                const std::string stage =
                    std::string(subs[i].name) == "pipeline" ? stop_after : subs[i].stage;
                return run_until(commons[i], stage);
            }
        }
    } catch (const labconv::StageError& e) {
        std::cerr << "error in stage " << e.stage() << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
