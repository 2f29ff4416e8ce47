#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "stochflow/csvio.hpp"
#include "stochflow/harness.hpp"

namespace {

int cmd_validate(const std::string& config_path) {
    const std::string text = stochflow::read_text_file(config_path);
    const auto config = stochflow::ExperimentConfig::from_json_text(text);
    std::printf("ok: %s (config hash %s)\n", config.experiment.c_str(),
                stochflow::to_hex(config.config_hash()).c_str());
    return 0;
}

int cmd_run(const std::string& config_path) {
    const std::string text = stochflow::read_text_file(config_path);
    const auto config = stochflow::ExperimentConfig::from_json_text(text);
    std::printf("running %s -> %s\n", config.experiment.c_str(), config.output_dir.c_str());
    const auto manifest = stochflow::run_experiment(config);
    const std::string report = stochflow::emit_report(manifest);
    std::fputs(report.c_str(), stdout);
    return manifest.all_pass() ? 0 : 1;
}

int cmd_catalog() {
    std::printf("experiments:\n");
    for (const auto& name : stochflow::catalog_experiments()) {
        std::printf("  %s\n", name.c_str());
    }
    std::printf("drifts:\n");
    for (const auto& name : stochflow::catalog_drifts()) {
        std::printf("  %s\n", name.c_str());
    }
    std::printf("initial conditions:\n");
    for (const auto& name : stochflow::catalog_initial_conditions()) {
        std::printf("  %s\n", name.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic transport experiment runner"};
    app.require_subcommand(1);

    std::string run_config;
    auto* run = app.add_subcommand("run", "Run an experiment config and emit its report");
    run->add_option("config", run_config, "Path to a JSON experiment config")->required();

    std::string validate_config;
    auto* validate = app.add_subcommand("validate", "Parse and validate a config without running");
    validate->add_option("config", validate_config, "Path to a JSON experiment config")
        ->required();

    auto* catalog = app.add_subcommand("catalog", "List experiments, drifts, initial conditions");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_config);
        if (validate->parsed()) return cmd_validate(validate_config);
        if (catalog->parsed()) return cmd_catalog();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
