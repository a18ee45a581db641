#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ciegad/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"CIEGAD: cluster-conditioned interpolative/extrapolative data augmentation"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<double> rho_override;
    std::optional<int> workers_override;
    bool mock_flag = false;
    bool dry_run = false;

    CLI::App* augment = app.add_subcommand("augment", "run the augmentation pipeline");
    augment->add_option("--config", config_path, "run configuration JSON")->required();
    augment->add_option("--seed", seed_override, "override params.seed");
    augment->add_option("--rho", rho_override, "override params.rho");
    augment->add_option("--workers", workers_override, "override worker_count");
    augment->add_flag("--mock", mock_flag, "force mock backends");
    augment->add_flag("--dry-run", dry_run, "write plan and prompts, no generation calls");

    std::string real_path, generated_path, metrics_out;
    std::optional<std::uint64_t> metrics_seed;
    CLI::App* metrics = app.add_subcommand("metrics", "compute OER/SNI/FED for two datasets");
    metrics->add_option("real", real_path, "real dataset JSONL (with vectors)")->required();
    metrics->add_option("generated", generated_path, "generated dataset JSONL (with vectors)")
        ->required();
    metrics->add_option("--output", metrics_out, "write the JSON report here");
    metrics->add_option("--seed", metrics_seed, "clustering seed for the OER boundary");

    std::string run_dir, export_out;
    CLI::App* exporter =
        app.add_subcommand("export-embeddings", "flatten a run's vectors to TSV");
    exporter->add_option("run_dir", run_dir, "directory with manifest.json")->required();
    exporter->add_option("--output", export_out, "output TSV path");

    std::string validate_path;
    CLI::App* validate = app.add_subcommand("validate-config", "check a config file");
    validate->add_option("config", validate_path, "run configuration JSON")->required();

    CLI11_PARSE(app, argc, argv);

    if (augment->parsed()) {
        ciegad::RunConfig cfg;
        try {
            cfg = ciegad::RunConfig::load(config_path);
        } catch (const ciegad::Error& e) {
            ciegad::detail::print_error_summary("config_error", e.what());
            return 1;
        }
        if (seed_override) cfg.params.seed = *seed_override;
        if (rho_override) cfg.params.rho = *rho_override;
        if (workers_override) cfg.worker_count = *workers_override;
        if (mock_flag) {
            cfg.mock_mode = true;
            cfg.generator.endpoint.clear();
            cfg.judge.endpoint.clear();
            cfg.embedder.endpoint.clear();
        }
        return ciegad::command_augment(cfg, dry_run);
    }
    if (metrics->parsed()) {
        ciegad::HyperParams params;
        if (metrics_seed) params.seed = *metrics_seed;
        return ciegad::command_metrics(real_path, generated_path, params, metrics_out);
    }
    if (exporter->parsed()) {
        return ciegad::command_export_embeddings(run_dir, export_out);
    }
    if (validate->parsed()) {
        return ciegad::command_validate_config(validate_path);
    }
    return 1;
}
