#include <string>

#include <CLI11.hpp>

#include "fire/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"FIRE: Fisher-information remediation of fragmentation-induced "
                 "covariate shift"};
    app.require_subcommand(1);

    std::string config_path;
    CLI::App* run_cmd = app.add_subcommand("run", "Run an experiment config");
    run_cmd->add_option("config", config_path, "Path to a key = value config file")
        ->required();

    int trials = 10000;
    std::uint64_t theory_seed = 0;
    std::string theory_out;
    CLI::App* verify_cmd = app.add_subcommand(
        "verify-theory", "Randomized checks of the KL-vs-Fisher bounds");
    verify_cmd->add_option("--trials", trials, "Number of randomized trials");
    verify_cmd->add_option("--seed", theory_seed, "Experiment seed");
    verify_cmd->add_option("--output-dir", theory_out,
                           "Write theory.csv and manifest.txt here");

    std::string train_csv, val_csv, label_column, diag_out;
    std::uint64_t diag_seed = 0;
    CLI::App* diag_cmd = app.add_subcommand(
        "diagnose", "Shift diagnostics for a training/validation CSV pair");
    diag_cmd->add_option("train", train_csv, "Training CSV")->required();
    diag_cmd->add_option("val", val_csv, "Validation CSV")->required();
    diag_cmd->add_option("--label", label_column, "Label column name")->required();
    diag_cmd->add_option("--seed", diag_seed, "Experiment seed");
    diag_cmd->add_option("--output-dir", diag_out, "Write diagnostics.csv here");

    CLI11_PARSE(app, argc, argv);

    if (run_cmd->parsed()) return fire::run_config_file(config_path);
    if (verify_cmd->parsed())
        return fire::run_verify_theory(trials, theory_seed, theory_out);
    if (diag_cmd->parsed())
        return fire::run_diagnose(train_csv, val_csv, label_column, diag_out, diag_seed);
    return 1;
}
