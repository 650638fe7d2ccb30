#pragma once

// Experiment execution: builds datasets, dispatches on the configured mode,
// and writes the CSV outputs plus manifest.txt into output_dir. Everything
// is a pure function of (config, seed); reruns produce byte-identical trees.

#include <string>
#include <vector>

#include "fire/analytic.hpp"
#include "fire/config.hpp"

namespace fire {

// Exit codes: 0 ok, 1 config, 2 data, 3 numeric, 4 io.
int run(const ExperimentConfig& cfg);

// `fire run <path>`: parse the file then run.
int run_config_file(const std::string& path);

struct TheoryTrial {
    int trial = 0;
    Family family = Family::bernoulli;
    double gamma = 0.0;
    double delta = 0.0;
    KlBoundRecord record;
};

// Randomized Fisher-bound trials across the analytic families; deterministic
// per (seed, trial index).
std::vector<TheoryTrial> theory_suite(int trials, std::uint64_t seed);

void write_theory_csv(const std::vector<TheoryTrial>& trials, std::ostream& out);

// `fire verify-theory`: run the suite, optionally write theory.csv (plus
// manifest) into output_dir, print a one-line summary. Nonzero exit on any
// violated bound.
int run_verify_theory(int trials, std::uint64_t seed, const std::string& output_dir);

// `fire diagnose <train.csv> <val.csv> --label <col>`: shift diagnostics for
// one fragment/validation pair, printed and optionally written as CSV.
int run_diagnose(const std::string& train_csv, const std::string& val_csv,
                 const std::string& label_column, const std::string& output_dir,
                 std::uint64_t seed);

}  // namespace fire
