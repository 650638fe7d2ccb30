#pragma once

// Experiment configuration: line-oriented `key = value` files with dotted
// keys and `#` comments. Unknown keys are a hard error; missing keys take
// the documented defaults. The resolved configuration (every value that
// influenced the run) renders into manifest.txt.

#include <string>
#include <vector>

#include "fire/batchfire.hpp"
#include "fire/fedsim.hpp"
#include "fire/shiftlab.hpp"

namespace fire {

enum class RunMode { batch, folds, federated, diagnostics, verify_theory };

enum class DatasetKind { synthetic_blobs, two_moons, csv };

struct DataConfig {
    DatasetKind kind = DatasetKind::synthetic_blobs;
    int n = 400;
    int classes = 3;
    int dim = 2;
    double noise = 0.3;
    std::string path;          // csv only
    std::string label_column;  // csv only
};

struct SplitConfig {
    int fragments = 5;
    double val_fraction = 0.2;
};

struct ExperimentConfig {
    RunMode mode = RunMode::batch;
    std::uint64_t seed = 0;
    std::string output_dir = "fire_out";
    DataConfig data;
    SplitConfig split;
    ShiftSpec shift;
    std::vector<int> hidden_sizes;
    TrainConfig train;
    FedConfig fed;
    int theory_trials = 10000;
};

ExperimentConfig parse_config(const std::string& text);

// Every key with its resolved value, fixed order, plus the artifact version;
// identical configs render identical manifests.
std::string render_manifest(const ExperimentConfig& cfg);

extern const char* const kArtifactVersion;

}  // namespace fire
