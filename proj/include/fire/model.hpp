#pragma once

// Small feed-forward softmax classifiers: forward pass, mean-loss gradient,
// and per-sample score vectors (gradient of the log-likelihood w.r.t. the
// flat parameter vector). hidden_sizes empty means plain linear softmax /
// logistic regression.

#include <string>
#include <vector>

#include "fire/numkernel.hpp"

namespace fire {

struct ModelSpec {
    int input_dim = 0;
    std::vector<int> hidden_sizes;  // empty => linear softmax model
    int num_classes = 2;

    // Layer widths including input and output: [in, h1, ..., C].
    std::vector<int> layer_widths() const;
    // Total parameter count d = sum over layers of (in+1)*out.
    int param_count() const;
};

struct Example {
    std::vector<double> x;
    int y = 0;
};

enum class Provenance { batch, fold, client, validation };

// A labeled dataset slice (batch, fold, or client shard).
struct Fragment {
    std::string id;
    std::vector<Example> examples;
    Provenance provenance = Provenance::batch;
    int provenance_index = 0;

    int n() const { return static_cast<int>(examples.size()); }
};

// Glorot-uniform weights, zero biases. Deterministic under the rng stream.
ParamVec init_params(const ModelSpec& spec, Rng& rng);

// Shared derivation of the initial parameter vector from an experiment seed,
// so different drivers (batch trainer, federated simulation) start from the
// same point for the same seed.
ParamVec initial_theta(const ModelSpec& spec, std::uint64_t seed);

struct LossGrad {
    double loss = 0.0;
    ParamVec grad;
};

// Mean cross-entropy over the fragment and its exact gradient.
LossGrad loss_and_grad(const ModelSpec& spec, const ParamVec& theta,
                       const Fragment& frag);

// Gradient of log p(y|x;theta) for one example (= minus the per-example
// loss gradient).
ParamVec per_sample_score(const ModelSpec& spec, const ParamVec& theta,
                          const Example& ex);

// Row-major n x d matrix of per-sample scores for a fragment. Rows are
// independent, so this is computed in parallel.
std::vector<double> score_matrix(const ModelSpec& spec, const ParamVec& theta,
                                 const Fragment& frag);

// Class probabilities for one input (softmax of the logits).
std::vector<double> predict_proba(const ModelSpec& spec, const ParamVec& theta,
                                  const std::vector<double>& x);

// Fraction of argmax-correct predictions; ties break to the lowest class.
double accuracy(const ModelSpec& spec, const ParamVec& theta, const Fragment& frag);

}  // namespace fire
