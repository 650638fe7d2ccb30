#pragma once

// Straight-loop serial implementations of the hot kernels, kept independent
// of the production code paths. Tests use them as oracles; the benchmark
// compares against them. Nothing here shares accumulation logic with
// fire_core.

#include <vector>

#include "fire/model.hpp"
#include "fire/numkernel.hpp"

namespace fire::reference {

// (1/n) sum over examples of s s' as a dense upper triangle, accumulated in
// plain left-to-right order from per-sample scores.
SymMatrix empirical_fim_full(const ModelSpec& spec, const ParamVec& theta,
                             const Fragment& frag);

std::vector<double> empirical_fim_diagonal(const ModelSpec& spec,
                                           const ParamVec& theta,
                                           const Fragment& frag);

// Mean loss and gradient by naive serial accumulation.
double mean_loss(const ModelSpec& spec, const ParamVec& theta, const Fragment& frag);
ParamVec mean_grad(const ModelSpec& spec, const ParamVec& theta, const Fragment& frag);

// Central finite differences of the mean loss (step h per coordinate).
ParamVec fd_gradient(const ModelSpec& spec, const ParamVec& theta,
                     const Fragment& frag, double h);

// Central finite differences of the single-example log-likelihood.
ParamVec fd_score(const ModelSpec& spec, const ParamVec& theta, const Example& ex,
                  double h);

}  // namespace fire::reference
