#pragma once

// Batch/fold trainer: sequential fragments, per-batch FIM mixed with a
// precomputed validation FIM, momentum accumulation into a global FIM, and
// the FIM-preconditioned SGD update
//
//   theta <- theta - eta * (g + lambda * I_G g).
//
// With lambda = 0 the loop is plain SGD, bit for bit.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fire/fisher.hpp"
#include "fire/model.hpp"

namespace fire {

struct TrainConfig {
    double eta = 0.001;
    double lambda = 0.1;
    int epochs = 1;
    FisherConfig fisher;
    std::uint64_t seed = 0;
};

struct TraceRow {
    long step = 0;  // 1-based, monotone
    int epoch = 0;
    int batch = 0;
    double loss = 0.0;                  // batch loss at the pre-update theta
    double grad_norm_sq = 0.0;          // squared norm of the batch gradient
    double precond_grad_norm_sq = 0.0;  // squared norm of the applied update direction
    double penalized_loss = 0.0;        // loss + lambda * trace(I_G)
    double val_acc = 0.0;               // validation accuracy after the update
};

struct TrainTrace {
    std::vector<TraceRow> rows;
    // Header: step,epoch,batch,loss,grad_norm_sq,precond_grad_norm_sq,
    // penalized_loss,val_acc -- 17-significant-digit reals.
    void write_csv(std::ostream& out) const;
};

struct TrainResult {
    ParamVec theta;
    TrainTrace trace;
};

// Fragments are visited in index order, one pass per epoch; the global FIM
// keeps accumulating across epochs. The validation FIM is computed at the
// initial parameters (and refreshed every fisher.refresh_every_batches
// steps when that is nonzero).
TrainResult train_fire_batchwise(const ModelSpec& spec,
                                 const std::vector<Fragment>& fragments,
                                 const Fragment& val, const TrainConfig& cfg);

// The same loop with lambda forced to zero. A separate entry point so
// comparisons never depend on config edits.
TrainResult train_sgd_baseline(const ModelSpec& spec,
                               const std::vector<Fragment>& fragments,
                               const Fragment& val, const TrainConfig& cfg);

enum class StepSizeCheck { ok, too_large };

// ok iff eta <= 1 / (L * (1 + lambda*G)^2), the preconditioned-SGD
// stability threshold.
StepSizeCheck check_step_size(double l_smooth, double lambda, double g_bound,
                              double eta);

}  // namespace fire
