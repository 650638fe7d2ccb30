#pragma once

// Empirical Fisher information estimation and algebra. Estimates are mean
// outer products of per-sample scores over a fragment, kept in one of three
// shapes: full symmetric, diagonal, or a rank-k eigendecomposition. All
// combination steps (validation mixing, momentum accumulation, client
// aggregation) preserve positive semidefiniteness, and the low-rank shape
// never materializes a d x d matrix.

#include <cstdint>
#include <vector>

#include "fire/model.hpp"
#include "fire/numkernel.hpp"

namespace fire {

enum class FisherKind { full, diagonal, low_rank };

struct FisherConfig {
    FisherKind kind = FisherKind::full;
    int rank_k = 50;             // low_rank only
    double momentum_alpha = 0.9; // EMA weight on the accumulated estimate
    double mix_mu = 0.5;         // batch-vs-validation mixing weight
    // Recompute the validation FIM every this many batches (0 = never,
    // compute once at the initial parameters).
    int refresh_every_batches = 0;
};

class FisherEstimate {
public:
    FisherEstimate() = default;

    static FisherEstimate zero(FisherKind kind, int dim);

    FisherKind kind() const { return kind_; }
    int dim() const { return dim_; }
    long sample_count() const { return sample_count_; }
    void set_sample_count(long n) { sample_count_ = n; }

    const SymMatrix& full() const { return full_; }
    const std::vector<double>& diagonal() const { return diagonal_; }
    // Low-rank factor, k rows of length d, orthonormal.
    const std::vector<double>& factor() const { return factor_; }
    const std::vector<double>& eigenvalues() const { return eigenvalues_; }
    int rank() const { return static_cast<int>(eigenvalues_.size()); }

    double quad_form(const ParamVec& v) const;   // v' M v
    ParamVec matvec(const ParamVec& v) const;    // M v
    double trace() const;
    // Exact dense realization (small dims only; used by tests/diagnostics).
    SymMatrix to_full() const;

    bool value_equal(const FisherEstimate& other) const;

    // Federated payload: little-endian 64-bit values.
    //   full:     d(d+1)/2 upper-triangle entries, row-major
    //   diagonal: d entries
    //   low_rank: k, then k eigenvalues, then k*d factor rows
    std::vector<std::uint8_t> serialize() const;
    static FisherEstimate deserialize(FisherKind kind, int dim,
                                      const std::vector<std::uint8_t>& bytes);
    std::uint64_t payload_bytes() const;
    static std::uint64_t payload_value_count(FisherKind kind, int dim, int rank_k);

private:
    friend FisherEstimate weighted_sum(const FisherEstimate&, double,
                                       const FisherEstimate&, double, int);
    friend FisherEstimate empirical_fim(const ModelSpec&, const ParamVec&,
                                        const Fragment&, const FisherConfig&);
    friend FisherEstimate aggregate_fims(
        const std::vector<std::pair<FisherEstimate, long>>& locals);

    FisherKind kind_ = FisherKind::full;
    int dim_ = 0;
    long sample_count_ = 0;
    SymMatrix full_;
    std::vector<double> diagonal_;
    std::vector<double> factor_;       // row-major k x d
    std::vector<double> eigenvalues_;  // descending, >= 0
};

// Empirical FIM of a fragment at theta: (1/n) sum of score outer products.
// The low-rank variant is the exact rank-k eigentruncation, computed through
// the n x n Gram matrix of scores.
FisherEstimate empirical_fim(const ModelSpec& spec, const ParamVec& theta,
                             const Fragment& frag, const FisherConfig& cfg);

// mu * i_batch + (1-mu) * i_val. Low-rank results are formed exactly in the
// joint span of both factors and re-truncated.
FisherEstimate mix_fim(const FisherEstimate& i_batch, const FisherEstimate& i_val,
                       double mu);

// alpha * i_global + (1-alpha) * i_new.
FisherEstimate ema_update(const FisherEstimate& i_global, const FisherEstimate& i_new,
                          double alpha);

// Weighted average with weights n_k / sum(n_k).
FisherEstimate aggregate_fims(
    const std::vector<std::pair<FisherEstimate, long>>& locals);

// grad + lambda * (I_G grad).
ParamVec apply_preconditioner(const FisherEstimate& i_g, const ParamVec& grad,
                              double lambda);

// Trace of the estimate; the scalar logged as the penalty term value.
double trace_penalty(const FisherEstimate& i);

}  // namespace fire
