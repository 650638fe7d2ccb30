#include "fire/fisher.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace fire {

namespace {

void require_same_shape(const FisherEstimate& a, const FisherEstimate& b,
                        const char* who) {
    if (a.kind() != b.kind())
        throw DimensionError(std::string(who) + ": variant mismatch");
    if (a.dim() != b.dim())
        throw DimensionError(std::string(who) + ": dimension mismatch");
}

void store_le(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
}

double load_le(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

// Orthonormal basis for the row span of `rows` (m rows of length d), via
// two-pass modified Gram-Schmidt. Near-dependent rows are dropped.
std::vector<double> row_span_basis(const std::vector<double>& rows, int m, int d,
                                   int* out_rank) {
    std::vector<double> q;
    q.reserve(static_cast<std::size_t>(m) * d);
    int rank = 0;
    std::vector<double> v(d);
    for (int r = 0; r < m; ++r) {
        std::copy(rows.begin() + static_cast<std::size_t>(r) * d,
                  rows.begin() + static_cast<std::size_t>(r + 1) * d, v.begin());
        for (int pass = 0; pass < 2; ++pass) {
            for (int s = 0; s < rank; ++s) {
                const double* qs = q.data() + static_cast<std::size_t>(s) * d;
                double proj = 0.0;
                for (int j = 0; j < d; ++j) proj += qs[j] * v[j];
                for (int j = 0; j < d; ++j) v[j] -= proj * qs[j];
            }
        }
        double nrm = std::sqrt(norm_sq(v));
        if (nrm <= 1e-12) continue;  // inside the current span
        for (int j = 0; j < d; ++j) q.push_back(v[j] / nrm);
        ++rank;
    }
    *out_rank = rank;
    return q;
}

}  // namespace

FisherEstimate FisherEstimate::zero(FisherKind kind, int dim) {
    FisherEstimate e;
    e.kind_ = kind;
    e.dim_ = dim;
    e.sample_count_ = 0;
    switch (kind) {
        case FisherKind::full:
            e.full_ = SymMatrix(dim);
            break;
        case FisherKind::diagonal:
            e.diagonal_.assign(dim, 0.0);
            break;
        case FisherKind::low_rank:
            break;  // empty factor: the zero operator
    }
    return e;
}

double FisherEstimate::quad_form(const ParamVec& v) const {
    if (static_cast<int>(v.size()) != dim_)
        throw DimensionError("FisherEstimate::quad_form: dimension mismatch");
    switch (kind_) {
        case FisherKind::full:
            return fire::quad_form(full_, v);
        case FisherKind::diagonal: {
            double s = 0.0;
            for (int i = 0; i < dim_; ++i) s += diagonal_[i] * v[i] * v[i];
            return s;
        }
        case FisherKind::low_rank: {
            double s = 0.0;
            for (int r = 0; r < rank(); ++r) {
                const double* row = factor_.data() + static_cast<std::size_t>(r) * dim_;
                double proj = 0.0;
                for (int j = 0; j < dim_; ++j) proj += row[j] * v[j];
                s += eigenvalues_[r] * proj * proj;
            }
            return s;
        }
    }
    return 0.0;
}

ParamVec FisherEstimate::matvec(const ParamVec& v) const {
    if (static_cast<int>(v.size()) != dim_)
        throw DimensionError("FisherEstimate::matvec: dimension mismatch");
    ParamVec out(dim_, 0.0);
    switch (kind_) {
        case FisherKind::full:
            full_.matvec(v, out);
            break;
        case FisherKind::diagonal:
            for (int i = 0; i < dim_; ++i) out[i] = diagonal_[i] * v[i];
            break;
        case FisherKind::low_rank:
            for (int r = 0; r < rank(); ++r) {
                const double* row = factor_.data() + static_cast<std::size_t>(r) * dim_;
                double proj = 0.0;
                for (int j = 0; j < dim_; ++j) proj += row[j] * v[j];
                double scale = eigenvalues_[r] * proj;
                for (int j = 0; j < dim_; ++j) out[j] += scale * row[j];
            }
            break;
    }
    return out;
}

double FisherEstimate::trace() const {
    switch (kind_) {
        case FisherKind::full:
            return full_.trace();
        case FisherKind::diagonal:
            return pairwise_sum(diagonal_);
        case FisherKind::low_rank:
            return pairwise_sum(eigenvalues_);
    }
    return 0.0;
}

SymMatrix FisherEstimate::to_full() const {
    SymMatrix m(dim_);
    switch (kind_) {
        case FisherKind::full:
            m = full_;
            break;
        case FisherKind::diagonal:
            for (int i = 0; i < dim_; ++i) m.set(i, i, diagonal_[i]);
            break;
        case FisherKind::low_rank:
            for (int i = 0; i < dim_; ++i)
                for (int j = i; j < dim_; ++j) {
                    double s = 0.0;
                    for (int r = 0; r < rank(); ++r) {
                        const double* row =
                            factor_.data() + static_cast<std::size_t>(r) * dim_;
                        s += eigenvalues_[r] * row[i] * row[j];
                    }
                    m.set(i, j, s);
                }
            break;
    }
    return m;
}

bool FisherEstimate::value_equal(const FisherEstimate& other) const {
    if (kind_ != other.kind_ || dim_ != other.dim_) return false;
    switch (kind_) {
        case FisherKind::full:
            return std::equal(full_.packed().begin(), full_.packed().end(),
                              other.full_.packed().begin(), other.full_.packed().end());
        case FisherKind::diagonal:
            return diagonal_ == other.diagonal_;
        case FisherKind::low_rank:
            return eigenvalues_ == other.eigenvalues_ && factor_ == other.factor_;
    }
    return false;
}

std::vector<std::uint8_t> FisherEstimate::serialize() const {
    std::vector<std::uint8_t> out;
    switch (kind_) {
        case FisherKind::full:
            out.reserve(full_.packed().size() * 8);
            for (double v : full_.packed()) store_le(out, v);
            break;
        case FisherKind::diagonal:
            out.reserve(diagonal_.size() * 8);
            for (double v : diagonal_) store_le(out, v);
            break;
        case FisherKind::low_rank:
            out.reserve((1 + eigenvalues_.size() + factor_.size()) * 8);
            store_le(out, static_cast<double>(rank()));
            for (double v : eigenvalues_) store_le(out, v);
            for (double v : factor_) store_le(out, v);
            break;
    }
    return out;
}

FisherEstimate FisherEstimate::deserialize(FisherKind kind, int dim,
                                           const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % 8 != 0)
        throw DataError("FisherEstimate::deserialize: truncated payload");
    FisherEstimate e = zero(kind, dim);
    const std::uint8_t* p = bytes.data();
    std::size_t values = bytes.size() / 8;
    switch (kind) {
        case FisherKind::full: {
            std::size_t expect = static_cast<std::size_t>(dim) * (dim + 1) / 2;
            if (values != expect)
                throw DataError("FisherEstimate::deserialize: wrong payload size");
            for (std::size_t i = 0; i < expect; ++i)
                e.full_.packed()[i] = load_le(p + 8 * i);
            break;
        }
        case FisherKind::diagonal:
            if (values != static_cast<std::size_t>(dim))
                throw DataError("FisherEstimate::deserialize: wrong payload size");
            for (int i = 0; i < dim; ++i) e.diagonal_[i] = load_le(p + 8 * i);
            break;
        case FisherKind::low_rank: {
            if (values < 1)
                throw DataError("FisherEstimate::deserialize: missing rank");
            double kd = load_le(p);
            int k = static_cast<int>(kd);
            if (kd != static_cast<double>(k) || k < 0)
                throw DataError("FisherEstimate::deserialize: bad rank value");
            if (values != 1 + static_cast<std::size_t>(k) * (dim + 1))
                throw DataError("FisherEstimate::deserialize: wrong payload size");
            e.eigenvalues_.resize(k);
            e.factor_.resize(static_cast<std::size_t>(k) * dim);
            for (int i = 0; i < k; ++i) e.eigenvalues_[i] = load_le(p + 8 * (1 + i));
            for (std::size_t i = 0; i < e.factor_.size(); ++i)
                e.factor_[i] = load_le(p + 8 * (1 + k + i));
            break;
        }
    }
    return e;
}

std::uint64_t FisherEstimate::payload_bytes() const {
    switch (kind_) {
        case FisherKind::full:
            return 8ull * (static_cast<std::uint64_t>(dim_) * (dim_ + 1) / 2);
        case FisherKind::diagonal:
            return 8ull * static_cast<std::uint64_t>(dim_);
        case FisherKind::low_rank:
            return 8ull * (1 + static_cast<std::uint64_t>(rank()) * (dim_ + 1));
    }
    return 0;
}

std::uint64_t FisherEstimate::payload_value_count(FisherKind kind, int dim, int rank_k) {
    switch (kind) {
        case FisherKind::full:
            return static_cast<std::uint64_t>(dim) * (dim + 1) / 2;
        case FisherKind::diagonal:
            return static_cast<std::uint64_t>(dim);
        case FisherKind::low_rank:
            return static_cast<std::uint64_t>(rank_k) * dim + rank_k + 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

FisherEstimate empirical_fim(const ModelSpec& spec, const ParamVec& theta,
                             const Fragment& frag, const FisherConfig& cfg) {
    if (frag.examples.empty()) throw DataError("empirical_fim: empty fragment");
    const int n = frag.n();
    const int d = spec.param_count();
    std::vector<double> scores = score_matrix(spec, theta, frag);

    FisherEstimate est = FisherEstimate::zero(cfg.kind, d);
    est.sample_count_ = n;
    const double inv_n = 1.0 / static_cast<double>(n);

    if (cfg.kind == FisherKind::full || cfg.kind == FisherKind::diagonal) {
        // Column-major copy so each parameter's samples are contiguous.
        std::vector<double> cols(static_cast<std::size_t>(d) * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                cols[static_cast<std::size_t>(j) * n + i] =
                    scores[static_cast<std::size_t>(i) * d + j];
        auto col = [&](int j) {
            return std::span<const double>(cols.data() + static_cast<std::size_t>(j) * n,
                                           static_cast<std::size_t>(n));
        };
        if (cfg.kind == FisherKind::diagonal) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(worker_threads())
#endif
            for (int j = 0; j < d; ++j)
                est.diagonal_[j] = pairwise_dot(col(j), col(j)) * inv_n;
        } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) num_threads(worker_threads())
#endif
            for (int a = 0; a < d; ++a)
                for (int b = a; b < d; ++b)
                    est.full_.set(a, b, pairwise_dot(col(a), col(b)) * inv_n);
        }
        return est;
    }

    // Low-rank: eigendecompose the n x n Gram matrix of scores instead of
    // ever forming the d x d outer-product matrix.
    if (n > 4096)
        throw DataError("empirical_fim: low-rank estimation caps at 4096 examples per fragment");
    int k = cfg.rank_k;
    if (k < 1) throw ConfigError("empirical_fim: rank_k must be >= 1");
    if (k > std::min(n, d)) {
        warn("empirical_fim: rank " + std::to_string(k) + " clamped to " +
             std::to_string(std::min(n, d)) + " (fragment rank limit)");
        k = std::min(n, d);
    }
    SymMatrix gram(n);
    auto row = [&](int i) {
        return std::span<const double>(scores.data() + static_cast<std::size_t>(i) * d,
                                       static_cast<std::size_t>(d));
    };
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4) num_threads(worker_threads())
#endif
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) gram.set(i, j, pairwise_dot(row(i), row(j)) * inv_n);

    EigResult eig = sym_eig_small(gram);
    // Directions below the numerical rank of the Gram matrix carry no mass
    // and their back-projected vectors are unreliable.
    const double rank_cutoff = 1e-12 * (eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues[0]);
    for (int r = 0; r < k; ++r) {
        double lambda = eig.eigenvalues[r];
        if (lambda <= rank_cutoff) break;
        // FIM eigenvector from the Gram eigenvector u: S' u / sqrt(n*lambda).
        double scale = 1.0 / std::sqrt(static_cast<double>(n) * lambda);
        std::vector<double> vrow(d, 0.0);
        for (int i = 0; i < n; ++i) {
            double u = eig.eigenvectors[r][i];
            const double* srow = scores.data() + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j) vrow[j] += u * srow[j];
        }
        for (int j = 0; j < d; ++j) est.factor_.push_back(vrow[j] * scale);
        est.eigenvalues_.push_back(lambda);
    }
    return est;
}

// ---------------------------------------------------------------------------
// Combination
// ---------------------------------------------------------------------------

// w1 * A + w2 * B with w1, w2 >= 0; low-rank results are re-truncated to
// max(rank(A), rank(B)) within the exact joint span.
FisherEstimate weighted_sum(const FisherEstimate& a, double w1,
                            const FisherEstimate& b, double w2, int target_rank) {
    require_same_shape(a, b, "fisher weighted sum");
    const int d = a.dim();
    FisherEstimate out = FisherEstimate::zero(a.kind(), d);
    out.sample_count_ = std::max(a.sample_count(), b.sample_count());
    switch (a.kind()) {
        case FisherKind::full:
            for (std::size_t i = 0; i < out.full_.packed().size(); ++i)
                out.full_.packed()[i] =
                    w1 * a.full().packed()[i] + w2 * b.full().packed()[i];
            return out;
        case FisherKind::diagonal:
            for (int i = 0; i < d; ++i)
                out.diagonal_[i] = w1 * a.diagonal()[i] + w2 * b.diagonal()[i];
            return out;
        case FisherKind::low_rank:
            break;
    }

    const int ka = a.rank(), kb = b.rank();
    if (ka == 0 && kb == 0) return out;
    if (target_rank <= 0) target_rank = std::max(ka, kb);

    // Joint span basis Q (m x d), then the exact small matrix
    // Q (w1 A + w2 B) Q' expressed through the projected factors.
    std::vector<double> stacked;
    stacked.reserve(static_cast<std::size_t>(ka + kb) * d);
    stacked.insert(stacked.end(), a.factor().begin(), a.factor().end());
    stacked.insert(stacked.end(), b.factor().begin(), b.factor().end());
    int m = 0;
    std::vector<double> q = row_span_basis(stacked, ka + kb, d, &m);
    if (m == 0) return out;

    auto project = [&](const FisherEstimate& e) {
        // P[s][r] = <q_s, factor row r of e>
        std::vector<double> p(static_cast<std::size_t>(m) * e.rank());
        for (int s = 0; s < m; ++s)
            for (int r = 0; r < e.rank(); ++r) {
                const double* qs = q.data() + static_cast<std::size_t>(s) * d;
                const double* fr = e.factor().data() + static_cast<std::size_t>(r) * d;
                double acc = 0.0;
                for (int j = 0; j < d; ++j) acc += qs[j] * fr[j];
                p[static_cast<std::size_t>(s) * e.rank() + r] = acc;
            }
        return p;
    };
    std::vector<double> pa = project(a), pb = project(b);
    SymMatrix small(m);
    for (int s = 0; s < m; ++s)
        for (int t = s; t < m; ++t) {
            double acc = 0.0;
            for (int r = 0; r < ka; ++r)
                acc += w1 * a.eigenvalues()[r] *
                       pa[static_cast<std::size_t>(s) * ka + r] *
                       pa[static_cast<std::size_t>(t) * ka + r];
            for (int r = 0; r < kb; ++r)
                acc += w2 * b.eigenvalues()[r] *
                       pb[static_cast<std::size_t>(s) * kb + r] *
                       pb[static_cast<std::size_t>(t) * kb + r];
            small.set(s, t, acc);
        }
    EigResult eig = sym_eig_small(small);
    int keep = std::min(target_rank, m);
    const double rank_cutoff = 1e-14 * (eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues[0]);
    for (int r = 0; r < keep; ++r) {
        double lambda = eig.eigenvalues[r];
        if (lambda <= rank_cutoff) break;
        std::vector<double> vrow(d, 0.0);
        for (int s = 0; s < m; ++s) {
            double y = eig.eigenvectors[r][s];
            const double* qs = q.data() + static_cast<std::size_t>(s) * d;
            for (int j = 0; j < d; ++j) vrow[j] += y * qs[j];
        }
        out.factor_.insert(out.factor_.end(), vrow.begin(), vrow.end());
        out.eigenvalues_.push_back(lambda);
    }
    return out;
}

FisherEstimate mix_fim(const FisherEstimate& i_batch, const FisherEstimate& i_val,
                       double mu) {
    if (mu < 0.0 || mu > 1.0) throw ConfigError("mix_fim: mu must lie in [0,1]");
    require_same_shape(i_batch, i_val, "mix_fim");
    if (mu == 1.0) return i_batch;
    if (mu == 0.0) return i_val;
    return weighted_sum(i_batch, mu, i_val, 1.0 - mu, 0);
}

FisherEstimate ema_update(const FisherEstimate& i_global, const FisherEstimate& i_new,
                          double alpha) {
    if (alpha < 0.0 || alpha >= 1.0)
        throw ConfigError("ema_update: alpha must lie in [0,1)");
    require_same_shape(i_global, i_new, "ema_update");
    if (alpha == 0.0) return i_new;
    if (i_global.value_equal(i_new)) return i_new;  // exact fixed point
    return weighted_sum(i_global, alpha, i_new, 1.0 - alpha, 0);
}

FisherEstimate aggregate_fims(
    const std::vector<std::pair<FisherEstimate, long>>& locals) {
    if (locals.empty()) throw DataError("aggregate_fims: no estimates");
    long total = 0;
    for (const auto& [est, n_k] : locals) {
        if (n_k <= 0) throw DataError("aggregate_fims: nonpositive weight");
        total += n_k;
    }
    if (locals.size() == 1) return locals.front().first;

    // Accumulate sum(n_k * I_k) and divide by N once, so the weights sum to
    // one exactly.
    const FisherEstimate& first = locals.front().first;
    FisherEstimate acc = FisherEstimate::zero(first.kind(), first.dim());
    int target_rank = 0;
    for (const auto& [est, n_k] : locals) {
        require_same_shape(first, est, "aggregate_fims");
        target_rank = std::max(target_rank, est.rank());
    }
    for (const auto& [est, n_k] : locals)
        acc = weighted_sum(acc, 1.0, est, static_cast<double>(n_k), target_rank);

    const double inv_total = 1.0 / static_cast<double>(total);
    switch (acc.kind()) {
        case FisherKind::full:
            for (double& v : acc.full_.packed()) v *= inv_total;
            break;
        case FisherKind::diagonal:
            for (double& v : acc.diagonal_) v *= inv_total;
            break;
        case FisherKind::low_rank:
            for (double& v : acc.eigenvalues_) v *= inv_total;
            break;
    }
    acc.sample_count_ = total;
    return acc;
}

ParamVec apply_preconditioner(const FisherEstimate& i_g, const ParamVec& grad,
                              double lambda) {
    if (lambda < 0.0) throw ConfigError("apply_preconditioner: lambda must be >= 0");
    if (lambda == 0.0) return grad;
    if (static_cast<int>(grad.size()) != i_g.dim())
        throw DimensionError("apply_preconditioner: dimension mismatch");
    ParamVec mg = i_g.matvec(grad);
    ParamVec out(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) out[i] = grad[i] + lambda * mg[i];
    return out;
}

double trace_penalty(const FisherEstimate& i) { return i.trace(); }

}  // namespace fire
