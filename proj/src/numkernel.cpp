#include "fire/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fire {

namespace {

WarnHandler g_warn_handler = [](const std::string& message) {
    std::cerr << "[fire] warning: " << message << "\n";
};

}  // namespace

void set_warn_handler(WarnHandler handler) { g_warn_handler = std::move(handler); }

void warn(const std::string& message) {
    if (g_warn_handler) g_warn_handler(message);
}

int worker_threads() {
    static const int cached = [] {
        int hw = 1;
#ifdef _OPENMP
        hw = omp_get_max_threads();
#endif
        if (const char* env = std::getenv("FIRE_THREADS")) {
            char* end = nullptr;
            long v = std::strtol(env, &end, 10);
            if (end != env && v >= 1 && v < hw) hw = static_cast<int>(v);
        }
        return hw < 1 ? 1 : hw;
    }();
    return cached;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace {

double tree_sum(const double* partials, std::size_t count) {
    if (count == 1) return partials[0];
    std::size_t half = count / 2;
    return tree_sum(partials, half) + tree_sum(partials + half, count - half);
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
    if (values.empty()) return 0.0;
    std::size_t blocks = (values.size() + kReduceBlock - 1) / kReduceBlock;
    std::vector<double> partials(blocks, 0.0);
    for (std::size_t b = 0; b < blocks; ++b) {
        std::size_t lo = b * kReduceBlock;
        std::size_t hi = std::min(lo + kReduceBlock, values.size());
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += values[i];
        partials[b] = s;
    }
    return tree_sum(partials.data(), partials.size());
}

double pairwise_dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("pairwise_dot: length mismatch");
    if (a.empty()) return 0.0;
    std::size_t blocks = (a.size() + kReduceBlock - 1) / kReduceBlock;
    std::vector<double> partials(blocks, 0.0);
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        std::size_t lo = blk * kReduceBlock;
        std::size_t hi = std::min(lo + kReduceBlock, a.size());
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
        partials[blk] = s;
    }
    return tree_sum(partials.data(), partials.size());
}

std::vector<double> pairwise_vector_sum(
    std::size_t n, std::size_t dim,
    const std::function<void(std::size_t, std::span<double>)>& accumulate_into) {
    std::vector<double> zero(dim, 0.0);
    if (n == 0) return zero;
    std::size_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
    std::vector<std::vector<double>> partials(blocks);
    // Blocks are independent; the combine order below is fixed, so the
    // result does not depend on how many threads run here.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(worker_threads())
#endif
    for (long long b = 0; b < static_cast<long long>(blocks); ++b) {
        partials[b].assign(dim, 0.0);
        std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
        std::size_t hi = std::min(lo + kReduceBlock, n);
        for (std::size_t i = lo; i < hi; ++i)
            accumulate_into(i, std::span<double>(partials[b]));
    }
    // Balanced tree over block partials, same shape as tree_sum.
    std::function<void(std::size_t, std::size_t, std::span<double>)> combine =
        [&](std::size_t lo, std::size_t count, std::span<double> out) {
            if (count == 1) {
                std::copy(partials[lo].begin(), partials[lo].end(), out.begin());
                return;
            }
            std::size_t half = count / 2;
            std::vector<double> right(dim, 0.0);
            combine(lo, half, out);
            combine(lo + half, count - half, std::span<double>(right));
            for (std::size_t j = 0; j < dim; ++j) out[j] += right[j];
        };
    std::vector<double> total(dim, 0.0);
    combine(0, blocks, std::span<double>(total));
    return total;
}

void check_finite(std::span<const double> values, const char* what) {
#ifndef NDEBUG
    for (double v : values)
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value in ") + what);
#else
    (void)values;
    (void)what;
#endif
}

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_key_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
}

Rng Rng::split(const std::string& tag, std::uint64_t index) const {
    std::uint64_t mix = seed_key_;
    mix = splitmix64(mix) ^ fnv1a(tag);
    mix = splitmix64(mix) ^ (0x9E3779B97F4A7C15ULL * (index + 1));
    std::uint64_t derived = splitmix64(mix);
    return Rng(derived);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double Rng::normal() {
    if (have_spare_normal_) {
        have_spare_normal_ = false;
        return spare_normal_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform01();
    } while (u1 <= 0.0);
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_normal_ = r * std::sin(theta);
    have_spare_normal_ = true;
    return r * std::cos(theta);
}

double Rng::gamma(double shape) {
    if (shape <= 0.0) throw NumericError("gamma: shape must be positive");
    // Marsaglia-Tsang; shapes below 1 boosted via the standard power trick.
    if (shape < 1.0) {
        double u = 0.0;
        do {
            u = uniform01();
        } while (u <= 0.0);
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = uniform01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
            return d * v;
    }
}

double Rng::beta(double a, double b) {
    if (a <= 0.0 || b <= 0.0) throw NumericError("beta: parameters must be positive");
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw NumericError("Rng::below(0)");
    // Rejection to stay unbiased.
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

// ---------------------------------------------------------------------------
// SymMatrix
// ---------------------------------------------------------------------------

SymMatrix::SymMatrix(int dim) : dim_(dim) {
    if (dim <= 0) throw DimensionError("SymMatrix: dim must be positive");
    tri_.assign(static_cast<std::size_t>(dim) * (dim + 1) / 2, 0.0);
}

void SymMatrix::matvec(std::span<const double> x, std::span<double> y) const {
    if (static_cast<int>(x.size()) != dim_ || static_cast<int>(y.size()) != dim_)
        throw DimensionError("SymMatrix::matvec: dimension mismatch");
    for (int i = 0; i < dim_; ++i) {
        double s = 0.0;
        for (int j = 0; j < dim_; ++j) s += at(i, j) * x[j];
        y[i] = s;
    }
}

double SymMatrix::trace() const {
    double t = 0.0;
    for (int i = 0; i < dim_; ++i) t += at(i, i);
    return t;
}

double SymMatrix::frobenius_norm() const {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j) s += at(i, j) * at(i, j);
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

ParamVec axpy(double alpha, const ParamVec& x, const ParamVec& y) {
    if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
    ParamVec out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = alpha * x[i] + y[i];
    check_finite(out, "axpy");
    return out;
}

EigResult sym_eig_small(const SymMatrix& g) {
    const int n = g.dim();
    if (n > 4096) throw DimensionError("sym_eig_small: dim exceeds 4096");

    // Dense working copy + accumulated rotations.
    std::vector<double> a(static_cast<std::size_t>(n) * n);
    std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i) * n + i] = 1.0;
        for (int j = 0; j < n; ++j) a[static_cast<std::size_t>(i) * n + j] = g.at(i, j);
    }
    auto A = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
    auto V = [&](int i, int j) -> double& { return v[static_cast<std::size_t>(i) * n + j]; };

    const double norm = g.frobenius_norm();
    const double off_tol = (norm > 0.0 ? norm : 1.0) * 1e-14;
    const int max_sweeps = 100;

    bool converged = (n == 1);
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        off = std::sqrt(2.0 * off);
        if (off <= off_tol) {
            converged = true;
            break;
        }
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = A(p, q);
                if (std::abs(apq) <= off_tol / (static_cast<double>(n) * n)) continue;
                double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = A(i, p), aiq = A(i, q);
                    A(i, p) = c * aip - s * aiq;
                    A(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = A(p, i), aqi = A(q, i);
                    A(p, i) = c * api - s * aqi;
                    A(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = V(i, p), viq = V(i, q);
                    V(i, p) = c * vip - s * viq;
                    V(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    if (!converged) {
        // Final check: the sweeps above may have landed under tolerance on
        // the last pass.
        double off = 0.0;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (std::sqrt(2.0 * off) > off_tol)
            throw NumericError("sym_eig_small: Jacobi iteration did not converge");
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return A(i, i) > A(j, j); });

    const double neg_tol = 1e-10 * (norm > 0.0 ? norm : 1.0);
    EigResult result;
    result.eigenvalues.resize(n);
    result.eigenvectors.assign(n, std::vector<double>(n, 0.0));
    for (int r = 0; r < n; ++r) {
        double lambda = A(order[r], order[r]);
        if (lambda < -neg_tol)
            throw ContractViolation("sym_eig_small: significantly negative eigenvalue on PSD input");
        if (lambda < 0.0) lambda = 0.0;
        result.eigenvalues[r] = lambda;
        for (int i = 0; i < n; ++i) result.eigenvectors[r][i] = V(i, order[r]);
    }
    return result;
}

double quad_form(const SymMatrix& m, const ParamVec& v) {
    if (m.dim() != static_cast<int>(v.size()))
        throw DimensionError("quad_form: dimension mismatch");
    const int d = m.dim();
    double diag = 0.0, off = 0.0;
    for (int i = 0; i < d; ++i) {
        diag += m.at(i, i) * v[i] * v[i];
        for (int j = i + 1; j < d; ++j) off += m.at(i, j) * v[i] * v[j];
    }
    return diag + 2.0 * off;
}

}  // namespace fire
