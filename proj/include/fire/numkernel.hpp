#pragma once

// Deterministic numeric primitives shared by every other component: flat
// parameter vectors, symmetric matrices in packed upper-triangle storage,
// a small-matrix eigensolver, and a seeded splittable random source.
//
// Everything here is 64-bit float only, and every reduction that may run
// in parallel uses a fixed-order blocked pairwise scheme so results do not
// depend on the thread count.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fire {

// Flat, ordered vector of all model parameters (dimension d).
using ParamVec = std::vector<double>;

// ---------------------------------------------------------------------------
// Error categories. The CLI maps these onto exit codes.
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : NumericError {
    using NumericError::NumericError;
};
// A PSD input turned out not to be PSD, or a similar broken precondition.
struct ContractViolation : NumericError {
    using NumericError::NumericError;
};

// Non-fatal warnings (e.g. a low-rank request clamped to the data rank).
// Default handler writes to stderr; tests may swap it out.
using WarnHandler = std::function<void(const std::string&)>;
void set_warn_handler(WarnHandler handler);
void warn(const std::string& message);

// Worker-thread cap for the OpenMP kernels. Reads FIRE_THREADS once; results
// are identical for any thread count, only wall time changes.
int worker_threads();

// ---------------------------------------------------------------------------
// Fixed-order reductions.
//
// Values are summed serially inside fixed-size blocks and the block partials
// are combined as a balanced binary tree. The grouping depends only on the
// element count, never on the thread count, so parallel callers get
// bit-identical sums.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kReduceBlock = 32;

double pairwise_sum(std::span<const double> values);
double pairwise_dot(std::span<const double> a, std::span<const double> b);

inline double norm_sq(std::span<const double> v) { return pairwise_dot(v, v); }

// Sums f(0), ..., f(n-1) where f yields a vector of length dim; the partials
// are combined in the same fixed block/tree order as pairwise_sum.
std::vector<double> pairwise_vector_sum(
    std::size_t n, std::size_t dim,
    const std::function<void(std::size_t, std::span<double>)>& accumulate_into);

// Debug-build helper: throws NumericError if any entry is NaN/Inf.
void check_finite(std::span<const double> values, const char* what);

// ---------------------------------------------------------------------------
// Rng: xoshiro256** seeded through SplitMix64.
//
// The algorithm is fixed and uses only uint64 arithmetic, so a seed produces
// the same stream on every platform. Streams are split by hashing
// (seed, tag, index); client/batch order therefore never changes the draws
// any entity sees. Single-owner: never share one instance across threads,
// split instead.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Independent substream keyed by (this stream's seed, tag, index).
    Rng split(const std::string& tag, std::uint64_t index = 0) const;

    std::uint64_t next_u64();
    double uniform01();                      // [0,1), 53-bit resolution
    double uniform(double lo, double hi);
    double normal();                         // standard normal (Box-Muller)
    double gamma(double shape);              // shape > 0, unit scale
    double beta(double a, double b);
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_[4];
    std::uint64_t seed_key_;
    bool have_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

// ---------------------------------------------------------------------------
// SymMatrix: dim x dim symmetric, upper triangle stored row-major
// (d(d+1)/2 entries). Symmetric by construction.
// ---------------------------------------------------------------------------

class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(int dim);

    int dim() const { return dim_; }
    std::span<const double> packed() const { return tri_; }
    std::span<double> packed() { return tri_; }

    double at(int i, int j) const { return tri_[index(i, j)]; }
    void set(int i, int j, double value) { tri_[index(i, j)] = value; }
    void add(int i, int j, double value) { tri_[index(i, j)] += value; }

    // y = M x (full symmetric mat-vec).
    void matvec(std::span<const double> x, std::span<double> y) const;

    double trace() const;
    double frobenius_norm() const;

    std::size_t index(int i, int j) const {
        if (i > j) std::swap(i, j);
        return static_cast<std::size_t>(i) * dim_ -
               static_cast<std::size_t>(i) * (i - 1) / 2 +
               static_cast<std::size_t>(j - i);
    }

private:
    int dim_ = 0;
    std::vector<double> tri_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// alpha * x + y
ParamVec axpy(double alpha, const ParamVec& x, const ParamVec& y);

struct EigResult {
    std::vector<double> eigenvalues;             // descending
    std::vector<std::vector<double>> eigenvectors;  // eigenvectors[i] pairs with eigenvalues[i]
};

// Eigendecomposition of a small PSD matrix (Gram matrices, joint-span
// blocks) by cyclic Jacobi rotations. dim <= 4096. Eigenvalues in
// [-1e-10*||A||_F, 0) are clamped to zero; anything more negative is a
// contract violation, the inputs here are PSD by construction.
EigResult sym_eig_small(const SymMatrix& g);

// v' M v for a packed symmetric matrix.
double quad_form(const SymMatrix& m, const ParamVec& v);

}  // namespace fire
