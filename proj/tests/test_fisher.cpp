#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>

#include "fire/fisher.hpp"
#include "fire/reference.hpp"

using namespace fire;

namespace {

Fragment random_fragment(const ModelSpec& spec, int n, Rng& rng) {
    Fragment frag;
    for (int i = 0; i < n; ++i) {
        Example ex;
        ex.x.resize(spec.input_dim);
        for (double& v : ex.x) v = rng.uniform(-1.5, 1.5);
        ex.y = static_cast<int>(rng.below(spec.num_classes));
        frag.examples.push_back(std::move(ex));
    }
    return frag;
}

ParamVec random_theta(const ModelSpec& spec, Rng& rng) {
    ParamVec theta(spec.param_count());
    for (double& v : theta) v = rng.uniform(-0.7, 0.7);
    return theta;
}

FisherEstimate diag_estimate(std::vector<double> entries) {
    FisherEstimate e = FisherEstimate::zero(FisherKind::diagonal,
                                            static_cast<int>(entries.size()));
    // zero() gives an all-zero diagonal; rebuild through serialization to set it.
    std::vector<std::uint8_t> bytes;
    bytes.reserve(entries.size() * 8);
    for (double v : entries) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i)
            bytes.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
    }
    return FisherEstimate::deserialize(FisherKind::diagonal,
                                       static_cast<int>(entries.size()), bytes);
}

double frob_diff(const SymMatrix& a, const SymMatrix& b) {
    double s = 0.0;
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j)
            s += (a.at(i, j) - b.at(i, j)) * (a.at(i, j) - b.at(i, j));
    return std::sqrt(s);
}

double frob(const SymMatrix& a) {
    double s = 0.0;
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j) s += a.at(i, j) * a.at(i, j);
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("single example: full is the score outer product") {
    Rng rng(2);
    ModelSpec spec{2, {}, 2};
    ParamVec theta = random_theta(spec, rng);
    Fragment frag = random_fragment(spec, 1, rng);
    ParamVec s = per_sample_score(spec, theta, frag.examples[0]);

    FisherConfig cfg;
    FisherEstimate full = empirical_fim(spec, theta, frag, cfg);
    for (int a = 0; a < full.dim(); ++a)
        for (int b = a; b < full.dim(); ++b)
            CHECK(full.full().at(a, b) == doctest::Approx(s[a] * s[b]).epsilon(1e-14));

    cfg.kind = FisherKind::diagonal;
    FisherEstimate diag = empirical_fim(spec, theta, frag, cfg);
    for (int a = 0; a < diag.dim(); ++a)
        CHECK(diag.diagonal()[a] == doctest::Approx(s[a] * s[a]).epsilon(1e-14));
    CHECK(full.sample_count() == 1);
}

TEST_CASE("full matches the straight-loop oracle, diagonal matches the diagonal") {
    Rng rng(31);
    ModelSpec spec{3, {}, 3};
    ParamVec theta = random_theta(spec, rng);
    Fragment frag = random_fragment(spec, 20, rng);

    FisherConfig cfg;
    FisherEstimate full = empirical_fim(spec, theta, frag, cfg);
    SymMatrix oracle = reference::empirical_fim_full(spec, theta, frag);
    CHECK(frob_diff(full.full(), oracle) <= 1e-12 * frob(oracle));

    cfg.kind = FisherKind::diagonal;
    FisherEstimate diag = empirical_fim(spec, theta, frag, cfg);
    for (int a = 0; a < diag.dim(); ++a)
        CHECK(diag.diagonal()[a] == full.full().at(a, a));  // same reduction
}

TEST_CASE("low-rank with k = d reconstructs the full estimate") {
    Rng rng(32);
    ModelSpec spec{3, {}, 2};
    ParamVec theta = random_theta(spec, rng);
    Fragment frag = random_fragment(spec, 30, rng);

    FisherConfig cfg;
    FisherEstimate full = empirical_fim(spec, theta, frag, cfg);
    cfg.kind = FisherKind::low_rank;
    cfg.rank_k = spec.param_count();
    FisherEstimate lr = empirical_fim(spec, theta, frag, cfg);
    CHECK(frob_diff(lr.to_full(), full.full()) <= 1e-10 * frob(full.full()));

    // Factor rows orthonormal, eigenvalues descending and nonnegative.
    const int d = lr.dim();
    for (int r = 0; r < lr.rank(); ++r) {
        CHECK(lr.eigenvalues()[r] >= 0.0);
        if (r + 1 < lr.rank())
            CHECK(lr.eigenvalues()[r] >= lr.eigenvalues()[r + 1]);
        double nrm = 0.0;
        for (int j = 0; j < d; ++j)
            nrm += lr.factor()[r * d + j] * lr.factor()[r * d + j];
        CHECK(nrm == doctest::Approx(1.0).epsilon(1e-10));
        for (int r2 = r + 1; r2 < lr.rank(); ++r2) {
            double dot = 0.0;
            for (int j = 0; j < d; ++j)
                dot += lr.factor()[r * d + j] * lr.factor()[r2 * d + j];
            CHECK(std::abs(dot) <= 1e-10);
        }
    }
}

TEST_CASE("low-rank truncation is Eckart-Young optimal") {
    Rng rng(33);
    ModelSpec spec{4, {4}, 3};  // d = 35
    ParamVec theta = random_theta(spec, rng);
    Fragment frag = random_fragment(spec, 40, rng);

    FisherConfig cfg;
    FisherEstimate full = empirical_fim(spec, theta, frag, cfg);
    SymMatrix dense = full.full();
    EigResult eig = sym_eig_small(dense);

    for (int k : {1, 3, 8}) {
        cfg.kind = FisherKind::low_rank;
        cfg.rank_k = k;
        FisherEstimate lr = empirical_fim(spec, theta, frag, cfg);
        double tail = 0.0;
        for (std::size_t r = k; r < eig.eigenvalues.size(); ++r)
            tail += eig.eigenvalues[r] * eig.eigenvalues[r];
        CHECK(frob_diff(lr.to_full(), dense) ==
              doctest::Approx(std::sqrt(tail)).epsilon(1e-8));
    }
}

TEST_CASE("rank clamps to the data rank with a warning") {
    Rng rng(34);
    ModelSpec spec{3, {}, 2};  // d = 8
    ParamVec theta = random_theta(spec, rng);
    Fragment frag = random_fragment(spec, 4, rng);

    std::vector<std::string> warnings;
    set_warn_handler([&](const std::string& w) { warnings.push_back(w); });
    FisherConfig cfg;
    cfg.kind = FisherKind::low_rank;
    cfg.rank_k = 50;
    FisherEstimate lr = empirical_fim(spec, theta, frag, cfg);
    set_warn_handler({});
    CHECK(lr.rank() <= 4);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("clamped") != std::string::npos);
}

TEST_CASE("PSD on random probes for every variant and combination") {
    Rng rng(35);
    ModelSpec spec{3, {}, 3};
    ParamVec theta = random_theta(spec, rng);
    Fragment fa = random_fragment(spec, 15, rng);
    Fragment fb = random_fragment(spec, 25, rng);

    for (FisherKind kind : {FisherKind::full, FisherKind::diagonal, FisherKind::low_rank}) {
        FisherConfig cfg;
        cfg.kind = kind;
        cfg.rank_k = 5;
        FisherEstimate a = empirical_fim(spec, theta, fa, cfg);
        FisherEstimate b = empirical_fim(spec, theta, fb, cfg);
        FisherEstimate mixed = mix_fim(a, b, 0.3);
        FisherEstimate ema = ema_update(a, b, 0.9);
        FisherEstimate agg = aggregate_fims({{a, 15}, {b, 25}});
        for (const FisherEstimate* est : {&a, &b, &mixed, &ema, &agg}) {
            for (int probe = 0; probe < 100; ++probe) {
                ParamVec v(est->dim());
                double nrm = 0.0;
                for (double& x : v) {
                    x = rng.uniform(-1.0, 1.0);
                    nrm += x * x;
                }
                CHECK(est->quad_form(v) >= -1e-10 * nrm);
            }
        }
    }
}

TEST_CASE("largest eigenvalue stays under the squared score bound") {
    Rng rng(36);
    ModelSpec spec{2, {}, 3};
    ParamVec theta = random_theta(spec, rng);
    Fragment frag = random_fragment(spec, 25, rng);
    double g_sq = 0.0;
    for (const Example& ex : frag.examples) {
        ParamVec s = per_sample_score(spec, theta, ex);
        g_sq = std::max(g_sq, norm_sq(s));
    }
    FisherConfig cfg;
    FisherEstimate full = empirical_fim(spec, theta, frag, cfg);
    EigResult eig = sym_eig_small(full.full());
    CHECK(eig.eigenvalues[0] <= g_sq + 1e-8);

    cfg.kind = FisherKind::low_rank;
    cfg.rank_k = 4;
    FisherEstimate lr = empirical_fim(spec, theta, frag, cfg);
    CHECK(lr.eigenvalues()[0] <= g_sq + 1e-8);

    cfg.kind = FisherKind::diagonal;
    FisherEstimate diag = empirical_fim(spec, theta, frag, cfg);
    for (double v : diag.diagonal()) CHECK(v <= g_sq + 1e-8);
}

TEST_CASE("mix_fim endpoints and hand value") {
    FisherEstimate a = diag_estimate({2.0, 0.0});
    FisherEstimate b = diag_estimate({0.0, 2.0});
    CHECK(mix_fim(a, b, 1.0).value_equal(a));
    CHECK(mix_fim(a, b, 0.0).value_equal(b));
    FisherEstimate m = mix_fim(a, b, 0.5);
    CHECK(m.diagonal()[0] == 1.0);
    CHECK(m.diagonal()[1] == 1.0);
    CHECK_THROWS_AS(mix_fim(a, b, 1.5), ConfigError);

    FisherEstimate full2 = FisherEstimate::zero(FisherKind::full, 2);
    CHECK_THROWS_AS(mix_fim(a, full2, 0.5), DimensionError);
}

TEST_CASE("ema_update endpoints, fixed point, telescoping") {
    FisherEstimate a = diag_estimate({2.0, 0.0});
    FisherEstimate b = diag_estimate({0.0, 2.0});
    CHECK(ema_update(a, b, 0.0).value_equal(b));
    CHECK(ema_update(a, a, 0.7).value_equal(a));
    FisherEstimate e = ema_update(a, b, 0.5);
    CHECK(e.diagonal()[0] == 1.0);
    CHECK(e.diagonal()[1] == 1.0);

    // Repeated updates with a constant target converge geometrically.
    const double alpha = 0.8;
    FisherEstimate acc = a;
    double prev_gap = 2.0;
    for (int t = 1; t <= 100; ++t) {
        acc = ema_update(acc, b, alpha);
        double gap = std::abs(acc.diagonal()[0] - b.diagonal()[0]);
        CHECK(gap == doctest::Approx(prev_gap * alpha).epsilon(1e-9));
        prev_gap = gap;
    }
    CHECK(prev_gap <= 2.0 * std::pow(alpha, 100) + 1e-12);
}

TEST_CASE("aggregate_fims weights and edge cases") {
    FisherEstimate a = diag_estimate({4.0, 0.0});
    FisherEstimate b = diag_estimate({0.0, 8.0});
    FisherEstimate agg = aggregate_fims({{a, 1}, {b, 3}});
    CHECK(agg.diagonal()[0] == 1.0);
    CHECK(agg.diagonal()[1] == 6.0);
    CHECK(agg.sample_count() == 4);

    CHECK(aggregate_fims({{a, 7}}).value_equal(a));

    FisherEstimate same = aggregate_fims({{a, 5}, {a, 5}});
    CHECK(same.diagonal()[0] == doctest::Approx(4.0).epsilon(1e-15));

    CHECK_THROWS_AS(aggregate_fims({}), DataError);
    CHECK_THROWS_AS(aggregate_fims({{a, 0}}), DataError);
}

TEST_CASE("low-rank mixing stays exact inside the joint span") {
    Rng rng(37);
    ModelSpec spec{3, {}, 2};
    ParamVec theta = random_theta(spec, rng);
    Fragment fa = random_fragment(spec, 20, rng);
    Fragment fb = random_fragment(spec, 20, rng);

    FisherConfig cfg;
    FisherEstimate fa_full = empirical_fim(spec, theta, fa, cfg);
    FisherEstimate fb_full = empirical_fim(spec, theta, fb, cfg);
    FisherEstimate mixed_full = mix_fim(fa_full, fb_full, 0.25);

    cfg.kind = FisherKind::low_rank;
    cfg.rank_k = spec.param_count();  // full rank: mixing must be exact
    FisherEstimate fa_lr = empirical_fim(spec, theta, fa, cfg);
    FisherEstimate fb_lr = empirical_fim(spec, theta, fb, cfg);
    FisherEstimate mixed_lr = mix_fim(fa_lr, fb_lr, 0.25);
    CHECK(frob_diff(mixed_lr.to_full(), mixed_full.full()) <=
          1e-9 * (1.0 + frob(mixed_full.full())));
}

TEST_CASE("preconditioner application") {
    ParamVec g{1.0, 1.0, 1.0};
    FisherEstimate diag = diag_estimate({2.0, 0.0, 1.0});
    CHECK(apply_preconditioner(diag, g, 0.0) == g);
    ParamVec out = apply_preconditioner(diag, g, 0.5);
    CHECK(out[0] == doctest::Approx(2.0));
    CHECK(out[1] == doctest::Approx(1.0));
    CHECK(out[2] == doctest::Approx(1.5));

    // Identity as a full matrix doubles the gradient at lambda = 1.
    FisherEstimate ident = FisherEstimate::zero(FisherKind::full, 3);
    std::vector<std::uint8_t> bytes = ident.serialize();
    SymMatrix m(3);
    for (int i = 0; i < 3; ++i) m.set(i, i, 1.0);
    FisherEstimate identity_full = FisherEstimate::deserialize(
        FisherKind::full, 3, [&] {
            std::vector<std::uint8_t> raw;
            for (double v : m.packed()) {
                std::uint64_t bits;
                std::memcpy(&bits, &v, 8);
                for (int b = 0; b < 8; ++b)
                    raw.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xFF));
            }
            return raw;
        }());
    ParamVec doubled = apply_preconditioner(identity_full, g, 1.0);
    for (double v : doubled) CHECK(v == doctest::Approx(2.0));

    CHECK_THROWS_AS(apply_preconditioner(diag, ParamVec{1.0}, 0.5), DimensionError);
}

TEST_CASE("trace penalty") {
    CHECK(trace_penalty(FisherEstimate::zero(FisherKind::full, 4)) == 0.0);
    SymMatrix ident(5);
    for (int i = 0; i < 5; ++i) ident.set(i, i, 1.0);
    std::vector<std::uint8_t> raw;
    for (double v : ident.packed()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int b = 0; b < 8; ++b)
            raw.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xFF));
    }
    CHECK(trace_penalty(FisherEstimate::deserialize(FisherKind::full, 5, raw)) == 5.0);

    Rng rng(40);
    ModelSpec spec{2, {}, 2};
    ParamVec theta = random_theta(spec, rng);
    Fragment frag = random_fragment(spec, 10, rng);
    FisherConfig cfg;
    cfg.kind = FisherKind::low_rank;
    cfg.rank_k = 3;
    FisherEstimate lr = empirical_fim(spec, theta, frag, cfg);
    double eig_sum = 0.0;
    for (double v : lr.eigenvalues()) eig_sum += v;
    CHECK(trace_penalty(lr) == doctest::Approx(eig_sum));
}

TEST_CASE("serialization layout and round trip") {
    Rng rng(41);
    ModelSpec spec{3, {}, 2};  // d = 8
    ParamVec theta = random_theta(spec, rng);
    Fragment frag = random_fragment(spec, 12, rng);
    const int d = spec.param_count();

    FisherConfig cfg;
    FisherEstimate full = empirical_fim(spec, theta, frag, cfg);
    auto full_bytes = full.serialize();
    CHECK(full_bytes.size() == 8u * d * (d + 1) / 2);
    CHECK(FisherEstimate::deserialize(FisherKind::full, d, full_bytes).value_equal(full));

    cfg.kind = FisherKind::diagonal;
    FisherEstimate diag = empirical_fim(spec, theta, frag, cfg);
    auto diag_bytes = diag.serialize();
    CHECK(diag_bytes.size() == 8u * d);
    CHECK(FisherEstimate::deserialize(FisherKind::diagonal, d, diag_bytes)
              .value_equal(diag));

    cfg.kind = FisherKind::low_rank;
    cfg.rank_k = 3;
    FisherEstimate lr = empirical_fim(spec, theta, frag, cfg);
    auto lr_bytes = lr.serialize();
    CHECK(lr_bytes.size() == 8u * (1 + lr.rank() * (d + 1)));
    CHECK(FisherEstimate::deserialize(FisherKind::low_rank, d, lr_bytes).value_equal(lr));

    // Payload formulas.
    CHECK(FisherEstimate::payload_value_count(FisherKind::full, 1000, 0) == 500500);
    CHECK(FisherEstimate::payload_value_count(FisherKind::low_rank, 1000, 50) == 50051);
    CHECK(FisherEstimate::payload_value_count(FisherKind::diagonal, 1000, 0) == 1000);
}

TEST_CASE("empty fragment is an error") {
    ModelSpec spec{2, {}, 2};
    ParamVec theta(spec.param_count(), 0.0);
    Fragment empty;
    FisherConfig cfg;
    CHECK_THROWS_AS(empirical_fim(spec, theta, empty, cfg), DataError);
}
