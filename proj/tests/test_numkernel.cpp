#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fire/numkernel.hpp"

using namespace fire;

TEST_CASE("axpy basics") {
    CHECK(axpy(0.0, {5.0, 7.0}, {1.0, 2.0}) == ParamVec{1.0, 2.0});
    CHECK(axpy(1.0, {1.0, 1.0}, {0.0, 0.0}) == ParamVec{1.0, 1.0});
    CHECK(axpy(-2.0, {1.0, 2.0}, {5.0, 5.0}) == ParamVec{3.0, 1.0});
    CHECK_THROWS_AS(axpy(1.0, {1.0}, {1.0, 2.0}), DimensionError);
}

TEST_CASE("pairwise reductions match plain sums") {
    Rng rng(11);
    for (int n : {1, 7, 32, 33, 100, 1000}) {
        std::vector<double> v(n);
        for (double& x : v) x = rng.uniform(-1.0, 1.0);
        double plain = 0.0;
        for (double x : v) plain += x;
        CHECK(pairwise_sum(v) == doctest::Approx(plain).epsilon(1e-13));
    }
}

TEST_CASE("rng determinism and splitting") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng base(42);
    Rng s1 = base.split("model", 0);
    Rng s2 = base.split("model", 1);
    Rng s3 = base.split("other", 0);
    CHECK(s1.next_u64() != s2.next_u64());
    CHECK(base.split("model", 0).next_u64() != s3.next_u64());
    // Splitting does not consume from the parent.
    Rng c(42);
    (void)c.split("x");
    Rng d(42);
    CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("rng distributions land in range") {
    Rng rng(3);
    double beta_sum = 0.0;
    for (int i = 0; i < 4000; ++i) {
        double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        double bsample = rng.beta(2.0, 4.0);
        CHECK(bsample >= 0.0);
        CHECK(bsample <= 1.0);
        beta_sum += bsample;
    }
    // Beta(2,4) mean is 1/3.
    CHECK(beta_sum / 4000.0 == doctest::Approx(1.0 / 3.0).epsilon(0.05));
}

TEST_CASE("sym matrix storage and matvec") {
    SymMatrix m(3);
    m.set(0, 0, 1.0);
    m.set(0, 1, 2.0);
    m.set(0, 2, 3.0);
    m.set(1, 1, 4.0);
    m.set(1, 2, 5.0);
    m.set(2, 2, 6.0);
    CHECK(m.at(1, 0) == 2.0);
    CHECK(m.at(2, 1) == 5.0);
    CHECK(m.packed().size() == 6);
    std::vector<double> y(3);
    m.matvec(std::vector<double>{1.0, 0.0, -1.0}, y);
    CHECK(y[0] == doctest::Approx(-2.0));
    CHECK(y[1] == doctest::Approx(-3.0));
    CHECK(y[2] == doctest::Approx(-3.0));
}

TEST_CASE("eigendecomposition of small matrices") {
    SymMatrix ident(2);
    ident.set(0, 0, 1.0);
    ident.set(1, 1, 1.0);
    EigResult e = sym_eig_small(ident);
    CHECK(e.eigenvalues[0] == doctest::Approx(1.0));
    CHECK(e.eigenvalues[1] == doctest::Approx(1.0));

    SymMatrix diag(2);
    diag.set(0, 0, 3.0);
    diag.set(1, 1, 1.0);
    e = sym_eig_small(diag);
    CHECK(e.eigenvalues[0] == doctest::Approx(3.0));
    CHECK(e.eigenvalues[1] == doctest::Approx(1.0));
    CHECK(std::abs(e.eigenvectors[0][0]) == doctest::Approx(1.0));
    CHECK(std::abs(e.eigenvectors[0][1]) == doctest::Approx(0.0).epsilon(1e-12));

    // [[2,1],[1,2]] has eigenvalues 3 and 1 (characteristic polynomial).
    SymMatrix m(2);
    m.set(0, 0, 2.0);
    m.set(0, 1, 1.0);
    m.set(1, 1, 2.0);
    e = sym_eig_small(m);
    CHECK(e.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(e.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("eigendecomposition reconstructs random PSD matrices") {
    Rng rng(5);
    for (int d : {2, 5, 17, 64}) {
        // PSD by construction: B B' / d from a random square factor.
        std::vector<std::vector<double>> b(d, std::vector<double>(d));
        for (auto& row : b)
            for (double& v : row) v = rng.uniform(-1.0, 1.0);
        SymMatrix m(d);
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) {
                double s = 0.0;
                for (int k2 = 0; k2 < d; ++k2) s += b[i][k2] * b[j][k2];
                m.set(i, j, s / d);
            }
        EigResult e = sym_eig_small(m);
        for (int r = 0; r + 1 < d; ++r)
            CHECK(e.eigenvalues[r] >= e.eigenvalues[r + 1]);
        // Reconstruction error against the packed original.
        double err = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                double rec = 0.0;
                for (int r = 0; r < d; ++r)
                    rec += e.eigenvalues[r] * e.eigenvectors[r][i] * e.eigenvectors[r][j];
                err += (rec - m.at(i, j)) * (rec - m.at(i, j));
            }
        CHECK(std::sqrt(err) <= 1e-10 * m.frobenius_norm());
        // Orthonormal eigenvectors.
        for (int r = 0; r < d; ++r) {
            double nrm = 0.0, cross = 0.0;
            for (int i = 0; i < d; ++i) {
                nrm += e.eigenvectors[r][i] * e.eigenvectors[r][i];
                cross += e.eigenvectors[r][i] * e.eigenvectors[(r + 1) % d][i];
            }
            CHECK(nrm == doctest::Approx(1.0).epsilon(1e-12));
            if (d > 1 && r + 1 < d) CHECK(std::abs(cross) < 1e-10);
        }
    }
}

TEST_CASE("eigendecomposition rejects clearly indefinite input") {
    SymMatrix m(2);
    m.set(0, 0, 1.0);
    m.set(1, 1, -1.0);
    CHECK_THROWS_AS(sym_eig_small(m), ContractViolation);
}

TEST_CASE("quad_form basics and matvec consistency") {
    SymMatrix ident(2);
    ident.set(0, 0, 1.0);
    ident.set(1, 1, 1.0);
    CHECK(quad_form(ident, {3.0, 4.0}) == doctest::Approx(25.0));

    SymMatrix zero(3);
    CHECK(quad_form(zero, {1.0, 2.0, 3.0}) == 0.0);

    SymMatrix diag(2);
    diag.set(0, 0, 2.0);
    diag.set(1, 1, 1.0);
    CHECK(quad_form(diag, {1.0, 2.0}) == doctest::Approx(6.0));

    Rng rng(9);
    for (int rep = 0; rep < 50; ++rep) {
        int d = 2 + static_cast<int>(rng.below(6));
        SymMatrix m(d);
        ParamVec v(d);
        for (int i = 0; i < d; ++i) {
            v[i] = rng.uniform(-2.0, 2.0);
            for (int j = i; j < d; ++j) m.set(i, j, rng.uniform(-1.0, 1.0));
        }
        std::vector<double> mv(d);
        m.matvec(v, mv);
        double via_matvec = 0.0;
        for (int i = 0; i < d; ++i) via_matvec += mv[i] * v[i];
        CHECK(quad_form(m, v) ==
              doctest::Approx(via_matvec).epsilon(1e-12));
    }
}
