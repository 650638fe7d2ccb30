#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fire/analytic.hpp"
#include "fire/datasets.hpp"
#include "fire/shiftlab.hpp"

using namespace fire;

namespace {

Fragment gaussian_1d(int n, double mean, Rng& rng) {
    Fragment frag;
    for (int i = 0; i < n; ++i) {
        Example ex;
        ex.x = {mean + rng.normal()};
        ex.y = 0;
        frag.examples.push_back(std::move(ex));
    }
    return frag;
}

}  // namespace

// ---------------------------------------------------------------------------
// Shift induction
// ---------------------------------------------------------------------------

TEST_CASE("rotation angles follow the Beta means and swap for the test role") {
    Rng rng(1);
    Fragment frag;
    for (int i = 0; i < 3000; ++i) frag.examples.push_back({{1.0, 0.0}, 0});
    ShiftSpec spec;
    spec.kind = ShiftKind::rotation_beta;
    spec.beta_a = 2.0;
    spec.beta_b = 4.0;

    auto mean_angle = [&](ShiftRole role, std::uint64_t seed) {
        Rng r(seed);
        Fragment shifted = induce_shift(frag, spec, role, r);
        double total = 0.0;
        for (const Example& ex : shifted.examples)
            total += std::atan2(ex.x[1], ex.x[0]);  // in [0, pi] for these points
        return total / shifted.n() * 180.0 / 3.14159265358979323846;
    };
    // Beta(2,4) mean is 1/3 -> 60 degrees; swapped Beta(4,2) -> 120 degrees.
    CHECK(mean_angle(ShiftRole::train, 2) == doctest::Approx(60.0).epsilon(0.05));
    CHECK(mean_angle(ShiftRole::test, 3) == doctest::Approx(120.0).epsilon(0.05));

    // Rotation preserves the norm.
    Rng r(4);
    Fragment shifted = induce_shift(frag, spec, ShiftRole::train, r);
    for (int i = 0; i < 50; ++i)
        CHECK(norm_sq(shifted.examples[i].x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("image rotation keeps shape and runs nearest-neighbor") {
    Rng rng(5);
    Fragment frag;
    Example img;
    img.x.assign(16, 0.0);  // 4x4
    img.x[5] = 1.0;
    img.y = 0;
    frag.examples.push_back(img);
    ShiftSpec spec;
    spec.kind = ShiftKind::rotation_beta;
    Fragment out = induce_shift(frag, spec, ShiftRole::train, rng);
    CHECK(out.examples[0].x.size() == 16);
    double total = 0.0;
    for (double v : out.examples[0].x) {
        CHECK((v == 0.0 || v == 1.0));  // nearest neighbor copies values
        total += v;
    }
    CHECK(total <= 1.0 + 1e-12);  // single hot pixel moves or falls off

    Fragment bad;
    bad.examples.push_back({{1.0, 2.0, 3.0}, 0});
    Rng r2(6);
    CHECK_THROWS_AS(induce_shift(bad, spec, ShiftRole::train, r2), DataError);
}

TEST_CASE("tabular bias keeps roughly half at zero strength and skews otherwise") {
    Rng data_rng(7);
    Fragment frag;
    for (int i = 0; i < 2000; ++i) {
        Example ex;
        ex.x = {data_rng.normal(), data_rng.normal()};
        ex.y = i % 2;
        frag.examples.push_back(std::move(ex));
    }
    ShiftSpec spec;
    spec.kind = ShiftKind::tabular_bias;
    spec.strength = 0.0;
    Rng r1(8);
    Fragment neutral = induce_shift(frag, spec, ShiftRole::train, r1);
    CHECK(neutral.n() > 800);
    CHECK(neutral.n() < 1200);

    spec.strength = 3.0;
    Rng r2(9);
    Fragment skewed = induce_shift(frag, spec, ShiftRole::train, r2);
    // Kept examples lean toward the positive side of the principal axis.
    double mean0 = 0.0;
    for (const Example& ex : skewed.examples) mean0 += ex.x[0] + ex.x[1];
    CHECK(std::abs(mean0) / skewed.n() > 0.1);

    // Test role passes through untouched.
    Rng r3(10);
    Fragment untouched = induce_shift(frag, spec, ShiftRole::test, r3);
    CHECK(untouched.n() == frag.n());
}

TEST_CASE("gaussian mean shift moves train features only") {
    Fragment frag;
    frag.examples.push_back({{1.0, 2.0}, 0});
    ShiftSpec spec;
    spec.kind = ShiftKind::gaussian_mean;
    spec.delta = {0.5, -1.0};
    Rng rng(11);
    Fragment train = induce_shift(frag, spec, ShiftRole::train, rng);
    CHECK(train.examples[0].x[0] == doctest::Approx(1.5));
    CHECK(train.examples[0].x[1] == doctest::Approx(1.0));
    Fragment test = induce_shift(frag, spec, ShiftRole::test, rng);
    CHECK(test.examples[0].x == frag.examples[0].x);

    spec.delta = {1.0};
    CHECK_THROWS_AS(induce_shift(frag, spec, ShiftRole::train, rng), DimensionError);
}

// ---------------------------------------------------------------------------
// Density ratio and diagnostics
// ---------------------------------------------------------------------------

TEST_CASE("identical fragments are indistinguishable") {
    Rng data_rng(12);
    Fragment frag = gaussian_1d(600, 0.0, data_rng);
    Rng rng(13);
    DensityRatio dr = estimate_density_ratio(frag, frag, rng);
    CHECK(dr.auc >= 0.4);
    CHECK(dr.auc <= 0.6);
    std::vector<double> r = dr.r_hat;
    double med = quantile(r, 0.5);
    CHECK(med >= 0.8);
    CHECK(med <= 1.25);
    for (double v : dr.r_hat) CHECK(v > 0.0);
}

TEST_CASE("a three-sigma shift is clearly detectable") {
    Rng data_rng(14);
    Fragment train = gaussian_1d(1500, 3.0, data_rng);
    Fragment val = gaussian_1d(1500, 0.0, data_rng);
    Rng rng(15);
    DensityRatio dr = estimate_density_ratio(train, val, rng);
    CHECK(dr.auc >= 0.9);
}

TEST_CASE("diagnostics fields: zero displacement, symmetric auc, analytic KL") {
    Rng data_rng(16);
    Fragment train = gaussian_1d(800, 0.5, data_rng);
    Fragment val = gaussian_1d(800, 0.0, data_rng);

    ModelSpec spec{1, {}, 2};
    ParamVec theta(spec.param_count(), 0.0);
    FisherConfig fcfg;
    Fragment labeled_val = val;
    for (int i = 0; i < labeled_val.n(); ++i) labeled_val.examples[i].y = i % 2;
    FisherEstimate i_val = empirical_fim(spec, theta, labeled_val, fcfg);

    Rng rng(17);
    DiagnosticsReport same = diagnostics(train, val, theta, theta, i_val, rng);
    CHECK(same.fisher_quadratic == 0.0);
    CHECK(same.delta_f == 0.0);
    CHECK(same.delta_f * same.delta_f ==
          doctest::Approx(2.0 * same.fisher_quadratic).epsilon(1e-12));
    CHECK(same.gamma_hat_q >= 0.0);

    // Swapping the fragments keeps the discriminability. A single held-out
    // AUC carries a couple of points of noise, so compare means over paired
    // repetitions.
    double auc_ab = 0.0, auc_ba = 0.0;
    for (unsigned rep = 0; rep < 5; ++rep) {
        Rng data3(18 + rep);
        Fragment train_sym = gaussian_1d(2000, 0.5, data3);
        Fragment val_sym = gaussian_1d(2000, 0.0, data3);
        Rng rng_a(60 + rep), rng_b(60 + rep);
        auc_ab += estimate_density_ratio(train_sym, val_sym, rng_a).auc;
        auc_ba += estimate_density_ratio(val_sym, train_sym, rng_b).auc;
    }
    CHECK(std::abs(auc_ab - auc_ba) / 5.0 <= 0.02);

    // KL(N(0.5,1) || N(0,1)) = 0.125.
    Rng data2(116);
    Fragment train_big = gaussian_1d(5000, 0.5, data2);
    Fragment val_big = gaussian_1d(5000, 0.0, data2);
    Rng rng2(20);
    DiagnosticsReport shifted =
        diagnostics(train_big, val_big, theta, theta, i_val, rng2);
    CHECK(shifted.kl_hat >= 0.125 * 0.7);
    CHECK(shifted.kl_hat <= 0.125 * 1.3);

    // Identical fragments: tiny empirical KL.
    Rng rng3(21);
    DiagnosticsReport flat = diagnostics(val_big, val_big, theta, theta, i_val, rng3);
    CHECK(std::abs(flat.kl_hat) <= 0.05);
}

TEST_CASE("rotation-symmetric shift gives symmetric diagnostics") {
    Rng data_rng(22);
    Fragment base = make_blobs(800, 3, 2, 0.4, data_rng);
    ShiftSpec spec;
    spec.kind = ShiftKind::rotation_beta;
    spec.beta_a = 2.0;
    spec.beta_b = 4.0;
    Rng r1(23), r2(24);
    Fragment train = induce_shift(base, spec, ShiftRole::train, r1);
    Fragment test = induce_shift(base, spec, ShiftRole::test, r2);
    Rng ra(25), rb(26);
    double auc_ab = estimate_density_ratio(train, test, ra).auc;
    double auc_ba = estimate_density_ratio(test, train, rb).auc;
    CHECK(std::abs(auc_ab - auc_ba) <= 0.02);
}

TEST_CASE("beta(a,a) rotations leave domains indistinguishable") {
    Rng data_rng(27);
    Fragment base = make_blobs(700, 3, 2, 0.4, data_rng);
    ShiftSpec spec;
    spec.kind = ShiftKind::rotation_beta;
    spec.beta_a = 3.0;
    spec.beta_b = 3.0;
    Rng r1(28), r2(29);
    Fragment train = induce_shift(base, spec, ShiftRole::train, r1);
    Fragment test = induce_shift(base, spec, ShiftRole::test, r2);
    Rng rng(30);
    DensityRatio dr = estimate_density_ratio(train, test, rng);
    CHECK(dr.auc >= 0.45);
    CHECK(dr.auc <= 0.55);
}

// ---------------------------------------------------------------------------
// Analytic bound suites
// ---------------------------------------------------------------------------

TEST_CASE("bernoulli spot values for the KL bound") {
    KlBoundRecord rec = verify_kl_bound_analytic(Family::bernoulli, {0.5}, {0.6}, 0.0);
    CHECK(rec.kl_true == doctest::Approx(0.020411).epsilon(1e-4));
    CHECK(std::abs(rec.kl_true - 0.020411) <= 1e-6);
    CHECK(std::abs(rec.quad - 0.020000) <= 1e-6);
    CHECK(rec.holds);
    CHECK(rec.bound_rhs >= rec.kl_true);

    // Identical parameters, no marginal gap: everything collapses to zero.
    KlBoundRecord zero = verify_kl_bound_analytic(Family::bernoulli, {0.4}, {0.4}, 0.0);
    CHECK(zero.kl_true == 0.0);
    CHECK(zero.quad == 0.0);
    CHECK(zero.holds);
}

TEST_CASE("local expansion: spot remainder and cubic scaling") {
    ExpansionRecord rec = verify_local_expansion(Family::bernoulli, {0.5}, {0.6});
    CHECK(rec.remainder == doctest::Approx(0.000411).epsilon(2e-3));
    CHECK(rec.holds);

    ExpansionRecord same = verify_local_expansion(Family::bernoulli, {0.5}, {0.5});
    CHECK(same.remainder == 0.0);

    // Remainder scales cubically: slope of log remainder vs log delta ~ 3.
    std::vector<double> deltas, remainders;
    for (double d = 1e-3; d <= 1e-2 + 1e-12; d *= 1.5) {
        ExpansionRecord r = verify_local_expansion(Family::bernoulli, {0.4}, {0.4 + d});
        deltas.push_back(std::log(d));
        remainders.push_back(std::log(r.remainder));
    }
    double n = static_cast<double>(deltas.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        sx += deltas[i];
        sy += remainders[i];
        sxx += deltas[i] * deltas[i];
        sxy += deltas[i] * remainders[i];
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope == doctest::Approx(3.0).epsilon(0.1));

    // Tripling delta multiplies the remainder by about 27.
    ExpansionRecord small = verify_local_expansion(Family::bernoulli, {0.4}, {0.4 + 2e-3});
    ExpansionRecord big = verify_local_expansion(Family::bernoulli, {0.4}, {0.4 + 6e-3});
    double ratio = big.remainder / small.remainder;
    CHECK(ratio >= 27.0 * 0.7);
    CHECK(ratio <= 27.0 * 1.3);
}

TEST_CASE("categorical bound holds over a thousand random small steps") {
    Rng rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> tv = {0.3, 0.3};  // third outcome 0.4
        std::vector<double> ti = tv;
        double d0 = rng.uniform(-0.035, 0.035);
        double d1 = rng.uniform(-0.035, 0.035);
        ti[0] += d0;
        ti[1] += d1;
        KlBoundRecord rec =
            verify_kl_bound_analytic(Family::categorical, ti, tv, rng.uniform(0.0, 0.5));
        CHECK(rec.holds);
    }
}

TEST_CASE("gaussian family: exact quadratic, bound reduces to the marginal part") {
    KlBoundRecord rec =
        verify_kl_bound_analytic(Family::gaussian_fixed_var, {0.3, -0.2}, {0.25, -0.25}, 0.2);
    CHECK(rec.holds);
    ExpansionRecord exp_rec =
        verify_local_expansion(Family::gaussian_fixed_var, {0.3, -0.2}, {0.25, -0.25});
    CHECK(exp_rec.remainder == 0.0);
    CHECK(exp_rec.cubic_bound == 0.0);
    CHECK(exp_rec.holds);
}

TEST_CASE("family parameter validation") {
    CHECK_THROWS_AS(verify_kl_bound_analytic(Family::bernoulli, {1.2}, {0.5}, 0.0),
                    DataError);
    CHECK_THROWS_AS(verify_kl_bound_analytic(Family::categorical, {0.7, 0.4}, {0.3, 0.3}, 0.0),
                    DataError);
    CHECK_THROWS_AS(verify_kl_bound_analytic(Family::bernoulli, {0.5}, {0.6}, 1.0),
                    DataError);
}

TEST_CASE("marginal KL bound: trivial, two-point, and randomized cases") {
    MarginalKlRecord ones = verify_marginal_kl(0.3, {1.0, 1.0, 1.0});
    CHECK(ones.kl == 0.0);
    CHECK(ones.holds);

    MarginalKlRecord two = verify_marginal_kl(0.1, {0.9, 1.1});
    // 0.5 * (0.9 ln 0.9 + 1.1 ln 1.1), computed exactly.
    CHECK(two.kl == doctest::Approx(0.0050083668463568385).epsilon(1e-12));
    CHECK(two.bound == doctest::Approx(0.0059670781893004115).epsilon(1e-12));
    CHECK(two.holds);

    Rng rng(32);
    for (int trial = 0; trial < 10000; ++trial) {
        double gamma = rng.uniform(1e-4, 0.5);
        // Two-point mean-one mixture with weight w on the high side.
        double w = rng.uniform(0.1, 0.5);
        double hi = 1.0 + gamma;
        double lo = 1.0 - gamma * w / (1.0 - w);
        std::vector<double> samples;
        int n_hi = static_cast<int>(std::lround(w * 20));
        for (int i = 0; i < 20; ++i) samples.push_back(i < n_hi ? hi : lo);
        // Rebalance to exact mean one with the realized counts.
        double mean = 0.0;
        for (double s : samples) mean += s;
        mean /= samples.size();
        for (double& s : samples) s += 1.0 - mean;
        bool in_range = true;
        for (double s : samples)
            if (s < 1.0 - gamma || s > 1.0 + gamma) in_range = false;
        if (!in_range) continue;
        MarginalKlRecord rec = verify_marginal_kl(gamma, samples);
        CHECK(rec.holds);
    }

    CHECK_THROWS_AS(verify_marginal_kl(0.1, {0.9, 1.2}), DataError);
    CHECK_THROWS_AS(verify_marginal_kl(0.1, {1.05, 1.05}), DataError);
}
