#pragma once

// Closed-form exponential-family instances used to verify the KL-vs-Fisher
// surrogate numerically. Each family exposes exact KL, exact Fisher
// information, per-outcome scores and third derivatives, so every quantity
// in the bounds is computed, not estimated from data.
//
// Parameter conventions:
//   bernoulli          theta = {p}, p in (0,1): P(y=1) = p
//   categorical        theta = {p_1..p_{k-1}}, open simplex; p_k = 1 - sum
//   gaussian_fixed_var theta = mean vector, unit variance per coordinate

#include <vector>

#include "fire/numkernel.hpp"

namespace fire {

enum class Family { bernoulli, categorical, gaussian_fixed_var };

// KL(p(.|theta_i) || p(.|theta_val)), closed form / exact enumeration.
double conditional_kl(Family family, const std::vector<double>& theta_i,
                      const std::vector<double>& theta_val);

// Fisher information matrix at theta.
SymMatrix fisher_information(Family family, const std::vector<double>& theta);

struct KlBoundRecord {
    double kl_true = 0.0;
    double quad = 0.0;       // (1/2) dtheta' F(theta_i) dtheta
    double bound_rhs = 0.0;  // quad + C1 g^2 + C1' g^3 + (M/2) g d^2 + (bG/6) d^3
    bool holds = false;
};

// Verifies the Fisher-quadratic KL bound on a synthetic joint: a two-point
// covariate marginal whose density ratio deviates from 1 by exactly gamma
// (equal validation mass on both points), times the family conditional. The
// segment constants (max score norm G, max directional third derivative)
// are taken from a dense 10^4-point sweep of the exact expressions along
// the parameter segment, inflated by 1%.
KlBoundRecord verify_kl_bound_analytic(Family family,
                                       const std::vector<double>& theta_i,
                                       const std::vector<double>& theta_val,
                                       double gamma);

struct ExpansionRecord {
    double remainder = 0.0;    // |conditional KL - Fisher quadratic|
    double cubic_bound = 0.0;  // (beta G / 6) delta^3 with segment constants
    bool holds = false;
};

// Checks the quadratic expansion of the conditional KL: the remainder must
// sit under the cubic segment bound.
ExpansionRecord verify_local_expansion(Family family,
                                       const std::vector<double>& theta_i,
                                       const std::vector<double>& theta_val);

struct MarginalKlRecord {
    double kl = 0.0;
    double bound = 0.0;  // g^2/(2(1-g)) + g^3/(3(1-g)^2)
    bool holds = false;
};

// Checks E[r log r] <= C1 gamma^2 + C1' gamma^3 for ratio samples in
// [1-gamma, 1+gamma] with mean 1 (uniform validation mass per sample).
MarginalKlRecord verify_marginal_kl(double gamma,
                                    const std::vector<double>& ratio_samples);

}  // namespace fire
