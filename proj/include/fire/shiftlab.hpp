#pragma once

// Covariate-shift induction and per-fragment shift diagnostics: a domain
// classifier density ratio, its deviation quantile and AUC, an empirical KL
// estimate, and the Fisher quadratic surrogate.

#include <vector>

#include "fire/fisher.hpp"
#include "fire/model.hpp"
#include "fire/numkernel.hpp"

namespace fire {

enum class ShiftKind { none, rotation_beta, tabular_bias, gaussian_mean };

struct ShiftSpec {
    ShiftKind kind = ShiftKind::none;
    // rotation_beta: per-example angle 180deg * u with u ~ Beta(a,b) for the
    // training role; the test role draws Beta(b,a) when swap_for_test.
    double beta_a = 2.0;
    double beta_b = 4.0;
    bool swap_for_test = true;
    // tabular_bias: keep probability sigmoid(strength * z) where z is the
    // standardized projection on the first principal direction; probabilities
    // are rescaled if the expected kept fraction falls under 0.3.
    double strength = 1.0;
    // gaussian_mean: added to training features only.
    std::vector<double> delta;
};

enum class ShiftRole { train, test };

// Returns a shifted copy of the fragment. Rotation needs 2-d points or
// square images (nearest-neighbor resampling about the center); the other
// kinds accept any feature shape.
Fragment induce_shift(const Fragment& frag, const ShiftSpec& spec, ShiftRole role,
                      Rng& rng);

struct DensityRatio {
    std::vector<double> r_hat;  // one entry per train_frag example, always > 0
    double auc = 0.5;           // held-out domain-classifier AUC
};

// Trains a balanced logistic domain classifier (fragment vs validation) and
// returns s/(1-s) ratios on the fragment plus the held-out AUC.
DensityRatio estimate_density_ratio(const Fragment& train_frag,
                                    const Fragment& val_frag, Rng& rng);

struct DiagnosticsReport {
    double gamma_hat_q = 0.0;      // 0.99 quantile of |r_hat - 1|
    double auc = 0.5;
    double kl_hat = 0.0;           // mean log r_hat (can be slightly negative)
    double fisher_quadratic = 0.0; // (1/2) dtheta' I_val dtheta
    double delta_f = 0.0;          // sqrt(2 * fisher_quadratic)
};

DiagnosticsReport diagnostics(const Fragment& train_frag, const Fragment& val_frag,
                              const ParamVec& theta_i, const ParamVec& theta_val,
                              const FisherEstimate& i_val, Rng& rng);

// Linear-interpolation quantile of a sample, q in [0,1].
double quantile(std::vector<double> values, double q);

}  // namespace fire
