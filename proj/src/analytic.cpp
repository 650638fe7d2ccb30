#include "fire/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fire {

namespace {

constexpr int kSegmentSamples = 10000;  // grid points along the segment
constexpr double kInflate = 1.01;
constexpr double kSlack = 1e-12;

void validate_family(Family family, const std::vector<double>& theta,
                     const char* who) {
    switch (family) {
        case Family::bernoulli:
            if (theta.size() != 1)
                throw DimensionError(std::string(who) + ": bernoulli takes one parameter");
            if (theta[0] <= 0.0 || theta[0] >= 1.0)
                throw DataError(std::string(who) + ": bernoulli p outside (0,1)");
            break;
        case Family::categorical: {
            if (theta.empty())
                throw DimensionError(std::string(who) + ": categorical needs k-1 parameters");
            double sum = 0.0;
            for (double p : theta) {
                if (p <= 0.0)
                    throw DataError(std::string(who) + ": probability outside the open simplex");
                sum += p;
            }
            if (sum >= 1.0)
                throw DataError(std::string(who) + ": probability outside the open simplex");
            break;
        }
        case Family::gaussian_fixed_var:
            if (theta.empty())
                throw DimensionError(std::string(who) + ": gaussian needs a mean vector");
            break;
    }
}

std::vector<double> full_probs(const std::vector<double>& theta) {
    std::vector<double> p = theta;
    double sum = 0.0;
    for (double v : theta) sum += v;
    p.push_back(1.0 - sum);
    return p;
}

// Max Euclidean score norm over the family's outcomes at theta.
double max_score_norm(Family family, const std::vector<double>& theta) {
    switch (family) {
        case Family::bernoulli:
            return std::max(1.0 / theta[0], 1.0 / (1.0 - theta[0]));
        case Family::categorical: {
            std::vector<double> p = full_probs(theta);
            int k = static_cast<int>(p.size());
            double best = std::sqrt(static_cast<double>(k - 1)) / p[k - 1];
            for (int a = 0; a < k - 1; ++a) best = std::max(best, 1.0 / p[a]);
            return best;
        }
        case Family::gaussian_fixed_var:
            return 0.0;  // unbounded in y; never used (third derivatives vanish)
    }
    return 0.0;
}

// Max over outcomes of |d^3/dt^3 log p(y; theta + t*delta)| at the point.
double max_third_directional(Family family, const std::vector<double>& theta,
                             const std::vector<double>& delta) {
    switch (family) {
        case Family::bernoulli: {
            double d = delta[0], p = theta[0];
            double y1 = std::abs(2.0 * d * d * d / (p * p * p));
            double y0 = std::abs(2.0 * d * d * d / ((1 - p) * (1 - p) * (1 - p)));
            return std::max(y0, y1);
        }
        case Family::categorical: {
            std::vector<double> p = full_probs(theta);
            int k = static_cast<int>(p.size());
            double dsum = 0.0;
            for (double v : delta) dsum += v;
            double best = std::abs(2.0 * dsum * dsum * dsum /
                                   (p[k - 1] * p[k - 1] * p[k - 1]));
            for (int a = 0; a < k - 1; ++a)
                best = std::max(best, std::abs(2.0 * delta[a] * delta[a] * delta[a] /
                                               (p[a] * p[a] * p[a])));
            return best;
        }
        case Family::gaussian_fixed_var:
            return 0.0;
    }
    return 0.0;
}

struct SegmentConstants {
    double score_norm_max = 0.0;   // G on the segment
    double third_max = 0.0;        // max |d^3/dt^3 log p| on the segment
    double fisher_op_bound = 0.0;  // M for the change-of-measure term
};

SegmentConstants sweep_segment(Family family, const std::vector<double>& theta_i,
                               const std::vector<double>& theta_val) {
    std::vector<double> delta(theta_i.size());
    for (std::size_t j = 0; j < delta.size(); ++j)
        delta[j] = theta_val[j] - theta_i[j];
    SegmentConstants sc;
    std::vector<double> point(theta_i.size());
    for (int s = 0; s <= kSegmentSamples; ++s) {
        double t = static_cast<double>(s) / kSegmentSamples;
        for (std::size_t j = 0; j < point.size(); ++j)
            point[j] = theta_i[j] + t * delta[j];
        validate_family(family, point, "segment sweep");
        sc.score_norm_max = std::max(sc.score_norm_max, max_score_norm(family, point));
        sc.third_max =
            std::max(sc.third_max, max_third_directional(family, point, delta));
    }
    sc.score_norm_max *= kInflate;
    sc.third_max *= kInflate;
    // Bounded-score families: ||F_x|| <= G^2. The Gaussian score is unbounded
    // in y but its Fisher is the identity (unit variance), so M = 1.
    sc.fisher_op_bound = family == Family::gaussian_fixed_var
                             ? 1.0
                             : sc.score_norm_max * sc.score_norm_max;
    return sc;
}

}  // namespace

double conditional_kl(Family family, const std::vector<double>& theta_i,
                      const std::vector<double>& theta_val) {
    validate_family(family, theta_i, "conditional_kl");
    validate_family(family, theta_val, "conditional_kl");
    if (theta_i.size() != theta_val.size())
        throw DimensionError("conditional_kl: parameter length mismatch");
    switch (family) {
        case Family::bernoulli: {
            double p = theta_i[0], q = theta_val[0];
            return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
        }
        case Family::categorical: {
            std::vector<double> p = full_probs(theta_i);
            std::vector<double> q = full_probs(theta_val);
            double kl = 0.0;
            for (std::size_t y = 0; y < p.size(); ++y)
                kl += p[y] * std::log(p[y] / q[y]);
            return kl;
        }
        case Family::gaussian_fixed_var: {
            double d2 = 0.0;
            for (std::size_t j = 0; j < theta_i.size(); ++j)
                d2 += (theta_i[j] - theta_val[j]) * (theta_i[j] - theta_val[j]);
            return 0.5 * d2;
        }
    }
    return 0.0;
}

SymMatrix fisher_information(Family family, const std::vector<double>& theta) {
    validate_family(family, theta, "fisher_information");
    switch (family) {
        case Family::bernoulli: {
            SymMatrix f(1);
            f.set(0, 0, 1.0 / (theta[0] * (1.0 - theta[0])));
            return f;
        }
        case Family::categorical: {
            int d = static_cast<int>(theta.size());
            std::vector<double> p = full_probs(theta);
            SymMatrix f(d);
            for (int a = 0; a < d; ++a)
                for (int b = a; b < d; ++b)
                    f.set(a, b, (a == b ? 1.0 / p[a] : 0.0) + 1.0 / p[d]);
            return f;
        }
        case Family::gaussian_fixed_var: {
            int d = static_cast<int>(theta.size());
            SymMatrix f(d);
            for (int j = 0; j < d; ++j) f.set(j, j, 1.0);
            return f;
        }
    }
    return SymMatrix(1);
}

KlBoundRecord verify_kl_bound_analytic(Family family,
                                       const std::vector<double>& theta_i,
                                       const std::vector<double>& theta_val,
                                       double gamma) {
    if (gamma < 0.0 || gamma >= 1.0)
        throw DataError("verify_kl_bound_analytic: gamma must lie in [0,1)");
    double cond = conditional_kl(family, theta_i, theta_val);

    // Two-point covariate marginal with equal validation mass and ratio
    // values 1 +/- gamma (mean one, max deviation exactly gamma). The
    // conditional does not depend on the covariate, so the joint KL splits.
    double marg = 0.0;
    if (gamma > 0.0)
        marg = 0.5 * ((1.0 + gamma) * std::log(1.0 + gamma) +
                      (1.0 - gamma) * std::log(1.0 - gamma));

    ParamVec delta(theta_i.size());
    for (std::size_t j = 0; j < delta.size(); ++j)
        delta[j] = theta_i[j] - theta_val[j];
    double delta_norm_sq = 0.0;
    for (double v : delta) delta_norm_sq += v * v;

    SegmentConstants sc = sweep_segment(family, theta_i, theta_val);
    SymMatrix fisher = fisher_information(family, theta_i);

    KlBoundRecord rec;
    rec.kl_true = marg + cond;
    rec.quad = 0.5 * quad_form(fisher, delta);
    double c1 = 1.0 / (2.0 * (1.0 - gamma));
    double c1p = 1.0 / (3.0 * (1.0 - gamma) * (1.0 - gamma));
    double change_of_measure = 0.5 * sc.fisher_op_bound * gamma * delta_norm_sq;
    double cubic = sc.third_max * sc.score_norm_max / 6.0;
    rec.bound_rhs = rec.quad + c1 * gamma * gamma + c1p * gamma * gamma * gamma +
                    change_of_measure + cubic;
    rec.holds = rec.kl_true <= rec.bound_rhs + kSlack;
    return rec;
}

ExpansionRecord verify_local_expansion(Family family,
                                       const std::vector<double>& theta_i,
                                       const std::vector<double>& theta_val) {
    double cond = conditional_kl(family, theta_i, theta_val);
    ParamVec delta(theta_i.size());
    for (std::size_t j = 0; j < delta.size(); ++j)
        delta[j] = theta_i[j] - theta_val[j];
    SymMatrix fisher = fisher_information(family, theta_i);
    SegmentConstants sc = sweep_segment(family, theta_i, theta_val);

    ExpansionRecord rec;
    rec.remainder = std::abs(cond - 0.5 * quad_form(fisher, delta));
    rec.cubic_bound = sc.third_max * sc.score_norm_max / 6.0;
    rec.holds = rec.remainder <= rec.cubic_bound + kSlack;
    return rec;
}

MarginalKlRecord verify_marginal_kl(double gamma,
                                    const std::vector<double>& ratio_samples) {
    if (gamma < 0.0 || gamma >= 1.0)
        throw DataError("verify_marginal_kl: gamma must lie in [0,1)");
    if (ratio_samples.empty()) throw DataError("verify_marginal_kl: no samples");
    for (double r : ratio_samples)
        if (r < 1.0 - gamma - 1e-12 || r > 1.0 + gamma + 1e-12)
            throw DataError("verify_marginal_kl: sample outside [1-gamma, 1+gamma]");
    double mean = pairwise_sum(ratio_samples) / static_cast<double>(ratio_samples.size());
    if (std::abs(mean - 1.0) > 1e-9)
        throw DataError("verify_marginal_kl: sample mean violates mass conservation");

    std::vector<double> terms(ratio_samples.size());
    for (std::size_t i = 0; i < ratio_samples.size(); ++i)
        terms[i] = ratio_samples[i] * std::log(ratio_samples[i]);
    MarginalKlRecord rec;
    rec.kl = pairwise_sum(terms) / static_cast<double>(terms.size());
    rec.bound = gamma * gamma / (2.0 * (1.0 - gamma)) +
                gamma * gamma * gamma / (3.0 * (1.0 - gamma) * (1.0 - gamma));
    rec.holds = rec.kl <= rec.bound + kSlack;
    return rec;
}

}  // namespace fire
