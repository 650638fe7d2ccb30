#include "fire/shiftlab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fire {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> rotate_point(const std::vector<double>& x, double angle) {
    double c = std::cos(angle), s = std::sin(angle);
    return {c * x[0] - s * x[1], s * x[0] + c * x[1]};
}

// Nearest-neighbor rotation about the image center; out-of-bounds reads are
// zero.
std::vector<double> rotate_image(const std::vector<double>& img, int side,
                                 double angle) {
    std::vector<double> out(img.size(), 0.0);
    double center = (side - 1) / 2.0;
    double c = std::cos(angle), s = std::sin(angle);
    for (int r = 0; r < side; ++r) {
        for (int col = 0; col < side; ++col) {
            // Inverse map into the source image.
            double dy = r - center, dx = col - center;
            double sy = c * dy + s * dx + center;
            double sx = -s * dy + c * dx + center;
            int ry = static_cast<int>(std::lround(sy));
            int rx = static_cast<int>(std::lround(sx));
            if (ry >= 0 && ry < side && rx >= 0 && rx < side)
                out[static_cast<std::size_t>(r) * side + col] =
                    img[static_cast<std::size_t>(ry) * side + rx];
        }
    }
    return out;
}

// First principal direction of the fragment's features (top eigenvector of
// the covariance matrix).
std::vector<double> principal_direction(const Fragment& frag) {
    const int d = static_cast<int>(frag.examples.front().x.size());
    const int n = frag.n();
    std::vector<double> mean(d, 0.0);
    for (const Example& ex : frag.examples)
        for (int j = 0; j < d; ++j) mean[j] += ex.x[j];
    for (double& m : mean) m /= n;
    SymMatrix cov(d);
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            double s = 0.0;
            for (const Example& ex : frag.examples)
                s += (ex.x[a] - mean[a]) * (ex.x[b] - mean[b]);
            cov.set(a, b, s / n);
        }
    EigResult eig = sym_eig_small(cov);
    return eig.eigenvectors.front();
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Standardizer {
    std::vector<double> mean, scale;

    static Standardizer fit(const std::vector<const Example*>& examples, int d) {
        Standardizer st;
        st.mean.assign(d, 0.0);
        st.scale.assign(d, 1.0);
        if (examples.empty()) return st;
        for (const Example* ex : examples)
            for (int j = 0; j < d; ++j) st.mean[j] += ex->x[j];
        for (double& m : st.mean) m /= static_cast<double>(examples.size());
        std::vector<double> var(d, 0.0);
        for (const Example* ex : examples)
            for (int j = 0; j < d; ++j)
                var[j] += (ex->x[j] - st.mean[j]) * (ex->x[j] - st.mean[j]);
        for (int j = 0; j < d; ++j) {
            double v = var[j] / static_cast<double>(examples.size());
            st.scale[j] = v > 1e-12 ? std::sqrt(v) : 1.0;
        }
        return st;
    }

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> out(x.size());
        for (std::size_t j = 0; j < x.size(); ++j)
            out[j] = (x[j] - mean[j]) / scale[j];
        return out;
    }
};

// Mann-Whitney AUC with average ranks for ties; 0.5 when only one class is
// present.
double rank_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }
    double pos_ranks = 0.0;
    long n_pos = 0, n_neg = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (labels[t] == 1) {
            pos_ranks += rank[t];
            ++n_pos;
        } else {
            ++n_neg;
        }
    }
    if (n_pos == 0 || n_neg == 0) return 0.5;
    return (pos_ranks - static_cast<double>(n_pos) * (n_pos + 1) / 2.0) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

Fragment induce_shift(const Fragment& frag, const ShiftSpec& spec, ShiftRole role,
                      Rng& rng) {
    if (frag.examples.empty()) throw DataError("induce_shift: empty fragment");
    Fragment out = frag;
    switch (spec.kind) {
        case ShiftKind::none:
            return out;
        case ShiftKind::rotation_beta: {
            if (spec.beta_a <= 0.0 || spec.beta_b <= 0.0)
                throw ConfigError("induce_shift: beta parameters must be positive");
            const int d = static_cast<int>(frag.examples.front().x.size());
            int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
            bool is_point = d == 2;
            bool is_image = !is_point && side >= 2 && side * side == d;
            if (!is_point && !is_image)
                throw DataError(
                    "induce_shift: rotation needs 2-d points or square images");
            double a = spec.beta_a, b = spec.beta_b;
            if (role == ShiftRole::test && spec.swap_for_test) std::swap(a, b);
            for (Example& ex : out.examples) {
                double angle = kPi * rng.beta(a, b);
                ex.x = is_point ? rotate_point(ex.x, angle)
                                : rotate_image(ex.x, side, angle);
            }
            return out;
        }
        case ShiftKind::tabular_bias: {
            if (role == ShiftRole::test) return out;  // bias the training sample only
            std::vector<double> dir = principal_direction(frag);
            std::vector<double> proj(frag.n());
            for (int i = 0; i < frag.n(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < dir.size(); ++j)
                    s += dir[j] * frag.examples[i].x[j];
                proj[i] = s;
            }
            double mean = pairwise_sum(proj) / frag.n();
            double var = 0.0;
            for (double p : proj) var += (p - mean) * (p - mean);
            var /= frag.n();
            double sd = var > 1e-12 ? std::sqrt(var) : 1.0;
            std::vector<double> keep_p(frag.n());
            double expected = 0.0;
            for (int i = 0; i < frag.n(); ++i) {
                keep_p[i] = sigmoid(spec.strength * (proj[i] - mean) / sd);
                expected += keep_p[i];
            }
            expected /= frag.n();
            if (expected < 0.3) {
                double scale = 0.3 / expected;
                for (double& p : keep_p) p = std::min(1.0, p * scale);
            }
            for (int attempt = 0; attempt < 100; ++attempt) {
                Fragment kept = frag;
                kept.examples.clear();
                for (int i = 0; i < frag.n(); ++i)
                    if (rng.uniform01() < keep_p[i])
                        kept.examples.push_back(frag.examples[i]);
                if (!kept.examples.empty()) return kept;
            }
            throw DataError("induce_shift: subsampling kept nothing");
        }
        case ShiftKind::gaussian_mean: {
            if (role == ShiftRole::test) return out;
            if (spec.delta.size() != frag.examples.front().x.size())
                throw DimensionError("induce_shift: delta length mismatch");
            for (Example& ex : out.examples)
                for (std::size_t j = 0; j < ex.x.size(); ++j) ex.x[j] += spec.delta[j];
            return out;
        }
    }
    return out;
}

DensityRatio estimate_density_ratio(const Fragment& train_frag,
                                    const Fragment& val_frag, Rng& rng) {
    if (train_frag.examples.empty() || val_frag.examples.empty())
        throw DataError("estimate_density_ratio: empty fragment");
    const int d = static_cast<int>(train_frag.examples.front().x.size());

    // Balance by subsampling the larger side without replacement.
    auto pick = [&](const Fragment& frag, std::size_t m) {
        std::vector<int> idx(frag.n());
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        idx.resize(m);
        std::sort(idx.begin(), idx.end());
        std::vector<const Example*> out;
        out.reserve(m);
        for (int i : idx) out.push_back(&frag.examples[i]);
        return out;
    };
    std::size_t m = std::min(train_frag.examples.size(), val_frag.examples.size());
    std::vector<const Example*> side_train = pick(train_frag, m);
    std::vector<const Example*> side_val = pick(val_frag, m);

    // Domain-labeled union: 1 = fragment, 0 = validation.
    std::vector<const Example*> pool;
    std::vector<int> domain;
    for (const Example* ex : side_train) {
        pool.push_back(ex);
        domain.push_back(1);
    }
    for (const Example* ex : side_val) {
        pool.push_back(ex);
        domain.push_back(0);
    }
    std::vector<int> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::size_t train_count = std::max<std::size_t>(1, (pool.size() * 7) / 10);

    std::vector<const Example*> fit_pool;
    for (std::size_t i = 0; i < train_count; ++i) fit_pool.push_back(pool[order[i]]);
    Standardizer st = Standardizer::fit(fit_pool, d);

    Fragment classifier_train;
    classifier_train.id = "domain";
    for (std::size_t i = 0; i < train_count; ++i) {
        Example ex;
        ex.x = st.apply(pool[order[i]]->x);
        ex.y = domain[order[i]];
        classifier_train.examples.push_back(std::move(ex));
    }

    ModelSpec logistic;
    logistic.input_dim = d;
    logistic.num_classes = 2;
    Rng init_rng = rng.split("domain/init");
    ParamVec theta = init_params(logistic, init_rng);
    // Full-batch descent; 500 epochs at a scale-aware step is plenty for a
    // linear separator.
    const double eta = std::min(1.0, 4.0 / d);
    for (int epoch = 0; epoch < 500; ++epoch) {
        LossGrad lg = loss_and_grad(logistic, theta, classifier_train);
        theta = axpy(-eta, lg.grad, theta);
    }

    auto clamped_prob = [&](const std::vector<double>& x) {
        double s = predict_proba(logistic, theta, st.apply(x))[1];
        return std::clamp(s, 1e-6, 1.0 - 1e-6);
    };

    DensityRatio result;
    result.r_hat.reserve(train_frag.examples.size());
    for (const Example& ex : train_frag.examples) {
        double s = clamped_prob(ex.x);
        result.r_hat.push_back(s / (1.0 - s));
    }

    std::vector<double> heldout_scores;
    std::vector<int> heldout_labels;
    for (std::size_t i = train_count; i < order.size(); ++i) {
        heldout_scores.push_back(clamped_prob(pool[order[i]]->x));
        heldout_labels.push_back(domain[order[i]]);
    }
    result.auc = heldout_scores.empty() ? 0.5 : rank_auc(heldout_scores, heldout_labels);
    return result;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("quantile: empty sample");
    q = std::clamp(q, 0.0, 1.0);
    std::sort(values.begin(), values.end());
    double h = (static_cast<double>(values.size()) - 1.0) * q;
    std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= values.size()) return values.back();
    double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

DiagnosticsReport diagnostics(const Fragment& train_frag, const Fragment& val_frag,
                              const ParamVec& theta_i, const ParamVec& theta_val,
                              const FisherEstimate& i_val, Rng& rng) {
    if (theta_i.size() != theta_val.size())
        throw DimensionError("diagnostics: parameter length mismatch");
    DensityRatio dr = estimate_density_ratio(train_frag, val_frag, rng);

    DiagnosticsReport report;
    report.auc = dr.auc;
    std::vector<double> dev(dr.r_hat.size());
    std::vector<double> logs(dr.r_hat.size());
    for (std::size_t i = 0; i < dr.r_hat.size(); ++i) {
        dev[i] = std::abs(dr.r_hat[i] - 1.0);
        logs[i] = std::log(dr.r_hat[i]);
    }
    report.gamma_hat_q = quantile(dev, 0.99);
    report.kl_hat = pairwise_sum(logs) / static_cast<double>(logs.size());

    ParamVec delta(theta_i.size());
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] = theta_i[j] - theta_val[j];
    report.fisher_quadratic = 0.5 * i_val.quad_form(delta);
    report.delta_f = std::sqrt(2.0 * report.fisher_quadratic);
    return report;
}

}  // namespace fire
