#include "fire/reference.hpp"

#include <cmath>

namespace fire::reference {

namespace {

// Self-contained forward pass; deliberately not the production code.
double example_log_likelihood(const ModelSpec& spec, const ParamVec& theta,
                              const Example& ex) {
    auto widths = spec.layer_widths();
    std::vector<double> act = ex.x;
    std::size_t off = 0;
    for (std::size_t l = 1; l < widths.size(); ++l) {
        int in = widths[l - 1], out_w = widths[l];
        std::vector<double> z(out_w, 0.0);
        for (int o = 0; o < out_w; ++o) {
            double s = theta[off + static_cast<std::size_t>(out_w) * in + o];  // bias
            for (int i = 0; i < in; ++i)
                s += theta[off + static_cast<std::size_t>(o) * in + i] * act[i];
            z[o] = s;
        }
        off += static_cast<std::size_t>(in + 1) * out_w;
        if (l + 1 < widths.size())
            for (double& v : z) v = v > 0.0 ? v : 0.0;
        act = std::move(z);
    }
    double mx = act[0];
    for (double v : act) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : act) sum += std::exp(v - mx);
    return act[ex.y] - (mx + std::log(sum));
}

}  // namespace

SymMatrix empirical_fim_full(const ModelSpec& spec, const ParamVec& theta,
                             const Fragment& frag) {
    const int d = spec.param_count();
    const int n = frag.n();
    SymMatrix m(d);
    for (const Example& ex : frag.examples) {
        ParamVec s = per_sample_score(spec, theta, ex);
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b) m.add(a, b, s[a] * s[b]);
    }
    for (double& v : m.packed()) v /= static_cast<double>(n);
    return m;
}

std::vector<double> empirical_fim_diagonal(const ModelSpec& spec,
                                           const ParamVec& theta,
                                           const Fragment& frag) {
    const int d = spec.param_count();
    std::vector<double> diag(d, 0.0);
    for (const Example& ex : frag.examples) {
        ParamVec s = per_sample_score(spec, theta, ex);
        for (int a = 0; a < d; ++a) diag[a] += s[a] * s[a];
    }
    for (double& v : diag) v /= static_cast<double>(frag.n());
    return diag;
}

double mean_loss(const ModelSpec& spec, const ParamVec& theta, const Fragment& frag) {
    double total = 0.0;
    for (const Example& ex : frag.examples)
        total += -example_log_likelihood(spec, theta, ex);
    return total / static_cast<double>(frag.n());
}

ParamVec mean_grad(const ModelSpec& spec, const ParamVec& theta, const Fragment& frag) {
    ParamVec grad(theta.size(), 0.0);
    for (const Example& ex : frag.examples) {
        ParamVec s = per_sample_score(spec, theta, ex);
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] -= s[j];
    }
    for (double& g : grad) g /= static_cast<double>(frag.n());
    return grad;
}

ParamVec fd_gradient(const ModelSpec& spec, const ParamVec& theta,
                     const Fragment& frag, double h) {
    ParamVec grad(theta.size(), 0.0);
    ParamVec probe = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        probe[j] = theta[j] + h;
        double up = mean_loss(spec, probe, frag);
        probe[j] = theta[j] - h;
        double down = mean_loss(spec, probe, frag);
        probe[j] = theta[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    return grad;
}

ParamVec fd_score(const ModelSpec& spec, const ParamVec& theta, const Example& ex,
                  double h) {
    ParamVec score(theta.size(), 0.0);
    ParamVec probe = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        probe[j] = theta[j] + h;
        double up = example_log_likelihood(spec, probe, ex);
        probe[j] = theta[j] - h;
        double down = example_log_likelihood(spec, probe, ex);
        probe[j] = theta[j];
        score[j] = (up - down) / (2.0 * h);
    }
    return score;
}

}  // namespace fire::reference
