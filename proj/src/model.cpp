#include "fire/model.hpp"

#include <algorithm>
#include <cmath>

namespace fire {

std::vector<int> ModelSpec::layer_widths() const {
    std::vector<int> widths;
    widths.push_back(input_dim);
    for (int h : hidden_sizes) widths.push_back(h);
    widths.push_back(num_classes);
    return widths;
}

int ModelSpec::param_count() const {
    auto widths = layer_widths();
    int d = 0;
    for (std::size_t l = 1; l < widths.size(); ++l)
        d += (widths[l - 1] + 1) * widths[l];
    return d;
}

namespace {

void validate(const ModelSpec& spec) {
    if (spec.input_dim <= 0) throw DimensionError("model: input_dim must be positive");
    if (spec.num_classes < 2) throw DimensionError("model: num_classes must be >= 2");
    for (int h : spec.hidden_sizes)
        if (h <= 0) throw DimensionError("model: hidden sizes must be positive");
}

void validate_theta(const ModelSpec& spec, const ParamVec& theta) {
    if (static_cast<int>(theta.size()) != spec.param_count())
        throw DimensionError("model: parameter vector has wrong length");
}

void validate_fragment(const ModelSpec& spec, const Fragment& frag, const char* who) {
    for (const Example& ex : frag.examples) {
        if (static_cast<int>(ex.x.size()) != spec.input_dim)
            throw DimensionError(std::string(who) + ": feature length mismatch");
        if (ex.y < 0 || ex.y >= spec.num_classes)
            throw DataError(std::string(who) + ": label out of range");
    }
}

// Weights for layer l live at [offset, offset + out*in) row-major, biases
// follow at [offset + out*in, offset + (in+1)*out).
struct LayerView {
    const double* w;
    const double* b;
    int in, out;
};

std::vector<LayerView> layer_views(const ModelSpec& spec, const double* theta) {
    auto widths = spec.layer_widths();
    std::vector<LayerView> layers;
    const double* p = theta;
    for (std::size_t l = 1; l < widths.size(); ++l) {
        LayerView lv;
        lv.in = widths[l - 1];
        lv.out = widths[l];
        lv.w = p;
        lv.b = p + static_cast<std::size_t>(lv.in) * lv.out;
        p += static_cast<std::size_t>(lv.in + 1) * lv.out;
        layers.push_back(lv);
    }
    return layers;
}

struct ForwardState {
    // activations[0] = input, activations[l] = post-ReLU output of layer l,
    // activations[last] = logits.
    std::vector<std::vector<double>> activations;
    std::vector<std::vector<double>> preact;  // pre-ReLU values per layer
    std::vector<double> probs;
    double log_prob_y = 0.0;
};

ForwardState forward(const std::vector<LayerView>& layers,
                     const std::vector<double>& x, int y) {
    ForwardState st;
    st.activations.push_back(x);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerView& lv = layers[l];
        std::vector<double> z(lv.out);
        const std::vector<double>& a = st.activations.back();
        for (int o = 0; o < lv.out; ++o) {
            double s = lv.b[o];
            const double* wrow = lv.w + static_cast<std::size_t>(o) * lv.in;
            for (int i = 0; i < lv.in; ++i) s += wrow[i] * a[i];
            z[o] = s;
        }
        st.preact.push_back(z);
        if (l + 1 < layers.size()) {
            std::vector<double> act(lv.out);
            for (int o = 0; o < lv.out; ++o) act[o] = z[o] > 0.0 ? z[o] : 0.0;
            st.activations.push_back(std::move(act));
        } else {
            st.activations.push_back(z);
        }
    }
    // Log-softmax with max subtraction.
    const std::vector<double>& logits = st.activations.back();
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    double lse = mx + std::log(sum);
    st.probs.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c)
        st.probs[c] = std::exp(logits[c] - lse);
    if (y >= 0) st.log_prob_y = logits[y] - lse;
    return st;
}

// Writes the score (gradient of log p(y|x)) for one example into out
// (accumulating: out += score).
void accumulate_score(const std::vector<LayerView>& layers, const ForwardState& st,
                      int y, std::span<double> out) {
    const std::size_t L = layers.size();
    // d logits = onehot(y) - probs
    std::vector<double> delta(st.probs.size());
    for (std::size_t c = 0; c < delta.size(); ++c)
        delta[c] = (static_cast<int>(c) == y ? 1.0 : 0.0) - st.probs[c];

    // Backward through layers, writing gradient blocks in parameter order.
    std::vector<std::size_t> offsets(L);
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
        offsets[l] = off;
        off += static_cast<std::size_t>(layers[l].in + 1) * layers[l].out;
    }
    std::vector<double> cur = delta;
    for (std::size_t l = L; l-- > 0;) {
        const LayerView& lv = layers[l];
        const std::vector<double>& a_prev = st.activations[l];
        double* wgrad = out.data() + offsets[l];
        double* bgrad = wgrad + static_cast<std::size_t>(lv.in) * lv.out;
        for (int o = 0; o < lv.out; ++o) {
            double d = cur[o];
            double* wrow = wgrad + static_cast<std::size_t>(o) * lv.in;
            for (int i = 0; i < lv.in; ++i) wrow[i] += d * a_prev[i];
            bgrad[o] += d;
        }
        if (l == 0) break;
        std::vector<double> prev(lv.in, 0.0);
        for (int i = 0; i < lv.in; ++i) {
            double s = 0.0;
            for (int o = 0; o < lv.out; ++o)
                s += lv.w[static_cast<std::size_t>(o) * lv.in + i] * cur[o];
            // ReLU subgradient, zero at zero.
            prev[i] = st.preact[l - 1][i] > 0.0 ? s : 0.0;
        }
        cur = std::move(prev);
    }
}

}  // namespace

ParamVec init_params(const ModelSpec& spec, Rng& rng) {
    validate(spec);
    ParamVec theta(spec.param_count(), 0.0);
    auto widths = spec.layer_widths();
    std::size_t off = 0;
    for (std::size_t l = 1; l < widths.size(); ++l) {
        int in = widths[l - 1], out = widths[l];
        double bound = std::sqrt(6.0 / (in + out));
        for (int o = 0; o < out; ++o)
            for (int i = 0; i < in; ++i)
                theta[off + static_cast<std::size_t>(o) * in + i] = rng.uniform(-bound, bound);
        off += static_cast<std::size_t>(in + 1) * out;  // biases stay zero
    }
    return theta;
}

ParamVec initial_theta(const ModelSpec& spec, std::uint64_t seed) {
    Rng rng = Rng(seed).split("model/init");
    return init_params(spec, rng);
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParamVec& theta,
                       const Fragment& frag) {
    validate(spec);
    validate_theta(spec, theta);
    if (frag.examples.empty()) throw DataError("loss_and_grad: empty fragment");
    validate_fragment(spec, frag, "loss_and_grad");
    const std::size_t n = frag.examples.size();
    const std::size_t d = theta.size();
    auto layers = layer_views(spec, theta.data());

    std::vector<double> losses(n, 0.0);
    // Per-example minus-score contributions, summed blockwise in fixed order.
    ParamVec grad = pairwise_vector_sum(
        n, d, [&](std::size_t i, std::span<double> into) {
            const Example& ex = frag.examples[i];
            ForwardState st = forward(layers, ex.x, ex.y);
            losses[i] = -st.log_prob_y;
            std::vector<double> score(d, 0.0);
            accumulate_score(layers, st, ex.y, std::span<double>(score));
            for (std::size_t j = 0; j < d; ++j) into[j] -= score[j];
        });
    double inv_n = 1.0 / static_cast<double>(n);
    for (double& g : grad) g *= inv_n;
    double loss = pairwise_sum(losses) * inv_n;
    if (!std::isfinite(loss)) throw NumericError("loss_and_grad: non-finite loss");
    check_finite(grad, "loss_and_grad gradient");
    return {loss, std::move(grad)};
}

ParamVec per_sample_score(const ModelSpec& spec, const ParamVec& theta,
                          const Example& ex) {
    validate(spec);
    validate_theta(spec, theta);
    if (static_cast<int>(ex.x.size()) != spec.input_dim)
        throw DimensionError("per_sample_score: feature length mismatch");
    auto layers = layer_views(spec, theta.data());
    ForwardState st = forward(layers, ex.x, ex.y);
    ParamVec score(theta.size(), 0.0);
    accumulate_score(layers, st, ex.y, std::span<double>(score));
    check_finite(score, "per_sample_score");
    return score;
}

std::vector<double> score_matrix(const ModelSpec& spec, const ParamVec& theta,
                                 const Fragment& frag) {
    validate(spec);
    validate_theta(spec, theta);
    if (frag.examples.empty()) throw DataError("score_matrix: empty fragment");
    validate_fragment(spec, frag, "score_matrix");
    const std::size_t n = frag.examples.size();
    const std::size_t d = theta.size();
    std::vector<double> scores(n * d, 0.0);
    auto layers = layer_views(spec, theta.data());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(worker_threads())
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        const Example& ex = frag.examples[i];
        ForwardState st = forward(layers, ex.x, ex.y);
        accumulate_score(layers, st, ex.y,
                         std::span<double>(scores.data() + i * d, d));
    }
    return scores;
}

std::vector<double> predict_proba(const ModelSpec& spec, const ParamVec& theta,
                                  const std::vector<double>& x) {
    validate(spec);
    validate_theta(spec, theta);
    auto layers = layer_views(spec, theta.data());
    return forward(layers, x, -1).probs;
}

double accuracy(const ModelSpec& spec, const ParamVec& theta, const Fragment& frag) {
    validate(spec);
    validate_theta(spec, theta);
    if (frag.examples.empty()) throw DataError("accuracy: empty fragment");
    validate_fragment(spec, frag, "accuracy");
    auto layers = layer_views(spec, theta.data());
    long correct = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : correct) num_threads(worker_threads())
#endif
    for (long long i = 0; i < static_cast<long long>(frag.examples.size()); ++i) {
        const Example& ex = frag.examples[i];
        ForwardState st = forward(layers, ex.x, -1);
        int best = 0;
        for (std::size_t c = 1; c < st.probs.size(); ++c)
            if (st.probs[c] > st.probs[best]) best = static_cast<int>(c);
        if (best == ex.y) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(frag.examples.size());
}

}  // namespace fire
