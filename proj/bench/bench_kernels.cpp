// Compares the OpenMP kernels against the straight-loop serial reference:
// wall time plus a max-abs-difference column, since the two paths must agree
// to near machine precision.

#include <chrono>
#include <cmath>
#include <cstdio>

#include "fire/datasets.hpp"
#include "fire/fisher.hpp"
#include "fire/model.hpp"
#include "fire/reference.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double time_ms(F&& fn, int reps) {
    auto start = Clock::now();
    for (int r = 0; r < reps; ++r) fn();
    auto stop = Clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", fire::worker_threads());
#else
    std::printf("threads: 1 (OpenMP disabled)\n");
#endif
    std::printf("%-28s %10s %10s %9s %12s\n", "kernel", "serial ms", "parallel",
                "speedup", "max |diff|");

    fire::Rng rng(7);
    for (auto [n, dim, hidden] : {std::tuple{512, 8, 16}, std::tuple{2048, 16, 32}}) {
        fire::ModelSpec spec;
        spec.input_dim = dim;
        spec.num_classes = 4;
        spec.hidden_sizes = {hidden};
        fire::Rng data_rng = rng.split("data", n);
        fire::Fragment frag = fire::make_blobs(n, 4, dim, 0.6, data_rng);
        fire::Rng init_rng = rng.split("init", n);
        fire::ParamVec theta = fire::init_params(spec, init_rng);
        const int d = spec.param_count();

        // Mean gradient.
        fire::LossGrad lg;
        double t_par = time_ms([&] { lg = fire::loss_and_grad(spec, theta, frag); }, 3);
        fire::ParamVec ref_grad;
        double t_ser =
            time_ms([&] { ref_grad = fire::reference::mean_grad(spec, theta, frag); }, 3);
        double diff = 0.0;
        for (int j = 0; j < d; ++j)
            diff = std::max(diff, std::abs(lg.grad[j] - ref_grad[j]));
        std::printf("%-28s %10.2f %10.2f %8.1fx %12.3e\n",
                    ("grad n=" + std::to_string(n) + " d=" + std::to_string(d)).c_str(),
                    t_ser, t_par, t_ser / t_par, diff);

        // Full empirical FIM.
        fire::FisherConfig fcfg;
        fire::FisherEstimate est;
        t_par = time_ms([&] { est = fire::empirical_fim(spec, theta, frag, fcfg); }, 1);
        fire::SymMatrix ref;
        t_ser = time_ms(
            [&] { ref = fire::reference::empirical_fim_full(spec, theta, frag); }, 1);
        diff = 0.0;
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b)
                diff = std::max(diff, std::abs(est.full().at(a, b) - ref.at(a, b)));
        std::printf("%-28s %10.2f %10.2f %8.1fx %12.3e\n",
                    ("fim  n=" + std::to_string(n) + " d=" + std::to_string(d)).c_str(),
                    t_ser, t_par, t_ser / t_par, diff);
    }
    return 0;
}
