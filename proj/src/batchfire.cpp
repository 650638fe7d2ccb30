#include "fire/batchfire.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "fire/csvio.hpp"

namespace fire {

void TrainTrace::write_csv(std::ostream& out) const {
    out << "step,epoch,batch,loss,grad_norm_sq,precond_grad_norm_sq,"
           "penalized_loss,val_acc\n";
    for (const TraceRow& r : rows) {
        out << r.step << ',' << r.epoch << ',' << r.batch << ','
            << csv::real(r.loss) << ',' << csv::real(r.grad_norm_sq) << ','
            << csv::real(r.precond_grad_norm_sq) << ','
            << csv::real(r.penalized_loss) << ',' << csv::real(r.val_acc) << '\n';
    }
}

TrainResult train_fire_batchwise(const ModelSpec& spec,
                                 const std::vector<Fragment>& fragments,
                                 const Fragment& val, const TrainConfig& cfg) {
    if (fragments.empty()) throw DataError("train: no fragments");
    if (val.examples.empty()) throw DataError("train: empty validation set");
    if (cfg.eta <= 0.0) throw ConfigError("train: eta must be positive");
    if (cfg.lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
    if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");

    ParamVec theta = initial_theta(spec, cfg.seed);
    const bool use_fim = cfg.lambda > 0.0;

    FisherEstimate i_val, i_global;
    if (use_fim) {
        i_val = empirical_fim(spec, theta, val, cfg.fisher);
        i_global = FisherEstimate::zero(cfg.fisher.kind, spec.param_count());
    }

    TrainResult result;
    long step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t b = 0; b < fragments.size(); ++b) {
            ++step;
            if (use_fim && cfg.fisher.refresh_every_batches > 0 && step > 1 &&
                (step - 1) % cfg.fisher.refresh_every_batches == 0)
                i_val = empirical_fim(spec, theta, val, cfg.fisher);

            LossGrad lg = loss_and_grad(spec, theta, fragments[b]);
            if (!std::isfinite(lg.loss))
                throw NumericError("train: non-finite loss at step " + std::to_string(step));

            ParamVec update = lg.grad;
            double penalty = 0.0;
            if (use_fim) {
                FisherEstimate i_batch =
                    empirical_fim(spec, theta, fragments[b], cfg.fisher);
                FisherEstimate i_mixed = mix_fim(i_batch, i_val, cfg.fisher.mix_mu);
                i_global = ema_update(i_global, i_mixed, cfg.fisher.momentum_alpha);
                update = apply_preconditioner(i_global, lg.grad, cfg.lambda);
                penalty = cfg.lambda * trace_penalty(i_global);
            }
            for (double v : update)
                if (!std::isfinite(v))
                    throw NumericError("train: non-finite update at step " +
                                       std::to_string(step));

            theta = axpy(-cfg.eta, update, theta);

            TraceRow row;
            row.step = step;
            row.epoch = epoch;
            row.batch = static_cast<int>(b);
            row.loss = lg.loss;
            row.grad_norm_sq = norm_sq(lg.grad);
            row.precond_grad_norm_sq = norm_sq(update);
            row.penalized_loss = lg.loss + penalty;
            row.val_acc = accuracy(spec, theta, val);
            result.trace.rows.push_back(row);
        }
    }
    result.theta = std::move(theta);
    return result;
}

TrainResult train_sgd_baseline(const ModelSpec& spec,
                               const std::vector<Fragment>& fragments,
                               const Fragment& val, const TrainConfig& cfg) {
    TrainConfig plain = cfg;
    plain.lambda = 0.0;
    return train_fire_batchwise(spec, fragments, val, plain);
}

StepSizeCheck check_step_size(double l_smooth, double lambda, double g_bound,
                              double eta) {
    if (l_smooth <= 0.0) throw ConfigError("check_step_size: L must be positive");
    if (g_bound < 0.0) throw ConfigError("check_step_size: G must be >= 0");
    if (lambda < 0.0) throw ConfigError("check_step_size: lambda must be >= 0");
    double cap = 1.0 / (l_smooth * (1.0 + lambda * g_bound) * (1.0 + lambda * g_bound));
    return eta <= cap ? StepSizeCheck::ok : StepSizeCheck::too_large;
}

}  // namespace fire
