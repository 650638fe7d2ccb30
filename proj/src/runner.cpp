#include "fire/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fire/csvio.hpp"
#include "fire/datasets.hpp"

namespace fire {

namespace {

namespace fs = std::filesystem;

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("failed writing " + path.string());
}

struct PreparedData {
    ModelSpec spec;
    Fragment train_pool;
    Fragment val;
    std::vector<Fragment> fragments;
};

PreparedData prepare_data(const ExperimentConfig& cfg, bool fragment_train) {
    Rng root(cfg.seed);
    Fragment full;
    switch (cfg.data.kind) {
        case DatasetKind::synthetic_blobs: {
            Rng rng = root.split("data");
            full = make_blobs(cfg.data.n, cfg.data.classes, cfg.data.dim,
                              cfg.data.noise, rng);
            break;
        }
        case DatasetKind::two_moons: {
            Rng rng = root.split("data");
            full = make_two_moons(cfg.data.n, cfg.data.noise, rng);
            break;
        }
        case DatasetKind::csv:
            full = load_csv_dataset(cfg.data.path, cfg.data.label_column,
                                    /*standardize=*/false);
            break;
    }

    int classes = 0;
    for (const Example& ex : full.examples) classes = std::max(classes, ex.y + 1);
    classes = std::max(classes, 2);

    Rng split_rng = root.split("split");
    auto [train_pool, val] = split_train_val(full, cfg.split.val_fraction, split_rng);

    if (cfg.data.kind == DatasetKind::csv) {
        // Standardization statistics come from the training split only.
        FeatureStats stats = FeatureStats::fit(train_pool);
        train_pool = stats.apply(train_pool);
        val = stats.apply(val);
    }

    if (cfg.shift.kind != ShiftKind::none) {
        Rng train_rng = root.split("shift/train");
        Rng test_rng = root.split("shift/test");
        train_pool = induce_shift(train_pool, cfg.shift, ShiftRole::train, train_rng);
        val = induce_shift(val, cfg.shift, ShiftRole::test, test_rng);
    }

    PreparedData data;
    data.spec.input_dim = static_cast<int>(full.examples.front().x.size());
    data.spec.num_classes = classes;
    data.spec.hidden_sizes = cfg.hidden_sizes;
    data.train_pool = std::move(train_pool);
    data.val = std::move(val);
    if (fragment_train)
        data.fragments = make_fragments(
            data.train_pool, cfg.split.fragments,
            cfg.mode == RunMode::folds ? Provenance::fold : Provenance::batch);
    return data;
}

void run_batch_mode(const ExperimentConfig& cfg, const fs::path& out_dir) {
    PreparedData data = prepare_data(cfg, /*fragment_train=*/true);
    TrainResult result =
        train_fire_batchwise(data.spec, data.fragments, data.val, cfg.train);
    std::ostringstream trace;
    result.trace.write_csv(trace);
    write_file(out_dir / "trace.csv", trace.str());
}

void run_federated_mode(const ExperimentConfig& cfg, const fs::path& out_dir) {
    PreparedData data = prepare_data(cfg, /*fragment_train=*/false);
    FedRunResult result = run_federated(data.spec, data.train_pool, data.val, cfg.fed);

    std::ostringstream rounds;
    rounds << "round,val_acc,global_loss,bytes_up_total,bytes_down_total\n";
    for (const RoundMetrics& m : result.metrics)
        rounds << m.round << ',' << csv::real(m.val_acc) << ','
               << csv::real(m.global_loss) << ',' << m.bytes_up_total << ','
               << m.bytes_down_total << '\n';
    write_file(out_dir / "rounds.csv", rounds.str());

    std::ostringstream comm;
    comm << "round,direction,client_id,payload_bytes\n";
    for (const CommEntry& e : result.server.comm_log)
        comm << e.round << ','
             << (e.direction == CommDirection::up ? "up" : "down") << ','
             << e.client_id << ',' << e.payload_bytes << '\n';
    write_file(out_dir / "comm_log.csv", comm.str());
}

void run_diagnostics_mode(const ExperimentConfig& cfg, const fs::path& out_dir) {
    PreparedData data = prepare_data(cfg, /*fragment_train=*/true);
    Rng root(cfg.seed);

    // Validation-adapted parameters and the validation FIM at them.
    TrainConfig base = cfg.train;
    base.lambda = 0.0;
    TrainResult val_fit =
        train_sgd_baseline(data.spec, {data.val}, data.val, base);
    FisherEstimate i_val =
        empirical_fim(data.spec, val_fit.theta, data.val, cfg.train.fisher);

    std::ostringstream out;
    out << "fragment_id,gamma_hat_q,auc,kl_hat,fisher_quadratic,delta_f\n";
    for (std::size_t f = 0; f < data.fragments.size(); ++f) {
        TrainResult frag_fit =
            train_sgd_baseline(data.spec, {data.fragments[f]}, data.val, base);
        Rng diag_rng = root.split("diagnostics", f);
        DiagnosticsReport report =
            diagnostics(data.fragments[f], data.val, frag_fit.theta, val_fit.theta,
                        i_val, diag_rng);
        out << data.fragments[f].id << ',' << csv::real(report.gamma_hat_q) << ','
            << csv::real(report.auc) << ',' << csv::real(report.kl_hat) << ','
            << csv::real(report.fisher_quadratic) << ',' << csv::real(report.delta_f)
            << '\n';
    }
    write_file(out_dir / "diagnostics.csv", out.str());
}

const char* family_name(Family f) {
    switch (f) {
        case Family::bernoulli: return "bernoulli";
        case Family::categorical: return "categorical";
        case Family::gaussian_fixed_var: return "gaussian_fixed_var";
    }
    return "?";
}

void run_theory_mode(const ExperimentConfig& cfg, const fs::path& out_dir) {
    std::vector<TheoryTrial> trials = theory_suite(cfg.theory_trials, cfg.seed);
    std::ostringstream out;
    write_theory_csv(trials, out);
    write_file(out_dir / "theory.csv", out.str());
    for (const TheoryTrial& t : trials)
        if (!t.record.holds)
            throw NumericError("theory suite: bound violated at trial " +
                               std::to_string(t.trial));
}

}  // namespace

std::vector<TheoryTrial> theory_suite(int trials, std::uint64_t seed) {
    if (trials < 1) throw ConfigError("theory suite: trials must be >= 1");
    std::vector<TheoryTrial> out(trials);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) num_threads(worker_threads())
#endif
    for (int i = 0; i < trials; ++i) {
        Rng rng = Rng(seed).split("theory/trial", static_cast<std::uint64_t>(i));
        TheoryTrial trial;
        trial.trial = i;
        trial.family = static_cast<Family>(i % 3);
        trial.gamma = (i % 10 == 0) ? 0.0 : rng.uniform(0.0, 0.5);

        std::vector<double> theta_val, theta_i;
        switch (trial.family) {
            case Family::bernoulli: {
                double tv = rng.uniform(0.2, 0.8);
                double step = rng.uniform(0.0, 0.1) * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
                theta_val = {tv};
                theta_i = {tv + step};
                break;
            }
            case Family::categorical: {
                int k = 3 + (i / 3) % 3;
                std::vector<double> p(k);
                double total = 0.0;
                for (int c = 0; c < k; ++c) {
                    p[c] = rng.gamma(2.0);
                    total += p[c];
                }
                // Blend toward uniform so every outcome keeps decent mass.
                for (int c = 0; c < k; ++c)
                    p[c] = 0.5 * p[c] / total + 0.5 / k;
                theta_val.assign(p.begin(), p.end() - 1);
                std::vector<double> dir(k - 1);
                double nrm = 0.0;
                for (double& v : dir) {
                    v = rng.normal();
                    nrm += v * v;
                }
                nrm = std::sqrt(nrm);
                double step = rng.uniform(0.0, 0.05);
                theta_i = theta_val;
                for (;;) {
                    double tail_i = 1.0, tail_v = 1.0;
                    bool ok = true;
                    for (int c = 0; c < k - 1; ++c) {
                        theta_i[c] = theta_val[c] + step * dir[c] / nrm;
                        if (theta_i[c] <= 0.03) ok = false;
                        tail_i -= theta_i[c];
                        tail_v -= theta_val[c];
                    }
                    if (tail_i <= 0.03) ok = false;
                    if (ok || step < 1e-12) break;
                    step *= 0.5;
                }
                break;
            }
            case Family::gaussian_fixed_var: {
                int m = 1 + (i / 3) % 3;
                theta_val.resize(m);
                std::vector<double> dir(m);
                double nrm = 0.0;
                for (int j = 0; j < m; ++j) {
                    theta_val[j] = rng.uniform(-1.0, 1.0);
                    dir[j] = rng.normal();
                    nrm += dir[j] * dir[j];
                }
                nrm = std::sqrt(nrm);
                double step = rng.uniform(0.0, 0.1);
                theta_i = theta_val;
                for (int j = 0; j < m; ++j) theta_i[j] += step * dir[j] / nrm;
                break;
            }
        }
        double d2 = 0.0;
        for (std::size_t j = 0; j < theta_i.size(); ++j)
            d2 += (theta_i[j] - theta_val[j]) * (theta_i[j] - theta_val[j]);
        trial.delta = std::sqrt(d2);
        trial.record = verify_kl_bound_analytic(trial.family, theta_i, theta_val,
                                                trial.gamma);
        out[i] = trial;
    }
    return out;
}

void write_theory_csv(const std::vector<TheoryTrial>& trials, std::ostream& out) {
    out << "trial,family,gamma,delta,kl_true,quad,bound_rhs,holds\n";
    for (const TheoryTrial& t : trials)
        out << t.trial << ',' << family_name(t.family) << ',' << csv::real(t.gamma)
            << ',' << csv::real(t.delta) << ',' << csv::real(t.record.kl_true) << ','
            << csv::real(t.record.quad) << ',' << csv::real(t.record.bound_rhs) << ','
            << (t.record.holds ? "true" : "false") << '\n';
}

int run(const ExperimentConfig& cfg) {
    try {
        fs::path out_dir(cfg.output_dir);
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create output_dir " + cfg.output_dir);

        write_file(out_dir / "manifest.txt", render_manifest(cfg));
        switch (cfg.mode) {
            case RunMode::batch:
            case RunMode::folds:
                run_batch_mode(cfg, out_dir);
                break;
            case RunMode::federated:
                run_federated_mode(cfg, out_dir);
                break;
            case RunMode::diagnostics:
                run_diagnostics_mode(cfg, out_dir);
                break;
            case RunMode::verify_theory:
                run_theory_mode(cfg, out_dir);
                break;
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    }
}

int run_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "io error: cannot open config " << path << "\n";
        return 4;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        ExperimentConfig cfg = parse_config(buffer.str());
        return run(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
}

int run_verify_theory(int trials, std::uint64_t seed, const std::string& output_dir) {
    try {
        std::vector<TheoryTrial> results = theory_suite(trials, seed);
        long violations = 0;
        for (const TheoryTrial& t : results)
            if (!t.record.holds) ++violations;
        if (!output_dir.empty()) {
            ExperimentConfig cfg;
            cfg.mode = RunMode::verify_theory;
            cfg.seed = seed;
            cfg.theory_trials = trials;
            cfg.output_dir = output_dir;
            fs::path out_dir(output_dir);
            std::error_code ec;
            fs::create_directories(out_dir, ec);
            if (ec) throw IoError("cannot create output_dir " + output_dir);
            write_file(out_dir / "manifest.txt", render_manifest(cfg));
            std::ostringstream out;
            write_theory_csv(results, out);
            write_file(out_dir / "theory.csv", out.str());
        }
        std::cout << "verify-theory: trials=" << trials << " violations=" << violations
                  << "\n";
        return violations == 0 ? 0 : 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    }
}

int run_diagnose(const std::string& train_csv, const std::string& val_csv,
                 const std::string& label_column, const std::string& output_dir,
                 std::uint64_t seed) {
    try {
        LabelMap labels;
        Fragment train = load_csv_examples(train_csv, label_column, labels);
        Fragment val = load_csv_examples(val_csv, label_column, labels);
        FeatureStats stats = FeatureStats::fit(train);
        train = stats.apply(train);
        val = stats.apply(val);

        ModelSpec spec;
        spec.input_dim = static_cast<int>(train.examples.front().x.size());
        spec.num_classes = std::max(2, static_cast<int>(labels.classes.size()));

        TrainConfig fit;
        fit.eta = 0.01;
        fit.lambda = 0.0;
        fit.epochs = 500;
        fit.seed = seed;
        TrainResult val_fit = train_sgd_baseline(spec, {val}, val, fit);
        TrainResult frag_fit = train_sgd_baseline(spec, {train}, val, fit);
        FisherConfig fcfg;
        FisherEstimate i_val = empirical_fim(spec, val_fit.theta, val, fcfg);

        Rng rng = Rng(seed).split("diagnose");
        DiagnosticsReport report =
            diagnostics(train, val, frag_fit.theta, val_fit.theta, i_val, rng);

        std::ostringstream out;
        out << "fragment_id,gamma_hat_q,auc,kl_hat,fisher_quadratic,delta_f\n"
            << train.id << ',' << csv::real(report.gamma_hat_q) << ','
            << csv::real(report.auc) << ',' << csv::real(report.kl_hat) << ','
            << csv::real(report.fisher_quadratic) << ',' << csv::real(report.delta_f)
            << '\n';
        std::cout << out.str();
        if (!output_dir.empty()) {
            fs::path dir(output_dir);
            std::error_code ec;
            fs::create_directories(dir, ec);
            if (ec) throw IoError("cannot create output_dir " + output_dir);
            write_file(dir / "diagnostics.csv", out.str());
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace fire
