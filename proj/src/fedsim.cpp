#include "fire/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fire {

namespace {

constexpr int kPartitionRetries = 100;

std::vector<Fragment> build_fragments(const Fragment& full,
                                      const std::vector<std::vector<int>>& assignment) {
    std::vector<Fragment> out;
    out.reserve(assignment.size());
    for (std::size_t c = 0; c < assignment.size(); ++c) {
        Fragment frag;
        frag.id = "client" + std::to_string(c);
        frag.provenance = Provenance::client;
        frag.provenance_index = static_cast<int>(c);
        for (int idx : assignment[c]) frag.examples.push_back(full.examples[idx]);
        out.push_back(std::move(frag));
    }
    return out;
}

bool all_nonempty(const std::vector<std::vector<int>>& assignment) {
    return std::all_of(assignment.begin(), assignment.end(),
                       [](const auto& a) { return !a.empty(); });
}

}  // namespace

std::vector<Fragment> partition_dataset(const Fragment& full, const FedConfig& cfg,
                                        Rng& rng) {
    const int k = cfg.num_clients;
    if (k < 1) throw ConfigError("partition: num_clients must be >= 1");
    if (full.n() < k) throw DataError("partition: fewer examples than clients");

    for (int attempt = 0; attempt < kPartitionRetries; ++attempt) {
        std::vector<std::vector<int>> assignment(k);
        switch (cfg.partition.kind) {
            case PartitionKind::iid: {
                std::vector<int> order(full.n());
                std::iota(order.begin(), order.end(), 0);
                rng.shuffle(order);
                for (int i = 0; i < full.n(); ++i)
                    assignment[i % k].push_back(order[i]);
                break;
            }
            case PartitionKind::dirichlet: {
                double beta = cfg.partition.dirichlet_beta;
                if (beta <= 0.0)
                    throw ConfigError("partition: dirichlet beta must be positive");
                int classes = 0;
                for (const Example& ex : full.examples)
                    classes = std::max(classes, ex.y + 1);
                std::vector<std::vector<int>> by_class(classes);
                for (int i = 0; i < full.n(); ++i)
                    by_class[full.examples[i].y].push_back(i);
                for (auto& members : by_class) {
                    if (members.empty()) continue;
                    rng.shuffle(members);
                    // Client proportions for this class.
                    std::vector<double> p(k);
                    double total = 0.0;
                    for (int c = 0; c < k; ++c) {
                        p[c] = rng.gamma(beta);
                        total += p[c];
                    }
                    double cum = 0.0;
                    std::size_t start = 0;
                    for (int c = 0; c < k; ++c) {
                        cum += p[c] / total;
                        std::size_t stop =
                            (c == k - 1) ? members.size()
                                         : std::min<std::size_t>(
                                               members.size(),
                                               static_cast<std::size_t>(
                                                   std::llround(cum * members.size())));
                        for (std::size_t i = start; i < stop; ++i)
                            assignment[c].push_back(members[i]);
                        start = std::max(start, stop);
                    }
                }
                break;
            }
            case PartitionKind::shard: {
                int per_client = cfg.partition.shards_per_client;
                if (per_client < 1)
                    throw ConfigError("partition: shards_per_client must be >= 1");
                std::vector<int> order(full.n());
                std::iota(order.begin(), order.end(), 0);
                // Sort by label, stable in original order.
                std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                    return full.examples[a].y < full.examples[b].y;
                });
                int shards = k * per_client;
                std::vector<int> shard_ids(shards);
                std::iota(shard_ids.begin(), shard_ids.end(), 0);
                rng.shuffle(shard_ids);
                for (int s = 0; s < shards; ++s) {
                    int client = s / per_client;
                    int shard = shard_ids[s];
                    std::size_t lo = static_cast<std::size_t>(shard) * full.n() / shards;
                    std::size_t hi =
                        static_cast<std::size_t>(shard + 1) * full.n() / shards;
                    for (std::size_t i = lo; i < hi; ++i)
                        assignment[client].push_back(order[i]);
                }
                break;
            }
        }
        if (all_nonempty(assignment)) return build_fragments(full, assignment);
    }
    throw DataError("partition: could not produce non-empty clients after retries");
}

ClientUpdate client_local_update(ClientRecord& client, const ParamVec& theta_global,
                                 const FisherEstimate& i_global, const FedConfig& cfg,
                                 const ModelSpec& spec, bool exchange_round) {
    if (cfg.eta <= 0.0) throw ConfigError("fed: eta must be positive");
    ParamVec theta = theta_global;
    for (int e = 0; e < cfg.local_epochs; ++e) {
        LossGrad lg = loss_and_grad(spec, theta, client.data);
        ParamVec update = cfg.lambda > 0.0
                              ? apply_preconditioner(i_global, lg.grad, cfg.lambda)
                              : lg.grad;
        theta = axpy(-cfg.eta, update, theta);
    }
    for (double v : theta)
        if (!std::isfinite(v))
            throw NumericError("fed: non-finite client update (client " +
                               std::to_string(client.id) + ")");
    client.theta_local = theta;

    ClientUpdate result;
    result.delta_grad.resize(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i)
        result.delta_grad[i] = (theta_global[i] - theta[i]) / cfg.eta;
    result.i_local = client.i_local;
    result.bytes_up = 8ull * theta.size();
    if (exchange_round && cfg.lambda > 0.0)
        result.bytes_up += client.i_local.payload_bytes();
    return result;
}

void server_round(ServerState& server, std::vector<ClientRecord>& clients,
                  const FedConfig& cfg, const Fragment& val, const ModelSpec& spec) {
    if (clients.empty()) throw DataError("server_round: no clients");
    if (cfg.fim_exchange_period < 1)
        throw ConfigError("fed: fim_exchange_period must be >= 1");
    const int d = static_cast<int>(server.theta_global.size());
    const int this_round = server.round + 1;  // 1-based
    // First round always exchanges so the preconditioner is populated before
    // any step; with lambda = 0 the FIM is never used, so never exchanged.
    const bool exchange =
        cfg.lambda > 0.0 && (server.round % cfg.fim_exchange_period == 0);

    if (exchange) {
        std::vector<std::pair<FisherEstimate, long>> locals;
        locals.reserve(clients.size());
        for (ClientRecord& client : clients) {
            const Fragment& fim_source = cfg.server_side_val_fim ? client.data : val;
            client.i_local =
                empirical_fim(spec, server.theta_global, fim_source, cfg.fisher);
            locals.emplace_back(client.i_local, client.n_k());
        }
        server.i_global = aggregate_fims(locals);
        for (const ClientRecord& client : clients)
            server.comm_log.push_back({this_round, CommDirection::down, client.id,
                                       server.i_global.payload_bytes()});
    }

    // Parameter broadcast.
    for (const ClientRecord& client : clients)
        server.comm_log.push_back(
            {this_round, CommDirection::down, client.id, 8ull * server.theta_global.size()});

    // Client work, aggregated in id order with a single division by N so the
    // weights sum to one exactly.
    long total_n = 0;
    for (const ClientRecord& client : clients) total_n += client.n_k();
    std::vector<double> weighted(server.theta_global.size(), 0.0);
    for (ClientRecord& client : clients) {
        ClientUpdate update = client_local_update(client, server.theta_global,
                                                  server.i_global, cfg, spec, exchange);
        if (update.delta_grad.size() != server.theta_global.size())
            throw DimensionError("server_round: client dimension mismatch");
        double w = static_cast<double>(client.n_k());
        for (std::size_t i = 0; i < weighted.size(); ++i)
            weighted[i] += w * update.delta_grad[i];
        server.comm_log.push_back(
            {this_round, CommDirection::up, client.id, update.bytes_up});
    }
    const double inv_n = 1.0 / static_cast<double>(total_n);
    ParamVec agg_grad(weighted.size());
    for (std::size_t i = 0; i < weighted.size(); ++i) agg_grad[i] = weighted[i] * inv_n;

    // The clients already applied (I + lambda I_G) inside their steps, so the
    // aggregated delta is applied as-is; re-preconditioning here would square
    // the operator.
    server.theta_global = axpy(-cfg.eta, agg_grad, server.theta_global);
    (void)d;
    server.round = this_round;
}

CommCostReport comm_cost_report(const ServerState& server, int dim,
                                const FedConfig& cfg) {
    if (server.round < 1 || server.comm_log.empty())
        throw DataError("comm_cost_report: no completed rounds");
    CommCostReport report;
    std::uint64_t up_total = 0;
    int clients = 0;
    for (const CommEntry& e : server.comm_log) {
        if (e.direction == CommDirection::up) up_total += e.payload_bytes;
        clients = std::max(clients, e.client_id + 1);
    }
    const double per_client_round =
        static_cast<double>(up_total) / (static_cast<double>(server.round) * clients);
    report.bytes_per_client_round = per_client_round;
    report.params_payload_bytes = 8ull * static_cast<std::uint64_t>(dim);
    report.relative_to_fedavg =
        per_client_round / static_cast<double>(report.params_payload_bytes);
    report.fim_payload_values =
        FisherEstimate::payload_value_count(cfg.fisher.kind, dim, cfg.fisher.rank_k);
    report.fim_payload_bytes = 8ull * report.fim_payload_values;
    return report;
}

FedRunResult run_federated(const ModelSpec& spec, const Fragment& train,
                           const Fragment& val, const FedConfig& cfg) {
    if (cfg.rounds < 1) throw ConfigError("fed: rounds must be >= 1");
    if (val.examples.empty()) throw DataError("fed: empty validation set");
    FedRunResult result;

    Rng part_rng = Rng(cfg.seed).split("fed/partition");
    std::vector<Fragment> shards = partition_dataset(train, cfg, part_rng);

    result.clients.reserve(shards.size());
    for (std::size_t c = 0; c < shards.size(); ++c) {
        ClientRecord client;
        client.id = static_cast<int>(c);
        client.data = std::move(shards[c]);
        client.i_local = FisherEstimate::zero(cfg.fisher.kind, spec.param_count());
        result.clients.push_back(std::move(client));
    }

    result.server.theta_global = initial_theta(spec, cfg.seed);
    result.server.i_global = FisherEstimate::zero(cfg.fisher.kind, spec.param_count());

    long total_n = 0;
    for (const ClientRecord& c : result.clients) total_n += c.n_k();

    for (int r = 0; r < cfg.rounds; ++r) {
        std::size_t log_start = result.server.comm_log.size();
        server_round(result.server, result.clients, cfg, val, spec);

        RoundMetrics m;
        m.round = result.server.round;
        m.val_acc = accuracy(spec, result.server.theta_global, val);
        double weighted_loss = 0.0;
        for (const ClientRecord& c : result.clients) {
            LossGrad lg = loss_and_grad(spec, result.server.theta_global, c.data);
            weighted_loss += static_cast<double>(c.n_k()) * lg.loss;
        }
        m.global_loss = weighted_loss / static_cast<double>(total_n);
        for (std::size_t i = log_start; i < result.server.comm_log.size(); ++i) {
            const CommEntry& e = result.server.comm_log[i];
            if (e.direction == CommDirection::up)
                m.bytes_up_total += e.payload_bytes;
            else
                m.bytes_down_total += e.payload_bytes;
        }
        result.metrics.push_back(m);
    }
    return result;
}

}  // namespace fire
