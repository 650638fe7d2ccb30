#pragma once

// Deterministic in-process simulation of the federated protocol. Each round:
//
//   1. On exchange rounds (first round, then every fim_exchange_period-th),
//      every client computes its local FIM at the broadcast parameters and
//      uploads it; the server aggregates the FIMs sample-weighted into the
//      global FIM and broadcasts that back.
//   2. Every client runs local_epochs full-batch SGD steps preconditioned by
//      the global FIM, (I + lambda I_G) g, and uploads its parameter delta
//      divided by eta.
//   3. The server averages the deltas with weights n_k/N and applies them.
//
// The preconditioner is applied exactly once per effective gradient step
// (inside the clients); with lambda = 0 the round reduces to FedAvg-style
// weighted parameter averaging and all FIM work is skipped. Transfers are
// in-process but every payload is recorded byte-for-byte in the comm log.

#include <cstdint>
#include <vector>

#include "fire/fisher.hpp"
#include "fire/model.hpp"

namespace fire {

enum class PartitionKind { iid, dirichlet, shard };

struct PartitionSpec {
    PartitionKind kind = PartitionKind::iid;
    double dirichlet_beta = 0.5;  // concentration, dirichlet only
    int shards_per_client = 2;    // shard only
};

struct FedConfig {
    int num_clients = 1;
    int rounds = 1;
    int local_epochs = 1;
    double eta = 0.001;
    double lambda = 0.1;
    int fim_exchange_period = 5;
    FisherConfig fisher;
    PartitionSpec partition;
    // When true the shared validation set stays server-side and clients
    // compute their FIM on local data instead.
    bool server_side_val_fim = false;
    std::uint64_t seed = 0;
};

struct ClientRecord {
    int id = 0;
    Fragment data;
    ParamVec theta_local;
    FisherEstimate i_local;

    long n_k() const { return data.n(); }
};

enum class CommDirection { up, down };

struct CommEntry {
    int round = 0;
    CommDirection direction = CommDirection::up;
    int client_id = 0;
    std::uint64_t payload_bytes = 0;
};

struct ServerState {
    ParamVec theta_global;
    FisherEstimate i_global;
    int round = 0;  // completed rounds
    std::vector<CommEntry> comm_log;
};

// Splits a dataset across clients. iid shuffles uniformly; dirichlet draws
// per-class client proportions from a symmetric Dirichlet(beta); shard sorts
// by label and deals shards_per_client contiguous shards to each client.
// Every client ends up non-empty (bounded resampling, then an error).
std::vector<Fragment> partition_dataset(const Fragment& full, const FedConfig& cfg,
                                        Rng& rng);

struct ClientUpdate {
    ParamVec delta_grad;  // (theta_global - theta_local) / eta
    FisherEstimate i_local;
    std::uint64_t bytes_up = 0;
};

// Local work for one round: local_epochs preconditioned full-batch steps
// from theta_global. client.i_local must already hold the FIM for this
// round (refreshed by the server on exchange rounds); bytes_up counts the
// delta upload plus the FIM payload on exchange rounds.
ClientUpdate client_local_update(ClientRecord& client, const ParamVec& theta_global,
                                 const FisherEstimate& i_global, const FedConfig& cfg,
                                 const ModelSpec& spec, bool exchange_round);

// One synchronous round over all clients in id order.
void server_round(ServerState& server, std::vector<ClientRecord>& clients,
                  const FedConfig& cfg, const Fragment& val, const ModelSpec& spec);

struct CommCostReport {
    double bytes_per_client_round = 0.0;  // measured, upstream
    double relative_to_fedavg = 0.0;      // measured upstream bytes / params-only
    std::uint64_t params_payload_bytes = 0;      // analytic: 8d
    std::uint64_t fim_payload_bytes = 0;         // analytic, per exchange
    std::uint64_t fim_payload_values = 0;        // analytic value count
};

CommCostReport comm_cost_report(const ServerState& server, int dim,
                                const FedConfig& cfg);

struct RoundMetrics {
    int round = 0;
    double val_acc = 0.0;
    double global_loss = 0.0;  // sample-weighted loss over all client data
    std::uint64_t bytes_up_total = 0;
    std::uint64_t bytes_down_total = 0;
};

struct FedRunResult {
    ServerState server;
    std::vector<ClientRecord> clients;
    std::vector<RoundMetrics> metrics;
};

// Full simulation: partition, initialize, run cfg.rounds rounds.
FedRunResult run_federated(const ModelSpec& spec, const Fragment& train,
                           const Fragment& val, const FedConfig& cfg);

}  // namespace fire
