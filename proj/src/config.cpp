#include "fire/config.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "fire/csvio.hpp"

namespace fire {

const char* const kArtifactVersion = "0.1.0";

namespace {

std::string trim(const std::string& s) {
    std::size_t lo = s.find_first_not_of(" \t");
    if (lo == std::string::npos) return "";
    std::size_t hi = s.find_last_not_of(" \t");
    return s.substr(lo, hi - lo + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ConfigError("config: bad integer for " + key + ": '" + value + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ConfigError("config: bad real for " + key + ": '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config: bad bool for " + key + ": '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : value) {
        if (c == ',') {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty() || !parts.empty()) parts.push_back(trim(cur));
    parts.erase(std::remove(parts.begin(), parts.end(), std::string()), parts.end());
    return parts;
}

FisherKind parse_fisher_kind(const std::string& key, const std::string& value) {
    if (value == "full") return FisherKind::full;
    if (value == "diagonal") return FisherKind::diagonal;
    if (value == "lowrank") return FisherKind::low_rank;
    throw ConfigError("config: bad fisher variant for " + key + ": '" + value + "'");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string body = trim(line);
        if (body.empty()) continue;
        std::size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) +
                              " is not key = value");
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (key.empty()) throw ConfigError("config: empty key on line " +
                                           std::to_string(line_no));
        if (kv.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        kv[key] = value;
    }

    ExperimentConfig cfg;
    // Federated runs default to the low-rank variant; the batch trainer to
    // full.
    cfg.fed.fisher.kind = FisherKind::low_rank;
    bool mode_set = false;
    bool fed_key_seen = false;

    auto take = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        if (it == kv.end()) return nullptr;
        if (std::string(key).rfind("fed.", 0) == 0) fed_key_seen = true;
        return &it->second;
    };

    if (const auto* v = take("mode")) {
        mode_set = true;
        if (*v == "batch") cfg.mode = RunMode::batch;
        else if (*v == "folds") cfg.mode = RunMode::folds;
        else if (*v == "federated") cfg.mode = RunMode::federated;
        else if (*v == "diagnostics") cfg.mode = RunMode::diagnostics;
        else if (*v == "verify_theory") cfg.mode = RunMode::verify_theory;
        else throw ConfigError("config: unknown mode '" + *v + "'");
    }
    if (const auto* v = take("seed")) cfg.seed = static_cast<std::uint64_t>(parse_int("seed", *v));
    if (const auto* v = take("output_dir")) cfg.output_dir = *v;

    if (const auto* v = take("data.kind")) {
        if (*v == "synthetic_blobs") cfg.data.kind = DatasetKind::synthetic_blobs;
        else if (*v == "two_moons") cfg.data.kind = DatasetKind::two_moons;
        else if (*v == "csv") cfg.data.kind = DatasetKind::csv;
        else throw ConfigError("config: unknown data.kind '" + *v + "'");
    }
    if (const auto* v = take("data.n")) cfg.data.n = static_cast<int>(parse_int("data.n", *v));
    if (const auto* v = take("data.classes"))
        cfg.data.classes = static_cast<int>(parse_int("data.classes", *v));
    if (const auto* v = take("data.dim")) cfg.data.dim = static_cast<int>(parse_int("data.dim", *v));
    if (const auto* v = take("data.noise")) cfg.data.noise = parse_double("data.noise", *v);
    if (const auto* v = take("data.path")) cfg.data.path = *v;
    if (const auto* v = take("data.label_column")) cfg.data.label_column = *v;

    if (const auto* v = take("split.fragments"))
        cfg.split.fragments = static_cast<int>(parse_int("split.fragments", *v));
    if (const auto* v = take("split.val_fraction"))
        cfg.split.val_fraction = parse_double("split.val_fraction", *v);

    if (const auto* v = take("shift.kind")) {
        if (*v == "none") cfg.shift.kind = ShiftKind::none;
        else if (*v == "rotation_beta") cfg.shift.kind = ShiftKind::rotation_beta;
        else if (*v == "tabular_bias") cfg.shift.kind = ShiftKind::tabular_bias;
        else if (*v == "gaussian_mean") cfg.shift.kind = ShiftKind::gaussian_mean;
        else throw ConfigError("config: unknown shift.kind '" + *v + "'");
    }
    if (const auto* v = take("shift.a")) cfg.shift.beta_a = parse_double("shift.a", *v);
    if (const auto* v = take("shift.b")) cfg.shift.beta_b = parse_double("shift.b", *v);
    if (const auto* v = take("shift.strength"))
        cfg.shift.strength = parse_double("shift.strength", *v);
    if (const auto* v = take("shift.swap_for_test"))
        cfg.shift.swap_for_test = parse_bool("shift.swap_for_test", *v);
    if (const auto* v = take("shift.delta")) {
        cfg.shift.delta.clear();
        for (const std::string& part : split_list(*v))
            cfg.shift.delta.push_back(parse_double("shift.delta", part));
    }

    if (const auto* v = take("model.hidden")) {
        cfg.hidden_sizes.clear();
        for (const std::string& part : split_list(*v))
            cfg.hidden_sizes.push_back(static_cast<int>(parse_int("model.hidden", part)));
    }

    if (const auto* v = take("train.eta")) cfg.train.eta = parse_double("train.eta", *v);
    if (const auto* v = take("train.lambda"))
        cfg.train.lambda = parse_double("train.lambda", *v);
    if (const auto* v = take("train.epochs"))
        cfg.train.epochs = static_cast<int>(parse_int("train.epochs", *v));
    if (const auto* v = take("train.fisher.variant"))
        cfg.train.fisher.kind = parse_fisher_kind("train.fisher.variant", *v);
    if (const auto* v = take("train.fisher.rank_k"))
        cfg.train.fisher.rank_k = static_cast<int>(parse_int("train.fisher.rank_k", *v));
    if (const auto* v = take("train.fisher.alpha"))
        cfg.train.fisher.momentum_alpha = parse_double("train.fisher.alpha", *v);
    if (const auto* v = take("train.fisher.mu"))
        cfg.train.fisher.mix_mu = parse_double("train.fisher.mu", *v);
    if (const auto* v = take("train.fisher.refresh_every"))
        cfg.train.fisher.refresh_every_batches =
            static_cast<int>(parse_int("train.fisher.refresh_every", *v));

    if (const auto* v = take("fed.clients"))
        cfg.fed.num_clients = static_cast<int>(parse_int("fed.clients", *v));
    if (const auto* v = take("fed.rounds"))
        cfg.fed.rounds = static_cast<int>(parse_int("fed.rounds", *v));
    if (const auto* v = take("fed.local_epochs"))
        cfg.fed.local_epochs = static_cast<int>(parse_int("fed.local_epochs", *v));
    if (const auto* v = take("fed.eta")) cfg.fed.eta = parse_double("fed.eta", *v);
    if (const auto* v = take("fed.lambda")) cfg.fed.lambda = parse_double("fed.lambda", *v);
    if (const auto* v = take("fed.fim_exchange_period"))
        cfg.fed.fim_exchange_period =
            static_cast<int>(parse_int("fed.fim_exchange_period", *v));
    if (const auto* v = take("fed.partition")) {
        if (*v == "iid") cfg.fed.partition.kind = PartitionKind::iid;
        else if (*v == "dirichlet") cfg.fed.partition.kind = PartitionKind::dirichlet;
        else if (*v == "shard") cfg.fed.partition.kind = PartitionKind::shard;
        else throw ConfigError("config: unknown fed.partition '" + *v + "'");
    }
    if (const auto* v = take("fed.dirichlet_beta"))
        cfg.fed.partition.dirichlet_beta = parse_double("fed.dirichlet_beta", *v);
    if (const auto* v = take("fed.shards_per_client"))
        cfg.fed.partition.shards_per_client =
            static_cast<int>(parse_int("fed.shards_per_client", *v));
    if (const auto* v = take("fed.server_side_val_fim"))
        cfg.fed.server_side_val_fim = parse_bool("fed.server_side_val_fim", *v);
    if (const auto* v = take("fed.fisher.variant"))
        cfg.fed.fisher.kind = parse_fisher_kind("fed.fisher.variant", *v);
    if (const auto* v = take("fed.fisher.rank_k"))
        cfg.fed.fisher.rank_k = static_cast<int>(parse_int("fed.fisher.rank_k", *v));

    if (const auto* v = take("theory.trials"))
        cfg.theory_trials = static_cast<int>(parse_int("theory.trials", *v));

    // Reject anything we did not consume.
    static const char* known[] = {
        "mode", "seed", "output_dir", "data.kind", "data.n", "data.classes",
        "data.dim", "data.noise", "data.path", "data.label_column",
        "split.fragments", "split.val_fraction", "shift.kind", "shift.a", "shift.b",
        "shift.strength", "shift.swap_for_test", "shift.delta", "model.hidden",
        "train.eta", "train.lambda", "train.epochs", "train.fisher.variant",
        "train.fisher.rank_k", "train.fisher.alpha", "train.fisher.mu",
        "train.fisher.refresh_every", "fed.clients", "fed.rounds",
        "fed.local_epochs", "fed.eta", "fed.lambda", "fed.fim_exchange_period",
        "fed.partition", "fed.dirichlet_beta", "fed.shards_per_client",
        "fed.server_side_val_fim", "fed.fisher.variant", "fed.fisher.rank_k",
        "theory.trials"};
    for (const auto& [key, value] : kv) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("config: unknown key '" + key + "'");
    }

    if (!mode_set) throw ConfigError("config: mode is mandatory");
    if (fed_key_seen && cfg.mode != RunMode::federated)
        throw ConfigError("config: fed.* keys are only valid with mode = federated");
    if (cfg.data.kind == DatasetKind::csv &&
        (cfg.data.path.empty() || cfg.data.label_column.empty()))
        throw ConfigError("config: csv datasets need data.path and data.label_column");
    cfg.fed.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    return cfg;
}

namespace {

const char* mode_name(RunMode m) {
    switch (m) {
        case RunMode::batch: return "batch";
        case RunMode::folds: return "folds";
        case RunMode::federated: return "federated";
        case RunMode::diagnostics: return "diagnostics";
        case RunMode::verify_theory: return "verify_theory";
    }
    return "?";
}

const char* data_kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::synthetic_blobs: return "synthetic_blobs";
        case DatasetKind::two_moons: return "two_moons";
        case DatasetKind::csv: return "csv";
    }
    return "?";
}

const char* shift_kind_name(ShiftKind k) {
    switch (k) {
        case ShiftKind::none: return "none";
        case ShiftKind::rotation_beta: return "rotation_beta";
        case ShiftKind::tabular_bias: return "tabular_bias";
        case ShiftKind::gaussian_mean: return "gaussian_mean";
    }
    return "?";
}

const char* fisher_kind_name(FisherKind k) {
    switch (k) {
        case FisherKind::full: return "full";
        case FisherKind::diagonal: return "diagonal";
        case FisherKind::low_rank: return "lowrank";
    }
    return "?";
}

const char* partition_name(PartitionKind k) {
    switch (k) {
        case PartitionKind::iid: return "iid";
        case PartitionKind::dirichlet: return "dirichlet";
        case PartitionKind::shard: return "shard";
    }
    return "?";
}

std::string int_list(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::string real_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += csv::real(v[i]);
    }
    return out;
}

}  // namespace

std::string render_manifest(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "artifact_version = " << kArtifactVersion << '\n';
    out << "mode = " << mode_name(cfg.mode) << '\n';
    out << "seed = " << cfg.seed << '\n';
    out << "output_dir = " << cfg.output_dir << '\n';
    out << "data.kind = " << data_kind_name(cfg.data.kind) << '\n';
    out << "data.n = " << cfg.data.n << '\n';
    out << "data.classes = " << cfg.data.classes << '\n';
    out << "data.dim = " << cfg.data.dim << '\n';
    out << "data.noise = " << csv::real(cfg.data.noise) << '\n';
    out << "data.path = " << cfg.data.path << '\n';
    out << "data.label_column = " << cfg.data.label_column << '\n';
    out << "split.fragments = " << cfg.split.fragments << '\n';
    out << "split.val_fraction = " << csv::real(cfg.split.val_fraction) << '\n';
    out << "shift.kind = " << shift_kind_name(cfg.shift.kind) << '\n';
    out << "shift.a = " << csv::real(cfg.shift.beta_a) << '\n';
    out << "shift.b = " << csv::real(cfg.shift.beta_b) << '\n';
    out << "shift.strength = " << csv::real(cfg.shift.strength) << '\n';
    out << "shift.swap_for_test = " << (cfg.shift.swap_for_test ? "true" : "false") << '\n';
    out << "shift.delta = " << real_list(cfg.shift.delta) << '\n';
    out << "model.hidden = " << int_list(cfg.hidden_sizes) << '\n';
    out << "train.eta = " << csv::real(cfg.train.eta) << '\n';
    out << "train.lambda = " << csv::real(cfg.train.lambda) << '\n';
    out << "train.epochs = " << cfg.train.epochs << '\n';
    out << "train.fisher.variant = " << fisher_kind_name(cfg.train.fisher.kind) << '\n';
    out << "train.fisher.rank_k = " << cfg.train.fisher.rank_k << '\n';
    out << "train.fisher.alpha = " << csv::real(cfg.train.fisher.momentum_alpha) << '\n';
    out << "train.fisher.mu = " << csv::real(cfg.train.fisher.mix_mu) << '\n';
    out << "train.fisher.refresh_every = " << cfg.train.fisher.refresh_every_batches << '\n';
    if (cfg.mode == RunMode::federated) {
        out << "fed.clients = " << cfg.fed.num_clients << '\n';
        out << "fed.rounds = " << cfg.fed.rounds << '\n';
        out << "fed.local_epochs = " << cfg.fed.local_epochs << '\n';
        out << "fed.eta = " << csv::real(cfg.fed.eta) << '\n';
        out << "fed.lambda = " << csv::real(cfg.fed.lambda) << '\n';
        out << "fed.fim_exchange_period = " << cfg.fed.fim_exchange_period << '\n';
        out << "fed.partition = " << partition_name(cfg.fed.partition.kind) << '\n';
        out << "fed.dirichlet_beta = " << csv::real(cfg.fed.partition.dirichlet_beta) << '\n';
        out << "fed.shards_per_client = " << cfg.fed.partition.shards_per_client << '\n';
        out << "fed.server_side_val_fim = "
            << (cfg.fed.server_side_val_fim ? "true" : "false") << '\n';
        out << "fed.fisher.variant = " << fisher_kind_name(cfg.fed.fisher.kind) << '\n';
        out << "fed.fisher.rank_k = " << cfg.fed.fisher.rank_k << '\n';
    }
    if (cfg.mode == RunMode::verify_theory)
        out << "theory.trials = " << cfg.theory_trials << '\n';
    return out.str();
}

}  // namespace fire
