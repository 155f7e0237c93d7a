#pragma once

// Per-slice federation: initialization, attribution refresh, client
// selection, local training, dataset-size-weighted aggregation, evaluation.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "isfl/attribution.hpp"
#include "isfl/comm.hpp"
#include "isfl/config.hpp"
#include "isfl/data.hpp"
#include "isfl/error.hpp"
#include "isfl/nn.hpp"
#include "isfl/selection.hpp"

namespace isfl {

/// One analytic engine's scaled local data, pre-split for training, attribution and evaluation.
struct FederatedClient {
    ClientDataset dataset;  // scaled
    Matrix train_features;
    std::vector<double> train_targets;
    Matrix test_features;
    std::vector<double> test_targets;
    Matrix attribution_pool;

    std::size_t id() const { return dataset.client_id; }
    /// Weight of this client in aggregation.
    std::size_t sample_count() const { return train_targets.size(); }
};

inline std::uint64_t attribution_seed(std::uint64_t seed, Slice slice, std::size_t client) {
    return detail::mix_seed(client_data_seed(seed, slice, client), 0xA77u);
}

/// Splits chronologically, fits the scaler on the train rows, scales, and
/// prepares the shuffled attribution pool.
inline FederatedClient prepare_client(ClientDataset raw, double train_fraction, std::uint64_t seed) {
    auto split = chronological_split(std::move(raw), train_fraction);
    const auto scaler = fit_scaler(split);
    FederatedClient c;
    c.dataset = apply_scaler(std::move(split), scaler);
    c.train_features = c.dataset.train_features();
    c.train_targets = c.dataset.train_targets();
    c.test_features = c.dataset.test_features();
    c.test_targets = c.dataset.test_targets();
    c.attribution_pool = attribution_pool(c.dataset, attribution_seed(seed, c.dataset.slice, c.dataset.client_id));
    return c;
}

inline std::string client_csv_name(std::size_t client, Slice slice) {
    return "client_" + std::to_string(client) + "_" + std::string(slice_name(slice)) + ".csv";
}

/// Raw (unscaled) datasets for every client of one slice, synthetic or read from disk.
inline std::vector<ClientDataset> load_raw_clients(const ExperimentConfig& cfg, Slice slice) {
    std::vector<ClientDataset> out;
    out.reserve(cfg.clients);
    if (cfg.data_source == DataSource::Synthetic) {
        const auto profiles = default_profiles(cfg.clients, slice, cfg.seed);
        for (std::size_t k = 0; k < cfg.clients; ++k) {
            out.push_back(generate_client(profiles[k], slice, cfg.dataset_size, client_data_seed(cfg.seed, slice, k)));
        }
    } else {
        for (std::size_t k = 0; k < cfg.clients; ++k) {
            const auto path = std::filesystem::path(cfg.data_dir) / client_csv_name(k, slice);
            if (!std::filesystem::exists(path)) throw ConfigError("missing dataset " + path.string());
            out.push_back(ingest_csv(path, slice, k));
        }
    }
    return out;
}

inline std::vector<FederatedClient> load_clients(const ExperimentConfig& cfg, Slice slice) {
    std::vector<FederatedClient> clients;
    for (auto& raw : load_raw_clients(cfg, slice)) {
        const auto k = raw.client_id;
        if (raw.size() < 2) throw ConfigError("client " + std::to_string(k) + " has fewer than 2 samples");
        clients.push_back(prepare_client(std::move(raw), cfg.train_fraction, cfg.seed));
        if (clients.back().attribution_pool.rows() < cfg.attribution_samples) {
            throw ConfigError("client " + std::to_string(k) + " has " +
                              std::to_string(clients.back().attribution_pool.rows()) +
                              " train rows, fewer than I=" + std::to_string(cfg.attribution_samples));
        }
    }
    return clients;
}

/// Dataset-size-weighted average; models are combined in the order given.
/// Sizes are reduced by their gcd first, so equal sizes give the plain mean.
inline ModelParams fedavg(std::span<const ModelParams> models, std::span<const std::size_t> sizes) {
    if (models.empty()) throw UsageError("aggregation over zero models");
    if (models.size() != sizes.size()) throw ConfigError("model/size count mismatch");
    std::size_t g = 0;
    for (auto s : sizes) g = std::gcd(g, s);
    if (g == 0) throw UsageError("aggregation with zero total samples");
    double total = 0.0;
    for (auto s : sizes) total += static_cast<double>(s / g);
    ModelParams out(models.front().spec());
    auto& acc = out.values();
    for (std::size_t i = 0; i < models.size(); ++i) {
        if (!(models[i].spec() == out.spec())) throw ConfigError("aggregating models of different shapes");
        const double w = static_cast<double>(sizes[i] / g);
        const auto& v = models[i].values();
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += w * v[j];
    }
    for (auto& a : acc) a /= total;
    return out;
}

/// Mean squared error over the union of every client's test rows (scaled units).
inline double evaluate_global(const ModelParams& params, std::span<const FederatedClient> clients) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& c : clients) {
        if (c.test_targets.empty()) continue;
        acc += mse(params, c.test_features, c.test_targets) * static_cast<double>(c.test_targets.size());
        n += c.test_targets.size();
    }
    if (n == 0) throw UsageError("global evaluation over an empty test pool");
    return acc / static_cast<double>(n);
}

/// Thread count from ISFL_THREADS, default 1.
inline unsigned thread_count() {
    if (const char* env = std::getenv("ISFL_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return 1;
}

/// Runs fn(i) for i in [0, n). Results must be written to per-index slots; the
/// first failure by index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < n; i += stride) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1 || n <= 1) {
        work(0, 1);
    } else {
        const std::size_t t = std::min<std::size_t>(threads, n);
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < t; ++w) pool.emplace_back(work, w, t);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

struct RoundRecord {
    std::size_t round = 0;
    double mse = 0.0;
    double round_time_ms = 0.0;
    double cum_time_ms = 0.0;
    std::vector<std::size_t> selected;
    std::uint64_t params_transmitted = 0;
    RoundComm comm;
    std::vector<SelectionAudit> audit;
    /// Attributions recomputed at the end of the round (empty for no_policy).
    AttributionMatrix attributions;
    ModelParams global_params;
};

struct FederationState {
    std::size_t round = 0;
    Slice slice = Slice::eMBB;
    std::uint64_t seed = 0;
    ModelParams global;
    std::vector<ModelParams> locals;
    AttributionMatrix attributions;
    double cum_time_ms = 0.0;
};

namespace detail {

inline std::string annotate(std::size_t round, std::size_t client, const std::exception& e) {
    return "round " + std::to_string(round) + ", client " + std::to_string(client) + ": " + e.what();
}

inline AttributionMatrix collect_attributions(const FederationState& state, std::span<const FederatedClient> clients,
                                              const ExperimentConfig& cfg) {
    IgConfig ig;
    ig.steps = cfg.ig_steps;
    ig.sample_count = cfg.attribution_samples;
    const std::size_t f = state.global.spec().inputs();
    AttributionMatrix chis(clients.size(), f);
    parallel_for(clients.size(), thread_count(), [&](std::size_t k) {
        try {
            auto chi = client_attribution_or_uniform(state.locals[k], clients[k].attribution_pool, k, ig);
            std::copy(chi.values.begin(), chi.values.end(), chis.row(k).begin());
        } catch (const std::exception& e) {
            throw RoundError(annotate(state.round, k, e));
        }
    });
    return chis;
}

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace detail

/// Global model from the seed, distributed to all clients; attributions
/// computed on every client unless the policy does not use them.
inline FederationState init_federation(const ExperimentConfig& cfg, Slice slice, Policy policy,
                                       std::span<const FederatedClient> clients) {
    const auto start = detail::Clock::now();
    FederationState s;
    s.slice = slice;
    s.seed = cfg.seed;
    s.global = init_params(cfg.network(), cfg.seed);
    s.locals.assign(clients.size(), s.global);
    if (policy != Policy::NoPolicy) s.attributions = detail::collect_attributions(s, clients, cfg);
    s.cum_time_ms = detail::elapsed_ms(start);
    return s;
}

inline SelectionResult select_for_policy(Policy policy, const AttributionMatrix& chis, std::size_t k, std::size_t m) {
    switch (policy) {
        case Policy::NoPolicy: return select_no_policy(k);
        case Policy::IntelliSelect: return select_intelliselect(chis, m);
        case Policy::Score: return select_by_score(chis, aggregate_importance(chis), m);
    }
    throw ConfigError("unknown policy");
}

/// One round: select, train the selected clients, aggregate, redistribute,
/// refresh attributions, evaluate.
inline std::pair<FederationState, RoundRecord> run_round(FederationState state, std::span<const FederatedClient> clients,
                                                         const ExperimentConfig& cfg, Policy policy) {
    if (state.round >= cfg.rounds) throw UsageError("round index beyond the configured number of rounds");
    const std::size_t k = clients.size();
    const auto start = detail::Clock::now();

    auto selection = select_for_policy(policy, state.attributions, k, cfg.selected);
    std::vector<std::size_t> order = selection.selected;
    std::sort(order.begin(), order.end());

    std::vector<ModelParams> trained(order.size());
    const auto adam = AdamState::fresh(state.global.size(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                                       cfg.adam_epsilon);
    parallel_for(order.size(), thread_count(), [&](std::size_t i) {
        const auto& client = clients[order[i]];
        try {
            trained[i] = train_local(state.locals[order[i]], client.train_features, client.train_targets,
                                     cfg.local_epochs, adam);
        } catch (const std::exception& e) {
            throw RoundError(detail::annotate(state.round, order[i], e));
        }
    });

    std::vector<std::size_t> sizes;
    for (auto c : order) sizes.push_back(clients[c].sample_count());
    state.global = fedavg(trained, sizes);
    for (auto& local : state.locals) local = state.global;

    if (policy != Policy::NoPolicy) state.attributions = detail::collect_attributions(state, clients, cfg);
    const double round_ms = detail::elapsed_ms(start);

    RoundRecord rec;
    rec.round = state.round;
    rec.mse = evaluate_global(state.global, clients);
    rec.round_time_ms = round_ms;
    state.cum_time_ms += round_ms;
    rec.cum_time_ms = state.cum_time_ms;
    rec.selected = order;
    rec.comm = round_comm(policy, k, policy == Policy::NoPolicy ? k : cfg.selected, state.global.spec().inputs(),
                          state.global.size());
    rec.params_transmitted = rec.comm.total();
    rec.audit = std::move(selection.audit);
    rec.attributions = state.attributions;
    rec.global_params = state.global;
    state.round += 1;
    return {std::move(state), std::move(rec)};
}

struct SliceRun {
    Slice slice = Slice::eMBB;
    Policy policy = Policy::IntelliSelect;
    ModelParams initial_params;
    AttributionMatrix initial_attributions;
    std::vector<RoundRecord> records;

    const ModelParams& final_params() const { return records.empty() ? initial_params : records.back().global_params; }
};

inline SliceRun run_slice(const ExperimentConfig& cfg, Slice slice, Policy policy,
                          std::span<const FederatedClient> clients) {
    cfg.validate();
    if (clients.size() != cfg.clients) {
        throw ConfigError("expected " + std::to_string(cfg.clients) + " clients, got " + std::to_string(clients.size()));
    }
    SliceRun run;
    run.slice = slice;
    run.policy = policy;
    auto state = init_federation(cfg, slice, policy, clients);
    run.initial_params = state.global;
    run.initial_attributions = state.attributions;
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        auto [next, rec] = run_round(std::move(state), clients, cfg, policy);
        state = std::move(next);
        run.records.push_back(std::move(rec));
    }
    return run;
}

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<SliceRun> runs;  // slice-major, then policy in config order
};

/// Every configured (slice, policy) pair; slices are independent federations.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult result;
    result.config = cfg;
    for (auto slice : cfg.slices) {
        const auto clients = load_clients(cfg, slice);
        for (auto policy : cfg.policies) result.runs.push_back(run_slice(cfg, slice, policy, clients));
    }
    return result;
}

/// First round whose MSE is within `tolerance` (relative) of `target`; -1 if none.
inline long first_round_within(const std::vector<RoundRecord>& records, double target, double tolerance) {
    for (const auto& r : records) {
        if (r.mse <= target * (1.0 + tolerance)) return static_cast<long>(r.round);
    }
    return -1;
}

/// Convergence round: first round within tolerance of the final-round MSE.
inline long convergence_round(const std::vector<RoundRecord>& records, double tolerance = 0.05) {
    if (records.empty()) return -1;
    return first_round_within(records, records.back().mse, tolerance);
}

}  // namespace isfl
