#pragma once

// Command implementations behind the isfl executable. Everything here is
// callable in-process; the executable only parses arguments and dispatches.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "isfl/config.hpp"
#include "isfl/data.hpp"
#include "isfl/error.hpp"
#include "isfl/federation.hpp"
#include "isfl/metrics.hpp"

namespace isfl {

inline constexpr std::string_view kVersion = "1.0.0";

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitRuntime = 3 };

struct ExperimentOutputs {
    ExperimentResult result;
    /// Parallel to result.runs.
    std::vector<ProvisioningSnapshot> provisioning;
};

/// Runs every (slice, policy) pair and takes the provisioning snapshots while
/// each slice's client data is still loaded.
inline ExperimentOutputs execute(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
    cfg.validate();
    ExperimentOutputs out;
    out.result.config = cfg;
    for (auto slice : cfg.slices) {
        const auto clients = load_clients(cfg, slice);
        for (auto policy : cfg.policies) {
            auto run = run_slice(cfg, slice, policy, clients);
            if (log) {
                for (const auto& r : run.records) {
                    *log << slice_name(slice) << ' ' << policy_name(policy) << " round " << r.round
                         << " mse=" << std::setprecision(6) << r.mse << " selected=" << join_ids(r.selected) << '\n';
                }
            }
            out.provisioning.push_back(provisioning_snapshot(run, clients, cfg.convergence_tolerance));
            out.result.runs.push_back(std::move(run));
        }
    }
    return out;
}

struct RunStats {
    double final_mse = 0.0;
    long rounds_to_convergence = -1;
    double cum_time_ms = 0.0;
    std::uint64_t total_params_transmitted = 0;
};

inline RunStats run_stats(const SliceRun& run, double tolerance) {
    RunStats s;
    if (run.records.empty()) return s;
    s.final_mse = run.records.back().mse;
    s.rounds_to_convergence = convergence_round(run.records, tolerance);
    s.cum_time_ms = run.records.back().cum_time_ms;
    for (const auto& r : run.records) s.total_params_transmitted += r.params_transmitted;
    return s;
}

inline nlohmann::ordered_json comm_model_json() {
    return {{"unit", "single-float parameters"},
            {"no_policy", "downlink K*P + uplink K*P"},
            {"intelliselect", "downlink K*P + uplink m*P + K*F"},
            {"score", "downlink K*P + F + uplink m*P + K*F + K"}};
}

inline nlohmann::ordered_json summary_json(const ExperimentOutputs& outputs) {
    const auto& cfg = outputs.result.config;
    nlohmann::ordered_json j;
    j["schema_version"] = kSummarySchemaVersion;
    j["config"] = to_json(cfg);
    j["comm_model"] = comm_model_json();
    j["parameter_count"] = cfg.network().param_count();
    auto& runs = j["runs"] = nlohmann::ordered_json::array();
    std::uint64_t total_comm = 0;
    for (std::size_t i = 0; i < outputs.result.runs.size(); ++i) {
        const auto& run = outputs.result.runs[i];
        const auto stats = run_stats(run, cfg.convergence_tolerance);
        total_comm += stats.total_params_transmitted;
        nlohmann::ordered_json r;
        r["slice"] = std::string(slice_name(run.slice));
        r["policy"] = std::string(policy_name(run.policy));
        r["rounds"] = run.records.size();
        if (run.records.empty()) {
            r["final_mse"] = nullptr;
        } else {
            r["final_mse"] = stats.final_mse;
        }
        r["rounds_to_convergence"] = stats.rounds_to_convergence;
        r["cum_time_ms"] = stats.cum_time_ms;
        r["total_params_transmitted"] = stats.total_params_transmitted;
        if (i < outputs.provisioning.size() && outputs.provisioning[i].initial_round >= 0) {
            const auto& p = outputs.provisioning[i];
            r["provisioning"] = {
                {"initial", {{"round", p.initial_round}, {"over_sum", p.initial.over_sum}, {"under_sum", p.initial.under_sum}}},
                {"convergence",
                 {{"round", p.convergence_round}, {"over_sum", p.converged.over_sum}, {"under_sum", p.converged.under_sum}}}};
        } else {
            r["provisioning"] = nullptr;
        }
        runs.push_back(std::move(r));
    }
    j["total_params_transmitted"] = total_comm;
    return j;
}

/// Structural check of a summary document; returns the list of problems (empty when valid).
inline std::vector<std::string> validate_summary(const nlohmann::ordered_json& j) {
    std::vector<std::string> problems;
    auto need = [&](const nlohmann::ordered_json& node, const std::string& key, auto pred, const std::string& what,
                    const std::string& where) {
        if (!node.is_object() || !node.contains(key)) {
            problems.push_back(where + key + ": missing");
            return false;
        }
        if (!pred(node.at(key))) {
            problems.push_back(where + key + ": expected " + what);
            return false;
        }
        return true;
    };
    auto is_uint = [](const auto& v) { return v.is_number_unsigned(); };
    auto is_int = [](const auto& v) { return v.is_number_integer(); };
    auto is_num = [](const auto& v) { return v.is_number(); };
    auto is_obj = [](const auto& v) { return v.is_object(); };
    auto is_str = [](const auto& v) { return v.is_string(); };
    auto is_arr = [](const auto& v) { return v.is_array(); };

    if (need(j, "schema_version", is_int, "integer", "") && j["schema_version"] != kSummarySchemaVersion) {
        problems.push_back("schema_version: unsupported version");
    }
    if (need(j, "config", is_obj, "object", "")) {
        try {
            config_from_json(j["config"]);
        } catch (const std::exception& e) {
            problems.push_back(std::string("config: ") + e.what());
        }
    }
    need(j, "comm_model", is_obj, "object", "");
    need(j, "parameter_count", is_uint, "non-negative integer", "");
    need(j, "total_params_transmitted", is_uint, "non-negative integer", "");
    if (need(j, "runs", is_arr, "array", "")) {
        for (std::size_t i = 0; i < j["runs"].size(); ++i) {
            const auto& r = j["runs"][i];
            const std::string at = "runs[" + std::to_string(i) + "].";
            if (need(r, "slice", is_str, "string", at)) {
                try {
                    parse_slice(r["slice"].get<std::string>());
                } catch (const ConfigError&) {
                    problems.push_back(at + "slice: unknown slice");
                }
            }
            if (need(r, "policy", is_str, "string", at)) {
                try {
                    parse_policy(r["policy"].get<std::string>());
                } catch (const ConfigError&) {
                    problems.push_back(at + "policy: unknown policy");
                }
            }
            need(r, "rounds", is_uint, "non-negative integer", at);
            need(r, "final_mse", [](const auto& v) { return v.is_number() || v.is_null(); }, "number or null", at);
            need(r, "rounds_to_convergence", is_int, "integer", at);
            need(r, "cum_time_ms", is_num, "number", at);
            need(r, "total_params_transmitted", is_uint, "non-negative integer", at);
            if (r.is_object() && !r.contains("provisioning")) problems.push_back(at + "provisioning: missing");
        }
    }
    return problems;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

template <typename Fn>
std::string render(Fn&& fn) {
    std::ostringstream ss;
    fn(ss);
    return ss.str();
}

}  // namespace detail

/// Writes every output file for an experiment; returns the paths written.
inline std::vector<std::filesystem::path> persist(const ExperimentOutputs& outputs, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::string& content) {
        detail::write_file(dir / name, content);
        written.push_back(dir / name);
    };

    std::map<Slice, std::string> provisioning;
    for (std::size_t i = 0; i < outputs.result.runs.size(); ++i) {
        const auto& run = outputs.result.runs[i];
        std::vector<RoundRow> rows;
        for (const auto& r : run.records) rows.push_back(to_row(r));
        emit(rounds_file_name(run.slice, run.policy), detail::render([&](auto& o) { write_rounds_csv(o, rows); }));
        emit(selection_file_name(run.slice, run.policy), detail::render([&](auto& o) { write_selection_csv(o, run); }));
        if (run.policy != Policy::NoPolicy) {
            emit(attributions_file_name(run.slice, run.policy),
                 detail::render([&](auto& o) { write_attributions_csv(o, run); }));
        }
        auto& prov = provisioning[run.slice];
        if (prov.empty()) prov = "policy,phase,round,sample,p_err\n";
        if (i < outputs.provisioning.size() && outputs.provisioning[i].initial_round >= 0) {
            auto body = detail::render([&](auto& o) { write_provisioning_csv(o, run.policy, outputs.provisioning[i]); });
            prov += body.substr(body.find('\n') + 1);
        }
    }
    for (const auto& [slice, content] : provisioning) emit(provisioning_file_name(slice), content);
    emit("comm_ledger.csv", detail::render([&](auto& o) { write_comm_ledger_csv(o, outputs.result.runs); }));
    emit("summary.json", summary_json(outputs).dump(2) + "\n");
    return written;
}

struct RunManifest {
    ExperimentConfig config;
    std::string version{kVersion};
    std::string started_at;
    std::vector<std::string> outputs;
};

inline nlohmann::ordered_json to_json(const RunManifest& m) {
    return {{"tool", "isfl"},
            {"version", m.version},
            {"seed", m.config.seed},
            {"started_at", m.started_at},
            {"config", to_json(m.config)},
            {"outputs", m.outputs}};
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// Commands

struct RunOptions {
    std::filesystem::path config_path;
    std::vector<std::string> overrides;
    std::filesystem::path out_dir = "isfl_out";
    std::string policies;  // comma-separated; empty keeps the config's list
    bool verbose = false;
};

inline int cmd_run(const RunOptions& opts, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    ExperimentConfig cfg;
    try {
        cfg = opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
        auto overrides = opts.overrides;
        if (!opts.policies.empty()) overrides.push_back("policies=" + opts.policies);
        cfg = apply_overrides(cfg, overrides);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    }
    try {
        RunManifest manifest;
        manifest.config = cfg;
        manifest.started_at = utc_timestamp();
        auto outputs = execute(cfg, opts.verbose ? &out : nullptr);
        for (const auto& p : persist(outputs, opts.out_dir)) manifest.outputs.push_back(p.filename().string());
        detail::write_file(opts.out_dir / "manifest.json", to_json(manifest).dump(2) + "\n");
        for (std::size_t i = 0; i < outputs.result.runs.size(); ++i) {
            const auto& run = outputs.result.runs[i];
            const auto s = run_stats(run, cfg.convergence_tolerance);
            out << slice_name(run.slice) << ' ' << policy_name(run.policy) << ": final_mse=" << std::setprecision(6)
                << s.final_mse << " convergence_round=" << s.rounds_to_convergence
                << " params_transmitted=" << s.total_params_transmitted << '\n';
        }
        out << "wrote " << manifest.outputs.size() + 1 << " files to " << opts.out_dir.string() << '\n';
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

/// Generation request: client count, slices, rows, seed, and optional explicit
/// per-client profiles applied to every slice.
struct GenDataSpec {
    std::size_t clients = 10;
    std::vector<Slice> slices{kAllSlices.begin(), kAllSlices.end()};
    std::size_t rows = 1000;
    std::uint64_t seed = 42;
    std::vector<NonIidProfile> profiles;
};

inline GenDataSpec parse_gen_spec(const nlohmann::json& j) {
    static const std::vector<std::string> known{"K", "N", "slices", "D", "seed", "profiles"};
    if (!j.is_object()) throw ConfigError("profile file must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            throw ConfigError("unknown profile key '" + it.key() + "'");
        }
    }
    GenDataSpec g;
    auto uint_field = [&](const char* key, auto& dst) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_unsigned()) throw ConfigError(std::string("field '") + key + "': expected a non-negative integer");
        dst = j[key].get<std::decay_t<decltype(dst)>>();
    };
    uint_field("K", g.clients);
    uint_field("D", g.rows);
    uint_field("seed", g.seed);
    if (j.contains("slices")) {
        g.slices.clear();
        for (const auto& s : j["slices"]) g.slices.push_back(parse_slice(s.get<std::string>()));
    }
    if (j.contains("N")) {
        std::size_t n = 0;
        uint_field("N", n);
        if (n == 0 || n > kAllSlices.size()) throw ConfigError("field 'N': expected 1..3");
        if (!j.contains("slices")) g.slices.assign(kAllSlices.begin(), kAllSlices.begin() + static_cast<std::ptrdiff_t>(n));
        if (g.slices.size() != n) throw ConfigError("field 'N' disagrees with the slice list");
    }
    if (g.clients == 0) throw ConfigError("field 'K': at least one client required");
    if (g.rows < 2) throw ConfigError("field 'D': at least 2 rows required");
    if (g.slices.empty()) throw ConfigError("field 'slices': at least one slice required");
    if (j.contains("profiles")) {
        const auto& arr = j["profiles"];
        if (!arr.is_array() || arr.size() != g.clients) {
            throw ConfigError("field 'profiles': expected an array of K profile objects");
        }
        for (std::size_t k = 0; k < arr.size(); ++k) {
            const auto& pj = arr[k];
            NonIidProfile p;
            p.client_id = k;
            auto num = [&](const char* key, double& dst) {
                if (!pj.contains(key)) return;
                if (!pj[key].is_number()) {
                    throw ConfigError("profiles[" + std::to_string(k) + "]." + key + ": expected a number");
                }
                dst = pj[key].get<double>();
            };
            num("traffic_scale", p.traffic_scale);
            num("diurnal_phase", p.diurnal_phase);
            num("diurnal_amplitude", p.diurnal_amplitude);
            num("cqi_mean", p.cqi_mean);
            num("cqi_std", p.cqi_std);
            num("noise_level", p.noise_level);
            if (pj.contains("mix_weights")) {
                const auto& w = pj["mix_weights"];
                if (!w.is_array() || w.size() != kFeatureCount) {
                    throw ConfigError("profiles[" + std::to_string(k) + "].mix_weights: expected 3 numbers");
                }
                for (std::size_t i = 0; i < kFeatureCount; ++i) p.mix_weights[i] = w[i].get<double>();
            }
            if (!(p.traffic_scale > 0.0)) {
                throw ConfigError("profiles[" + std::to_string(k) + "].traffic_scale: must be positive");
            }
            if (p.noise_level < 0.0 || p.cqi_std < 0.0 || p.diurnal_amplitude < 0.0) {
                throw ConfigError("profiles[" + std::to_string(k) + "]: noise, spread and amplitude must be non-negative");
            }
            g.profiles.push_back(p);
        }
    }
    return g;
}

inline std::vector<std::filesystem::path> generate_datasets(const GenDataSpec& g, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> paths;
    for (auto slice : g.slices) {
        const auto profiles = g.profiles.empty() ? default_profiles(g.clients, slice, g.seed) : g.profiles;
        for (std::size_t k = 0; k < g.clients; ++k) {
            auto data = generate_client(profiles[k], slice, g.rows, client_data_seed(g.seed, slice, k));
            const auto path = dir / client_csv_name(k, slice);
            write_csv(path, data);
            paths.push_back(path);
        }
    }
    return paths;
}

inline int cmd_gen_data(const std::filesystem::path& profile_path, const std::filesystem::path& out_dir,
                        std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    GenDataSpec spec;
    try {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text_file(profile_path));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("profile file is not valid JSON: ") + e.what());
        }
        spec = parse_gen_spec(j);
    } catch (const ConfigError& e) {
        err << "profile error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        err << "profile error: " << e.what() << '\n';
        return kExitUsage;
    }
    try {
        auto paths = generate_datasets(spec, out_dir);
        out << "wrote " << paths.size() << " datasets to " << out_dir.string() << '\n';
        return kExitOk;
    } catch (const GenerationError& e) {
        err << "profile error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

struct ComparisonRow {
    std::string slice;
    std::string run;
    std::string policy;
    long rounds_to_convergence = -1;
    double final_mse = 0.0;
    double cum_time_ms = 0.0;
    std::uint64_t total_params = 0;
    // Differences against the first row of the same slice.
    long delta_rounds = 0;
    double delta_mse = 0.0;
    double delta_time_ms = 0.0;
    std::int64_t delta_params = 0;
};

/// Loads manifests and summaries from run directories and tabulates per-slice
/// results. Throws ConfigError when the runs do not share seed and slices.
inline std::vector<ComparisonRow> compare_runs(const std::vector<std::filesystem::path>& dirs) {
    if (dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
    struct Loaded {
        std::string name;
        nlohmann::json manifest;
        nlohmann::json summary;
    };
    std::vector<Loaded> runs;
    for (const auto& d : dirs) {
        Loaded l;
        l.name = d.filename().empty() ? d.parent_path().filename().string() : d.filename().string();
        try {
            l.manifest = nlohmann::json::parse(read_text_file(d / "manifest.json"));
            l.summary = nlohmann::json::parse(read_text_file(d / "summary.json"));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(d.string() + ": unreadable manifest or summary: " + e.what());
        }
        runs.push_back(std::move(l));
    }
    const auto& first = runs.front().manifest;
    for (const auto& r : runs) {
        if (r.manifest.value("seed", nlohmann::json()) != first.value("seed", nlohmann::json())) {
            throw ConfigError("incompatible runs: seed differs between " + runs.front().name + " and " + r.name);
        }
        if (r.manifest["config"]["slices"] != first["config"]["slices"]) {
            throw ConfigError("incompatible runs: slice settings differ between " + runs.front().name + " and " + r.name);
        }
    }
    std::vector<ComparisonRow> rows;
    for (const auto& slice_json : first["config"]["slices"]) {
        const auto slice = slice_json.get<std::string>();
        const ComparisonRow* base = nullptr;
        const std::size_t start = rows.size();
        for (const auto& r : runs) {
            for (const auto& entry : r.summary["runs"]) {
                if (entry["slice"] != slice) continue;
                ComparisonRow row;
                row.slice = slice;
                row.run = r.name;
                row.policy = entry["policy"].get<std::string>();
                row.rounds_to_convergence = entry["rounds_to_convergence"].get<long>();
                row.final_mse = entry["final_mse"].is_null() ? 0.0 : entry["final_mse"].get<double>();
                row.cum_time_ms = entry["cum_time_ms"].get<double>();
                row.total_params = entry["total_params_transmitted"].get<std::uint64_t>();
                rows.push_back(row);
            }
        }
        if (rows.size() > start) base = &rows[start];
        for (std::size_t i = start; i < rows.size(); ++i) {
            rows[i].delta_rounds = rows[i].rounds_to_convergence - base->rounds_to_convergence;
            rows[i].delta_mse = rows[i].final_mse - base->final_mse;
            rows[i].delta_time_ms = rows[i].cum_time_ms - base->cum_time_ms;
            rows[i].delta_params =
                static_cast<std::int64_t>(rows[i].total_params) - static_cast<std::int64_t>(base->total_params);
        }
    }
    return rows;
}

inline void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    out << "slice,run,policy,rounds_to_convergence,final_mse,cum_time_ms,total_params,delta_rounds,delta_mse,"
           "delta_time_ms,delta_params\n";
    for (const auto& r : rows) {
        out << r.slice << ',' << r.run << ',' << r.policy << ',' << r.rounds_to_convergence << ','
            << detail::format_double(r.final_mse) << ',' << detail::format_double(r.cum_time_ms) << ',' << r.total_params
            << ',' << r.delta_rounds << ',' << detail::format_double(r.delta_mse) << ','
            << detail::format_double(r.delta_time_ms) << ',' << r.delta_params << '\n';
    }
}

inline void write_comparison_text(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    out << std::left << std::setw(12) << "slice" << std::setw(20) << "run" << std::setw(15) << "policy" << std::right
        << std::setw(6) << "conv" << std::setw(13) << "final_mse" << std::setw(12) << "time_ms" << std::setw(10)
        << "params" << std::setw(12) << "d_mse" << std::setw(11) << "d_params" << '\n';
    for (const auto& r : rows) {
        out << std::left << std::setw(12) << r.slice << std::setw(20) << r.run << std::setw(15) << r.policy
            << std::right << std::setw(6) << r.rounds_to_convergence << std::setw(13) << std::setprecision(5)
            << r.final_mse << std::setw(12) << std::fixed << std::setprecision(0) << r.cum_time_ms
            << std::defaultfloat << std::setw(10) << r.total_params << std::setw(12) << std::setprecision(3)
            << r.delta_mse << std::setw(11) << r.delta_params << '\n';
    }
}

inline int cmd_compare(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& csv_out,
                       std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    try {
        auto rows = compare_runs(dirs);
        write_comparison_text(out, rows);
        if (csv_out.empty()) {
            out << '\n';
            write_comparison_csv(out, rows);
        } else {
            detail::write_file(csv_out, detail::render([&](auto& o) { write_comparison_csv(o, rows); }));
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "compare error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace isfl
