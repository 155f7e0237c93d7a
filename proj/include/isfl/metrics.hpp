#pragma once

// Provisioning error analysis and result persistence (round logs, attribution
// and selection logs, communication ledger, summary JSON).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "isfl/comm.hpp"
#include "isfl/data.hpp"
#include "isfl/error.hpp"
#include "isfl/federation.hpp"
#include "isfl/nn.hpp"

namespace isfl {

inline constexpr int kSummarySchemaVersion = 1;

/// Signed prediction errors in CPU-load percent. Positive values over-provision.
struct ProvisioningReport {
    std::vector<double> errors;
    double over_sum = 0.0;
    double under_sum = 0.0;
};

inline ProvisioningReport provisioning_from_errors(std::vector<double> errors) {
    ProvisioningReport rep;
    for (double e : errors) {
        if (e > 0.0) rep.over_sum += e;
        if (e < 0.0) rep.under_sum -= e;
    }
    rep.errors = std::move(errors);
    return rep;
}

/// Errors on scaled samples, mapped back to original units through `scaler`.
inline ProvisioningReport provisioning_report(const ModelParams& params, const Matrix& features,
                                              std::span<const double> targets, const MinMaxScaler& scaler) {
    if (features.rows() == 0) throw UsageError("provisioning report over an empty sample set");
    auto pred = predict(params, features);
    std::vector<double> errors(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        errors[i] = scaler.inverse_target(pred[i]) - scaler.inverse_target(targets[i]);
    }
    return provisioning_from_errors(std::move(errors));
}

/// Concatenated report over every client's test rows, each with its own scaler.
inline ProvisioningReport provisioning_report(const ModelParams& params, std::span<const FederatedClient> clients) {
    std::vector<double> errors;
    for (const auto& c : clients) {
        if (c.test_targets.empty()) continue;
        if (!c.dataset.scaler) throw UsageError("provisioning needs scaled client data");
        auto part = provisioning_report(params, c.test_features, c.test_targets, *c.dataset.scaler);
        errors.insert(errors.end(), part.errors.begin(), part.errors.end());
    }
    if (errors.empty()) throw UsageError("provisioning report over an empty test pool");
    return provisioning_from_errors(std::move(errors));
}

/// Provisioning at the first round and at the convergence round of one run.
struct ProvisioningSnapshot {
    long initial_round = -1;
    long convergence_round = -1;
    ProvisioningReport initial;
    ProvisioningReport converged;
};

inline ProvisioningSnapshot provisioning_snapshot(const SliceRun& run, std::span<const FederatedClient> clients,
                                                  double tolerance) {
    ProvisioningSnapshot snap;
    if (run.records.empty()) return snap;
    snap.initial_round = 0;
    snap.convergence_round = convergence_round(run.records, tolerance);
    snap.initial = provisioning_report(run.records.front().global_params, clients);
    snap.converged =
        provisioning_report(run.records[static_cast<std::size_t>(snap.convergence_round)].global_params, clients);
    return snap;
}

// ---------------------------------------------------------------------------
// Files

inline std::string rounds_file_name(Slice s, Policy p) {
    return "rounds_" + std::string(slice_name(s)) + "_" + std::string(policy_name(p)) + ".csv";
}
inline std::string attributions_file_name(Slice s, Policy p) {
    return "attributions_" + std::string(slice_name(s)) + "_" + std::string(policy_name(p)) + ".csv";
}
inline std::string selection_file_name(Slice s, Policy p) {
    return "selection_" + std::string(slice_name(s)) + "_" + std::string(policy_name(p)) + ".csv";
}
inline std::string provisioning_file_name(Slice s) { return "provisioning_" + std::string(slice_name(s)) + ".csv"; }

inline constexpr std::string_view kRoundsHeader = "round,mse,cum_time_ms,selected_ids,params_transmitted";

/// One row of a round log as read back from disk.
struct RoundRow {
    std::size_t round = 0;
    double mse = 0.0;
    double cum_time_ms = 0.0;
    std::vector<std::size_t> selected;
    std::uint64_t params_transmitted = 0;

    friend bool operator==(const RoundRow&, const RoundRow&) = default;
};

inline RoundRow to_row(const RoundRecord& r) {
    return {r.round, r.mse, r.cum_time_ms, r.selected, r.params_transmitted};
}

inline std::string join_ids(const std::vector<std::size_t>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) s += ';';
        s += std::to_string(ids[i]);
    }
    return s;
}

inline void write_rounds_csv(std::ostream& out, const std::vector<RoundRow>& rows) {
    out << kRoundsHeader << '\n';
    for (const auto& r : rows) {
        out << r.round << ',' << detail::format_double(r.mse) << ',' << detail::format_double(r.cum_time_ms) << ','
            << join_ids(r.selected) << ',' << r.params_transmitted << '\n';
    }
}

inline std::vector<RoundRow> read_rounds_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != kRoundsHeader) {
        throw SchemaError("round log header must be '" + std::string(kRoundsHeader) + "'");
    }
    std::vector<RoundRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != 5) throw ParseError("round log row " + std::to_string(line_no) + ": expected 5 cells", line_no);
        auto num = [&](std::string_view s) {
            auto v = detail::parse_double(s);
            if (!v) throw ParseError("round log row " + std::to_string(line_no) + ": bad number", line_no);
            return *v;
        };
        RoundRow r;
        r.round = static_cast<std::size_t>(num(cells[0]));
        r.mse = num(cells[1]);
        r.cum_time_ms = num(cells[2]);
        std::string ids(detail::trim(cells[3]));
        std::stringstream ss(ids);
        std::string id;
        while (std::getline(ss, id, ';')) {
            if (!id.empty()) r.selected.push_back(static_cast<std::size_t>(num(id)));
        }
        r.params_transmitted = static_cast<std::uint64_t>(std::stoull(std::string(detail::trim(cells[4]))));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<RoundRow> read_rounds_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_rounds_csv(in);
}

/// Attribution log: `round,client_id,chi_0,...`. Round -1 holds the pre-loop attributions.
inline void write_attributions_csv(std::ostream& out, const SliceRun& run) {
    const std::size_t f = run.initial_params.spec().inputs();
    out << "round,client_id";
    for (std::size_t i = 0; i < f; ++i) out << ",chi_" << i;
    out << '\n';
    auto dump = [&](long round, const AttributionMatrix& m) {
        for (std::size_t k = 0; k < m.rows(); ++k) {
            out << round << ',' << k;
            for (std::size_t i = 0; i < m.cols(); ++i) out << ',' << detail::format_double(m(k, i));
            out << '\n';
        }
    };
    dump(-1, run.initial_attributions);
    for (const auto& r : run.records) dump(static_cast<long>(r.round), r.attributions);
}

/// Selection audit: `round,client_id,selected_by_feature,chi_value`.
inline void write_selection_csv(std::ostream& out, const SliceRun& run) {
    out << "round,client_id,selected_by_feature,chi_value\n";
    for (const auto& r : run.records) {
        for (const auto& a : r.audit) {
            out << r.round << ',' << a.client_id << ',' << a.feature << ',' << detail::format_double(a.value) << '\n';
        }
    }
}

inline void write_comm_ledger_csv(std::ostream& out, const std::vector<SliceRun>& runs) {
    out << "slice,policy,round,downlink,uplink,total\n";
    for (const auto& run : runs) {
        for (const auto& r : run.records) {
            out << slice_name(run.slice) << ',' << policy_name(run.policy) << ',' << r.round << ',' << r.comm.downlink
                << ',' << r.comm.uplink << ',' << r.comm.total() << '\n';
        }
    }
}

inline void write_provisioning_csv(std::ostream& out, Policy policy, const ProvisioningSnapshot& snap) {
    out << "policy,phase,round,sample,p_err\n";
    auto dump = [&](std::string_view phase, long round, const ProvisioningReport& rep) {
        for (std::size_t i = 0; i < rep.errors.size(); ++i) {
            out << policy_name(policy) << ',' << phase << ',' << round << ',' << i << ','
                << detail::format_double(rep.errors[i]) << '\n';
        }
    };
    dump("initial", snap.initial_round, snap.initial);
    dump("convergence", snap.convergence_round, snap.converged);
}

}  // namespace isfl
