#pragma once

// Client selection: proportional apportionment of selection slots across
// features by global importance, plus the all-clients and score baselines.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "isfl/error.hpp"
#include "isfl/nn.hpp"

namespace isfl {

/// K x F matrix; row k is client k's normalized attribution.
using AttributionMatrix = Matrix;

struct GlobalFeatureImportance {
    std::vector<double> tau;
};

struct SelectionAudit {
    std::size_t client_id = 0;
    /// Feature slot that picked the client, or -1 for policies without slots.
    int feature = -1;
    /// Attribution value for slot picks, score for the score policy, 0 otherwise.
    double value = 0.0;

    friend bool operator==(const SelectionAudit&, const SelectionAudit&) = default;
};

struct SelectionResult {
    std::vector<std::size_t> selected;
    std::vector<std::size_t> per_feature_quota;
    bool all_clients = false;
    std::vector<SelectionAudit> audit;

    friend bool operator==(const SelectionResult&, const SelectionResult&) = default;
};

inline GlobalFeatureImportance aggregate_importance(const AttributionMatrix& chis) {
    if (chis.rows() == 0 || chis.cols() == 0) throw UsageError("importance aggregation over an empty matrix");
    GlobalFeatureImportance g;
    g.tau.assign(chis.cols(), 0.0);
    for (std::size_t k = 0; k < chis.rows(); ++k) {
        for (std::size_t f = 0; f < chis.cols(); ++f) g.tau[f] += std::abs(chis(k, f));
    }
    for (auto& t : g.tau) t /= static_cast<double>(chis.rows());
    return g;
}

/// Largest-remainder (Hamilton) apportionment of m slots proportional to tau.
/// Leftover slots go by descending fractional remainder, ties to the lower index.
inline std::vector<std::size_t> apportion(const GlobalFeatureImportance& importance, std::size_t m) {
    const auto& tau = importance.tau;
    if (tau.empty()) throw UsageError("apportionment needs at least one feature");
    double total = 0.0;
    for (double t : tau) {
        if (t < 0.0 || !std::isfinite(t)) throw ConfigError("feature importance must be finite and non-negative");
        total += t;
    }
    if (std::abs(total - 1.0) > 1e-6) throw ConfigError("feature importance must sum to 1");

    const std::size_t f = tau.size();
    std::vector<std::size_t> quota(f);
    std::vector<double> remainder(f);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < f; ++i) {
        const double exact = static_cast<double>(m) * tau[i] / total;
        const double fl = std::floor(exact);
        quota[i] = static_cast<std::size_t>(fl);
        remainder[i] = exact - fl;
        assigned += quota[i];
    }
    std::vector<std::size_t> order(f);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < m; ++i, ++assigned) quota[order[i % f]] += 1;
    return quota;
}

/// Features in descending importance order; each takes its quota of the
/// highest-attributed clients not already taken by an earlier feature.
inline SelectionResult select_clients(const AttributionMatrix& chis, const std::vector<std::size_t>& quotas,
                                      const GlobalFeatureImportance& importance, std::size_t m) {
    const std::size_t k = chis.rows();
    const std::size_t f = chis.cols();
    if (m > k) {
        throw ConfigError("cannot select " + std::to_string(m) + " clients out of " + std::to_string(k));
    }
    if (quotas.size() != f || importance.tau.size() != f) throw ConfigError("quota/importance/feature count mismatch");
    if (std::accumulate(quotas.begin(), quotas.end(), std::size_t{0}) != m) {
        throw ConfigError("feature quotas must sum to m");
    }

    std::vector<std::size_t> feature_order(f);
    std::iota(feature_order.begin(), feature_order.end(), 0);
    std::stable_sort(feature_order.begin(), feature_order.end(),
                     [&](std::size_t a, std::size_t b) { return importance.tau[a] > importance.tau[b]; });

    SelectionResult result;
    result.per_feature_quota = quotas;
    std::vector<bool> taken(k, false);
    std::vector<std::size_t> ranked(k);
    for (auto feat : feature_order) {
        std::iota(ranked.begin(), ranked.end(), 0);
        std::stable_sort(ranked.begin(), ranked.end(),
                         [&](std::size_t a, std::size_t b) { return chis(a, feat) > chis(b, feat); });
        std::size_t need = quotas[feat];
        for (auto client : ranked) {
            if (need == 0) break;
            if (taken[client]) continue;
            taken[client] = true;
            result.selected.push_back(client);
            result.audit.push_back({client, static_cast<int>(feat), chis(client, feat)});
            --need;
        }
    }
    return result;
}

/// The proportional policy end to end: aggregate, apportion, select.
inline SelectionResult select_intelliselect(const AttributionMatrix& chis, std::size_t m) {
    if (m > chis.rows()) {
        throw ConfigError("cannot select " + std::to_string(m) + " clients out of " + std::to_string(chis.rows()));
    }
    auto importance = aggregate_importance(chis);
    auto quotas = apportion(importance, m);
    return select_clients(chis, quotas, importance, m);
}

inline SelectionResult select_no_policy(std::size_t k) {
    SelectionResult result;
    result.all_clients = true;
    result.selected.resize(k);
    std::iota(result.selected.begin(), result.selected.end(), 0);
    for (auto c : result.selected) result.audit.push_back({c, -1, 0.0});
    return result;
}

/// Cosine similarity; 0 when either vector is zero.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Top-m clients by cosine similarity between their attribution and the global mean.
inline SelectionResult select_by_score(const AttributionMatrix& chis, const GlobalFeatureImportance& importance,
                                       std::size_t m) {
    const std::size_t k = chis.rows();
    if (m > k) throw ConfigError("cannot select " + std::to_string(m) + " clients out of " + std::to_string(k));
    if (importance.tau.size() != chis.cols()) throw ConfigError("importance/feature count mismatch");
    std::vector<double> score(k);
    for (std::size_t c = 0; c < k; ++c) score[c] = cosine_similarity(chis.row(c), importance.tau);
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    SelectionResult result;
    for (std::size_t i = 0; i < m; ++i) {
        result.selected.push_back(order[i]);
        result.audit.push_back({order[i], -1, score[order[i]]});
    }
    return result;
}

}  // namespace isfl
