#pragma once

// Link-load accounting in single-float parameters per round. Counts follow
// who sends what each round; nothing here is measured.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "isfl/error.hpp"

namespace isfl {

enum class Policy { IntelliSelect, NoPolicy, Score };

inline std::string_view policy_name(Policy p) {
    switch (p) {
        case Policy::IntelliSelect: return "intelliselect";
        case Policy::NoPolicy: return "no_policy";
        case Policy::Score: return "score";
    }
    return "unknown";
}

inline Policy parse_policy(std::string_view name) {
    if (name == "intelliselect") return Policy::IntelliSelect;
    if (name == "no_policy") return Policy::NoPolicy;
    if (name == "score") return Policy::Score;
    throw ConfigError("unknown policy '" + std::string(name) + "' (expected intelliselect, no_policy or score)");
}

struct RoundComm {
    std::uint64_t downlink = 0;
    std::uint64_t uplink = 0;
    std::uint64_t total() const { return downlink + uplink; }

    friend bool operator==(const RoundComm&, const RoundComm&) = default;
};

/// Parameters on the link in one round.
///   no_policy:      down K*P,      up K*P
///   intelliselect:  down K*P,      up m*P + K*F
///   score:          down K*P + F,  up m*P + K*F + K
inline RoundComm round_comm(Policy policy, std::uint64_t k, std::uint64_t m, std::uint64_t f, std::uint64_t p_nn) {
    if (m > k) throw ConfigError("selected clients exceed total clients");
    switch (policy) {
        case Policy::NoPolicy: return {k * p_nn, k * p_nn};
        case Policy::IntelliSelect: return {k * p_nn, m * p_nn + k * f};
        case Policy::Score: return {k * p_nn + f, m * p_nn + k * f + k};
    }
    return {};
}

struct CommLedger {
    Policy policy = Policy::IntelliSelect;
    std::vector<RoundComm> rounds;

    std::uint64_t total_downlink() const {
        std::uint64_t s = 0;
        for (const auto& r : rounds) s += r.downlink;
        return s;
    }
    std::uint64_t total_uplink() const {
        std::uint64_t s = 0;
        for (const auto& r : rounds) s += r.uplink;
        return s;
    }
    std::uint64_t total() const { return total_downlink() + total_uplink(); }
};

inline CommLedger comm_cost(Policy policy, std::uint64_t k, std::uint64_t m, std::uint64_t f, std::uint64_t p_nn,
                            std::uint64_t rounds) {
    CommLedger ledger;
    ledger.policy = policy;
    ledger.rounds.assign(rounds, round_comm(policy, k, m, f, p_nn));
    return ledger;
}

}  // namespace isfl
