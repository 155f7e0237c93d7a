#pragma once

// Experiment configuration: defaults, JSON loading with field diagnostics,
// and key=value overrides.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "isfl/comm.hpp"
#include "isfl/data.hpp"
#include "isfl/error.hpp"

namespace isfl {

enum class DataSource { Synthetic, Csv };

struct ExperimentConfig {
    std::size_t clients = 10;          // K
    std::size_t selected = 5;          // m
    std::size_t rounds = 30;           // T
    int local_epochs = 150;            // L
    std::size_t attribution_samples = 150;  // I
    std::size_t features = kFeatureCount;   // F
    std::size_t dataset_size = 1000;   // D
    double learning_rate = 0.0015;
    std::uint64_t seed = 42;
    std::vector<Policy> policies{Policy::IntelliSelect, Policy::NoPolicy, Policy::Score};
    std::vector<Slice> slices{Slice::eMBB, Slice::SocialMedia, Slice::Browsing};
    std::vector<std::size_t> hidden_layers{3, 2};
    int ig_steps = 64;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-7;
    DataSource data_source = DataSource::Synthetic;
    std::string data_dir;
    double train_fraction = 0.8;
    double convergence_tolerance = 0.05;
    /// Free-form note echoed into the manifest (e.g. reduced T or L for a quick run).
    std::string note;

    NetworkSpec network() const {
        NetworkSpec spec;
        spec.layer_sizes.clear();
        spec.layer_sizes.push_back(features);
        spec.layer_sizes.insert(spec.layer_sizes.end(), hidden_layers.begin(), hidden_layers.end());
        spec.layer_sizes.push_back(1);
        return spec;
    }

    std::size_t train_size() const {
        return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(dataset_size)));
    }

    void validate() const {
        auto fail = [](const std::string& field, const std::string& msg) {
            throw ConfigError("field '" + field + "': " + msg);
        };
        if (clients < 1) fail("K", "must be at least 1");
        if (selected < 1) fail("m", "must be at least 1");
        if (selected > clients) fail("m", "m=" + std::to_string(selected) + " exceeds K=" + std::to_string(clients));
        if (local_epochs < 1) fail("L", "must be at least 1");
        if (features != kFeatureCount) fail("F", "the dataset schema has exactly 3 input features");
        if (dataset_size < 2 && data_source == DataSource::Synthetic) fail("D", "must be at least 2");
        if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
        if (policies.empty()) fail("policies", "at least one policy required");
        if (slices.empty()) fail("slices", "at least one slice required");
        if (ig_steps < 1) fail("ig.steps", "must be at least 1");
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("data.train_fraction", "must lie in (0,1)");
        if (attribution_samples < 1) fail("I", "must be at least 1");
        if (data_source == DataSource::Synthetic && attribution_samples > train_size()) {
            fail("I", "I=" + std::to_string(attribution_samples) + " exceeds the " + std::to_string(train_size()) +
                          "-row train split");
        }
        if (data_source == DataSource::Csv && data_dir.empty()) fail("data.dir", "required when data.source is csv");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam.beta1", "must lie in [0,1)");
        if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam.beta2", "must lie in [0,1)");
        if (!(adam_epsilon > 0.0)) fail("adam.epsilon", "must be positive");
        if (convergence_tolerance < 0.0) fail("convergence_tolerance", "must be non-negative");
        for (auto h : hidden_layers) {
            if (h == 0) fail("hidden_layers", "layer sizes must be positive");
        }
        if (hidden_layers.size() + 2 > kParamHeaderSlots) fail("hidden_layers", "at most 2 hidden layers");
    }
};

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    j["K"] = c.clients;
    j["m"] = c.selected;
    j["T"] = c.rounds;
    j["L"] = c.local_epochs;
    j["I"] = c.attribution_samples;
    j["F"] = c.features;
    j["N"] = c.slices.size();
    j["D"] = c.dataset_size;
    j["learning_rate"] = c.learning_rate;
    j["seed"] = c.seed;
    auto& pol = j["policies"] = nlohmann::ordered_json::array();
    for (auto p : c.policies) pol.push_back(std::string(policy_name(p)));
    auto& sl = j["slices"] = nlohmann::ordered_json::array();
    for (auto s : c.slices) sl.push_back(std::string(slice_name(s)));
    j["hidden_layers"] = c.hidden_layers;
    j["ig"] = {{"steps", c.ig_steps}};
    j["adam"] = {{"beta1", c.adam_beta1}, {"beta2", c.adam_beta2}, {"epsilon", c.adam_epsilon}};
    j["data"] = {{"source", c.data_source == DataSource::Synthetic ? "synthetic" : "csv"},
                 {"dir", c.data_dir},
                 {"train_fraction", c.train_fraction}};
    j["convergence_tolerance"] = c.convergence_tolerance;
    j["note"] = c.note;
    return j;
}

namespace detail {

/// Line of the first occurrence of "key" in the raw config text, 0 when unknown.
inline std::size_t line_of_key(const std::string& text, const std::string& key) {
    if (text.empty()) return 0;
    const std::string leaf = key.substr(key.rfind('.') == std::string::npos ? 0 : key.rfind('.') + 1);
    auto pos = text.find("\"" + leaf + "\"");
    if (pos == std::string::npos) return 0;
    return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
}

inline std::string where(const std::string& text, const std::string& key) {
    auto line = line_of_key(text, key);
    return line ? " (line " + std::to_string(line) + ")" : "";
}

/// Merges `patch` onto `base`, rejecting keys that base does not define.
inline void merge_checked(nlohmann::ordered_json& base, const nlohmann::ordered_json& patch, const std::string& prefix,
                          const std::string& text) {
    if (!patch.is_object()) throw ConfigError("configuration root must be a JSON object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) {
            throw ConfigError("unknown configuration key '" + key + "'" + where(text, key));
        }
        auto& target = base[it.key()];
        if (target.is_object()) {
            if (!it.value().is_object()) {
                throw ConfigError("field '" + key + "': expected an object" + where(text, key));
            }
            merge_checked(target, it.value(), key, text);
        } else {
            target = it.value();
        }
    }
}

template <typename T>
T field(const nlohmann::ordered_json& j, const std::string& path, const std::string& text) {
    const nlohmann::ordered_json* node = &j;
    std::size_t start = 0;
    while (true) {
        auto dot = path.find('.', start);
        node = &node->at(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    try {
        if constexpr (std::is_unsigned_v<T>) {
            if (!node->is_number_unsigned()) throw ConfigError("");
        } else if constexpr (std::is_integral_v<T>) {
            if (!node->is_number_integer()) throw ConfigError("");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!node->is_number()) throw ConfigError("");
        }
        return node->get<T>();
    } catch (const std::exception&) {
        std::string expected = std::is_unsigned_v<T>        ? "a non-negative integer"
                               : std::is_integral_v<T>       ? "an integer"
                               : std::is_floating_point_v<T> ? "a number"
                                                             : "a value of the right type";
        throw ConfigError("field '" + path + "': expected " + expected + ", got " + node->dump() + where(text, path));
    }
}

}  // namespace detail

/// Builds a config from a JSON document layered over the defaults.
inline ExperimentConfig config_from_json(const nlohmann::ordered_json& doc, const std::string& text = {}) {
    ExperimentConfig defaults;
    auto merged = to_json(defaults);
    detail::merge_checked(merged, doc, "", text);

    ExperimentConfig c;
    using detail::field;
    c.clients = field<std::size_t>(merged, "K", text);
    c.selected = field<std::size_t>(merged, "m", text);
    c.rounds = field<std::size_t>(merged, "T", text);
    c.local_epochs = field<int>(merged, "L", text);
    c.attribution_samples = field<std::size_t>(merged, "I", text);
    c.features = field<std::size_t>(merged, "F", text);
    c.dataset_size = field<std::size_t>(merged, "D", text);
    c.learning_rate = field<double>(merged, "learning_rate", text);
    c.seed = field<std::uint64_t>(merged, "seed", text);
    c.ig_steps = field<int>(merged, "ig.steps", text);
    c.adam_beta1 = field<double>(merged, "adam.beta1", text);
    c.adam_beta2 = field<double>(merged, "adam.beta2", text);
    c.adam_epsilon = field<double>(merged, "adam.epsilon", text);
    c.train_fraction = field<double>(merged, "data.train_fraction", text);
    c.convergence_tolerance = field<double>(merged, "convergence_tolerance", text);
    c.note = field<std::string>(merged, "note", text);
    c.data_dir = field<std::string>(merged, "data.dir", text);

    const auto source = field<std::string>(merged, "data.source", text);
    if (source == "synthetic") {
        c.data_source = DataSource::Synthetic;
    } else if (source == "csv") {
        c.data_source = DataSource::Csv;
    } else {
        throw ConfigError("field 'data.source': expected \"synthetic\" or \"csv\", got \"" + source + "\"" +
                          detail::where(text, "data.source"));
    }

    auto string_list = [&](const std::string& key) {
        const auto& node = merged.at(key);
        std::vector<std::string> out;
        if (node.is_string()) {
            std::stringstream ss(node.get<std::string>());
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (!item.empty()) out.push_back(item);
            }
        } else if (node.is_array()) {
            for (const auto& v : node) {
                if (!v.is_string()) {
                    throw ConfigError("field '" + key + "': expected a list of names" + detail::where(text, key));
                }
                out.push_back(v.get<std::string>());
            }
        } else {
            throw ConfigError("field '" + key + "': expected a list of names" + detail::where(text, key));
        }
        return out;
    };
    try {
        c.policies.clear();
        for (const auto& p : string_list("policies")) c.policies.push_back(parse_policy(p));
        c.slices.clear();
        for (const auto& s : string_list("slices")) c.slices.push_back(parse_slice(s));
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.rfind("field", 0) == 0) throw;
        throw ConfigError("field '" + std::string(msg.find("policy") != std::string::npos ? "policies" : "slices") +
                          "': " + msg);
    }

    const auto& hidden = merged.at("hidden_layers");
    if (!hidden.is_array()) throw ConfigError("field 'hidden_layers': expected a list of sizes");
    c.hidden_layers.clear();
    for (const auto& h : hidden) {
        if (!h.is_number_unsigned()) throw ConfigError("field 'hidden_layers': expected positive integers");
        c.hidden_layers.push_back(h.get<std::size_t>());
    }

    // N may be omitted when the slice list is given; it is then implied.
    const auto n = doc.contains("slices") && !doc.contains("N") ? c.slices.size() : field<std::size_t>(merged, "N", text);
    if (n != c.slices.size()) {
        throw ConfigError("field 'N': N=" + std::to_string(n) + " but " + std::to_string(c.slices.size()) +
                          " slices are listed" + detail::where(text, "N"));
    }
    c.validate();
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const auto offset = std::min<std::size_t>(e.byte, text.size());
        const auto line =
            static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n')) + 1;
        throw ConfigError("configuration is not valid JSON (line " + std::to_string(line) + "): " + e.what());
    }
    return config_from_json(doc, text);
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read configuration file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    try {
        return parse_config_text(read_text_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Applies `key=value` overrides; dotted keys address nested groups. Values are
/// read as JSON when possible, otherwise as plain strings.
inline ExperimentConfig apply_overrides(const ExperimentConfig& base, const std::vector<std::string>& overrides) {
    auto doc = to_json(base);
    bool slices_set = false, n_set = false;
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override '" + ov + "' is not of the form key=value");
        }
        const std::string key = ov.substr(0, eq);
        const std::string raw = ov.substr(eq + 1);
        nlohmann::ordered_json value;
        try {
            value = nlohmann::ordered_json::parse(raw);
        } catch (const nlohmann::json::parse_error&) {
            value = raw;
        }
        nlohmann::ordered_json patch = value;
        std::string rest = key;
        std::vector<std::string> parts;
        std::size_t start = 0;
        while (true) {
            auto dot = rest.find('.', start);
            parts.push_back(rest.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
            nlohmann::ordered_json wrap;
            wrap[*it] = patch;
            patch = wrap;
        }
        slices_set |= key == "slices";
        n_set |= key == "N";
        detail::merge_checked(doc, patch, "", {});
    }
    // A new slice list implies N unless N was overridden too.
    if (slices_set && !n_set) {
        const auto& sl = doc["slices"];
        if (sl.is_array()) {
            doc["N"] = sl.size();
        } else if (sl.is_string()) {
            const auto names = sl.get<std::string>();
            doc["N"] = static_cast<std::uint64_t>(names.empty() ? 0 : std::count(names.begin(), names.end(), ',') + 1);
        }
    }
    return config_from_json(doc);
}

}  // namespace isfl
