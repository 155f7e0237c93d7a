#pragma once

// Per-slice client datasets: synthetic non-IID generation, CSV ingestion and
// export in the OTT/CQI/MIMO/CPU column layout, chronological splits and
// min-max scaling fitted on the train split only.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "isfl/error.hpp"
#include "isfl/nn.hpp"

namespace isfl {

inline constexpr std::size_t kFeatureCount = 3;

enum class Slice { eMBB, SocialMedia, Browsing };

inline constexpr std::array<Slice, 3> kAllSlices{Slice::eMBB, Slice::SocialMedia, Slice::Browsing};

struct SliceSpec {
    Slice slice;
    std::string_view name;
    std::vector<std::string_view> ott_apps;
};

inline SliceSpec slice_spec(Slice s) {
    switch (s) {
        case Slice::eMBB: return {s, "eMBB", {"Netflix", "Youtube", "Facebook Video"}};
        case Slice::SocialMedia: return {s, "SocialMedia", {"Facebook", "Facebook Messages", "Whatsapp", "Instagram"}};
        case Slice::Browsing: return {s, "Browsing", {"Apple", "HTTPS", "QUIC"}};
    }
    throw ConfigError("unknown slice");
}

inline std::string_view slice_name(Slice s) { return slice_spec(s).name; }

inline Slice parse_slice(std::string_view name) {
    for (auto s : kAllSlices) {
        if (slice_name(s) == name) return s;
    }
    throw ConfigError("unknown slice '" + std::string(name) + "' (expected eMBB, SocialMedia or Browsing)");
}

inline std::size_t slice_index(Slice s) { return static_cast<std::size_t>(s); }

inline constexpr std::array<std::string_view, 10> kOttColumns{
    "Apple", "Facebook", "Facebook Messages", "Facebook Video", "HTTPS",
    "Instagram", "Netflix", "QUIC", "Whatsapp", "Youtube"};
inline constexpr std::string_view kCqiColumn = "CQI";
inline constexpr std::string_view kMimoColumn = "MIMO_FI";
inline constexpr std::string_view kCpuColumn = "CPU_Load";

/// Min-max parameters for each feature column and the target, fitted on train rows.
struct MinMaxScaler {
    std::vector<double> feature_min;
    std::vector<double> feature_max;
    double target_min = 0.0;
    double target_max = 0.0;

    static double scale(double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; }
    static double unscale(double v, double lo, double hi) { return hi > lo ? lo + v * (hi - lo) : lo; }

    double transform_feature(std::size_t f, double v) const { return scale(v, feature_min[f], feature_max[f]); }
    double inverse_feature(std::size_t f, double v) const { return unscale(v, feature_min[f], feature_max[f]); }
    double transform_target(double v) const { return scale(v, target_min, target_max); }
    double inverse_target(double v) const { return unscale(v, target_min, target_max); }

    friend bool operator==(const MinMaxScaler&, const MinMaxScaler&) = default;
};

/// One analytic engine's local samples for one slice. Columns: aggregated slice
/// traffic, CQI, MIMO full-rank usage. Target: CPU load.
struct ClientDataset {
    std::size_t client_id = 0;
    Slice slice = Slice::eMBB;
    Matrix features;
    std::vector<double> targets;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    /// Present once apply_scaler has run; features/targets are then in scaled units.
    std::optional<MinMaxScaler> scaler;

    std::size_t size() const noexcept { return targets.size(); }

    Matrix train_features() const { return features.select_rows(train_rows); }
    Matrix test_features() const { return features.select_rows(test_rows); }
    std::vector<double> train_targets() const { return pick(train_rows); }
    std::vector<double> test_targets() const { return pick(test_rows); }

private:
    std::vector<double> pick(const std::vector<std::size_t>& rows) const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (auto r : rows) out.push_back(targets[r]);
        return out;
    }
};

/// First floor(train_fraction * D) rows train, the remainder test, in time order.
inline ClientDataset chronological_split(ClientDataset data, double train_fraction = 0.8) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must be in (0,1)");
    const std::size_t d = data.size();
    auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(d)));
    n_train = std::clamp<std::size_t>(n_train, 1, d > 1 ? d - 1 : 1);
    data.train_rows.clear();
    data.test_rows.clear();
    for (std::size_t r = 0; r < d; ++r) (r < n_train ? data.train_rows : data.test_rows).push_back(r);
    return data;
}

inline MinMaxScaler fit_scaler(const ClientDataset& data) {
    if (data.train_rows.empty()) throw UsageError("scaler fit needs a non-empty train split");
    const std::size_t f = data.features.cols();
    MinMaxScaler s;
    s.feature_min.assign(f, std::numeric_limits<double>::infinity());
    s.feature_max.assign(f, -std::numeric_limits<double>::infinity());
    s.target_min = std::numeric_limits<double>::infinity();
    s.target_max = -std::numeric_limits<double>::infinity();
    for (auto r : data.train_rows) {
        for (std::size_t c = 0; c < f; ++c) {
            s.feature_min[c] = std::min(s.feature_min[c], data.features(r, c));
            s.feature_max[c] = std::max(s.feature_max[c], data.features(r, c));
        }
        s.target_min = std::min(s.target_min, data.targets[r]);
        s.target_max = std::max(s.target_max, data.targets[r]);
    }
    return s;
}

inline ClientDataset apply_scaler(ClientDataset data, const MinMaxScaler& s) {
    for (std::size_t r = 0; r < data.features.rows(); ++r) {
        for (std::size_t c = 0; c < data.features.cols(); ++c) {
            data.features(r, c) = s.transform_feature(c, data.features(r, c));
        }
        data.targets[r] = s.transform_target(data.targets[r]);
    }
    data.scaler = s;
    return data;
}

/// Inverse of apply_scaler: back to original units, scaler dropped.
inline ClientDataset invert_scaler(ClientDataset data) {
    if (!data.scaler) return data;
    const auto& s = *data.scaler;
    for (std::size_t r = 0; r < data.features.rows(); ++r) {
        for (std::size_t c = 0; c < data.features.cols(); ++c) {
            data.features(r, c) = s.inverse_feature(c, data.features(r, c));
        }
        data.targets[r] = s.inverse_target(data.targets[r]);
    }
    data.scaler.reset();
    return data;
}

/// Train rows in a seeded shuffled order; integrated-gradients samples are taken from its head.
inline Matrix attribution_pool(const ClientDataset& data, std::uint64_t seed) {
    std::vector<std::size_t> order = data.train_rows;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return data.features.select_rows(order);
}

// ---------------------------------------------------------------------------
// Synthetic generation

struct NonIidProfile {
    std::size_t client_id = 0;
    double traffic_scale = 1.0;
    /// Hours added to the clock before evaluating the 24h sinusoid.
    double diurnal_phase = 0.0;
    /// Relative swing of the sinusoid; 0 gives constant traffic.
    double diurnal_amplitude = 0.6;
    double cqi_mean = 9.0;
    double cqi_std = 1.5;
    /// Relative noise on traffic and scale of the heteroscedastic CPU noise.
    double noise_level = 0.05;
    std::array<double, kFeatureCount> mix_weights{0.5, 1.0, 0.1};
};

/// Hourly samples: traffic follows a scaled diurnal sinusoid, CQI a clipped
/// normal, MIMO full-rank usage tracks CQI, and CPU load is a clipped linear
/// mix of the three with noise growing with the load.
inline ClientDataset generate_client(const NonIidProfile& p, Slice slice, std::size_t d, std::uint64_t seed) {
    if (d < 2) throw GenerationError("synthetic dataset needs at least 2 samples");
    if (!(p.traffic_scale > 0.0) || !std::isfinite(p.traffic_scale)) {
        throw GenerationError("client " + std::to_string(p.client_id) + ": traffic scale must be positive");
    }
    if (p.noise_level < 0.0 || p.cqi_std < 0.0 || p.diurnal_amplitude < 0.0) {
        throw GenerationError("client " + std::to_string(p.client_id) + ": negative noise or amplitude");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    ClientDataset out;
    out.client_id = p.client_id;
    out.slice = slice;
    out.features = Matrix(d, kFeatureCount);
    out.targets.resize(d);
    for (std::size_t h = 0; h < d; ++h) {
        const double clock = static_cast<double>(h) + p.diurnal_phase;
        const double diurnal = 1.0 + p.diurnal_amplitude * std::sin(2.0 * std::numbers::pi * clock / 24.0);
        const double traffic = std::max(0.0, p.traffic_scale * (diurnal + p.noise_level * normal(rng)));
        const double cqi = std::clamp(p.cqi_mean + p.cqi_std * normal(rng), 0.0, 15.0);
        const double mimo = std::clamp(6.0 * cqi + 4.0 * normal(rng), 0.0, 100.0);
        const double base = p.mix_weights[0] * traffic + p.mix_weights[1] * cqi + p.mix_weights[2] * mimo;
        const double noise = p.noise_level * (2.0 + 0.1 * std::abs(base)) * normal(rng);
        out.features(h, 0) = traffic;
        out.features(h, 1) = cqi;
        out.features(h, 2) = mimo;
        out.targets[h] = std::clamp(base + noise, 0.0, 100.0);
    }
    return out;
}

namespace detail {
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}
}  // namespace detail

/// Seed used to generate client `client`'s data for `slice`.
inline std::uint64_t client_data_seed(std::uint64_t seed, Slice slice, std::size_t client) {
    return detail::mix_seed(detail::mix_seed(seed, slice_index(slice) + 1), client + 1);
}

/// Heterogeneous zone profiles (residential, business, event) for K clients.
inline std::vector<NonIidProfile> default_profiles(std::size_t k, Slice slice, std::uint64_t seed) {
    // Typical busy-hour traffic per slice; eMBB dominates volume.
    constexpr std::array<double, 3> kSliceTraffic{60.0, 30.0, 20.0};
    const double base_traffic = kSliceTraffic[slice_index(slice)];
    std::mt19937_64 rng(detail::mix_seed(seed, 1000 + slice_index(slice)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<NonIidProfile> out;
    out.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        NonIidProfile p;
        p.client_id = c;
        const double zone_factor = std::exp(std::log(0.35) + unit(rng) * (std::log(2.0) - std::log(0.35)));
        p.traffic_scale = base_traffic * zone_factor;
        switch (c % 3) {
            case 0: p.diurnal_phase = 10.0 + 2.0 * (unit(rng) - 0.5); break;  // residential, evening peak
            case 1: p.diurnal_phase = 17.0 + 2.0 * (unit(rng) - 0.5); break;  // business, midday peak
            default: p.diurnal_phase = 24.0 * unit(rng); break;             // event zone
        }
        p.diurnal_amplitude = 0.3 + 0.6 * unit(rng);
        p.cqi_mean = 5.0 + 7.0 * unit(rng);
        p.cqi_std = 1.5;
        p.noise_level = 0.03 + 0.03 * unit(rng);
        // CPU cost per unit of load is a property of the shared RAN software, so
        // the mix is common to all clients of a slice.
        p.mix_weights = {20.0 / base_traffic, 1.0, 0.15};
        out.push_back(p);
    }
    return out;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw UsageError("KS statistic of an empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double best = 0.0;
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return best;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string csv_header() {
    std::string h;
    for (auto c : kOttColumns) h += std::string(c) + ",";
    h += std::string(kCqiColumn) + "," + std::string(kMimoColumn) + "," + std::string(kCpuColumn);
    return h;
}

/// Parses the OTT/CQI/MIMO/CPU layout from a stream, summing the slice's OTT
/// columns into the traffic feature. Rows are taken in file order.
inline ClientDataset parse_csv(std::istream& in, Slice slice, std::size_t client_id = 0) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty CSV: header row missing");
    auto header = detail::split_csv_line(line);
    auto column_of = [&](std::string_view name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (detail::trim(header[i]) == name) return i;
        }
        throw SchemaError("CSV header is missing required column \"" + std::string(name) + "\"");
    };
    std::vector<std::size_t> traffic_cols;
    for (auto c : kOttColumns) {
        auto idx = column_of(c);
        const auto& apps = slice_spec(slice).ott_apps;
        if (std::find(apps.begin(), apps.end(), c) != apps.end()) traffic_cols.push_back(idx);
    }
    const std::size_t cqi_col = column_of(kCqiColumn);
    const std::size_t mimo_col = column_of(kMimoColumn);
    const std::size_t cpu_col = column_of(kCpuColumn);

    ClientDataset out;
    out.client_id = client_id;
    out.slice = slice;
    out.features = Matrix(0, kFeatureCount);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                 " cells, found " + std::to_string(cells.size()),
                             line_no);
        }
        auto number = [&](std::size_t col) {
            auto v = detail::parse_double(cells[col]);
            if (!v) {
                throw ParseError("row " + std::to_string(line_no) + ", column \"" +
                                     std::string(detail::trim(header[col])) + "\": not a number: \"" +
                                     std::string(cells[col]) + "\"",
                                 line_no);
            }
            return *v;
        };
        double traffic = 0.0;
        for (auto c : traffic_cols) traffic += number(c);
        std::array<double, kFeatureCount> row{traffic, number(cqi_col), number(mimo_col)};
        out.features.append_row(row);
        out.targets.push_back(number(cpu_col));
    }
    return out;
}

inline ClientDataset ingest_csv(const std::filesystem::path& path, Slice slice, std::size_t client_id = 0) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return parse_csv(in, slice, client_id);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.row());
    } catch (const SchemaError& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

/// Share of the slice traffic attributed to each of its OTT applications on export.
inline std::vector<double> ott_export_shares(Slice slice) {
    switch (slice) {
        case Slice::eMBB: return {0.45, 0.35, 0.20};
        case Slice::SocialMedia: return {0.35, 0.15, 0.30, 0.20};
        case Slice::Browsing: return {0.25, 0.50, 0.25};
    }
    return {};
}

/// Writes an unscaled dataset in the ingestion layout. Columns of applications
/// outside the slice are zero.
inline void write_csv(std::ostream& out, const ClientDataset& data) {
    if (data.scaler) throw UsageError("export expects unscaled data");
    const auto spec = slice_spec(data.slice);
    const auto shares = ott_export_shares(data.slice);
    out << csv_header() << '\n';
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (auto c : kOttColumns) {
            double v = 0.0;
            for (std::size_t a = 0; a < spec.ott_apps.size(); ++a) {
                if (spec.ott_apps[a] == c) v = data.features(r, 0) * shares[a];
            }
            out << detail::format_double(v) << ',';
        }
        out << detail::format_double(data.features(r, 1)) << ',' << detail::format_double(data.features(r, 2)) << ','
            << detail::format_double(data.targets[r]) << '\n';
    }
}

inline void write_csv(const std::filesystem::path& path, const ClientDataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_csv(out, data);
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace isfl
