#pragma once

// Integrated Gradients attributions and their per-client reduction into a
// normalized feature-importance vector.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "isfl/error.hpp"
#include "isfl/nn.hpp"

namespace isfl {

struct IgConfig {
    int steps = 64;
    /// Empty means the all-zero baseline.
    std::vector<double> baseline;
    std::size_t sample_count = 150;

    void validate(std::size_t features) const {
        if (steps < 1) throw ConfigError("integrated gradients needs at least one step");
        if (sample_count < 1) throw ConfigError("attribution sample count must be positive");
        if (!baseline.empty() && baseline.size() != features) {
            throw ConfigError("attribution baseline has wrong dimension");
        }
    }
};

struct AttributionVector {
    std::size_t client_id = 0;
    std::size_t sample_count = 0;
    std::vector<double> values;
};

/// Signed Integrated Gradients of the network output for one input, using the
/// midpoint rule with cfg.steps points along the straight path from the baseline.
inline std::vector<double> integrated_gradients(const ModelParams& params, std::span<const double> x,
                                                const IgConfig& cfg) {
    const std::size_t f = params.spec().inputs();
    detail::check_input(params.spec(), x);
    cfg.validate(f);
    std::vector<double> base = cfg.baseline.empty() ? std::vector<double>(f, 0.0) : cfg.baseline;

    detail::Workspace ws(params.spec());
    std::vector<double> point(f);
    std::vector<double> grad_sum(f, 0.0);
    for (int s = 0; s < cfg.steps; ++s) {
        const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(cfg.steps);
        for (std::size_t i = 0; i < f; ++i) point[i] = base[i] + alpha * (x[i] - base[i]);
        ws.forward(params.values(), point);
        ws.backward(params.values(), 1.0, {});
        auto g = ws.input_delta();
        for (std::size_t i = 0; i < f; ++i) grad_sum[i] += g[i];
    }
    std::vector<double> ig(f);
    for (std::size_t i = 0; i < f; ++i) {
        ig[i] = (x[i] - base[i]) * grad_sum[i] / static_cast<double>(cfg.steps);
    }
    return ig;
}

/// Mean absolute IG over the given rows (un-normalized importance).
inline std::vector<double> mean_abs_attribution(const ModelParams& params, const Matrix& samples,
                                                const IgConfig& cfg) {
    if (samples.rows() == 0) throw UsageError("attribution over an empty sample set");
    const std::size_t f = params.spec().inputs();
    std::vector<double> acc(f, 0.0);
    for (std::size_t r = 0; r < samples.rows(); ++r) {
        auto ig = integrated_gradients(params, samples.row(r), cfg);
        for (std::size_t i = 0; i < f; ++i) acc[i] += std::abs(ig[i]);
    }
    for (auto& a : acc) a /= static_cast<double>(samples.rows());
    return acc;
}

/// Divides by the component sum. Throws DegenerateAttributionError when the sum is zero.
inline std::vector<double> normalize_attribution(std::vector<double> importance) {
    double total = 0.0;
    for (double v : importance) total += v;
    if (!(total > 0.0) || !std::isfinite(total)) {
        throw DegenerateAttributionError("attribution vector sums to zero; normalization undefined");
    }
    for (auto& v : importance) v /= total;
    return importance;
}

/// IG over the first cfg.sample_count rows of `pool`, absolute-averaged and normalized.
inline AttributionVector client_attribution(const ModelParams& params, const Matrix& pool, std::size_t client_id,
                                            const IgConfig& cfg) {
    if (pool.rows() < cfg.sample_count) {
        throw ConfigError("client " + std::to_string(client_id) + " has " + std::to_string(pool.rows()) +
                          " attribution samples, " + std::to_string(cfg.sample_count) + " required");
    }
    std::vector<std::size_t> first(cfg.sample_count);
    for (std::size_t i = 0; i < first.size(); ++i) first[i] = i;
    auto subset = pool.select_rows(first);
    AttributionVector out;
    out.client_id = client_id;
    out.sample_count = cfg.sample_count;
    out.values = normalize_attribution(mean_abs_attribution(params, subset, cfg));
    return out;
}

/// Same as client_attribution but maps a degenerate (all-zero) result to the uniform vector.
inline AttributionVector client_attribution_or_uniform(const ModelParams& params, const Matrix& pool,
                                                       std::size_t client_id, const IgConfig& cfg) {
    try {
        return client_attribution(params, pool, client_id, cfg);
    } catch (const DegenerateAttributionError&) {
        const std::size_t f = params.spec().inputs();
        return AttributionVector{client_id, cfg.sample_count, std::vector<double>(f, 1.0 / static_cast<double>(f))};
    }
}

}  // namespace isfl
