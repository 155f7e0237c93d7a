#pragma once

// Small fully-connected regression network: ReLU hidden layers, identity output,
// reverse-mode gradients with respect to parameters and inputs, and Adam.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

#include "isfl/error.hpp"

namespace isfl {

/// Dense row-major matrix of doubles. Rows are samples, columns are features.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ConfigError("matrix data length " + std::to_string(data_.size()) +
                              " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    const std::vector<double>& data() const noexcept { return data_; }

    void append_row(std::span<const double> values) {
        if (cols_ == 0 && rows_ == 0) cols_ = values.size();
        if (values.size() != cols_) throw ConfigError("row width mismatch");
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    /// Copy of the listed rows, in the listed order.
    Matrix select_rows(std::span<const std::size_t> indices) const {
        Matrix out(indices.size(), cols_);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            auto src = row(indices[i]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct NetworkSpec {
    std::vector<std::size_t> layer_sizes{3, 3, 2, 1};

    std::size_t inputs() const { return layer_sizes.front(); }
    std::size_t layer_count() const { return layer_sizes.size() - 1; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
            n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
        }
        return n;
    }

    void validate() const {
        if (layer_sizes.size() < 2) throw ConfigError("network needs at least an input and an output layer");
        for (auto s : layer_sizes) {
            if (s == 0) throw ConfigError("layer sizes must be positive");
        }
        if (layer_sizes.back() != 1) throw ConfigError("output layer must have exactly one neuron");
    }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Flat parameter vector in layer-major order: for each layer the weights
/// (row-major, one row per output neuron) followed by the biases.
class ModelParams {
public:
    ModelParams() : ModelParams(NetworkSpec{}) {}
    explicit ModelParams(NetworkSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        values_.assign(spec_.param_count(), 0.0);
    }
    ModelParams(NetworkSpec spec, std::vector<double> values) : spec_(std::move(spec)), values_(std::move(values)) {
        spec_.validate();
        if (values_.size() != spec_.param_count()) {
            throw ConfigError("parameter vector has " + std::to_string(values_.size()) + " entries, spec requires " +
                              std::to_string(spec_.param_count()));
        }
    }

    const NetworkSpec& spec() const noexcept { return spec_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    NetworkSpec spec_;
    std::vector<double> values_;
};

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step_count = 0;
    double learning_rate = 0.0015;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;

    static AdamState fresh(std::size_t n, double learning_rate = 0.0015, double beta1 = 0.9,
                           double beta2 = 0.999, double epsilon = 1e-7) {
        AdamState s;
        s.first_moment.assign(n, 0.0);
        s.second_moment.assign(n, 0.0);
        s.learning_rate = learning_rate;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.epsilon = epsilon;
        return s;
    }
};

namespace detail {

inline double relu(double v) { return v > 0.0 ? v : 0.0; }
// Subgradient at exactly zero is zero.
inline double relu_grad(double pre) { return pre > 0.0 ? 1.0 : 0.0; }

/// Reusable activation buffers so per-sample passes do not allocate.
class Workspace {
public:
    explicit Workspace(const NetworkSpec& spec) : spec_(spec) {
        pre_.resize(spec.layer_sizes.size());
        act_.resize(spec.layer_sizes.size());
        delta_.resize(spec.layer_sizes.size());
        for (std::size_t l = 0; l < spec.layer_sizes.size(); ++l) {
            pre_[l].assign(spec.layer_sizes[l], 0.0);
            act_[l].assign(spec.layer_sizes[l], 0.0);
            delta_[l].assign(spec.layer_sizes[l], 0.0);
        }
    }

    double forward(std::span<const double> params, std::span<const double> x) {
        const auto& sizes = spec_.layer_sizes;
        std::copy(x.begin(), x.end(), act_[0].begin());
        std::copy(x.begin(), x.end(), pre_[0].begin());
        std::size_t offset = 0;
        const std::size_t last = sizes.size() - 1;
        for (std::size_t l = 1; l < sizes.size(); ++l) {
            const std::size_t in = sizes[l - 1];
            const std::size_t out = sizes[l];
            const double* w = params.data() + offset;
            const double* b = w + in * out;
            for (std::size_t o = 0; o < out; ++o) {
                double z = b[o];
                const double* wrow = w + o * in;
                for (std::size_t i = 0; i < in; ++i) z += wrow[i] * act_[l - 1][i];
                pre_[l][o] = z;
                act_[l][o] = (l == last) ? z : relu(z);
            }
            offset += in * out + out;
        }
        return act_[last][0];
    }

    /// Back-propagates an output sensitivity through the most recent forward pass.
    /// Accumulates parameter gradients into `grad` when non-empty and leaves the
    /// input sensitivity in input_delta().
    void backward(std::span<const double> params, double output_delta, std::span<double> grad) {
        const auto& sizes = spec_.layer_sizes;
        const std::size_t last = sizes.size() - 1;
        delta_[last][0] = output_delta;
        std::size_t offset = spec_.param_count();
        for (std::size_t l = last; l >= 1; --l) {
            const std::size_t in = sizes[l - 1];
            const std::size_t out = sizes[l];
            offset -= in * out + out;
            const double* w = params.data() + offset;
            // delta_[l] holds dLoss/dz for layer l (identity at output, ReLU already folded in below).
            if (!grad.empty()) {
                double* gw = grad.data() + offset;
                double* gb = gw + in * out;
                for (std::size_t o = 0; o < out; ++o) {
                    const double d = delta_[l][o];
                    double* grow = gw + o * in;
                    for (std::size_t i = 0; i < in; ++i) grow[i] += d * act_[l - 1][i];
                    gb[o] += d;
                }
            }
            for (std::size_t i = 0; i < in; ++i) {
                double s = 0.0;
                for (std::size_t o = 0; o < out; ++o) s += w[o * in + i] * delta_[l][o];
                delta_[l - 1][i] = (l - 1 == 0) ? s : s * relu_grad(pre_[l - 1][i]);
            }
        }
    }

    std::span<const double> input_delta() const { return delta_[0]; }

private:
    const NetworkSpec& spec_;
    std::vector<std::vector<double>> pre_;
    std::vector<std::vector<double>> act_;
    std::vector<std::vector<double>> delta_;
};

inline void check_input(const NetworkSpec& spec, std::span<const double> x) {
    if (x.size() != spec.inputs()) {
        throw ConfigError("input has " + std::to_string(x.size()) + " features, network expects " +
                          std::to_string(spec.inputs()));
    }
}

}  // namespace detail

inline double forward(const ModelParams& params, std::span<const double> x) {
    detail::check_input(params.spec(), x);
    detail::Workspace ws(params.spec());
    return ws.forward(params.values(), x);
}

/// Predictions for every row of `features`.
inline std::vector<double> predict(const ModelParams& params, const Matrix& features) {
    if (!features.empty()) detail::check_input(params.spec(), features.row(0));
    detail::Workspace ws(params.spec());
    std::vector<double> out(features.rows());
    for (std::size_t r = 0; r < features.rows(); ++r) out[r] = ws.forward(params.values(), features.row(r));
    return out;
}

inline double mse(const ModelParams& params, const Matrix& features, std::span<const double> targets) {
    if (features.rows() == 0) throw UsageError("mean squared error of an empty sample set");
    if (features.rows() != targets.size()) throw ConfigError("feature/target row count mismatch");
    detail::check_input(params.spec(), features.row(0));
    detail::Workspace ws(params.spec());
    double acc = 0.0;
    for (std::size_t r = 0; r < features.rows(); ++r) {
        const double e = ws.forward(params.values(), features.row(r)) - targets[r];
        acc += e * e;
    }
    return acc / static_cast<double>(features.rows());
}

/// Gradient of the batch-mean squared error with respect to every parameter.
inline std::vector<double> param_gradients(const ModelParams& params, const Matrix& features,
                                           std::span<const double> targets) {
    if (features.rows() == 0) throw UsageError("parameter gradients need a non-empty batch");
    if (features.rows() != targets.size()) throw ConfigError("feature/target row count mismatch");
    detail::check_input(params.spec(), features.row(0));
    detail::Workspace ws(params.spec());
    std::vector<double> grad(params.size(), 0.0);
    const double scale = 2.0 / static_cast<double>(features.rows());
    for (std::size_t r = 0; r < features.rows(); ++r) {
        const double err = ws.forward(params.values(), features.row(r)) - targets[r];
        ws.backward(params.values(), scale * err, grad);
    }
    return grad;
}

/// d(prediction)/d(x_i) at x.
inline std::vector<double> input_gradients(const ModelParams& params, std::span<const double> x) {
    detail::check_input(params.spec(), x);
    detail::Workspace ws(params.spec());
    ws.forward(params.values(), x);
    ws.backward(params.values(), 1.0, {});
    auto d = ws.input_delta();
    return {d.begin(), d.end()};
}

inline std::pair<ModelParams, AdamState> adam_step(ModelParams params, std::span<const double> grads,
                                                   AdamState state) {
    const std::size_t n = params.size();
    if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
        throw ConfigError("Adam: gradient, moment and parameter lengths differ");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) throw NumericError("Adam: non-finite gradient component");
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    auto& w = params.values();
    for (std::size_t i = 0; i < n; ++i) {
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * grads[i];
        state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.first_moment[i] / bc1;
        const double v_hat = state.second_moment[i] / bc2;
        w[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    return {std::move(params), std::move(state)};
}

/// Full-batch Adam for `epochs` passes over the given training rows.
inline ModelParams train_local(ModelParams params, const Matrix& features, std::span<const double> targets,
                               int epochs, AdamState state) {
    if (epochs < 1) throw ConfigError("local training needs at least one epoch");
    if (features.rows() == 0) throw UsageError("local training on an empty train split");
    if (state.first_moment.size() != params.size()) {
        state = AdamState::fresh(params.size(), state.learning_rate, state.beta1, state.beta2, state.epsilon);
    }
    for (int e = 0; e < epochs; ++e) {
        auto grads = param_gradients(params, features, targets);
        std::tie(params, state) = adam_step(std::move(params), grads, std::move(state));
    }
    return params;
}

/// Glorot-uniform weights, zero biases.
inline ModelParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
    ModelParams p(spec);
    std::mt19937_64 rng(seed);
    auto& v = p.values();
    std::size_t offset = 0;
    for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
        const std::size_t in = spec.layer_sizes[l - 1];
        const std::size_t out = spec.layer_sizes[l];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < in * out; ++i) v[offset + i] = dist(rng);
        offset += in * out + out;
    }
    return p;
}

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<std::uint8_t, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.insert(out.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw ParseError("truncated parameter blob", pos);
    std::array<std::uint8_t, sizeof(T)> bytes;
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(pos), sizeof(T), bytes.begin());
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    pos += sizeof(T);
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace detail

inline constexpr std::size_t kParamHeaderSlots = 4;

/// Header of four little-endian uint32 layer sizes (zero-padded for shallower
/// networks), then every parameter as a little-endian IEEE-754 double.
inline std::vector<std::uint8_t> serialize(const ModelParams& params) {
    const auto& sizes = params.spec().layer_sizes;
    if (sizes.size() > kParamHeaderSlots) throw ConfigError("parameter blob header holds at most 4 layers");
    std::vector<std::uint8_t> out;
    out.reserve(kParamHeaderSlots * 4 + params.size() * 8);
    for (std::size_t i = 0; i < kParamHeaderSlots; ++i) {
        detail::put_le<std::uint32_t>(out, i < sizes.size() ? static_cast<std::uint32_t>(sizes[i]) : 0u);
    }
    for (double v : params.values()) detail::put_le<double>(out, v);
    return out;
}

inline ModelParams deserialize(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    NetworkSpec spec;
    spec.layer_sizes.clear();
    bool padding = false;
    for (std::size_t i = 0; i < kParamHeaderSlots; ++i) {
        const auto s = detail::get_le<std::uint32_t>(bytes, pos);
        if (s == 0) {
            padding = true;
        } else if (padding) {
            throw ParseError("non-zero layer size after padding in parameter header", pos);
        } else {
            spec.layer_sizes.push_back(s);
        }
    }
    spec.validate();
    std::vector<double> values(spec.param_count());
    for (auto& v : values) v = detail::get_le<double>(bytes, pos);
    if (pos != bytes.size()) throw ParseError("trailing bytes after parameter blob", pos);
    return ModelParams(std::move(spec), std::move(values));
}

}  // namespace isfl
