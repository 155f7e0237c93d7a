#include <gtest/gtest.h>

#include <random>

#include "isfl/nn.hpp"
#include "oracles.hpp"

using namespace isfl;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    Matrix m(0, rows.front().size());
    for (const auto& r : rows) m.append_row(r);
    return m;
}

}  // namespace

TEST(NetworkSpec, DefaultHas23Parameters) {
    NetworkSpec spec;
    EXPECT_EQ(spec.param_count(), 23u);
    EXPECT_EQ(spec.inputs(), 3u);
    EXPECT_EQ(ModelParams().size(), 23u);
}

TEST(NetworkSpec, RejectsBadShapes) {
    EXPECT_THROW(ModelParams(NetworkSpec{{3}}), ConfigError);
    EXPECT_THROW(ModelParams(NetworkSpec{{3, 0, 1}}), ConfigError);
    EXPECT_THROW(ModelParams(NetworkSpec{{3, 2, 2}}), ConfigError);
    EXPECT_THROW(ModelParams(NetworkSpec{}, std::vector<double>(22)), ConfigError);
}

TEST(Forward, ZeroParamsGiveZero) {
    ModelParams p;
    std::vector<double> x{0.3, -2.0, 7.0};
    EXPECT_EQ(forward(p, x), 0.0);
}

TEST(Forward, MatchesReferenceImplementation) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        auto p = oracle::random_params(rng);
        auto x = oracle::random_vector(rng, 3, -2, 2);
        EXPECT_NEAR(forward(p, x), oracle::forward(p, x), 1e-12);
    }
}

TEST(Forward, HandComputedValue) {
    // Layer 1 identity on the first two inputs, layer 2 sums, output doubles.
    std::vector<double> v(23, 0.0);
    v[0] = 1.0;   // h1 <- x0
    v[4] = 1.0;   // h2 <- x1
    v[12] = 1.0;  // g1 <- h1
    v[13] = 1.0;  // g1 <- h2
    v[20] = 2.0;  // out <- g1
    v[22] = 0.5;  // output bias
    ModelParams p(NetworkSpec{}, v);
    EXPECT_DOUBLE_EQ(forward(p, std::vector<double>{1.0, 2.0, 9.0}), 6.5);
    // Negative inputs die in the ReLU.
    EXPECT_DOUBLE_EQ(forward(p, std::vector<double>{-1.0, -2.0, 9.0}), 0.5);
}

TEST(Forward, RejectsWrongInputWidth) {
    ModelParams p;
    EXPECT_THROW(forward(p, std::vector<double>{1.0, 2.0}), ConfigError);
}

TEST(Mse, EmptyBatchIsUsageError) {
    ModelParams p;
    Matrix empty(0, 3);
    std::vector<double> y;
    EXPECT_THROW(mse(p, empty, y), UsageError);
    EXPECT_THROW(param_gradients(p, empty, y), UsageError);
}

TEST(Mse, RowCountMismatch) {
    ModelParams p;
    Matrix x(2, 3);
    std::vector<double> y{1.0};
    EXPECT_THROW(mse(p, x, y), ConfigError);
}

TEST(Gradients, ZeroAtExactFit) {
    std::mt19937_64 rng(3);
    auto p = oracle::random_params(rng);
    Matrix x(4, 3);
    std::vector<double> y(4);
    for (std::size_t r = 0; r < 4; ++r) {
        auto v = oracle::random_vector(rng, 3);
        std::copy(v.begin(), v.end(), x.row(r).begin());
        y[r] = forward(p, v);
    }
    for (double g : param_gradients(p, x, y)) EXPECT_EQ(g, 0.0);
}

TEST(Gradients, ParamGradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(11);
    int checked = 0;
    while (checked < 50) {
        auto p = oracle::random_params(rng);
        std::vector<std::vector<double>> xs;
        std::vector<double> ys;
        bool near_kink = false;
        for (int r = 0; r < 5; ++r) {
            xs.push_back(oracle::random_vector(rng, 3, -2, 2));
            ys.push_back(oracle::random_vector(rng, 1)[0]);
            near_kink |= oracle::min_abs_preactivation(p, xs.back()) < 1e-3;
        }
        if (near_kink) continue;
        auto g = param_gradients(p, to_matrix(xs), ys);
        auto fd = oracle::fd_param_gradients(p, xs, ys);
        for (std::size_t j = 0; j < g.size(); ++j) EXPECT_LE(oracle::relative_error(g[j], fd[j]), 1e-4) << j;
        ++checked;
    }
}

TEST(Gradients, InputGradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(12);
    int checked = 0;
    while (checked < 50) {
        auto p = oracle::random_params(rng);
        auto x = oracle::random_vector(rng, 3, -2, 2);
        if (oracle::min_abs_preactivation(p, x) < 1e-3) continue;
        auto g = input_gradients(p, x);
        auto fd = oracle::fd_input_gradients(p, x);
        for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(oracle::relative_error(g[i], fd[i]), 1e-4);
        ++checked;
    }
}

TEST(Gradients, ReluSubgradientAtZeroIsZero) {
    // Single active path whose hidden pre-activation is exactly zero.
    std::vector<double> v(23, 0.0);
    v[0] = 1.0;
    v[12] = 1.0;
    v[20] = 1.0;
    ModelParams p(NetworkSpec{}, v);
    auto g = input_gradients(p, std::vector<double>{0.0, 0.0, 0.0});
    for (double gi : g) EXPECT_EQ(gi, 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ModelParams p;
    std::vector<double> grads(23, 0.0);
    grads[0] = 3.0;
    grads[1] = -0.01;
    auto [next, state] = adam_step(p, grads, AdamState::fresh(23, 0.01));
    // Bias-corrected first step is lr * sign(g) up to epsilon.
    EXPECT_NEAR(next.values()[0], -0.01, 1e-8);
    EXPECT_NEAR(next.values()[1], 0.01, 1e-5);
    EXPECT_EQ(next.values()[2], 0.0);
    EXPECT_EQ(state.step_count, 1u);
}

TEST(Adam, RejectsNonFiniteGradient) {
    ModelParams p;
    std::vector<double> grads(23, 0.0);
    grads[5] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(adam_step(p, grads, AdamState::fresh(23)), NumericError);
    grads[5] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(adam_step(p, grads, AdamState::fresh(23)), NumericError);
}

TEST(Adam, LengthMismatch) {
    ModelParams p;
    std::vector<double> grads(22, 0.0);
    EXPECT_THROW(adam_step(p, grads, AdamState::fresh(23)), ConfigError);
}

TEST(TrainLocal, ReducesLossOnLinearTarget) {
    std::mt19937_64 rng(5);
    Matrix x(200, 3);
    std::vector<double> y(200);
    for (std::size_t r = 0; r < 200; ++r) {
        auto v = oracle::random_vector(rng, 3, 0, 1);
        std::copy(v.begin(), v.end(), x.row(r).begin());
        y[r] = 0.5 * v[0] + 0.3 * v[1] + 0.1;
    }
    auto p0 = init_params(NetworkSpec{}, 42);
    auto p1 = train_local(p0, x, y, 300, AdamState::fresh(23, 0.01));
    EXPECT_LT(mse(p1, x, y), mse(p0, x, y));
}

TEST(TrainLocal, DeterministicAndValidated) {
    Matrix x(3, 3, 0.5);
    std::vector<double> y{0.1, 0.2, 0.3};
    auto p0 = init_params(NetworkSpec{}, 1);
    EXPECT_EQ(train_local(p0, x, y, 10, AdamState::fresh(23)), train_local(p0, x, y, 10, AdamState::fresh(23)));
    EXPECT_THROW(train_local(p0, x, y, 0, AdamState::fresh(23)), ConfigError);
    Matrix empty(0, 3);
    std::vector<double> none;
    EXPECT_THROW(train_local(p0, empty, none, 1, AdamState::fresh(23)), UsageError);
}

TEST(Init, GlorotBoundsAndZeroBiases) {
    auto p = init_params(NetworkSpec{}, 42);
    const auto& v = p.values();
    const double l1 = std::sqrt(6.0 / 6.0), l2 = std::sqrt(6.0 / 5.0), l3 = std::sqrt(6.0 / 3.0);
    for (int i = 0; i < 9; ++i) EXPECT_LE(std::abs(v[i]), l1);
    for (int i = 9; i < 12; ++i) EXPECT_EQ(v[i], 0.0);
    for (int i = 12; i < 18; ++i) EXPECT_LE(std::abs(v[i]), l2);
    for (int i = 18; i < 20; ++i) EXPECT_EQ(v[i], 0.0);
    for (int i = 20; i < 22; ++i) EXPECT_LE(std::abs(v[i]), l3);
    EXPECT_EQ(v[22], 0.0);
    EXPECT_EQ(p, init_params(NetworkSpec{}, 42));
    EXPECT_NE(p, init_params(NetworkSpec{}, 43));
}

TEST(Serialize, RoundTripIsBitExact) {
    std::mt19937_64 rng(9);
    auto p = oracle::random_params(rng, 1e6);
    p.values()[3] = -0.0;
    p.values()[4] = std::numeric_limits<double>::denorm_min();
    auto bytes = serialize(p);
    EXPECT_EQ(bytes.size(), 4u * 4 + 23u * 8);
    auto q = deserialize(bytes);
    ASSERT_EQ(q.size(), p.size());
    EXPECT_EQ(std::memcmp(q.values().data(), p.values().data(), 23 * sizeof(double)), 0);
}

TEST(Serialize, HeaderLayout) {
    auto bytes = serialize(ModelParams{});
    const std::uint8_t expected[16] = {3, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0};
    EXPECT_TRUE(std::equal(expected, expected + 16, bytes.begin()));
}

TEST(Serialize, ShallowNetworkIsZeroPadded) {
    ModelParams p(NetworkSpec{{3, 4, 1}});
    auto bytes = serialize(p);
    EXPECT_EQ(bytes[12], 0);
    EXPECT_EQ(deserialize(bytes).spec(), p.spec());
}

TEST(Serialize, RejectsCorruptBlobs) {
    auto bytes = serialize(ModelParams{});
    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_THROW(deserialize(truncated), ParseError);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(deserialize(trailing), ParseError);
    auto gap = bytes;
    gap[8] = 0;  // zero in slot 2, non-zero in slot 3
    EXPECT_THROW(deserialize(gap), ParseError);
}

TEST(MatrixOps, AppendAndSelect) {
    Matrix m;
    m.append_row(std::vector<double>{1, 2});
    m.append_row(std::vector<double>{3, 4});
    EXPECT_THROW(m.append_row(std::vector<double>{1}), ConfigError);
    std::vector<std::size_t> idx{1, 0, 1};
    auto s = m.select_rows(idx);
    EXPECT_EQ(s.rows(), 3u);
    EXPECT_EQ(s(0, 0), 3.0);
    EXPECT_EQ(s(1, 1), 2.0);
    EXPECT_THROW(Matrix(2, 2, std::vector<double>(3)), ConfigError);
}
