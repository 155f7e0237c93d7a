#include <gtest/gtest.h>

#include <random>
#include <set>

#include "isfl/selection.hpp"
#include "oracles.hpp"

using namespace isfl;

namespace {

AttributionMatrix random_chis(std::mt19937_64& rng, std::size_t k, std::size_t f) {
    AttributionMatrix m(k, f);
    for (std::size_t r = 0; r < k; ++r) {
        auto v = oracle::random_vector(rng, f, 0.01, 1.0);
        double s = std::accumulate(v.begin(), v.end(), 0.0);
        for (std::size_t c = 0; c < f; ++c) m(r, c) = v[c] / s;
    }
    return m;
}

}  // namespace

TEST(Importance, MeanOfRows) {
    AttributionMatrix m(2, 3, std::vector<double>{0.2, 0.3, 0.5, 0.4, 0.5, 0.1});
    auto g = aggregate_importance(m);
    EXPECT_DOUBLE_EQ(g.tau[0], 0.3);
    EXPECT_DOUBLE_EQ(g.tau[1], 0.4);
    EXPECT_DOUBLE_EQ(g.tau[2], 0.3);
    EXPECT_THROW(aggregate_importance(AttributionMatrix(0, 3)), UsageError);
}

TEST(Apportion, HandExamples) {
    EXPECT_EQ(apportion({{0.5, 0.3, 0.2}}, 5), (std::vector<std::size_t>{3, 1, 1}));
    // Exact ties in the remainder go to the lower index.
    EXPECT_EQ(apportion({{1.0 / 3, 1.0 / 3, 1.0 / 3}}, 5), (std::vector<std::size_t>{2, 2, 1}));
    EXPECT_EQ(apportion({{0.5, 0.5}}, 0), (std::vector<std::size_t>{0, 0}));
    EXPECT_EQ(apportion({{1.0, 0.0}}, 4), (std::vector<std::size_t>{4, 0}));
}

TEST(Apportion, MatchesSeatByBestRemainderOracle) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 2000; ++i) {
        const std::size_t f = 1 + rng() % 6;
        auto t = oracle::random_vector(rng, f, 0, 1);
        const double s = std::accumulate(t.begin(), t.end(), 0.0);
        for (auto& x : t) x /= s;
        const std::size_t m = rng() % 60;
        EXPECT_EQ(apportion({t}, m), oracle::hamilton(t, m));
    }
}

TEST(Apportion, RejectsInvalidImportance) {
    EXPECT_THROW(apportion({{0.5, 0.6}}, 3), ConfigError);
    EXPECT_THROW(apportion({{1.5, -0.5}}, 3), ConfigError);
    EXPECT_THROW(apportion({{}}, 3), UsageError);
    EXPECT_THROW(apportion({{std::nan(""), 1.0}}, 3), ConfigError);
}

TEST(SelectClients, SkipRuleHandTrace) {
    // Client 2 tops both columns; feature 1 falls back to client 0.
    AttributionMatrix chis(4, 2, std::vector<double>{0.2, 0.9, 0.1, 0.2, 0.6, 0.95, 0.3, 0.1});
    GlobalFeatureImportance g{{0.6, 0.4}};
    auto r = select_clients(chis, {1, 1}, g, 2);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{2, 0}));
    ASSERT_EQ(r.audit.size(), 2u);
    EXPECT_EQ(r.audit[0].feature, 0);
    EXPECT_EQ(r.audit[1].feature, 1);
    EXPECT_EQ(r.audit[1].value, 0.9);
}

TEST(SelectClients, ProcessesFeaturesByDescendingImportance) {
    AttributionMatrix chis(2, 2, std::vector<double>{0.9, 0.8, 0.1, 0.2});
    // Feature 1 matters more, so it claims client 0 first.
    auto r = select_clients(chis, {1, 1}, {{0.3, 0.7}}, 2);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(r.audit[0].feature, 1);
    EXPECT_EQ(r.audit[1].feature, 0);
}

TEST(SelectClients, TiesGoToLowerClientId) {
    AttributionMatrix chis(4, 1, 0.5);
    auto r = select_clients(chis, {2}, {{1.0}}, 2);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1}));
}

TEST(SelectClients, Validation) {
    AttributionMatrix chis(3, 2, 0.5);
    EXPECT_THROW(select_clients(chis, {2, 2}, {{0.5, 0.5}}, 4), ConfigError);
    EXPECT_THROW(select_clients(chis, {1, 1}, {{0.5, 0.5}}, 3), ConfigError);
    EXPECT_THROW(select_clients(chis, {1}, {{0.5, 0.5}}, 1), ConfigError);
    EXPECT_THROW(select_intelliselect(chis, 4), ConfigError);
}

TEST(IntelliSelect, SelectsMDistinctClients) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 200; ++i) {
        const std::size_t k = 1 + rng() % 30;
        const std::size_t m = rng() % (k + 1);
        auto chis = random_chis(rng, k, 3);
        auto r = select_intelliselect(chis, m);
        EXPECT_EQ(r.selected.size(), m);
        EXPECT_EQ(std::set<std::size_t>(r.selected.begin(), r.selected.end()).size(), m);
        EXPECT_EQ(std::accumulate(r.per_feature_quota.begin(), r.per_feature_quota.end(), std::size_t{0}), m);
    }
}

TEST(IntelliSelect, MEqualsKSelectsEveryone) {
    std::mt19937_64 rng(3);
    auto chis = random_chis(rng, 7, 3);
    auto r = select_intelliselect(chis, 7);
    std::set<std::size_t> s(r.selected.begin(), r.selected.end());
    EXPECT_EQ(s.size(), 7u);
}

TEST(IntelliSelect, PermutationEquivariance) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 50; ++i) {
        auto chis = random_chis(rng, 10, 3);
        std::vector<std::size_t> perm(10);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        AttributionMatrix permuted(10, 3);
        for (std::size_t k = 0; k < 10; ++k) {
            for (std::size_t f = 0; f < 3; ++f) permuted(perm[k], f) = chis(k, f);
        }
        auto a = select_intelliselect(chis, 5);
        auto b = select_intelliselect(permuted, 5);
        std::set<std::size_t> mapped;
        for (auto c : a.selected) mapped.insert(perm[c]);
        EXPECT_EQ(mapped, std::set<std::size_t>(b.selected.begin(), b.selected.end()));
    }
}

TEST(NoPolicy, EveryClient) {
    auto r = select_no_policy(4);
    EXPECT_TRUE(r.all_clients);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Score, CosineSimilarity) {
    std::vector<double> a{1, 0}, b{0, 1}, c{2, 0}, z{0, 0};
    EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
    EXPECT_DOUBLE_EQ(cosine_similarity(a, c), 1.0);
    EXPECT_DOUBLE_EQ(cosine_similarity(a, z), 0.0);
}

TEST(Score, PicksClientsClosestToGlobalImportance) {
    AttributionMatrix chis(3, 2, std::vector<double>{1.0, 0.0, 0.5, 0.5, 0.0, 1.0});
    auto r = select_by_score(chis, {{0.6, 0.4}}, 2);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{1, 0}));
    EXPECT_NEAR(r.audit[0].value, cosine_similarity(chis.row(1), std::vector<double>{0.6, 0.4}), 1e-15);
    EXPECT_THROW(select_by_score(chis, {{0.6, 0.4}}, 4), ConfigError);
    EXPECT_THROW(select_by_score(chis, {{1.0}}, 1), ConfigError);
}
