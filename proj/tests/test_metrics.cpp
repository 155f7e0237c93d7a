#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "isfl/app.hpp"
#include "isfl/metrics.hpp"
#include "oracles.hpp"

using namespace isfl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("isfl_test_metrics_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.clients = 4;
    cfg.selected = 2;
    cfg.rounds = 3;
    cfg.local_epochs = 5;
    cfg.dataset_size = 200;
    cfg.attribution_samples = 20;
    cfg.ig_steps = 8;
    cfg.slices = {Slice::eMBB};
    return cfg;
}

}  // namespace

TEST(Comm, DefaultRoundCounts) {
    EXPECT_EQ(round_comm(Policy::NoPolicy, 10, 10, 3, 23).total(), 460u);
    EXPECT_EQ(round_comm(Policy::IntelliSelect, 10, 5, 3, 23).total(), 375u);
    EXPECT_EQ(round_comm(Policy::Score, 10, 5, 3, 23).total(), 388u);
    auto is = round_comm(Policy::IntelliSelect, 10, 5, 3, 23);
    EXPECT_EQ(is.downlink, 230u);
    EXPECT_EQ(is.uplink, 145u);
}

TEST(Comm, DegenerateCaseMatchesNoPolicy) {
    EXPECT_EQ(round_comm(Policy::IntelliSelect, 10, 10, 0, 23).total(), round_comm(Policy::NoPolicy, 10, 10, 0, 23).total());
}

TEST(Comm, LinearInRounds) {
    for (auto p : {Policy::IntelliSelect, Policy::NoPolicy, Policy::Score}) {
        auto one = comm_cost(p, 10, 5, 3, 23, 1);
        auto thirty = comm_cost(p, 10, 5, 3, 23, 30);
        EXPECT_EQ(thirty.total(), 30 * one.total());
        EXPECT_EQ(thirty.rounds.size(), 30u);
    }
}

TEST(Comm, PolicyOrderingForAllKm) {
    for (std::uint64_t k = 2; k <= 60; ++k) {
        for (std::uint64_t m = 1; m < k; ++m) {
            const auto is = round_comm(Policy::IntelliSelect, k, m, 3, 23).total();
            const auto np = round_comm(Policy::NoPolicy, k, k, 3, 23).total();
            // Attribution uplink eats the saving when m is close to K.
            EXPECT_EQ(is < np, (k - m) * 23 > k * 3) << k << " " << m;
            EXPECT_EQ(round_comm(Policy::Score, k, m, 3, 23).total(), is + 3 + k);
        }
    }
}

TEST(Comm, PolicyNames) {
    for (auto p : {Policy::IntelliSelect, Policy::NoPolicy, Policy::Score}) EXPECT_EQ(parse_policy(policy_name(p)), p);
    EXPECT_THROW(parse_policy("random"), ConfigError);
}

TEST(Provisioning, PerfectPredictor) {
    auto rep = provisioning_from_errors({0.0, 0.0, 0.0});
    EXPECT_EQ(rep.over_sum, 0.0);
    EXPECT_EQ(rep.under_sum, 0.0);
}

TEST(Provisioning, ConstantOverestimate) {
    auto rep = provisioning_from_errors(std::vector<double>(10, 5.0));
    EXPECT_DOUBLE_EQ(rep.over_sum, 50.0);
    EXPECT_EQ(rep.under_sum, 0.0);
}

TEST(Provisioning, SumsReconcileWithBruteForce) {
    std::mt19937_64 rng(1);
    auto p = oracle::random_params(rng);
    Matrix x(0, 3);
    std::vector<double> y;
    for (int i = 0; i < 100; ++i) {
        x.append_row(oracle::random_vector(rng, 3, 0, 1));
        y.push_back(oracle::random_vector(rng, 1, 0, 1)[0]);
    }
    MinMaxScaler s{{0, 0, 0}, {1, 1, 1}, 10.0, 90.0};
    auto rep = provisioning_report(p, x, y, s);
    double over = 0, under = 0, signed_sum = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto row = x.row(i);
        const double e = 80.0 * (oracle::forward(p, {row.begin(), row.end()}) - y[i]);
        if (e > 0) over += e;
        else under += -e;
        signed_sum += e;
    }
    EXPECT_NEAR(rep.over_sum, over, 1e-9);
    EXPECT_NEAR(rep.under_sum, under, 1e-9);
    EXPECT_NEAR(rep.over_sum - rep.under_sum, signed_sum, 1e-9);
    EXPECT_THROW(provisioning_report(p, Matrix(0, 3), {}, s), UsageError);
}

TEST(RoundsCsv, EmptyIsHeaderOnly) {
    std::stringstream ss;
    write_rounds_csv(ss, {});
    EXPECT_EQ(ss.str(), std::string(kRoundsHeader) + "\n");
    EXPECT_TRUE(read_rounds_csv(ss).empty());
}

TEST(RoundsCsv, RoundTripIsLossless) {
    std::mt19937_64 rng(2);
    std::vector<RoundRow> rows;
    for (std::size_t t = 0; t < 20; ++t) {
        RoundRow r;
        r.round = t;
        r.mse = oracle::random_vector(rng, 1, 0, 1)[0] / 3.0;
        r.cum_time_ms = 1234.5678901234567 * t;
        r.selected = {t % 3, 4, 9};
        r.params_transmitted = 375;
        rows.push_back(r);
    }
    rows[0].selected.clear();
    std::stringstream ss;
    write_rounds_csv(ss, rows);
    EXPECT_EQ(read_rounds_csv(ss), rows);
}

TEST(RoundsCsv, RejectsWrongHeaderAndBadRows) {
    std::stringstream bad_header("round,mse\n");
    EXPECT_THROW(read_rounds_csv(bad_header), SchemaError);
    std::stringstream short_row(std::string(kRoundsHeader) + "\n1,2\n");
    EXPECT_THROW(read_rounds_csv(short_row), ParseError);
    std::stringstream bad_num(std::string(kRoundsHeader) + "\n1,x,3,0;1,4\n");
    EXPECT_THROW(read_rounds_csv(bad_num), ParseError);
    EXPECT_THROW(read_rounds_csv(fs::path("/nonexistent/rounds.csv")), IoError);
}

TEST(Persist, WritesEveryFileAndSummaryValidates) {
    auto cfg = tiny_config();
    auto outputs = execute(cfg);
    auto dir = scratch_dir("persist");
    auto written = persist(outputs, dir);
    for (const char* name : {"rounds_eMBB_intelliselect.csv", "rounds_eMBB_no_policy.csv", "rounds_eMBB_score.csv",
                             "summary.json", "comm_ledger.csv", "provisioning_eMBB.csv",
                             "attributions_eMBB_intelliselect.csv", "selection_eMBB_score.csv"}) {
        EXPECT_TRUE(fs::exists(dir / name)) << name;
    }
    EXPECT_FALSE(fs::exists(dir / "attributions_eMBB_no_policy.csv"));

    auto rows = read_rounds_csv(dir / "rounds_eMBB_score.csv");
    ASSERT_EQ(rows.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(rows[t], to_row(outputs.result.runs[2].records[t]));

    auto summary = nlohmann::ordered_json::parse(read_text_file(dir / "summary.json"));
    EXPECT_TRUE(validate_summary(summary).empty());
    EXPECT_EQ(summary["runs"].size(), 3u);
    EXPECT_EQ(summary["runs"][1]["total_params_transmitted"], 3u * 2 * 4 * 23);

    std::ifstream ledger(dir / "comm_ledger.csv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(ledger, line)) ++lines;
    EXPECT_EQ(lines, 1u + 3 * 3);
    fs::remove_all(dir);
}

TEST(Persist, UnwritableDirectoryNamesThePath) {
    auto cfg = tiny_config();
    cfg.rounds = 0;
    auto outputs = execute(cfg);
    auto blocker = scratch_dir("blocker");
    { std::ofstream(blocker) << "file, not a directory"; }
    try {
        persist(outputs, blocker / "sub");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("blocker"), std::string::npos);
    }
    fs::remove(blocker);
}

TEST(Summary, SchemaViolationsAreReported) {
    auto cfg = tiny_config();
    cfg.rounds = 1;
    auto good = summary_json(execute(cfg));
    ASSERT_TRUE(validate_summary(good).empty());

    auto no_version = good;
    no_version.erase("schema_version");
    EXPECT_FALSE(validate_summary(no_version).empty());

    auto wrong_version = good;
    wrong_version["schema_version"] = 99;
    EXPECT_FALSE(validate_summary(wrong_version).empty());

    auto bad_run = good;
    bad_run["runs"][0]["policy"] = "random";
    bad_run["runs"][1]["final_mse"] = "low";
    auto problems = validate_summary(bad_run);
    EXPECT_EQ(problems.size(), 2u);

    auto bad_config = good;
    bad_config["config"]["K"] = -1;
    EXPECT_FALSE(validate_summary(bad_config).empty());
}

TEST(Summary, EmptyRunsUseNullMse) {
    auto cfg = tiny_config();
    cfg.rounds = 0;
    auto s = summary_json(execute(cfg));
    EXPECT_TRUE(s["runs"][0]["final_mse"].is_null());
    EXPECT_EQ(s["runs"][0]["rounds_to_convergence"], -1);
    EXPECT_TRUE(validate_summary(s).empty());
}
