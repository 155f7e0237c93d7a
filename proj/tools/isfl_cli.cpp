#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "isfl/app.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Federated CPU-load prediction with attribution-driven client selection"};
    app.set_version_flag("--version", std::string(isfl::kVersion));
    app.require_subcommand(1);

    isfl::RunOptions run;
    std::string config_path;
    std::string run_out = run.out_dir.string();
    auto* run_cmd = app.add_subcommand("run", "Run every configured slice and policy");
    run_cmd->add_option("--config", config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
    run_cmd->add_option("--override", run.overrides, "Override a config key, e.g. T=15 or adam.beta1=0.8");
    run_cmd->add_option("--out", run_out, "Output directory");
    run_cmd->add_option("--policies", run.policies, "Comma-separated subset of intelliselect,no_policy,score");
    run_cmd->add_flag("-v,--verbose", run.verbose, "Print one line per round");

    std::string profiles, gen_out;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write synthetic client datasets as CSV");
    gen_cmd->add_option("--profiles", profiles, "Generation profile (JSON)")->required();
    gen_cmd->add_option("--out", gen_out, "Output directory")->required();

    std::vector<std::string> dirs;
    std::string compare_csv;
    auto* cmp_cmd = app.add_subcommand("compare", "Compare finished runs");
    cmp_cmd->add_option("dirs", dirs, "Run output directories")->required()->expected(2, -1);
    cmp_cmd->add_option("--csv", compare_csv, "Write the CSV table here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : isfl::kExitUsage;
    }

    if (*run_cmd) {
        run.config_path = config_path;
        run.out_dir = run_out;
        return isfl::cmd_run(run);
    }
    if (*gen_cmd) return isfl::cmd_gen_data(profiles, gen_out);
    std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
    return isfl::cmd_compare(paths, compare_csv);
}
