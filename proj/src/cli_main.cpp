#include "fedbench/commands.hpp"

#include <iostream>

#include "CLI11.hpp"

namespace fedbench {

int cli_main(int argc, char** argv) {
    CLI::App app{"deterministic federated-learning benchmark harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir, in_dir;
    uint64_t seed = 0;
    bool seed_set = false;

    auto* run = app.add_subcommand("run", "execute every configured (strategy, fold) run");
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
        seed_set = true;
    });

    auto* summarize = app.add_subcommand("summarize", "cross-fold summary table from a run directory");
    summarize->add_option("--run", in_dir, "directory produced by `run`")->required();
    summarize->add_option("--out", out_dir, "output directory")->required();

    auto* costs = app.add_subcommand("costs", "cost-at-convergence table and plot series");
    costs->add_option("--run", in_dir, "directory produced by `run`")->required();
    costs->add_option("--out", out_dir, "output directory")->required();

    auto* stats = app.add_subcommand("stats", "pixel statistics of dataset fixtures");
    stats->add_option("--data", in_dir, "directory holding client*.fds fixtures")->required();
    stats->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (run->parsed())
            return cmd_run(config_path, out_dir, seed_set ? std::optional<uint64_t>(seed) : std::nullopt);
        if (summarize->parsed()) return cmd_summarize(in_dir, out_dir);
        if (costs->parsed()) return cmd_costs(in_dir, out_dir);
        if (stats->parsed()) return cmd_stats(in_dir, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace fedbench
