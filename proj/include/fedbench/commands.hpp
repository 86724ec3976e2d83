#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedbench/config.hpp"
#include "fedbench/dataset.hpp"
#include "fedbench/federation.hpp"
#include "fedbench/partition.hpp"
#include "fedbench/strategies.hpp"

namespace fedbench {

// A fully parsed experiment: dataset recipe, partition plan, federation
// settings, model recipe and the strategy grid. A run is a pure function of
// this plan.
struct ExperimentPlan {
    uint64_t seed = 0;
    SyntheticSpec data_spec;
    size_t test_per_class = 40;

    std::string partition_method = "kfold"; // kfold | quantity | dirichlet | feature_shift
    size_t folds = 6;                        // kfold
    std::vector<double> proportions;         // quantity
    size_t clients = 5;                      // dirichlet / feature_shift
    double concentration = 0.5;              // dirichlet
    std::vector<FeatureShiftSpec> shifts;    // feature_shift

    FederationConfig fed; // clients filled per fold

    std::string model_kind = "mlp";
    std::vector<size_t> hidden{32, 16};  // mlp
    std::vector<size_t> channels{8, 16}; // cnn

    std::vector<std::pair<std::string, StrategyConfig>> strategies; // entry name -> config
    bool export_data = false;

    nlohmann::ordered_json config_echo;
};

ExperimentPlan parse_plan(KeyValueConfig& config);

struct FoldData {
    std::vector<ClientPartition> clients;
    Dataset test;
    std::vector<std::string> warnings;
};

size_t fold_count(const ExperimentPlan& plan);
FoldData build_fold(const ExperimentPlan& plan, size_t fold);
ModelState build_model(const ExperimentPlan& plan);

// Subcommand bodies; each returns a process exit code.
int cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
            std::optional<uint64_t> seed_override);
int cmd_summarize(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);
int cmd_costs(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);
int cmd_stats(const std::filesystem::path& data_dir, const std::filesystem::path& out_dir);

// Entry point shared by the fedbench binary and the CLI tests.
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.
int cli_main(int argc, char** argv);

} // namespace fedbench
