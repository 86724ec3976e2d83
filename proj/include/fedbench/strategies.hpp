#pragma once

#include <memory>
#include <string>
#include <variant>

#include "fedbench/diffusion.hpp"
#include "fedbench/federation.hpp"

namespace fedbench {

// Hyperparameter bundles; defaults are the benchmark's reference values.

struct FedAvgCfg {};

struct FedProxCfg {
    double mu = 0.01;
};

struct MoonCfg {
    double mu = 1.0;
    double tau = 0.5;
};

struct FedNovaCfg {
    double rho = 0.9; // server momentum
};

struct FedRsCfg {
    double alpha = 0.5;
};

struct ElasticCfg {
    double mu = 0.95;  // sensitivity EMA factor
    double tau = 0.5;  // aggregation interpolation offset
    double probe_fraction = 0.1;
};

struct FedBnCfg {};

struct PrrCfg {
    double alpha1 = 0.7;
    double alpha2 = 0.9;
    double kd_temperature = 2.0;
};

struct DenseCfg {
    double lambda1 = 1.0;  // generator: ensemble classification term
    double lambda2 = 0.5;  // generator: batch diversity term
    uint32_t pretrain_epochs = 250;
    uint32_t generator_steps = 200;
    uint32_t distill_steps = 200;
    uint32_t gen_batch = 32;
    uint32_t noise_dim = 16;
    uint32_t generator_hidden = 48;
};

struct OursCfg {
    double smoothing_alpha = 0.1; // 0 disables label smoothing
    size_t target_count = 0;      // 0: top every client up to the largest client
    bool augment = true;          // false: plain weighted averaging
    DdpmTrainConfig ddpm;
    uint32_t schedule_steps = 200;
    std::string checkpoint_dir;   // non-empty: reuse trained generators across runs
};

using StrategyConfig = std::variant<FedAvgCfg, FedProxCfg, MoonCfg, FedNovaCfg, FedRsCfg, ElasticCfg,
                                    FedBnCfg, PrrCfg, DenseCfg, OursCfg>;

std::string strategy_kind_name(const StrategyConfig& config);
std::unique_ptr<Strategy> make_strategy(const StrategyConfig& config);

// Config with Table-default hyperparameters for a kind name ("fedavg",
// "fedprox", "moon", "fednova", "fedrs", "elastic", "fedbn", "prr", "dense",
// "ours"); throws ConfigError for unknown names.
StrategyConfig default_strategy_config(const std::string& kind);

// FedNova's normalized aggregation direction sum_k p_k * delta_k / tau_k,
// exposed for its scaling-invariance contract. delta[k] aligns with the
// trainable parameters of the schema.
std::vector<Tensor> fednova_normalized_direction(const std::vector<std::vector<Tensor>>& deltas,
                                                 const std::vector<uint64_t>& tau,
                                                 const AggregationWeights& weights);

enum class PrrPhase { kRecover, kExchange, kSublimate };
PrrPhase prr_phase(double deputy_acc, double personal_acc, double alpha1, double alpha2);

// Elastic layer coefficients: 1 + tau - s_hat with s_hat the min-max
// normalized aggregated sensitivity (0.5 everywhere when degenerate).
std::vector<double> elastic_coefficients(const std::vector<double>& aggregated_sensitivity, double tau);

} // namespace fedbench
