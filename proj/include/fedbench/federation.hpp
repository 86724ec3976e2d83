#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"

#include "fedbench/aggregate.hpp"
#include "fedbench/dataset.hpp"
#include "fedbench/ledger.hpp"
#include "fedbench/model.hpp"
#include "fedbench/optimizer.hpp"

namespace fedbench {

enum class EvalMode { kGlobal, kPersonalized, kBoth };

struct ConvergencePolicy {
    uint32_t window = 5;
    double delta = 1e-3;
};

// First index r (0-based) where max(acc[r..r+window]) minus the trailing mean
// of width `window` ending at r drops below delta; nullopt when the series
// never plateaus or is shorter than 2*window.
std::optional<uint32_t> detect_convergence(const std::vector<double>& accuracy,
                                           const ConvergencePolicy& policy);

struct FederationConfig {
    uint32_t clients = 1;
    uint32_t rounds = 1;
    uint32_t local_epochs = 5;
    uint32_t batch_size = 64;
    uint64_t seed = 0;
    EvalMode eval_mode = EvalMode::kBoth;
    AdamHyper optimizer;
    ConvergencePolicy convergence;

    void validate() const;
};

struct RoundRecord {
    uint32_t round = 0;             // 1-based in reports
    double global_acc = 0.0;        // NaN when not evaluated
    double personalized_acc = 0.0;  // NaN when not evaluated
    uint64_t cum_transmitted = 0;   // scalars, model params + extras
    uint64_t cum_bytes = 0;
    uint64_t cum_flops = 0;
    double mean_client_drift = 0.0; // mean L2 of client vs round-start global
};

struct RunReport {
    std::vector<RoundRecord> rounds;
    std::optional<uint32_t> convergence_round; // 1-based
    CostLedger ledger;
    ModelState global_model;
    std::vector<ModelState> client_models; // state after the final local training
    nlohmann::ordered_json manifest;

    std::vector<double> global_series() const;
    double final_metric(bool personalized) const;
};

class FederationEngine;

// Test/diagnostic hooks into the round loop.
struct RunObserver {
    virtual ~RunObserver() = default;
    virtual void after_download(uint32_t, const std::vector<ModelState>&) {}
    virtual void after_local_training(uint32_t, const std::vector<ModelState>&) {}
    virtual void after_aggregation(uint32_t, const ModelState&) {}
};

// One federated optimization algorithm. The default hook implementations give
// plain weighted-average training; subclasses override what they change.
class Strategy {
public:
    virtual ~Strategy() = default;
    virtual std::string name() const = 0;

    // Whole-run override for algorithms that do not follow the round loop.
    virtual void execute(FederationEngine& engine, RunObserver* observer);

    virtual void prepare(FederationEngine&) {}
    virtual void on_round_start(FederationEngine& engine, uint32_t round);
    virtual void local_update(FederationEngine& engine, uint32_t round, uint32_t client);
    virtual void on_upload(FederationEngine& engine, uint32_t round, uint32_t client);
    virtual void aggregate(FederationEngine& engine, uint32_t round);

    virtual ParamPredicate aggregation_mask() const { return fedavg_mask(); }
    // Model parameters per transmission; the batchnorm-excluding strategies
    // reduce this.
    virtual uint64_t transmitted_params(const FederationEngine& engine) const;
    // Control scalars broadcast once before round 0 (one per client).
    virtual uint64_t start_scalars() const { return 0; }
    // Extra scalars attached to each client upload.
    virtual uint64_t upload_scalars(const FederationEngine&) const { return 0; }
    // Personalized algorithms report the client-model metric as primary.
    virtual bool personalized_metric() const { return false; }
    // Global-model accuracy is undefined for strategies whose batchnorm state
    // is personal; they report the personalized mean instead.
    virtual bool global_eval_uses_personalized() const { return false; }
    // Models used for the personalized evaluation (default: engine clients).
    virtual const std::vector<ModelState>* personal_models() const { return nullptr; }
    virtual void describe(nlohmann::ordered_json& manifest) const;
};

class FederationEngine {
public:
    FederationEngine(FederationConfig config, std::vector<ClientPartition> clients, Dataset test,
                     ModelState initial_model);

    RunReport run(Strategy& strategy, RunObserver* observer = nullptr);

    // --- services for strategies -------------------------------------------
    const FederationConfig& config() const { return config_; }
    uint32_t client_count() const { return static_cast<uint32_t>(client_data_.size()); }
    ModelState& global_model() { return global_; }
    const ModelState& global_model() const { return global_; }
    const ModelState& round_start_global() const { return round_start_global_; }
    ModelState& client_model(uint32_t k) { return client_models_.at(k); }
    std::vector<ModelState>& client_models() { return client_models_; }
    const ClientPartition& client_data(uint32_t k) const { return client_data_.at(k); }
    void set_client_data(uint32_t k, ClientPartition data);
    const Dataset& test_set() const { return test_; }
    const AggregationWeights& weights() const { return weights_; }
    void refresh_weights(); // after augmentation changed sample counts
    CostLedger& ledger() { return ledger_; }
    nlohmann::ordered_json& manifest_notes() { return manifest_notes_; }

    RngStream stream(std::string_view purpose, std::initializer_list<uint64_t> ids = {}) const;

    struct BatchObjective {
        double loss = 0.0;
        Tensor logit_grad;
        std::optional<Tensor> rep_grad;
        std::function<void(GradientSet&, const ModelState&)> post_grad;
    };
    using ObjectiveFn = std::function<BatchObjective(ModelState&, const Batch&, const ForwardTrace&)>;

    // Standard soft-label cross-entropy objective.
    ObjectiveFn ce_objective() const;

    // Shuffled minibatch index lists for (client, round, epoch).
    std::vector<std::vector<size_t>> epoch_batches(uint32_t round, uint32_t client, uint32_t epoch,
                                                   size_t dataset_size) const;
    Batch make_batch(const Dataset& data, const std::vector<size_t>& indices) const;

    // One epoch of minibatch Adam; ledgers flop_multiplier x the training
    // flops of each batch. Returns optimizer steps taken.
    uint32_t train_epoch(uint32_t round, uint32_t client, uint32_t epoch, ModelState& model,
                         AdamState& opt, const ObjectiveFn& objective, uint32_t flop_multiplier,
                         const Dataset& data);

    // config().local_epochs (or `epochs_override`) epochs with a fresh
    // optimizer. Returns total optimizer steps.
    uint32_t train_client(uint32_t round, uint32_t client, ModelState& model,
                          const ObjectiveFn& objective, uint32_t flop_multiplier = 1,
                          uint32_t epochs_override = 0);

    double accuracy(const ModelState& model, const Dataset& data) const;

    // --- used by the standard loop ------------------------------------------
    void standard_rounds(Strategy& strategy, RunObserver* observer);
    void snapshot_round_start() { round_start_global_ = global_; }
    void record_round(Strategy& strategy, uint32_t round, double drift);
    void set_observer(RunObserver* observer) { observer_ = observer; }
    RunObserver* observer() { return observer_; }

private:
    FederationConfig config_;
    std::vector<ClientPartition> client_data_;
    Dataset test_;
    AggregationWeights weights_;
    ModelState global_;
    ModelState round_start_global_;
    std::vector<ModelState> client_models_;
    CostLedger ledger_;
    std::vector<RoundRecord> records_;
    nlohmann::ordered_json manifest_notes_;
    RunObserver* observer_ = nullptr;

    friend struct RunReportBuilder;
    RunReport finish(Strategy& strategy);
};

} // namespace fedbench
