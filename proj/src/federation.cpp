#include "fedbench/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedbench/flops.hpp"
#include "fedbench/losses.hpp"

namespace fedbench {

std::optional<uint32_t> detect_convergence(const std::vector<double>& accuracy,
                                           const ConvergencePolicy& policy) {
    if (policy.window < 1) throw ConfigError("convergence window must be >= 1");
    const size_t n = accuracy.size();
    const size_t w = policy.window;
    if (n < 2 * w) return std::nullopt;
    for (size_t r = w - 1; r + w <= n - 1; ++r) {
        double trailing = 0.0;
        for (size_t i = r + 1 - w; i <= r; ++i) trailing += accuracy[i];
        trailing /= static_cast<double>(w);
        double ahead = -INFINITY;
        for (size_t i = r; i <= r + w; ++i) ahead = std::max(ahead, accuracy[i]);
        if (ahead - trailing < policy.delta) return static_cast<uint32_t>(r);
    }
    return std::nullopt;
}

void FederationConfig::validate() const {
    if (clients < 1) throw ConfigError("federation.clients must be >= 1");
    if (rounds < 1) throw ConfigError("federation.rounds must be >= 1");
    if (local_epochs < 1) throw ConfigError("federation.local_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("federation.batch_size must be >= 1");
}

std::vector<double> RunReport::global_series() const {
    std::vector<double> s;
    s.reserve(rounds.size());
    for (const auto& r : rounds) s.push_back(r.global_acc);
    return s;
}

double RunReport::final_metric(bool personalized) const {
    if (rounds.empty()) return std::nan("");
    return personalized ? rounds.back().personalized_acc : rounds.back().global_acc;
}

// --- strategy defaults -------------------------------------------------------

void Strategy::execute(FederationEngine& engine, RunObserver* observer) {
    engine.standard_rounds(*this, observer);
}

void Strategy::on_round_start(FederationEngine& engine, uint32_t round) {
    engine.snapshot_round_start();
    const uint64_t params = transmitted_params(engine);
    const ParamPredicate mask = aggregation_mask();
    for (uint32_t k = 0; k < engine.client_count(); ++k) {
        engine.ledger().record_comm(round, k, Direction::kDown, params);
        engine.client_model(k) = overlay_masked(engine.client_model(k), engine.global_model(), mask);
    }
    if (engine.observer()) engine.observer()->after_download(round, engine.client_models());
}

void Strategy::local_update(FederationEngine& engine, uint32_t round, uint32_t client) {
    engine.train_client(round, client, engine.client_model(client), engine.ce_objective());
}

void Strategy::on_upload(FederationEngine& engine, uint32_t round, uint32_t client) {
    engine.ledger().record_comm(round, client, Direction::kUp, transmitted_params(engine),
                                upload_scalars(engine));
}

void Strategy::aggregate(FederationEngine& engine, uint32_t) {
    std::vector<const ModelState*> models;
    for (uint32_t k = 0; k < engine.client_count(); ++k) models.push_back(&engine.client_model(k));
    engine.global_model() = aggregate_weighted(models, engine.weights(), aggregation_mask());
}

uint64_t Strategy::transmitted_params(const FederationEngine& engine) const {
    return engine.global_model().param_count();
}

void Strategy::describe(nlohmann::ordered_json& manifest) const { manifest["name"] = name(); }

// --- engine ------------------------------------------------------------------

FederationEngine::FederationEngine(FederationConfig config, std::vector<ClientPartition> clients,
                                   Dataset test, ModelState initial_model)
    : config_(std::move(config)), client_data_(std::move(clients)), test_(std::move(test)),
      weights_(), global_(std::move(initial_model)) {
    config_.validate();
    if (client_data_.size() != config_.clients)
        throw ConfigError("client partition count does not match federation.clients");
    if (test_.samples.empty()) throw ConfigError("test set must not be empty");
    std::vector<size_t> counts;
    for (const auto& c : client_data_) {
        if (c.samples.empty()) throw ConfigError("every client needs at least one sample");
        counts.push_back(c.size());
    }
    weights_ = AggregationWeights::from_counts(counts);
    client_models_.assign(client_data_.size(), global_);
    manifest_notes_ = nlohmann::ordered_json::object();
}

void FederationEngine::set_client_data(uint32_t k, ClientPartition data) {
    client_data_.at(k) = std::move(data);
}

void FederationEngine::refresh_weights() {
    std::vector<size_t> counts;
    for (const auto& c : client_data_) counts.push_back(c.size());
    weights_ = AggregationWeights::from_counts(counts);
}

RngStream FederationEngine::stream(std::string_view purpose, std::initializer_list<uint64_t> ids) const {
    uint64_t h = fnv1a(&config_.seed, sizeof(config_.seed));
    h = fnv1a(purpose.data(), purpose.size(), h);
    for (uint64_t id : ids) h = fnv1a(&id, sizeof(id), h);
    return RngStream(h);
}

FederationEngine::ObjectiveFn FederationEngine::ce_objective() const {
    return [](ModelState&, const Batch& batch, const ForwardTrace& trace) {
        BatchObjective obj;
        obj.loss = loss_ce_soft(trace.logits, batch.labels);
        obj.logit_grad = loss_ce_soft_grad(trace.logits, batch.labels);
        return obj;
    };
}

std::vector<std::vector<size_t>> FederationEngine::epoch_batches(uint32_t round, uint32_t client,
                                                                 uint32_t epoch,
                                                                 size_t dataset_size) const {
    std::vector<size_t> order(dataset_size);
    std::iota(order.begin(), order.end(), 0);
    RngStream rng = stream("shuffle", {client, round, epoch});
    rng.shuffle(order);
    std::vector<std::vector<size_t>> batches;
    for (size_t pos = 0; pos < order.size(); pos += config_.batch_size) {
        const size_t end = std::min(order.size(), pos + config_.batch_size);
        batches.emplace_back(order.begin() + pos, order.begin() + end);
    }
    return batches;
}

Batch FederationEngine::make_batch(const Dataset& data, const std::vector<size_t>& indices) const {
    return assemble_batch(data, indices, global_.input_shape);
}

uint32_t FederationEngine::train_epoch(uint32_t round, uint32_t client, uint32_t epoch,
                                       ModelState& model, AdamState& opt, const ObjectiveFn& objective,
                                       uint32_t flop_multiplier, const Dataset& data) {
    uint32_t steps = 0;
    uint64_t flops = 0;
    for (const auto& idx : epoch_batches(round, client, epoch, data.size())) {
        Batch batch = make_batch(data, idx);
        ForwardTrace trace = forward(model, batch, Mode::kTrain);
        BatchObjective obj = objective(model, batch, trace);
        if (!std::isfinite(obj.loss))
            throw RuntimeFailure("non-finite loss at round " + std::to_string(round) + ", client " +
                                 std::to_string(client) + ", epoch " + std::to_string(epoch));
        GradientSet grads =
            backward(model, trace, obj.logit_grad, obj.rep_grad ? &*obj.rep_grad : nullptr);
        if (obj.post_grad) obj.post_grad(grads, model);
        adam_step(model, grads, opt, config_.optimizer);
        flops += static_cast<uint64_t>(flop_multiplier) * training_flops(model, batch.size());
        ++steps;
    }
    ledger_.record_flops(round, client, flops);
    return steps;
}

uint32_t FederationEngine::train_client(uint32_t round, uint32_t client, ModelState& model,
                                        const ObjectiveFn& objective, uint32_t flop_multiplier,
                                        uint32_t epochs_override) {
    const uint32_t epochs = epochs_override ? epochs_override : config_.local_epochs;
    AdamState opt;
    uint32_t steps = 0;
    for (uint32_t e = 0; e < epochs; ++e)
        steps += train_epoch(round, client, e, model, opt, objective, flop_multiplier,
                             client_data_.at(client));
    return steps;
}

double FederationEngine::accuracy(const ModelState& model, const Dataset& data) const {
    if (data.samples.empty()) throw ConfigError("accuracy on an empty dataset");
    ModelState scratch = model;
    const size_t chunk = 256;
    size_t correct = 0;
    std::vector<size_t> idx;
    for (size_t pos = 0; pos < data.size(); pos += chunk) {
        idx.clear();
        for (size_t i = pos; i < std::min(data.size(), pos + chunk); ++i) idx.push_back(i);
        Batch batch = make_batch(data, idx);
        ForwardTrace trace = forward(scratch, batch, Mode::kEval);
        const size_t k = data.k_classes;
        for (size_t i = 0; i < idx.size(); ++i) {
            size_t best = 0;
            for (size_t j = 1; j < k; ++j)
                if (trace.logits[i * k + j] > trace.logits[i * k + best]) best = j;
            if (best == data.samples[idx[i]].label) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

void FederationEngine::record_round(Strategy& strategy, uint32_t round, double drift) {
    RoundRecord rec;
    rec.round = round + 1;
    rec.mean_client_drift = drift;

    const bool want_global =
        config_.eval_mode == EvalMode::kGlobal || config_.eval_mode == EvalMode::kBoth;
    const bool want_pers =
        config_.eval_mode == EvalMode::kPersonalized || config_.eval_mode == EvalMode::kBoth;

    double pers = std::nan("");
    if (want_pers || (want_global && strategy.global_eval_uses_personalized())) {
        const std::vector<ModelState>* models = strategy.personal_models();
        if (!models) models = &client_models_;
        double sum = 0.0;
        for (const auto& m : *models) sum += accuracy(m, test_);
        pers = sum / static_cast<double>(models->size());
    }
    rec.personalized_acc = want_pers ? pers : std::nan("");

    if (want_global) {
        rec.global_acc = strategy.global_eval_uses_personalized() ? pers : accuracy(global_, test_);
    } else {
        rec.global_acc = std::nan("");
    }

    rec.cum_transmitted = ledger_.transmitted_through_round(round);
    rec.cum_bytes = bytes_for(rec.cum_transmitted);
    rec.cum_flops = ledger_.flops_through_round(round);
    records_.push_back(rec);
}

void FederationEngine::standard_rounds(Strategy& strategy, RunObserver* observer) {
    observer_ = observer;
    strategy.prepare(*this);
    if (const uint64_t s = strategy.start_scalars(); s > 0)
        for (uint32_t k = 0; k < client_count(); ++k)
            ledger_.record_comm(0, k, Direction::kDown, 0, s);

    for (uint32_t round = 0; round < config_.rounds; ++round) {
        try {
            strategy.on_round_start(*this, round);
            for (uint32_t k = 0; k < client_count(); ++k) strategy.local_update(*this, round, k);
            if (observer_) observer_->after_local_training(round, client_models_);
            double drift = 0.0;
            for (uint32_t k = 0; k < client_count(); ++k)
                drift += trainable_distance(client_models_[k], round_start_global_);
            drift /= static_cast<double>(client_count());
            for (uint32_t k = 0; k < client_count(); ++k) strategy.on_upload(*this, round, k);
            strategy.aggregate(*this, round);
            if (observer_) observer_->after_aggregation(round, global_);
            record_round(strategy, round, drift);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw RuntimeFailure("strategy '" + strategy.name() + "' failed at round " +
                                 std::to_string(round) + ": " + e.what());
        }
    }
}

RunReport FederationEngine::finish(Strategy& strategy) {
    RunReport report;
    report.rounds = records_;
    std::vector<double> series;
    for (const auto& r : records_) series.push_back(r.global_acc);
    if (const auto c = detect_convergence(series, config_.convergence))
        report.convergence_round = *c + 1;
    report.ledger = ledger_;
    report.global_model = global_;
    report.client_models = client_models_;

    nlohmann::ordered_json m;
    m["report_version"] = "report_v1";
    m["seed"] = config_.seed;
    nlohmann::ordered_json fed;
    fed["clients"] = config_.clients;
    fed["rounds"] = config_.rounds;
    fed["local_epochs"] = config_.local_epochs;
    fed["batch_size"] = config_.batch_size;
    fed["eval_mode"] = config_.eval_mode == EvalMode::kGlobal        ? "global"
                       : config_.eval_mode == EvalMode::kPersonalized ? "personalized"
                                                                      : "both";
    nlohmann::ordered_json opt;
    opt["lr"] = config_.optimizer.lr;
    opt["beta1"] = config_.optimizer.beta1;
    opt["beta2"] = config_.optimizer.beta2;
    opt["weight_decay"] = config_.optimizer.weight_decay;
    fed["optimizer"] = opt;
    m["federation"] = fed;
    nlohmann::ordered_json strat;
    strategy.describe(strat);
    m["strategy"] = strat;
    m["summary_metric"] = strategy.personalized_metric() ? "pers_acc" : "global_acc";
    nlohmann::ordered_json conv;
    conv["window"] = config_.convergence.window;
    conv["delta"] = config_.convergence.delta;
    conv["round"] = report.convergence_round ? nlohmann::ordered_json(*report.convergence_round)
                                             : nlohmann::ordered_json(nullptr);
    m["convergence"] = conv;
    nlohmann::ordered_json deviations = nlohmann::ordered_json::array();
    deviations.push_back("seeded random initialization in place of pretrained weights");
    deviations.push_back("desk-scale model with " + std::to_string(global_.param_count()) +
                         " parameters");
    std::string image_shape;
    for (size_t d : client_data_.front().image_shape)
        image_shape += (image_shape.empty() ? "" : "x") + std::to_string(d);
    deviations.push_back("desk-scale images " + image_shape + " instead of 256x256 inputs");
    m["deviations"] = deviations;
    if (!manifest_notes_.empty()) m["notes"] = manifest_notes_;
    report.manifest = std::move(m);
    return report;
}

RunReport FederationEngine::run(Strategy& strategy, RunObserver* observer) {
    strategy.execute(*this, observer);
    return finish(strategy);
}

} // namespace fedbench
