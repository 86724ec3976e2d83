#include "fedbench/strategies.hpp"

#include <algorithm>
#include <cmath>

#include "fedbench/flops.hpp"
#include "fedbench/losses.hpp"

namespace fedbench {

namespace {

uint64_t derived_seed(const FederationEngine& engine, std::string_view purpose,
                      std::initializer_list<uint64_t> ids = {}) {
    const uint64_t seed = engine.config().seed;
    uint64_t h = fnv1a(&seed, sizeof(seed));
    h = fnv1a(purpose.data(), purpose.size(), h);
    for (uint64_t id : ids) h = fnv1a(&id, sizeof(id), h);
    return h;
}

std::vector<Tensor> trainable_values(const ModelState& m) {
    std::vector<Tensor> vals;
    m.for_each_param([&](const Layer&, const Param& p) {
        if (p.role == ParamRole::kTrainable) vals.push_back(p.value);
    });
    return vals;
}

} // namespace

// --- fedavg -------------------------------------------------------------------

class FedAvgStrategy : public Strategy {
public:
    std::string name() const override { return "fedavg"; }
};

// --- fedprox ------------------------------------------------------------------

class FedProxStrategy : public Strategy {
public:
    explicit FedProxStrategy(FedProxCfg cfg) : cfg_(cfg) {}
    std::string name() const override { return "fedprox"; }
    uint64_t start_scalars() const override { return 1; } // mu broadcast

    void local_update(FederationEngine& engine, uint32_t round, uint32_t client) override {
        const ModelState anchor = engine.round_start_global();
        const double mu = cfg_.mu;
        auto objective = [&, mu](ModelState& model, const Batch& batch,
                                 const ForwardTrace& trace) {
            FederationEngine::BatchObjective obj;
            obj.loss = loss_ce_soft(trace.logits, batch.labels);
            obj.logit_grad = loss_ce_soft_grad(trace.logits, batch.labels);
            if (mu != 0.0) {
                obj.loss += loss_prox(model, anchor, mu);
                obj.post_grad = [&anchor, mu](GradientSet& grads, const ModelState& m) {
                    add_prox_grad(grads, m, anchor, mu);
                };
            }
            return obj;
        };
        engine.train_client(round, client, engine.client_model(client), objective);
    }

    void describe(nlohmann::ordered_json& m) const override {
        m["name"] = name();
        m["mu"] = cfg_.mu;
    }

private:
    FedProxCfg cfg_;
};

// --- moon ---------------------------------------------------------------------

class MoonStrategy : public Strategy {
public:
    explicit MoonStrategy(MoonCfg cfg) : cfg_(cfg) {}
    std::string name() const override { return "moon"; }
    uint64_t start_scalars() const override { return 1; }

    void prepare(FederationEngine& engine) override {
        // Round-0 previous-model representations come from the initial model.
        prev_local_.assign(engine.client_count(), engine.global_model());
        engine.manifest_notes()["moon_round0_prev"] = "initial model";
    }

    void local_update(FederationEngine& engine, uint32_t round, uint32_t client) override {
        ModelState& model = engine.client_model(client);
        if (cfg_.mu == 0.0) {
            engine.train_client(round, client, model, engine.ce_objective(), 1);
        } else {
            ModelState glob = engine.round_start_global();
            ModelState prev = prev_local_.at(client);
            auto objective = [&](ModelState&, const Batch& batch, const ForwardTrace& trace) {
                FederationEngine::BatchObjective obj;
                obj.loss = loss_ce_soft(trace.logits, batch.labels);
                obj.logit_grad = loss_ce_soft_grad(trace.logits, batch.labels);
                const ForwardTrace gt = forward(glob, batch, Mode::kEval);
                const ForwardTrace pt = forward(prev, batch, Mode::kEval);
                obj.loss += loss_contrastive(trace.representation, gt.representation,
                                             pt.representation, cfg_.tau, cfg_.mu);
                obj.rep_grad = loss_contrastive_grad(trace.representation, gt.representation,
                                                     pt.representation, cfg_.tau, cfg_.mu);
                return obj;
            };
            // Three networks run per batch: live, global snapshot, previous.
            engine.train_client(round, client, model, objective, 3);
        }
        prev_local_.at(client) = model;
    }

    void describe(nlohmann::ordered_json& m) const override {
        m["name"] = name();
        m["mu"] = cfg_.mu;
        m["tau"] = cfg_.tau;
    }

private:
    MoonCfg cfg_;
    std::vector<ModelState> prev_local_;
};

// --- fednova ------------------------------------------------------------------

std::vector<Tensor> fednova_normalized_direction(const std::vector<std::vector<Tensor>>& deltas,
                                                 const std::vector<uint64_t>& tau,
                                                 const AggregationWeights& weights) {
    if (deltas.empty() || deltas.size() != tau.size() || deltas.size() != weights.p.size())
        throw ConfigError("fednova: deltas, taus and weights must align");
    for (uint64_t t : tau)
        if (t == 0) throw ConfigError("fednova: local step count must be >= 1");
    std::vector<Tensor> dir;
    for (const Tensor& t0 : deltas[0]) dir.push_back(Tensor(t0.shape));
    for (size_t k = 0; k < deltas.size(); ++k) {
        const double scale = weights.p[k] / static_cast<double>(tau[k]);
        for (size_t j = 0; j < dir.size(); ++j)
            for (size_t e = 0; e < dir[j].size(); ++e) dir[j][e] += scale * deltas[k][j][e];
    }
    return dir;
}

class FedNovaStrategy : public Strategy {
public:
    explicit FedNovaStrategy(FedNovaCfg cfg) : cfg_(cfg) {}
    std::string name() const override { return "fednova"; }
    uint64_t start_scalars() const override { return 1; }
    uint64_t upload_scalars(const FederationEngine&) const override { return 1; } // tau_k

    void prepare(FederationEngine& engine) override {
        taus_.assign(engine.client_count(), 0);
        engine.manifest_notes()["fednova_rho_role"] = "server momentum";
    }

    void local_update(FederationEngine& engine, uint32_t round, uint32_t client) override {
        const uint32_t steps =
            engine.train_client(round, client, engine.client_model(client), engine.ce_objective());
        if (steps == 0) throw RuntimeFailure("fednova: client took zero optimizer steps");
        taus_.at(client) = steps;
    }

    void aggregate(FederationEngine& engine, uint32_t) override {
        const ModelState& start = engine.round_start_global();
        std::vector<std::vector<Tensor>> deltas;
        std::vector<const ModelState*> models;
        for (uint32_t k = 0; k < engine.client_count(); ++k) {
            const ModelState& local = engine.client_model(k);
            models.push_back(&local);
            std::vector<Tensor> start_vals = trainable_values(start);
            std::vector<Tensor> local_vals = trainable_values(local);
            std::vector<Tensor> delta;
            for (size_t j = 0; j < start_vals.size(); ++j) {
                Tensor d(start_vals[j].shape);
                for (size_t e = 0; e < d.size(); ++e) d[e] = start_vals[j][e] - local_vals[j][e];
                delta.push_back(std::move(d));
            }
            deltas.push_back(std::move(delta));
        }
        const std::vector<Tensor> dir = fednova_normalized_direction(deltas, taus_, engine.weights());
        double tau_eff = 0.0;
        for (size_t k = 0; k < taus_.size(); ++k)
            tau_eff += engine.weights().p[k] * static_cast<double>(taus_[k]);

        if (momentum_.empty())
            for (const Tensor& t : dir) momentum_.push_back(Tensor(t.shape));
        for (size_t j = 0; j < dir.size(); ++j)
            for (size_t e = 0; e < dir[j].size(); ++e)
                momentum_[j][e] = cfg_.rho * momentum_[j][e] + tau_eff * dir[j][e];

        // Statistics aggregate as usual; the normalized update replaces the
        // trainable parameters.
        ModelState next = aggregate_weighted(models, engine.weights(), aggregation_mask());
        const std::vector<Tensor> start_vals = trainable_values(start);
        size_t slot = 0;
        next.for_each_param([&](Layer&, Param& p) {
            if (p.role != ParamRole::kTrainable) return;
            for (size_t i = 0; i < p.value.size(); ++i)
                p.value[i] = start_vals[slot][i] - momentum_[slot][i];
            ++slot;
        });
        engine.global_model() = std::move(next);
    }

    void describe(nlohmann::ordered_json& m) const override {
        m["name"] = name();
        m["rho"] = cfg_.rho;
    }

private:
    FedNovaCfg cfg_;
    std::vector<uint64_t> taus_;
    std::vector<Tensor> momentum_;
};

// --- fedrs --------------------------------------------------------------------

class FedRsStrategy : public Strategy {
public:
    explicit FedRsStrategy(FedRsCfg cfg) : cfg_(cfg) {}
    std::string name() const override { return "fedrs"; }
    uint64_t start_scalars() const override { return 1; }

    void prepare(FederationEngine& engine) override {
        presence_.clear();
        for (uint32_t k = 0; k < engine.client_count(); ++k)
            presence_.push_back(engine.client_data(k).class_presence());
    }

    void local_update(FederationEngine& engine, uint32_t round, uint32_t client) override {
        const std::vector<uint8_t>& present = presence_.at(client);
        const double alpha = cfg_.alpha;
        auto objective = [&present, alpha](ModelState&, const Batch& batch,
                                           const ForwardTrace& trace) {
            FederationEngine::BatchObjective obj;
            obj.loss = loss_restricted_ce(trace.logits, batch.labels, present, alpha);
            obj.logit_grad = loss_restricted_ce_grad(trace.logits, batch.labels, present, alpha);
            return obj;
        };
        engine.train_client(round, client, engine.client_model(client), objective);
    }

    void describe(nlohmann::ordered_json& m) const override {
        m["name"] = name();
        m["alpha"] = cfg_.alpha;
        m["eval_softmax"] = "standard";
    }

private:
    FedRsCfg cfg_;
    std::vector<std::vector<uint8_t>> presence_;
};

// --- elastic ------------------------------------------------------------------

std::vector<double> elastic_coefficients(const std::vector<double>& sensitivity, double tau) {
    if (sensitivity.empty()) throw ConfigError("elastic: empty sensitivity vector");
    const auto [mn, mx] = std::minmax_element(sensitivity.begin(), sensitivity.end());
    std::vector<double> zeta(sensitivity.size());
    if (*mx == *mn) {
        // Degenerate min-max: treat every layer as mid-scale.
        for (auto& z : zeta) z = 1.0 + tau - 0.5;
        return zeta;
    }
    const double range = *mx - *mn;
    for (size_t i = 0; i < zeta.size(); ++i)
        zeta[i] = 1.0 + tau - (sensitivity[i] - *mn) / range;
    return zeta;
}

class ElasticStrategy : public Strategy {
public:
    explicit ElasticStrategy(ElasticCfg cfg) : cfg_(cfg) {}
    std::string name() const override { return "elastic"; }
    uint64_t start_scalars() const override { return 1; }
    uint64_t upload_scalars(const FederationEngine& engine) const override {
        return engine.global_model().trainable_layer_count();
    }

    void prepare(FederationEngine& engine) override {
        const size_t layers = engine.global_model().trainable_layer_count();
        sensitivity_.assign(engine.client_count(), std::vector<double>(layers, 0.0));
        engine.manifest_notes()["elastic_rule"] =
            "zeta_l = 1 + tau - minmax(sensitivity); symmetric case reduces to plain averaging";
    }

    void on_round_start(FederationEngine& engine, uint32_t round) override {
        Strategy::on_round_start(engine, round);
        // Gradient-norm probe on a local subset, folded into the EMA.
        for (uint32_t k = 0; k < engine.client_count(); ++k) {
            const Dataset& data = engine.client_data(k);
            const size_t probe =
                std::max<size_t>(1, static_cast<size_t>(std::llround(
                                        cfg_.probe_fraction * static_cast<double>(data.size()))));
            std::vector<size_t> idx(data.size());
            for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            RngStream rng = engine.stream("elastic-probe", {k, round});
            rng.shuffle(idx);
            idx.resize(std::min(probe, idx.size()));
            Batch batch = engine.make_batch(data, idx);
            ModelState scratch = engine.client_model(k);
            ForwardTrace trace = forward(scratch, batch, Mode::kTrain);
            GradientSet grads = backward(scratch, trace, loss_ce_soft_grad(trace.logits, batch.labels));
            std::vector<double>& s = sensitivity_.at(k);
            size_t layer_idx = 0, grad_slot = 0;
            for (const Layer& l : scratch.layers) {
                if (!l.has_trainable()) continue;
                double ss = 0.0;
                for (const Param& p : l.params) {
                    if (p.role != ParamRole::kTrainable) continue;
                    const Tensor& g = grads.entries[grad_slot++].second;
                    for (double v : g.data) ss += v * v;
                }
                const double norm = std::sqrt(ss);
                s[layer_idx] = cfg_.mu * s[layer_idx] + (1.0 - cfg_.mu) * norm;
                ++layer_idx;
            }
        }
    }

    void aggregate(FederationEngine& engine, uint32_t) override {
        std::vector<const ModelState*> models;
        for (uint32_t k = 0; k < engine.client_count(); ++k) models.push_back(&engine.client_model(k));
        ModelState averaged = aggregate_weighted(models, engine.weights(), aggregation_mask());

        const size_t layers = engine.global_model().trainable_layer_count();
        std::vector<double> agg_sens(layers, 0.0);
        for (uint32_t k = 0; k < engine.client_count(); ++k)
            for (size_t l = 0; l < layers; ++l)
                agg_sens[l] += engine.weights().p[k] * sensitivity_[k][l];
        last_zeta_ = elastic_coefficients(agg_sens, cfg_.tau);

        const ModelState& start = engine.round_start_global();
        const ParamPredicate mask = aggregation_mask();
        size_t layer_idx = 0;
        for (size_t li = 0; li < averaged.layers.size(); ++li) {
            Layer& layer = averaged.layers[li];
            if (!layer.has_trainable()) continue;
            const double zeta = last_zeta_[layer_idx++];
            if (zeta == 1.0) continue; // plain average, bit-exact
            for (size_t pi = 0; pi < layer.params.size(); ++pi) {
                Param& p = layer.params[pi];
                if (!mask(layer, p)) continue;
                const Tensor& w0 = start.layers[li].params[pi].value;
                for (size_t e = 0; e < p.value.size(); ++e)
                    p.value[e] = w0[e] + zeta * (p.value[e] - w0[e]);
            }
        }
        engine.global_model() = std::move(averaged);
    }

    const std::vector<double>& last_coefficients() const { return last_zeta_; }

    void describe(nlohmann::ordered_json& m) const override {
        m["name"] = name();
        m["mu"] = cfg_.mu;
        m["tau"] = cfg_.tau;
        m["probe_fraction"] = cfg_.probe_fraction;
        m["reconstruction"] = "layer coefficients rebuilt from prose description";
    }

private:
    ElasticCfg cfg_;
    std::vector<std::vector<double>> sensitivity_;
    std::vector<double> last_zeta_;
};

// --- fedbn --------------------------------------------------------------------

class FedBnStrategy : public Strategy {
public:
    std::string name() const override { return "fedbn"; }
    ParamPredicate aggregation_mask() const override { return fedbn_mask(); }
    bool personalized_metric() const override { return true; }
    bool global_eval_uses_personalized() const override { return true; }

    uint64_t transmitted_params(const FederationEngine& engine) const override {
        const ModelState& g = engine.global_model();
        return g.param_count() - g.bn_param_count();
    }

    void prepare(FederationEngine& engine) override {
        if (engine.global_model().bn_param_count() == 0)
            engine.manifest_notes()["fedbn_warning"] =
                "model has no batchnorm layers; behaves exactly like plain averaging";
        engine.manifest_notes()["fedbn_global_metric"] = "personalized mean (global model undefined)";
    }

    void describe(nlohmann::ordered_json& m) const override { m["name"] = name(); }
};

// --- prr ----------------------------------------------------------------------

PrrPhase prr_phase(double deputy_acc, double personal_acc, double alpha1, double alpha2) {
    const double ratio = deputy_acc / std::max(personal_acc, 1e-12);
    if (ratio < alpha1) return PrrPhase::kRecover;
    if (ratio < alpha2) return PrrPhase::kExchange;
    return PrrPhase::kSublimate;
}

class PrrStrategy : public Strategy {
public:
    explicit PrrStrategy(PrrCfg cfg) : cfg_(cfg) {}
    std::string name() const override { return "prr"; }
    bool personalized_metric() const override { return true; }
    const std::vector<ModelState>* personal_models() const override { return &personalized_; }

    void prepare(FederationEngine& engine) override {
        personalized_.assign(engine.client_count(), engine.global_model());
        engine.manifest_notes()["prr_loss_weighting"] = "cross-entropy and distillation weighted 1:1";
    }

    void local_update(FederationEngine& engine, uint32_t round, uint32_t client) override {
        ModelState& deputy = engine.client_model(client);
        ModelState& personal = personalized_.at(client);
        const Dataset& data = engine.client_data(client);
        AdamState opt_deputy, opt_personal;
        uint64_t flops = 0;
        for (uint32_t epoch = 0; epoch < engine.config().local_epochs; ++epoch) {
            const PrrPhase phase = prr_phase(engine.accuracy(deputy, data),
                                             engine.accuracy(personal, data), cfg_.alpha1, cfg_.alpha2);
            for (const auto& idx : engine.epoch_batches(round, client, epoch, data.size())) {
                Batch batch = engine.make_batch(data, idx);
                // Teachers are the batch-start states of the opposite model.
                const Tensor deputy_teacher = eval_logits(deputy, batch.inputs);
                const Tensor personal_teacher = eval_logits(personal, batch.inputs);

                ForwardTrace dt = forward(deputy, batch, Mode::kTrain);
                double dloss = loss_ce_soft(dt.logits, batch.labels);
                Tensor dgrad = loss_ce_soft_grad(dt.logits, batch.labels);
                if (phase == PrrPhase::kExchange) {
                    dloss += loss_kd(dt.logits, personal_teacher, cfg_.kd_temperature);
                    const Tensor kd = loss_kd_grad(dt.logits, personal_teacher, cfg_.kd_temperature);
                    for (size_t i = 0; i < dgrad.size(); ++i) dgrad[i] += kd[i];
                }
                if (!std::isfinite(dloss))
                    throw RuntimeFailure("prr deputy loss diverged for client " + std::to_string(client));
                adam_step(deputy, backward(deputy, dt, dgrad), opt_deputy, engine.config().optimizer);

                ForwardTrace pt = forward(personal, batch, Mode::kTrain);
                double ploss = loss_ce_soft(pt.logits, batch.labels);
                Tensor pgrad = loss_ce_soft_grad(pt.logits, batch.labels);
                if (phase != PrrPhase::kRecover) {
                    ploss += loss_kd(pt.logits, deputy_teacher, cfg_.kd_temperature);
                    const Tensor kd = loss_kd_grad(pt.logits, deputy_teacher, cfg_.kd_temperature);
                    for (size_t i = 0; i < pgrad.size(); ++i) pgrad[i] += kd[i];
                }
                if (!std::isfinite(ploss))
                    throw RuntimeFailure("prr personalized loss diverged for client " +
                                         std::to_string(client));
                adam_step(personal, backward(personal, pt, pgrad), opt_personal,
                          engine.config().optimizer);

                flops += 2 * training_flops(deputy, batch.size()); // two models per batch
            }
        }
        engine.ledger().record_flops(round, client, flops);
    }

    void describe(nlohmann::ordered_json& m) const override {
        m["name"] = name();
        m["alpha1"] = cfg_.alpha1;
        m["alpha2"] = cfg_.alpha2;
        m["kd_temperature"] = cfg_.kd_temperature;
        m["reconstruction"] = "phase thresholds read as deputy/personal accuracy-ratio breakpoints";
    }

private:
    PrrCfg cfg_;
    std::vector<ModelState> personalized_;
};

// --- dense --------------------------------------------------------------------

class DenseStrategy : public Strategy {
public:
    explicit DenseStrategy(DenseCfg cfg) : cfg_(cfg) {}
    std::string name() const override { return "dense"; }

    void execute(FederationEngine& engine, RunObserver* observer) override;

    void describe(nlohmann::ordered_json& m) const override {
        m["name"] = name();
        m["lambda1"] = cfg_.lambda1;
        m["lambda2"] = cfg_.lambda2;
        m["pretrain_epochs"] = cfg_.pretrain_epochs;
        m["generator_steps"] = cfg_.generator_steps;
        m["distill_steps"] = cfg_.distill_steps;
        m["server_compute_unledgered"] = true;
    }

private:
    DenseCfg cfg_;
};

void DenseStrategy::execute(FederationEngine& engine, RunObserver* observer) {
    engine.set_observer(observer);
    engine.snapshot_round_start();
    const uint32_t clients = engine.client_count();
    const uint16_t k_classes = engine.test_set().k_classes;
    const size_t pixels = engine.test_set().pixel_count();

    // Local pretraining, then the single model upload per client.
    for (uint32_t k = 0; k < clients; ++k)
        engine.train_client(0, k, engine.client_model(k), engine.ce_objective(), 1,
                            cfg_.pretrain_epochs);
    if (observer) observer->after_local_training(0, engine.client_models());
    double drift = 0.0;
    for (uint32_t k = 0; k < clients; ++k)
        drift += trainable_distance(engine.client_model(k), engine.round_start_global());
    drift /= static_cast<double>(clients);
    const uint64_t params = engine.global_model().param_count();
    for (uint32_t k = 0; k < clients; ++k)
        engine.ledger().record_comm(0, k, Direction::kUp, params);

    // Server side: conditional generator trained against the ensemble.
    const size_t gen_in = cfg_.noise_dim + k_classes;
    ModelState generator =
        make_plain_mlp(gen_in, {cfg_.generator_hidden, cfg_.generator_hidden}, pixels,
                       derived_seed(engine, "dense-generator"), ActivationFn::kRelu,
                       ActivationFn::kTanh);
    AdamHyper gen_hyper = engine.config().optimizer;
    gen_hyper.weight_decay = 0.0;
    AdamState gen_opt;

    auto make_noise_batch = [&](RngStream& rng, std::vector<uint16_t>& labels) {
        const size_t b = cfg_.gen_batch;
        labels.resize(b);
        Batch nb;
        nb.inputs = Tensor({b, gen_in});
        nb.labels = Tensor({b, 1}, std::vector<double>(b, 1.0));
        for (size_t i = 0; i < b; ++i) {
            labels[i] = static_cast<uint16_t>(i % k_classes);
            for (uint32_t z = 0; z < cfg_.noise_dim; ++z)
                nb.inputs[i * gen_in + z] = rng.normal();
            nb.inputs[i * gen_in + cfg_.noise_dim + labels[i]] = 1.0;
        }
        return nb;
    };

    auto ensemble_logits = [&](const Tensor& images) {
        Tensor mean({images.shape[0], static_cast<size_t>(k_classes)});
        for (uint32_t k = 0; k < clients; ++k) {
            const Tensor lk = eval_logits(engine.client_model(k), images);
            for (size_t i = 0; i < mean.size(); ++i) mean[i] += lk[i] / static_cast<double>(clients);
        }
        return mean;
    };

    RngStream gen_rng(derived_seed(engine, "dense-gen-noise"));
    std::vector<uint16_t> labels;
    for (uint32_t step = 0; step < cfg_.generator_steps; ++step) {
        Batch nb = make_noise_batch(gen_rng, labels);
        ForwardTrace gtrace = forward(generator, nb, Mode::kTrain);
        const Tensor& images = gtrace.logits; // [B, pixels]
        Tensor labels_onehot({images.shape[0], static_cast<size_t>(k_classes)});
        for (size_t i = 0; i < labels.size(); ++i)
            labels_onehot[i * k_classes + labels[i]] = 1.0;

        // dLoss/d images: classification through each frozen client model...
        Tensor image_grad(images.shape);
        {
            Batch ib;
            ib.inputs = images;
            ib.labels = labels_onehot;
            Tensor mean_logits({images.shape[0], static_cast<size_t>(k_classes)});
            std::vector<ModelState> scratch;
            std::vector<ForwardTrace> traces;
            scratch.reserve(clients);
            for (uint32_t k = 0; k < clients; ++k) {
                scratch.push_back(engine.client_model(k));
                traces.push_back(forward(scratch.back(), ib, Mode::kTrain));
                for (size_t i = 0; i < mean_logits.size(); ++i)
                    mean_logits[i] += traces.back().logits[i] / static_cast<double>(clients);
            }
            Tensor up = loss_ce_soft_grad(mean_logits, labels_onehot);
            for (auto& v : up.data) v *= cfg_.lambda1 / static_cast<double>(clients);
            for (uint32_t k = 0; k < clients; ++k) {
                GradientSet g = backward(scratch[k], traces[k], up);
                for (size_t i = 0; i < image_grad.size(); ++i) image_grad[i] += g.input_grad[i];
            }
        }
        // ...plus the batch diversity term.
        const Tensor div_grad = loss_neg_pairwise_distance_grad(images);
        for (size_t i = 0; i < image_grad.size(); ++i) image_grad[i] += cfg_.lambda2 * div_grad[i];

        adam_step(generator, backward(generator, gtrace, image_grad), gen_opt, gen_hyper);
    }

    // Distill the ensemble into the global student on generated batches.
    ModelState& student = engine.global_model();
    AdamState student_opt;
    RngStream distill_rng(derived_seed(engine, "dense-distill-noise"));
    for (uint32_t step = 0; step < cfg_.distill_steps; ++step) {
        Batch nb = make_noise_batch(distill_rng, labels);
        ModelState gen_scratch = generator;
        const Tensor images = forward(gen_scratch, nb, Mode::kEval).logits;
        const Tensor teacher = ensemble_logits(images);
        Batch ib;
        ib.inputs = images;
        ib.labels = Tensor({images.shape[0], static_cast<size_t>(k_classes)});
        for (size_t i = 0; i < labels.size(); ++i) ib.labels[i * k_classes + labels[i]] = 1.0;
        ForwardTrace st = forward(student, ib, Mode::kTrain);
        const double loss = loss_kd(st.logits, teacher, 1.0);
        if (!std::isfinite(loss)) throw RuntimeFailure("dense distillation diverged");
        adam_step(student, backward(student, st, loss_kd_grad(st.logits, teacher, 1.0)), student_opt,
                  engine.config().optimizer);
    }

    engine.record_round(*this, 0, drift);
    if (observer) observer->after_aggregation(0, engine.global_model());
}

// --- ours ---------------------------------------------------------------------

class OursStrategy : public Strategy {
public:
    explicit OursStrategy(OursCfg cfg) : cfg_(cfg) {}
    std::string name() const override { return "ours"; }

    void prepare(FederationEngine& engine) override {
        nlohmann::ordered_json& notes = engine.manifest_notes();
        notes["label_smoothing_alpha"] = cfg_.smoothing_alpha;
        if (!cfg_.augment) {
            notes["augmentation"] = "disabled";
            return;
        }
        size_t target = cfg_.target_count;
        if (target == 0)
            for (uint32_t k = 0; k < engine.client_count(); ++k)
                target = std::max(target, engine.client_data(k).size());
        notes["augmentation_target"] = target;

        nlohmann::ordered_json per_client = nlohmann::ordered_json::array();
        const DiffusionSchedule schedule = DiffusionSchedule::linear(cfg_.schedule_steps);
        for (uint32_t k = 0; k < engine.client_count(); ++k) {
            const ClientPartition& data = engine.client_data(k);
            nlohmann::ordered_json row;
            row["client"] = k;
            row["real_samples"] = data.size();
            if (data.size() >= target) {
                row["generated"] = 0;
                per_client.push_back(row);
                continue;
            }
            const uint64_t requested = ddpm_epochs(data.k_classes, data.size());
            row["ddpm_epochs_requested"] = requested;
            row["ddpm_epochs_used"] =
                cfg_.ddpm.epochs ? cfg_.ddpm.epochs
                                 : std::min<uint64_t>(requested, cfg_.ddpm.epoch_cap);
            Ddpm generator;
            std::filesystem::path ckpt;
            if (!cfg_.checkpoint_dir.empty()) {
                // One checkpoint per (seed, client, data content).
                const uint64_t tag = data.content_hash() ^ derived_seed(engine, "ours-ddpm", {k});
                ckpt = std::filesystem::path(cfg_.checkpoint_dir) /
                       ("ddpm_client" + std::to_string(k) + "_" + std::to_string(tag) + ".ckpt");
                // manifest stays identical whether trained or reloaded
                row["ddpm_checkpoint"] = ckpt.filename().string();
            }
            if (!ckpt.empty() && std::filesystem::exists(ckpt)) {
                generator = load_ddpm(ckpt);
            } else {
                generator =
                    train_ddpm(data, schedule, cfg_.ddpm, derived_seed(engine, "ours-ddpm", {k}))
                        .model;
                if (!ckpt.empty()) {
                    std::filesystem::create_directories(ckpt.parent_path());
                    save_ddpm(generator, ckpt);
                }
            }
            AugmentResult aug = augment_partition(data, generator, target, cfg_.smoothing_alpha,
                                                  derived_seed(engine, "ours-augment", {k}));
            engine.set_client_data(k, std::move(aug.partition));
            row["generated"] = aug.generated;
            per_client.push_back(row);
        }
        notes["augmentation_per_client"] = per_client;
        engine.refresh_weights();
    }

    void describe(nlohmann::ordered_json& m) const override {
        m["name"] = name();
        m["smoothing_alpha"] = cfg_.smoothing_alpha;
        m["target_count"] = cfg_.target_count;
        m["augment"] = cfg_.augment;
        m["ddpm_epoch_cap"] = cfg_.ddpm.epoch_cap;
        m["schedule_steps"] = cfg_.schedule_steps;
    }

private:
    OursCfg cfg_;
};

// --- factory ------------------------------------------------------------------

std::string strategy_kind_name(const StrategyConfig& config) {
    return std::visit(
        [](const auto& cfg) -> std::string {
            using T = std::decay_t<decltype(cfg)>;
            if constexpr (std::is_same_v<T, FedAvgCfg>) return "fedavg";
            else if constexpr (std::is_same_v<T, FedProxCfg>) return "fedprox";
            else if constexpr (std::is_same_v<T, MoonCfg>) return "moon";
            else if constexpr (std::is_same_v<T, FedNovaCfg>) return "fednova";
            else if constexpr (std::is_same_v<T, FedRsCfg>) return "fedrs";
            else if constexpr (std::is_same_v<T, ElasticCfg>) return "elastic";
            else if constexpr (std::is_same_v<T, FedBnCfg>) return "fedbn";
            else if constexpr (std::is_same_v<T, PrrCfg>) return "prr";
            else if constexpr (std::is_same_v<T, DenseCfg>) return "dense";
            else return "ours";
        },
        config);
}

std::unique_ptr<Strategy> make_strategy(const StrategyConfig& config) {
    return std::visit(
        [](const auto& cfg) -> std::unique_ptr<Strategy> {
            using T = std::decay_t<decltype(cfg)>;
            if constexpr (std::is_same_v<T, FedAvgCfg>) return std::make_unique<FedAvgStrategy>();
            else if constexpr (std::is_same_v<T, FedProxCfg>) return std::make_unique<FedProxStrategy>(cfg);
            else if constexpr (std::is_same_v<T, MoonCfg>) return std::make_unique<MoonStrategy>(cfg);
            else if constexpr (std::is_same_v<T, FedNovaCfg>) return std::make_unique<FedNovaStrategy>(cfg);
            else if constexpr (std::is_same_v<T, FedRsCfg>) return std::make_unique<FedRsStrategy>(cfg);
            else if constexpr (std::is_same_v<T, ElasticCfg>) return std::make_unique<ElasticStrategy>(cfg);
            else if constexpr (std::is_same_v<T, FedBnCfg>) return std::make_unique<FedBnStrategy>();
            else if constexpr (std::is_same_v<T, PrrCfg>) return std::make_unique<PrrStrategy>(cfg);
            else if constexpr (std::is_same_v<T, DenseCfg>) return std::make_unique<DenseStrategy>(cfg);
            else return std::make_unique<OursStrategy>(cfg);
        },
        config);
}

StrategyConfig default_strategy_config(const std::string& kind) {
    if (kind == "fedavg") return FedAvgCfg{};
    if (kind == "fedprox") return FedProxCfg{};
    if (kind == "moon") return MoonCfg{};
    if (kind == "fednova") return FedNovaCfg{};
    if (kind == "fedrs") return FedRsCfg{};
    if (kind == "elastic") return ElasticCfg{};
    if (kind == "fedbn") return FedBnCfg{};
    if (kind == "prr") return PrrCfg{};
    if (kind == "dense") return DenseCfg{};
    if (kind == "ours") return OursCfg{};
    throw ConfigError("unknown strategy '" + kind + "'");
}

} // namespace fedbench
