#include "fedbench/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include "fedbench/report.hpp"

namespace fedbench {

namespace {

std::vector<size_t> parse_shape(const std::string& text, const std::string& key) {
    std::vector<size_t> shape;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, 'x')) {
        try {
            shape.push_back(static_cast<size_t>(std::stoull(part)));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': expected dims like 1x8x8, got '" + text + "'");
        }
    }
    if (shape.empty()) throw ConfigError("config key '" + key + "': empty shape");
    return shape;
}

std::vector<size_t> parse_size_list(const KeyValueConfig& cfg, const std::string& key,
                                    std::vector<size_t> fallback) {
    if (!cfg.has(key)) {
        (void)cfg.get_string(key, ""); // mark consumed
        return fallback;
    }
    std::vector<size_t> out;
    for (double v : cfg.get_double_list(key)) {
        if (v < 1) throw ConfigError("config key '" + key + "': entries must be >= 1");
        out.push_back(static_cast<size_t>(v));
    }
    return out;
}

StrategyConfig parse_strategy(const KeyValueConfig& cfg, const std::string& entry) {
    const std::string prefix = "strategy." + entry + ".";
    const std::string kind = cfg.get_string(prefix + "kind", entry);
    StrategyConfig sc;
    try {
        sc = default_strategy_config(kind);
    } catch (const ConfigError&) {
        throw ConfigError("strategy.list: unknown strategy '" + entry + "' (set " + prefix +
                          "kind to one of fedavg, fedprox, moon, fednova, fedrs, elastic, fedbn, "
                          "prr, dense, ours)");
    }
    std::visit(
        [&](auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, FedProxCfg>) {
                c.mu = cfg.get_double(prefix + "mu", c.mu);
            } else if constexpr (std::is_same_v<T, MoonCfg>) {
                c.mu = cfg.get_double(prefix + "mu", c.mu);
                c.tau = cfg.get_double(prefix + "tau", c.tau);
            } else if constexpr (std::is_same_v<T, FedNovaCfg>) {
                c.rho = cfg.get_double(prefix + "rho", c.rho);
            } else if constexpr (std::is_same_v<T, FedRsCfg>) {
                c.alpha = cfg.get_double(prefix + "alpha", c.alpha);
            } else if constexpr (std::is_same_v<T, ElasticCfg>) {
                c.mu = cfg.get_double(prefix + "mu", c.mu);
                c.tau = cfg.get_double(prefix + "tau", c.tau);
                c.probe_fraction = cfg.get_double(prefix + "probe_fraction", c.probe_fraction);
            } else if constexpr (std::is_same_v<T, PrrCfg>) {
                c.alpha1 = cfg.get_double(prefix + "alpha1", c.alpha1);
                c.alpha2 = cfg.get_double(prefix + "alpha2", c.alpha2);
                c.kd_temperature = cfg.get_double(prefix + "kd_temperature", c.kd_temperature);
            } else if constexpr (std::is_same_v<T, DenseCfg>) {
                c.lambda1 = cfg.get_double(prefix + "lambda1", c.lambda1);
                c.lambda2 = cfg.get_double(prefix + "lambda2", c.lambda2);
                c.pretrain_epochs =
                    static_cast<uint32_t>(cfg.get_uint(prefix + "pretrain_epochs", c.pretrain_epochs));
                c.generator_steps =
                    static_cast<uint32_t>(cfg.get_uint(prefix + "generator_steps", c.generator_steps));
                c.distill_steps =
                    static_cast<uint32_t>(cfg.get_uint(prefix + "distill_steps", c.distill_steps));
                c.gen_batch = static_cast<uint32_t>(cfg.get_uint(prefix + "gen_batch", c.gen_batch));
                c.noise_dim = static_cast<uint32_t>(cfg.get_uint(prefix + "noise_dim", c.noise_dim));
                c.generator_hidden = static_cast<uint32_t>(
                    cfg.get_uint(prefix + "generator_hidden", c.generator_hidden));
            } else if constexpr (std::is_same_v<T, OursCfg>) {
                c.smoothing_alpha = cfg.get_double(prefix + "smoothing_alpha", c.smoothing_alpha);
                c.target_count = cfg.get_uint(prefix + "target_count", c.target_count);
                c.augment = cfg.get_bool(prefix + "augment", c.augment);
                c.schedule_steps =
                    static_cast<uint32_t>(cfg.get_uint(prefix + "schedule_steps", c.schedule_steps));
                c.ddpm.epochs = static_cast<uint32_t>(cfg.get_uint(prefix + "ddpm_epochs", c.ddpm.epochs));
                c.ddpm.epoch_cap =
                    static_cast<uint32_t>(cfg.get_uint(prefix + "ddpm_epoch_cap", c.ddpm.epoch_cap));
                c.ddpm.batch = static_cast<uint32_t>(cfg.get_uint(prefix + "ddpm_batch", c.ddpm.batch));
                c.ddpm.lr = cfg.get_double(prefix + "ddpm_lr", c.ddpm.lr);
                c.ddpm.ema_decay = cfg.get_double(prefix + "ddpm_ema_decay", c.ddpm.ema_decay);
                c.ddpm.hidden = static_cast<uint32_t>(cfg.get_uint(prefix + "ddpm_hidden", c.ddpm.hidden));
                c.checkpoint_dir = cfg.get_string(prefix + "ddpm_checkpoint_dir", c.checkpoint_dir);
            }
        },
        sc);
    return sc;
}

} // namespace

ExperimentPlan parse_plan(KeyValueConfig& cfg) {
    ExperimentPlan plan;
    plan.seed = cfg.get_uint("seed", 0);

    plan.data_spec.k_classes = static_cast<uint16_t>(cfg.get_uint("dataset.k_classes", 2));
    plan.data_spec.samples_per_class = cfg.get_uint("dataset.samples_per_class", 60);
    plan.data_spec.image_shape =
        parse_shape(cfg.get_string("dataset.image", "1x32x32"), "dataset.image");
    plan.data_spec.class_signal = cfg.get_double("dataset.class_signal", 0.8);
    plan.data_spec.noise_level = cfg.get_double("dataset.noise_level", 0.15);
    plan.test_per_class = cfg.get_uint("dataset.test_per_class", 40);

    plan.partition_method = cfg.get_string("partition.method", "kfold");
    plan.folds = cfg.get_uint("partition.folds", 6);
    plan.proportions = cfg.get_double_list("partition.proportions");
    plan.clients = cfg.get_uint("partition.clients", 5);
    plan.concentration = cfg.get_double("partition.concentration", 0.5);
    if (plan.partition_method == "feature_shift") {
        for (size_t k = 0; k < plan.clients; ++k) {
            const std::string key = "partition.shift." + std::to_string(k);
            const std::vector<double> spec = cfg.get_double_list(key);
            FeatureShiftSpec fs;
            if (!spec.empty()) {
                if (spec.size() != 3)
                    throw ConfigError("config key '" + key +
                                      "': expected brightness,contrast,noise");
                fs.brightness_offset = spec[0];
                fs.contrast_scale = spec[1];
                fs.noise_sigma = spec[2];
            }
            plan.shifts.push_back(fs);
        }
    } else if (plan.partition_method != "kfold" && plan.partition_method != "quantity" &&
               plan.partition_method != "dirichlet") {
        throw ConfigError("partition.method must be kfold, quantity, dirichlet or feature_shift");
    }

    plan.fed.rounds = static_cast<uint32_t>(cfg.get_uint("federation.rounds", 10));
    plan.fed.local_epochs = static_cast<uint32_t>(cfg.get_uint("federation.local_epochs", 5));
    plan.fed.batch_size = static_cast<uint32_t>(cfg.get_uint("federation.batch_size", 64));
    plan.fed.seed = plan.seed;
    const std::string eval = cfg.get_string("federation.eval", "both");
    if (eval == "global") plan.fed.eval_mode = EvalMode::kGlobal;
    else if (eval == "personalized") plan.fed.eval_mode = EvalMode::kPersonalized;
    else if (eval == "both") plan.fed.eval_mode = EvalMode::kBoth;
    else throw ConfigError("federation.eval must be global, personalized or both");
    plan.fed.optimizer.lr = cfg.get_double("optimizer.lr", plan.fed.optimizer.lr);
    plan.fed.optimizer.beta1 = cfg.get_double("optimizer.beta1", plan.fed.optimizer.beta1);
    plan.fed.optimizer.beta2 = cfg.get_double("optimizer.beta2", plan.fed.optimizer.beta2);
    plan.fed.optimizer.weight_decay =
        cfg.get_double("optimizer.weight_decay", plan.fed.optimizer.weight_decay);
    plan.fed.convergence.window =
        static_cast<uint32_t>(cfg.get_uint("convergence.window", plan.fed.convergence.window));
    plan.fed.convergence.delta = cfg.get_double("convergence.delta", plan.fed.convergence.delta);

    plan.model_kind = cfg.get_string("model.kind", "mlp");
    if (plan.model_kind != "mlp" && plan.model_kind != "cnn")
        throw ConfigError("model.kind must be mlp or cnn");
    plan.hidden = parse_size_list(cfg, "model.hidden", plan.hidden);
    plan.channels = parse_size_list(cfg, "model.channels", plan.channels);
    if (plan.hidden.size() != 2) throw ConfigError("model.hidden expects two sizes, e.g. 32,16");
    if (plan.channels.size() != 2) throw ConfigError("model.channels expects two sizes, e.g. 8,16");

    const std::vector<std::string> entries = cfg.get_list("strategy.list");
    if (entries.empty()) throw ConfigError("strategy.list must name at least one strategy");
    for (const std::string& entry : entries)
        plan.strategies.emplace_back(entry, parse_strategy(cfg, entry));

    plan.export_data = cfg.get_bool("export_data", false);

    cfg.fail_on_unknown();
    plan.config_echo = cfg.echo();
    return plan;
}

size_t fold_count(const ExperimentPlan& plan) {
    return plan.partition_method == "kfold" ? plan.folds : 1;
}

FoldData build_fold(const ExperimentPlan& plan, size_t fold) {
    FoldData out;
    Dataset pool = gen_synthetic(plan.data_spec, plan.seed);
    if (plan.partition_method == "kfold") {
        KFoldSplit split = partition_kfold(pool, plan.folds, fold, plan.seed + 1);
        out.clients = std::move(split.clients);
        out.test = std::move(split.test);
        return out;
    }

    SyntheticSpec test_spec = plan.data_spec;
    test_spec.samples_per_class = plan.test_per_class;
    out.test = gen_synthetic(test_spec, plan.seed + 7919);

    if (plan.partition_method == "quantity") {
        if (plan.proportions.empty())
            throw ConfigError("partition.proportions is required for the quantity method");
        QuantitySplit split = partition_quantity(pool, plan.proportions, plan.seed + 1);
        out.clients = std::move(split.clients);
        out.warnings = std::move(split.warnings);
    } else if (plan.partition_method == "dirichlet") {
        out.clients = partition_dirichlet(pool, plan.clients, plan.concentration, plan.seed + 1);
    } else { // feature_shift
        std::vector<double> props(plan.clients, 1.0 / static_cast<double>(plan.clients));
        QuantitySplit split = partition_quantity(pool, props, plan.seed + 1);
        out.clients = apply_feature_shift(split.clients, plan.shifts, plan.seed + 2);
        out.warnings = std::move(split.warnings);
    }
    return out;
}

ModelState build_model(const ExperimentPlan& plan) {
    const size_t pixels = Tensor::count(plan.data_spec.image_shape);
    if (plan.model_kind == "cnn") {
        if (plan.data_spec.image_shape.size() != 3)
            throw ConfigError("model.kind=cnn requires a CxHxW dataset.image");
        return make_cnn(plan.data_spec.image_shape, plan.channels[0], plan.channels[1],
                        plan.data_spec.k_classes, plan.seed + 13);
    }
    return make_mlp(pixels, plan.hidden[0], plan.hidden[1], plan.data_spec.k_classes, plan.seed + 13);
}

namespace {

void export_fold_data(const ExperimentPlan& plan, const FoldData& data,
                      const std::filesystem::path& out_dir, size_t fold) {
    const auto dir = out_dir / "data" / ("fold" + std::to_string(fold));
    std::filesystem::create_directories(dir);
    for (size_t k = 0; k < data.clients.size(); ++k)
        save_dataset(data.clients[k], dir / ("client" + std::to_string(k) + ".fds"));
    save_dataset(data.test, dir / "test.fds");
    (void)plan;
}

std::string percent3(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", 100.0 * fraction);
    return buf;
}

struct RunEntry {
    std::string strategy;
    size_t fold;
    std::filesystem::path dir;
    nlohmann::ordered_json manifest;
    std::vector<ReportRow> rows;

    double final_metric() const {
        const std::string metric = manifest.value("summary_metric", "global_acc");
        if (rows.empty()) return std::nan("");
        return metric == "pers_acc" ? rows.back().pers_acc : rows.back().global_acc;
    }
};

std::vector<RunEntry> scan_runs(const std::filesystem::path& run_dir) {
    std::vector<RunEntry> runs;
    if (!std::filesystem::is_directory(run_dir))
        throw ConfigError(run_dir.string() + " is not a directory");
    std::vector<std::filesystem::path> entries;
    for (const auto& e : std::filesystem::directory_iterator(run_dir))
        if (e.is_directory() && e.path().filename() != "data") entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& entry : entries) {
        std::vector<std::filesystem::path> folds;
        for (const auto& f : std::filesystem::directory_iterator(entry))
            if (f.is_directory() && f.path().filename().string().rfind("fold", 0) == 0)
                folds.push_back(f.path());
        std::sort(folds.begin(), folds.end());
        for (const auto& fold_dir : folds) {
            if (!std::filesystem::exists(fold_dir / "report.csv")) continue;
            RunEntry run;
            run.strategy = entry.filename().string();
            run.fold = std::stoul(fold_dir.filename().string().substr(4));
            run.dir = fold_dir;
            run.manifest = load_manifest(fold_dir);
            run.rows = parse_report_csv(fold_dir / "report.csv");
            runs.push_back(std::move(run));
        }
    }
    return runs;
}

} // namespace

int cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
            std::optional<uint64_t> seed_override) {
    KeyValueConfig cfg = KeyValueConfig::from_file(config_path);
    cfg.apply_env_overrides();
    if (seed_override) cfg.set("seed", std::to_string(*seed_override));
    ExperimentPlan plan = parse_plan(cfg);

    const size_t folds = fold_count(plan);
    for (size_t fold = 0; fold < folds; ++fold) {
        FoldData data = build_fold(plan, fold);
        if (plan.export_data) export_fold_data(plan, data, out_dir, fold);
        for (const auto& [entry, strategy_cfg] : plan.strategies) {
            FederationConfig fed = plan.fed;
            fed.clients = static_cast<uint32_t>(data.clients.size());
            FederationEngine engine(fed, data.clients, data.test, build_model(plan));
            auto strategy = make_strategy(strategy_cfg);
            RunReport report = engine.run(*strategy);

            nlohmann::ordered_json& m = report.manifest;
            nlohmann::ordered_json experiment;
            experiment["entry"] = entry;
            experiment["fold"] = fold;
            experiment["partition_method"] = plan.partition_method;
            experiment["config"] = plan.config_echo;
            if (!data.warnings.empty()) experiment["partition_warnings"] = data.warnings;
            m["experiment"] = experiment;

            const auto dir = out_dir / entry / ("fold" + std::to_string(fold));
            write_run_outputs(report, dir);
            if (plan.export_data && strategy_kind_name(strategy_cfg) == "ours") {
                const auto aug_dir = dir / "augmented";
                std::filesystem::create_directories(aug_dir);
                for (uint32_t k = 0; k < engine.client_count(); ++k)
                    save_dataset(engine.client_data(k),
                                 aug_dir / ("client" + std::to_string(k) + ".fds"));
            }
            std::cerr << entry << " fold" << fold << ": final="
                      << (report.rounds.empty() ? std::nan("") : report.rounds.back().global_acc)
                      << "\n";
        }
    }
    return 0;
}

int cmd_summarize(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
    std::vector<RunEntry> runs = scan_runs(run_dir);
    if (runs.empty()) throw ConfigError("no completed runs under " + run_dir.string());

    std::set<size_t> all_folds;
    for (const auto& r : runs) all_folds.insert(r.fold);

    // metric per (strategy, fold); the pfedavg baseline is the personalized
    // column of the plain averaging run
    std::map<std::string, std::map<size_t, double>> metric;
    for (const auto& r : runs) metric[r.strategy][r.fold] = r.final_metric();
    for (const auto& r : runs)
        if (r.strategy == "fedavg" && !r.rows.empty() && !std::isnan(r.rows.back().pers_acc))
            metric["pfedavg"][r.fold] = r.rows.back().pers_acc;

    // drop strategies that are missing folds
    std::vector<std::string> included, excluded;
    for (const auto& [name, by_fold] : metric) {
        if (by_fold.size() == all_folds.size()) included.push_back(name);
        else excluded.push_back(name);
    }
    for (const auto& name : excluded)
        std::cerr << "warning: strategy '" << name << "' is missing folds and was excluded\n";

    std::map<std::string, size_t> optimal, below;
    for (size_t fold : all_folds) {
        double best = -1.0;
        for (const auto& name : included) best = std::max(best, metric[name][fold]);
        for (const auto& name : included)
            if (metric[name][fold] == best) ++optimal[name];
        if (metric.count("fedavg") && std::count(included.begin(), included.end(), "fedavg")) {
            const double baseline = metric["fedavg"][fold];
            for (const auto& name : included)
                if (name != "fedavg" && name != "pfedavg" && metric[name][fold] < baseline)
                    ++below[name];
        }
    }

    std::ostringstream out;
    out << "strategy,folds,mean_accuracy,std_accuracy,optimal_count,below_baseline_count\n";
    for (const auto& name : included) {
        std::vector<double> vals;
        for (const auto& [fold, v] : metric[name]) vals.push_back(v);
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        var /= static_cast<double>(vals.size()); // population std over folds
        out << name << ',' << vals.size() << ',' << percent3(mean) << ',' << percent3(std::sqrt(var))
            << ',' << optimal[name] << ',';
        if (name == "fedavg" || name == "pfedavg") out << "--";
        else out << below[name];
        out << '\n';
    }
    std::filesystem::create_directories(out_dir);
    atomic_write_text(out_dir / "summary.csv", out.str());
    return 0;
}

int cmd_costs(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
    std::vector<RunEntry> runs = scan_runs(run_dir);
    if (runs.empty()) throw ConfigError("no completed runs under " + run_dir.string());
    std::filesystem::create_directories(out_dir);

    std::ostringstream out;
    out << "strategy,fold,converged,convergence_round,bytes_at_convergence,final_accuracy\n";
    std::set<std::string> curve_written;
    for (const auto& r : runs) {
        const auto& conv = r.manifest["convergence"]["round"];
        const bool converged = !conv.is_null();
        const uint32_t round = converged ? conv.get<uint32_t>() : r.rows.back().round;
        uint64_t bytes = r.rows.back().cum_bytes;
        for (const auto& row : r.rows)
            if (row.round == round) bytes = row.cum_bytes;
        out << r.strategy << ',' << r.fold << ',' << (converged ? 1 : 0) << ',' << round << ','
            << bytes << ',' << percent3(r.final_metric()) << '\n';

        if (r.fold == 0 && !curve_written.count(r.strategy)) {
            curve_written.insert(r.strategy);
            const std::string metric = r.manifest.value("summary_metric", "global_acc");
            std::ostringstream curve;
            for (const auto& row : r.rows) {
                const double acc = metric == "pers_acc" ? row.pers_acc : row.global_acc;
                curve << row.cum_bytes << '\t' << percent3(acc) << '\n';
            }
            atomic_write_text(out_dir / ("cost_curve_" + r.strategy + ".tsv"), curve.str());
        }
    }
    atomic_write_text(out_dir / "costs.csv", out.str());
    return 0;
}

int cmd_stats(const std::filesystem::path& data_dir, const std::filesystem::path& out_dir) {
    if (!std::filesystem::is_directory(data_dir))
        throw ConfigError(data_dir.string() + " is not a directory");
    // every directory holding client*.fds files becomes one scope
    std::map<std::string, std::vector<std::filesystem::path>> scopes;
    auto consider = [&](const std::filesystem::path& dir) {
        std::vector<std::filesystem::path> clients;
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("client", 0) == 0 && e.path().extension() == ".fds")
                clients.push_back(e.path());
        }
        if (clients.empty()) return;
        std::sort(clients.begin(), clients.end());
        std::string scope = std::filesystem::relative(dir, data_dir).string();
        if (scope == ".") scope = "root";
        std::replace(scope.begin(), scope.end(), '/', '_');
        scopes[scope] = std::move(clients);
    };
    consider(data_dir);
    for (const auto& e : std::filesystem::recursive_directory_iterator(data_dir))
        if (e.is_directory()) consider(e.path());
    if (scopes.empty()) throw ConfigError("no client*.fds fixtures under " + data_dir.string());

    std::filesystem::create_directories(out_dir);
    std::ostringstream out;
    out << "scope,client,pixel_mean,pixel_std\n";
    char buf[64];
    for (const auto& [scope, paths] : scopes) {
        std::vector<Dataset> clients;
        for (const auto& p : paths) clients.push_back(load_dataset(p));
        std::vector<double> means;
        for (size_t k = 0; k < clients.size(); ++k) {
            const PixelStats st = pixel_stats(clients[k]);
            means.push_back(st.mean);
            std::snprintf(buf, sizeof(buf), "%.6f,%.6f", st.mean, st.std_dev);
            out << scope << ',' << k << ',' << buf << '\n';

            std::ostringstream hist;
            for (size_t bin = 0; bin < st.histogram.size(); ++bin) {
                const double center = -1.0 + (static_cast<double>(bin) + 0.5) / 128.0;
                std::snprintf(buf, sizeof(buf), "%.6f\t%.9f", center, st.histogram[bin]);
                hist << buf << '\n';
            }
            atomic_write_text(out_dir / ("hist_" + scope + "_client" + std::to_string(k) + ".tsv"),
                              hist.str());
        }
        double mean_of_means = 0.0;
        for (double m : means) mean_of_means += m;
        mean_of_means /= static_cast<double>(means.size());
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f", mean_of_means, cross_client_std(clients));
        out << scope << ",all," << buf << '\n';
    }
    atomic_write_text(out_dir / "stats.csv", out.str());
    return 0;
}

} // namespace fedbench
