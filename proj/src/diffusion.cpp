#include "fedbench/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fedbench/losses.hpp"
#include "fedbench/optimizer.hpp"

namespace fedbench {

namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_le(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint is truncated");
}

void write_string(std::ostream& out, const std::string& s) {
    write_le(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    uint32_t len;
    read_le(in, len);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw IoError("checkpoint is truncated");
    return s;
}

void write_model(std::ostream& out, const ModelState& m) {
    write_le(out, static_cast<uint32_t>(m.input_shape.size()));
    for (size_t d : m.input_shape) write_le(out, static_cast<uint32_t>(d));
    write_le(out, static_cast<uint32_t>(m.head_layer));
    write_le(out, static_cast<uint32_t>(m.layers.size()));
    for (const auto& l : m.layers) {
        write_string(out, l.name);
        write_le(out, static_cast<uint8_t>(l.kind));
        write_le(out, static_cast<uint8_t>(l.fn));
        write_le(out, static_cast<uint32_t>(l.in));
        write_le(out, static_cast<uint32_t>(l.out));
        write_le(out, static_cast<uint32_t>(l.ksize));
        write_le(out, static_cast<uint32_t>(l.stride));
        write_le(out, static_cast<uint32_t>(l.pad));
        write_le(out, static_cast<uint32_t>(l.params.size()));
        for (const auto& p : l.params) {
            write_string(out, p.name);
            write_le(out, static_cast<uint8_t>(p.role));
            write_le(out, static_cast<uint32_t>(p.value.shape.size()));
            for (size_t d : p.value.shape) write_le(out, static_cast<uint32_t>(d));
            out.write(reinterpret_cast<const char*>(p.value.data.data()),
                      static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
        }
    }
}

ModelState read_model(std::istream& in) {
    ModelState m;
    uint32_t rank;
    read_le(in, rank);
    m.input_shape.resize(rank);
    for (auto& d : m.input_shape) {
        uint32_t v;
        read_le(in, v);
        d = v;
    }
    uint32_t head, layer_count;
    read_le(in, head);
    read_le(in, layer_count);
    m.head_layer = head;
    m.layers.resize(layer_count);
    for (auto& l : m.layers) {
        l.name = read_string(in);
        uint8_t kind, fn;
        read_le(in, kind);
        read_le(in, fn);
        l.kind = static_cast<LayerKind>(kind);
        l.fn = static_cast<ActivationFn>(fn);
        uint32_t v;
        read_le(in, v), l.in = v;
        read_le(in, v), l.out = v;
        read_le(in, v), l.ksize = v;
        read_le(in, v), l.stride = v;
        read_le(in, v), l.pad = v;
        uint32_t param_count;
        read_le(in, param_count);
        l.params.resize(param_count);
        for (auto& p : l.params) {
            p.name = read_string(in);
            uint8_t role;
            read_le(in, role);
            p.role = static_cast<ParamRole>(role);
            uint32_t prank;
            read_le(in, prank);
            std::vector<size_t> shape(prank);
            for (auto& d : shape) {
                uint32_t dv;
                read_le(in, dv);
                d = dv;
            }
            p.value = Tensor(shape);
            in.read(reinterpret_cast<char*>(p.value.data.data()),
                    static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
            if (!in) throw IoError("checkpoint is truncated");
        }
    }
    return m;
}

// Sinusoidal time embedding, dim must be even.
void time_embedding(uint32_t t, uint32_t dim, double* out) {
    const uint32_t half = dim / 2;
    for (uint32_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        out[2 * i] = std::sin(static_cast<double>(t) * freq);
        out[2 * i + 1] = std::cos(static_cast<double>(t) * freq);
    }
}

} // namespace

DiffusionSchedule DiffusionSchedule::linear(uint32_t steps, double beta_start, double beta_end) {
    if (steps < 1) throw ConfigError("diffusion schedule needs at least one step");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ConfigError("diffusion schedule requires 0 < beta_start <= beta_end < 1");
    DiffusionSchedule s;
    s.steps = steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (uint32_t t = 0; t < steps; ++t) {
        s.beta[t] = steps == 1 ? beta_start
                               : beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                                  static_cast<double>(steps - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        if (std::abs((1.0 - s.beta[t]) + s.beta[t] - 1.0) > 1e-15)
            throw ConfigError("diffusion schedule: variance identity violated");
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
        if (t > 0 && !(s.alpha_bar[t] < s.alpha_bar[t - 1]))
            throw ConfigError("diffusion schedule: alpha_bar must strictly decrease");
    }
    return s;
}

Tensor forward_noise_step(const Tensor& x_prev, double beta_t, const Tensor& eps) {
    if (!(beta_t > 0.0) || !(beta_t < 1.0)) throw ConfigError("beta_t must lie in (0, 1)");
    if (!x_prev.same_shape(eps)) throw ConfigError("noise shape does not match signal shape");
    const double a = std::sqrt(1.0 - beta_t), b = std::sqrt(beta_t);
    Tensor out(x_prev.shape);
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * x_prev[i] + b * eps[i];
    return out;
}

Tensor forward_noise_closed(const Tensor& x0, uint32_t t, const Tensor& eps,
                            const DiffusionSchedule& schedule) {
    if (t < 1 || t > schedule.steps) throw ConfigError("diffusion step t out of range");
    if (!x0.same_shape(eps)) throw ConfigError("noise shape does not match signal shape");
    const double ab = schedule.alpha_bar[t - 1];
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor out(x0.shape);
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

uint64_t ddpm_epochs(uint32_t num_classes, uint64_t num_samples) {
    if (num_samples < 1) throw ConfigError("adaptive epoch rule needs at least one sample");
    const double e = 1e6 * static_cast<double>(num_classes) / static_cast<double>(num_samples);
    return static_cast<uint64_t>(std::llround(e));
}

namespace {

// Builds the conditioned input rows [x_t | t_embed | one_hot(label)].
Tensor conditioned_input(const std::vector<double*>& noisy, const std::vector<uint32_t>& ts,
                         const std::vector<uint16_t>& labels, size_t d, uint32_t t_dim, uint16_t k) {
    const size_t b = ts.size();
    Tensor in({b, d + t_dim + k});
    std::vector<double> temb(t_dim);
    for (size_t i = 0; i < b; ++i) {
        double* row = &in.data[i * (d + t_dim + k)];
        for (size_t p = 0; p < d; ++p) row[p] = noisy[i][p];
        time_embedding(ts[i], t_dim, temb.data());
        for (uint32_t e = 0; e < t_dim; ++e) row[d + e] = temb[e];
        row[d + t_dim + labels[i]] = 1.0;
    }
    return in;
}

} // namespace

DdpmTrainResult train_ddpm(const Dataset& data, const DiffusionSchedule& schedule,
                           const DdpmTrainConfig& config, uint64_t seed) {
    if (data.samples.empty()) throw ConfigError("cannot train a diffusion model on an empty dataset");
    if (config.t_embed_dim % 2 != 0) throw ConfigError("t_embed_dim must be even");

    DdpmTrainResult result;
    Ddpm& ddpm = result.model;
    ddpm.schedule = schedule;
    ddpm.k_classes = data.k_classes;
    ddpm.image_shape = data.image_shape;
    ddpm.t_embed_dim = config.t_embed_dim;
    const size_t d = ddpm.pixel_count();
    const size_t in_dim = d + config.t_embed_dim + data.k_classes;
    ddpm.noise_net =
        make_plain_mlp(in_dim, {config.hidden, config.hidden}, d, seed ^ 0x9E3779B97F4A7C15ULL);
    ddpm.ema_net = ddpm.noise_net;

    result.epochs_requested = ddpm_epochs(data.k_classes, data.size());
    const uint32_t epochs =
        config.epochs ? config.epochs
                      : static_cast<uint32_t>(
                            std::min<uint64_t>(result.epochs_requested, config.epoch_cap));
    result.epochs_used = epochs;

    AdamHyper hyper;
    hyper.lr = config.lr;
    hyper.weight_decay = 0.0;
    AdamState opt;

    RngStream order_rng = RngStream::keyed(seed, "ddpm-order");
    RngStream noise_rng = RngStream::keyed(seed, "ddpm-noise");

    bool first_batch = true;
    double last_loss = 0.0;
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<uint32_t> ts;
    std::vector<uint16_t> labels;
    for (uint32_t epoch = 0; epoch < epochs; ++epoch) {
        order_rng.shuffle(order);
        for (size_t pos = 0; pos < order.size(); pos += config.batch) {
            const size_t end = std::min(order.size(), pos + config.batch);
            const size_t b = end - pos;
            ts.assign(b, 0);
            labels.assign(b, 0);
            Tensor target({b, d});
            std::vector<std::vector<double>> noisy(b, std::vector<double>(d));
            for (size_t i = 0; i < b; ++i) {
                const Sample& s = data.samples[order[pos + i]];
                ts[i] = 1 + static_cast<uint32_t>(noise_rng.uniform_index(schedule.steps));
                labels[i] = s.label;
                const double ab = schedule.alpha_bar[ts[i] - 1];
                const double ca = std::sqrt(ab), cb = std::sqrt(1.0 - ab);
                for (size_t p = 0; p < d; ++p) {
                    const double eps = noise_rng.normal();
                    target[i * d + p] = eps;
                    noisy[i][p] = ca * static_cast<double>(s.pixels[p]) + cb * eps;
                }
            }
            std::vector<double*> noisy_ptrs(b);
            for (size_t i = 0; i < b; ++i) noisy_ptrs[i] = noisy[i].data();
            Batch batch;
            batch.inputs = conditioned_input(noisy_ptrs, ts, labels, d, config.t_embed_dim,
                                             data.k_classes);
            batch.labels = Tensor({b, 1}, std::vector<double>(b, 1.0));
            ForwardTrace trace = forward(ddpm.noise_net, batch, Mode::kTrain);
            const double loss = loss_mse(trace.logits, target);
            if (!std::isfinite(loss))
                throw RuntimeFailure("diffusion training diverged at epoch " + std::to_string(epoch));
            if (first_batch) {
                result.initial_loss = loss;
                first_batch = false;
            }
            last_loss = loss;
            GradientSet grads = backward(ddpm.noise_net, trace, loss_mse_grad(trace.logits, target));
            adam_step(ddpm.noise_net, grads, opt, hyper);
            // EMA shadow tracks the parameters after every step.
            for (size_t li = 0; li < ddpm.noise_net.layers.size(); ++li)
                for (size_t pi = 0; pi < ddpm.noise_net.layers[li].params.size(); ++pi) {
                    const Tensor& src = ddpm.noise_net.layers[li].params[pi].value;
                    Tensor& dst = ddpm.ema_net.layers[li].params[pi].value;
                    for (size_t e = 0; e < src.size(); ++e)
                        dst[e] = config.ema_decay * dst[e] + (1.0 - config.ema_decay) * src[e];
                }
        }
    }
    result.final_loss = last_loss;
    ++ddpm.ema_net.revision;
    return result;
}

std::vector<std::vector<float>> sample_ddpm(const Ddpm& ddpm, uint16_t label, size_t count,
                                            uint64_t seed) {
    if (label >= ddpm.k_classes) throw ConfigError("sample label out of range");
    std::vector<std::vector<float>> out;
    if (count == 0) return out;
    const size_t d = ddpm.pixel_count();
    const uint32_t t_dim = ddpm.t_embed_dim;
    const DiffusionSchedule& sch = ddpm.schedule;
    RngStream rng = RngStream::keyed(seed, "ddpm-sample", {label});

    std::vector<std::vector<double>> x(count, std::vector<double>(d));
    for (auto& row : x)
        for (auto& v : row) v = rng.normal();

    ModelState net = ddpm.ema_net; // scratch copy; eval forwards stay pure
    std::vector<uint32_t> ts(count);
    std::vector<uint16_t> labels(count, label);
    for (uint32_t t = sch.steps; t >= 1; --t) {
        ts.assign(count, t);
        std::vector<double*> ptrs(count);
        for (size_t i = 0; i < count; ++i) ptrs[i] = x[i].data();
        Batch batch;
        batch.inputs = conditioned_input(ptrs, ts, labels, d, t_dim, ddpm.k_classes);
        batch.labels = Tensor({count, 1}, std::vector<double>(count, 1.0));
        ForwardTrace trace = forward(net, batch, Mode::kEval);
        const double beta = sch.beta[t - 1];
        const double alpha = sch.alpha[t - 1];
        const double ab = sch.alpha_bar[t - 1];
        const double eps_coef = beta / std::sqrt(1.0 - ab);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
        const double sigma = std::sqrt(beta);
        for (size_t i = 0; i < count; ++i)
            for (size_t p = 0; p < d; ++p) {
                const double mean = inv_sqrt_alpha * (x[i][p] - eps_coef * trace.logits[i * d + p]);
                x[i][p] = t > 1 ? mean + sigma * rng.normal() : mean;
            }
    }
    out.resize(count);
    for (size_t i = 0; i < count; ++i) {
        out[i].resize(d);
        for (size_t p = 0; p < d; ++p)
            out[i][p] = static_cast<float>(std::clamp(x[i][p], -1.0, 1.0));
    }
    return out;
}

std::vector<double> smooth_labels(const std::vector<double>& one_hot, double alpha, size_t k_classes) {
    if (!(alpha > 0.0) || !(alpha < 1.0))
        throw ConfigError("label smoothing alpha must lie strictly in (0, 1)");
    if (one_hot.size() != k_classes) throw ConfigError("label vector length does not match class count");
    std::vector<double> soft(k_classes);
    for (size_t j = 0; j < k_classes; ++j)
        soft[j] = (1.0 - alpha) * one_hot[j] + alpha / static_cast<double>(k_classes);
    return soft;
}

AugmentResult augment_partition(const ClientPartition& client, const Ddpm& ddpm, size_t target_count,
                                double alpha, uint64_t seed) {
    if (target_count < client.size())
        throw ConfigError("augmentation target is below the client's sample count");
    if (ddpm.k_classes != client.k_classes || ddpm.image_shape != client.image_shape)
        throw ConfigError("diffusion model does not match the client dataset");
    AugmentResult result;
    result.partition = client;
    const size_t missing = target_count - client.size();
    if (missing == 0) return result;

    const std::vector<uint8_t> presence = client.class_presence();
    std::vector<uint16_t> present;
    for (uint16_t c = 0; c < client.k_classes; ++c)
        if (presence[c]) present.push_back(c);
    if (present.empty()) throw DegenerateInputError("cannot augment a client with no samples");

    // Round-robin class targets, then one batched generation per class.
    std::vector<size_t> per_class(present.size(), 0);
    for (size_t i = 0; i < missing; ++i) ++per_class[i % present.size()];

    for (size_t ci = 0; ci < present.size(); ++ci) {
        if (per_class[ci] == 0) continue;
        const uint16_t cls = present[ci];
        auto images = sample_ddpm(ddpm, cls, per_class[ci], seed);
        if (images.size() != per_class[ci])
            throw RuntimeFailure("generation shortfall for class " + std::to_string(cls));
        for (auto& img : images) {
            Sample s;
            s.pixels = std::move(img);
            s.label = cls;
            s.provenance = Provenance::kSynthetic;
            if (alpha != 0.0) {
                std::vector<double> one_hot(client.k_classes, 0.0);
                one_hot[cls] = 1.0;
                s.soft_label = smooth_labels(one_hot, alpha, client.k_classes);
            }
            result.partition.samples.push_back(std::move(s));
            ++result.generated;
        }
    }
    return result;
}

void save_ddpm(const Ddpm& ddpm, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write("DDPM1", 5);
    write_le(out, ddpm.schedule.steps);
    write_le(out, ddpm.schedule.beta_start);
    write_le(out, ddpm.schedule.beta_end);
    write_le(out, static_cast<uint32_t>(ddpm.k_classes));
    write_le(out, static_cast<uint32_t>(ddpm.t_embed_dim));
    write_le(out, static_cast<uint32_t>(ddpm.image_shape.size()));
    for (size_t d : ddpm.image_shape) write_le(out, static_cast<uint32_t>(d));
    write_model(out, ddpm.noise_net);
    write_model(out, ddpm.ema_net);
    if (!out) throw IoError("write failed for " + path.string());
}

Ddpm load_ddpm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "DDPM1", 5) != 0)
        throw IoError(path.string() + " is not a diffusion checkpoint (bad magic)");
    Ddpm ddpm;
    uint32_t steps;
    double b0, b1;
    read_le(in, steps);
    read_le(in, b0);
    read_le(in, b1);
    ddpm.schedule = DiffusionSchedule::linear(steps, b0, b1);
    uint32_t k, tdim, rank;
    read_le(in, k);
    read_le(in, tdim);
    read_le(in, rank);
    ddpm.k_classes = static_cast<uint16_t>(k);
    ddpm.t_embed_dim = tdim;
    ddpm.image_shape.resize(rank);
    for (auto& d : ddpm.image_shape) {
        uint32_t v;
        read_le(in, v);
        d = v;
    }
    ddpm.noise_net = read_model(in);
    ddpm.ema_net = read_model(in);
    return ddpm;
}

} // namespace fedbench
