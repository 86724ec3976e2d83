#include "fedbench/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace fedbench {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

std::vector<size_t> batch_shape(size_t b, const std::vector<size_t>& rest) {
    std::vector<size_t> s{b};
    s.insert(s.end(), rest.begin(), rest.end());
    return s;
}

} // namespace

Param& Layer::param(std::string_view short_name) {
    for (auto& p : params) {
        size_t dot = p.name.rfind('.');
        if (p.name.compare(dot + 1, std::string::npos, short_name) == 0) return p;
    }
    throw ConfigError("layer '" + name + "' has no parameter '" + std::string(short_name) + "'");
}

const Param& Layer::param(std::string_view short_name) const {
    return const_cast<Layer*>(this)->param(short_name);
}

bool Layer::has_trainable() const {
    for (const auto& p : params)
        if (p.role == ParamRole::kTrainable) return true;
    return false;
}

Layer& ModelState::layer(std::string_view n) {
    for (auto& l : layers)
        if (l.name == n) return l;
    throw ConfigError("model has no layer '" + std::string(n) + "'");
}

const Layer& ModelState::layer(std::string_view n) const {
    return const_cast<ModelState*>(this)->layer(n);
}

size_t ModelState::param_count() const {
    size_t n = 0;
    for (const auto& l : layers)
        for (const auto& p : l.params) n += p.value.size();
    return n;
}

size_t ModelState::bn_param_count() const {
    size_t n = 0;
    for (const auto& l : layers)
        if (l.kind == LayerKind::kBatchNorm)
            for (const auto& p : l.params) n += p.value.size();
    return n;
}

size_t ModelState::trainable_layer_count() const {
    size_t n = 0;
    for (const auto& l : layers)
        if (l.has_trainable()) ++n;
    return n;
}

size_t ModelState::representation_dim() const {
    const Layer& head = layers.at(head_layer);
    return head.in;
}

void ModelState::for_each_param(const std::function<void(const Layer&, const Param&)>& fn) const {
    for (const auto& l : layers)
        for (const auto& p : l.params) fn(l, p);
}

void ModelState::for_each_param(const std::function<void(Layer&, Param&)>& fn) {
    for (auto& l : layers)
        for (auto& p : l.params) fn(l, p);
}

std::vector<std::string> ModelState::trainable_names() const {
    std::vector<std::string> names;
    for_each_param([&](const Layer&, const Param& p) {
        if (p.role == ParamRole::kTrainable) names.push_back(p.name);
    });
    return names;
}

uint64_t ModelState::content_hash() const {
    uint64_t h = 1469598103934665603ULL;
    for_each_param([&](const Layer&, const Param& p) {
        h = fnv1a(p.name.data(), p.name.size(), h);
        h = fnv1a(p.value.data.data(), p.value.data.size() * sizeof(double), h);
    });
    return h;
}

bool ModelState::same_schema(const ModelState& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (size_t i = 0; i < layers.size(); ++i) {
        const Layer &a = layers[i], &b = o.layers[i];
        if (a.name != b.name || a.kind != b.kind || a.params.size() != b.params.size()) return false;
        for (size_t j = 0; j < a.params.size(); ++j) {
            if (a.params[j].name != b.params[j].name || a.params[j].role != b.params[j].role ||
                a.params[j].value.shape != b.params[j].value.shape)
                return false;
        }
    }
    return true;
}

void validate_labels(const Tensor& labels) {
    if (labels.shape.size() != 2) throw ConfigError("labels must be [batch, classes]");
    const size_t b = labels.shape[0], k = labels.shape[1];
    for (size_t i = 0; i < b; ++i) {
        double sum = 0.0;
        for (size_t j = 0; j < k; ++j) {
            double v = labels[i * k + j];
            if (v < 0.0) throw ConfigError("label row " + std::to_string(i) + " has a negative entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ConfigError("label row " + std::to_string(i) + " does not sum to 1");
    }
}

Tensor* GradientSet::find(std::string_view name) {
    for (auto& [n, t] : entries)
        if (n == name) return &t;
    return nullptr;
}

const Tensor* GradientSet::find(std::string_view name) const {
    return const_cast<GradientSet*>(this)->find(name);
}

bool GradientSet::all_finite() const {
    for (const auto& [n, t] : entries)
        for (double v : t.data)
            if (!std::isfinite(v)) return false;
    return true;
}

void GradientSet::scale(double s) {
    for (auto& [n, t] : entries)
        for (double& v : t.data) v *= s;
}

// --- forward ----------------------------------------------------------------

namespace {

void check_input_shape(const ModelState& model, const Batch& batch) {
    const auto& s = batch.inputs.shape;
    bool ok = s.size() == model.input_shape.size() + 1;
    if (ok)
        for (size_t i = 0; i < model.input_shape.size(); ++i)
            ok = ok && s[i + 1] == model.input_shape[i];
    if (!ok) {
        const std::string first = model.layers.empty() ? "<none>" : model.layers.front().name;
        Tensor probe(model.input_shape);
        throw ConfigError("input shape " + batch.inputs.shape_str() +
                          " does not match model input [batch]+" + probe.shape_str() +
                          " expected by layer '" + first + "'");
    }
}

Tensor dense_forward(const Layer& l, const Tensor& x) {
    const size_t b = x.shape[0];
    if (x.shape.size() != 2 || x.shape[1] != l.in)
        throw ConfigError("dense layer '" + l.name + "' expected [batch," + std::to_string(l.in) +
                          "], got " + x.shape_str());
    const Tensor& w = l.param("weight").value; // [out, in]
    const Tensor& bias = l.param("bias").value;
    Tensor y(batch_shape(b, {l.out}));
    for (size_t i = 0; i < b; ++i)
        for (size_t o = 0; o < l.out; ++o) {
            double acc = bias[o];
            const double* xr = &x.data[i * l.in];
            const double* wr = &w.data[o * l.in];
            for (size_t j = 0; j < l.in; ++j) acc += xr[j] * wr[j];
            y[i * l.out + o] = acc;
        }
    return y;
}

Tensor conv_forward(const Layer& l, const Tensor& x) {
    if (x.shape.size() != 4 || x.shape[1] != l.in)
        throw ConfigError("conv layer '" + l.name + "' expected [batch," + std::to_string(l.in) +
                          ",H,W], got " + x.shape_str());
    const size_t b = x.shape[0], h = x.shape[2], w = x.shape[3];
    const size_t oh = (h + 2 * l.pad - l.ksize) / l.stride + 1;
    const size_t ow = (w + 2 * l.pad - l.ksize) / l.stride + 1;
    const Tensor& wt = l.param("weight").value; // [oc, ic, k, k]
    const Tensor& bias = l.param("bias").value;
    Tensor y(batch_shape(b, {l.out, oh, ow}));
    for (size_t bi = 0; bi < b; ++bi)
        for (size_t oc = 0; oc < l.out; ++oc)
            for (size_t yh = 0; yh < oh; ++yh)
                for (size_t yw = 0; yw < ow; ++yw) {
                    double acc = bias[oc];
                    for (size_t ic = 0; ic < l.in; ++ic)
                        for (size_t kh = 0; kh < l.ksize; ++kh) {
                            const long ih = static_cast<long>(yh * l.stride + kh) - static_cast<long>(l.pad);
                            if (ih < 0 || ih >= static_cast<long>(h)) continue;
                            for (size_t kw = 0; kw < l.ksize; ++kw) {
                                const long iw = static_cast<long>(yw * l.stride + kw) - static_cast<long>(l.pad);
                                if (iw < 0 || iw >= static_cast<long>(w)) continue;
                                acc += x[((bi * l.in + ic) * h + ih) * w + iw] *
                                       wt[((oc * l.in + ic) * l.ksize + kh) * l.ksize + kw];
                            }
                        }
                    y[((bi * l.out + oc) * oh + yh) * ow + yw] = acc;
                }
    return y;
}

// Channel geometry of a batchnorm input: number of channels, per-channel
// count, and a flat index map.
struct BnGeom {
    size_t channels, per_channel, batch, spatial;
};

BnGeom bn_geom(const Layer& l, const Tensor& x) {
    if (x.shape.size() == 2) {
        if (x.shape[1] != l.in)
            throw ConfigError("batchnorm layer '" + l.name + "' expects " + std::to_string(l.in) +
                              " features, got " + x.shape_str());
        return {x.shape[1], x.shape[0], x.shape[0], 1};
    }
    if (x.shape.size() == 4) {
        if (x.shape[1] != l.in)
            throw ConfigError("batchnorm layer '" + l.name + "' expects " + std::to_string(l.in) +
                              " channels, got " + x.shape_str());
        return {x.shape[1], x.shape[0] * x.shape[2] * x.shape[3], x.shape[0], x.shape[2] * x.shape[3]};
    }
    throw ConfigError("batchnorm layer '" + l.name + "' requires rank-2 or rank-4 input");
}

// Iterates every element of channel c, calling fn(flat_index).
template <typename Fn>
void bn_for_channel(const BnGeom& g, const Tensor& x, size_t c, Fn fn) {
    if (g.spatial == 1) {
        for (size_t b = 0; b < g.batch; ++b) fn(b * g.channels + c);
    } else {
        for (size_t b = 0; b < g.batch; ++b) {
            const size_t base = (b * g.channels + c) * g.spatial;
            for (size_t s = 0; s < g.spatial; ++s) fn(base + s);
        }
    }
}

Tensor bn_forward(Layer& l, const Tensor& x, Mode mode, BnCache* cache) {
    const BnGeom g = bn_geom(l, x);
    const Tensor& gamma = l.param("gamma").value;
    const Tensor& beta = l.param("beta").value;
    Tensor y(x.shape);
    if (mode == Mode::kTrain) {
        Tensor mean({g.channels}), var({g.channels}), xhat(x.shape);
        for (size_t c = 0; c < g.channels; ++c) {
            double m = 0.0;
            bn_for_channel(g, x, c, [&](size_t i) { m += x[i]; });
            m /= static_cast<double>(g.per_channel);
            double v = 0.0;
            bn_for_channel(g, x, c, [&](size_t i) {
                const double d = x[i] - m;
                v += d * d;
            });
            v /= static_cast<double>(g.per_channel);
            mean[c] = m;
            var[c] = v;
            const double istd = 1.0 / std::sqrt(v + kBnEps);
            bn_for_channel(g, x, c, [&](size_t i) {
                xhat[i] = (x[i] - m) * istd;
                y[i] = gamma[c] * xhat[i] + beta[c];
            });
        }
        Tensor& rm = l.param("running_mean").value;
        Tensor& rv = l.param("running_var").value;
        Tensor& tracked = l.param("batches_tracked").value;
        for (size_t c = 0; c < g.channels; ++c) {
            rm[c] = (1.0 - kBnMomentum) * rm[c] + kBnMomentum * mean[c];
            rv[c] = (1.0 - kBnMomentum) * rv[c] + kBnMomentum * var[c];
        }
        tracked[0] += 1.0;
        if (cache) {
            cache->mean = std::move(mean);
            cache->var = std::move(var);
            cache->xhat = std::move(xhat);
        }
    } else {
        const Tensor& rm = l.param("running_mean").value;
        const Tensor& rv = l.param("running_var").value;
        for (size_t c = 0; c < g.channels; ++c) {
            const double istd = 1.0 / std::sqrt(rv[c] + kBnEps);
            bn_for_channel(g, x, c, [&](size_t i) { y[i] = gamma[c] * (x[i] - rm[c]) * istd + beta[c]; });
        }
    }
    return y;
}

Tensor activation_forward(const Layer& l, const Tensor& x) {
    Tensor y(x.shape);
    if (l.fn == ActivationFn::kRelu) {
        for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    } else {
        for (size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    }
    return y;
}

Tensor gap_forward(const Layer& l, const Tensor& x) {
    if (x.shape.size() != 4)
        throw ConfigError("global pool layer '" + l.name + "' requires rank-4 input, got " + x.shape_str());
    const size_t b = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    Tensor y(batch_shape(b, {c}));
    for (size_t bi = 0; bi < b; ++bi)
        for (size_t ci = 0; ci < c; ++ci) {
            double acc = 0.0;
            const size_t base = (bi * c + ci) * hw;
            for (size_t s = 0; s < hw; ++s) acc += x[base + s];
            y[bi * c + ci] = acc / static_cast<double>(hw);
        }
    return y;
}

} // namespace

ForwardTrace forward(ModelState& model, const Batch& batch, Mode mode) {
    check_input_shape(model, batch);
    if (mode == Mode::kTrain) ++model.revision; // train passes mutate BN state
    ForwardTrace trace;
    trace.train_mode = mode == Mode::kTrain;
    trace.batch = batch.size();
    trace.layer_inputs.reserve(model.layers.size());
    trace.bn.resize(model.layers.size());
    trace.act_out.resize(model.layers.size());

    Tensor x = batch.inputs;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        Layer& l = model.layers[i];
        if (i == model.head_layer) trace.representation = x;
        trace.layer_inputs.push_back(x);
        switch (l.kind) {
        case LayerKind::kDense: x = dense_forward(l, x); break;
        case LayerKind::kConv: x = conv_forward(l, x); break;
        case LayerKind::kBatchNorm: x = bn_forward(l, x, mode, trace.train_mode ? &trace.bn[i] : nullptr); break;
        case LayerKind::kActivation:
            x = activation_forward(l, x);
            if (l.fn == ActivationFn::kTanh) trace.act_out[i] = x;
            break;
        case LayerKind::kGlobalAvgPool: x = gap_forward(l, x); break;
        }
    }
    trace.logits = std::move(x);
    trace.model_revision = model.revision;
    return trace;
}

Tensor eval_logits(const ModelState& model, const Tensor& inputs) {
    ModelState copy = model;
    Batch b;
    b.inputs = inputs;
    b.labels = Tensor({inputs.shape[0], 1}, std::vector<double>(inputs.shape[0], 1.0));
    return forward(copy, b, Mode::kEval).logits;
}

// --- backward ---------------------------------------------------------------

namespace {

Tensor dense_backward(const Layer& l, const Tensor& x, const Tensor& g, GradientSet& grads) {
    const size_t b = x.shape[0];
    const Tensor& w = l.param("weight").value;
    Tensor& gw = *grads.find(l.param("weight").name);
    Tensor& gb = *grads.find(l.param("bias").name);
    Tensor gx(x.shape);
    for (size_t i = 0; i < b; ++i) {
        const double* xr = &x.data[i * l.in];
        const double* gr = &g.data[i * l.out];
        for (size_t o = 0; o < l.out; ++o) {
            const double go = gr[o];
            gb[o] += go;
            double* gwr = &gw.data[o * l.in];
            for (size_t j = 0; j < l.in; ++j) gwr[j] += go * xr[j];
        }
        double* gxr = &gx.data[i * l.in];
        for (size_t o = 0; o < l.out; ++o) {
            const double go = gr[o];
            const double* wr = &w.data[o * l.in];
            for (size_t j = 0; j < l.in; ++j) gxr[j] += go * wr[j];
        }
    }
    return gx;
}

Tensor conv_backward(const Layer& l, const Tensor& x, const Tensor& g, GradientSet& grads) {
    const size_t b = x.shape[0], h = x.shape[2], w = x.shape[3];
    const size_t oh = g.shape[2], ow = g.shape[3];
    const Tensor& wt = l.param("weight").value;
    Tensor& gw = *grads.find(l.param("weight").name);
    Tensor& gb = *grads.find(l.param("bias").name);
    Tensor gx(x.shape);
    for (size_t bi = 0; bi < b; ++bi)
        for (size_t oc = 0; oc < l.out; ++oc)
            for (size_t yh = 0; yh < oh; ++yh)
                for (size_t yw = 0; yw < ow; ++yw) {
                    const double go = g[((bi * l.out + oc) * oh + yh) * ow + yw];
                    gb[oc] += go;
                    for (size_t ic = 0; ic < l.in; ++ic)
                        for (size_t kh = 0; kh < l.ksize; ++kh) {
                            const long ih = static_cast<long>(yh * l.stride + kh) - static_cast<long>(l.pad);
                            if (ih < 0 || ih >= static_cast<long>(h)) continue;
                            for (size_t kw = 0; kw < l.ksize; ++kw) {
                                const long iw = static_cast<long>(yw * l.stride + kw) - static_cast<long>(l.pad);
                                if (iw < 0 || iw >= static_cast<long>(w)) continue;
                                const size_t xi = ((bi * l.in + ic) * h + ih) * w + iw;
                                const size_t wi = ((oc * l.in + ic) * l.ksize + kh) * l.ksize + kw;
                                gw[wi] += go * x[xi];
                                gx[xi] += go * wt[wi];
                            }
                        }
                }
    return gx;
}

Tensor bn_backward(const Layer& l, const Tensor& x, const Tensor& g, const BnCache& cache,
                   GradientSet& grads) {
    const BnGeom geom = bn_geom(l, x);
    const Tensor& gamma = l.param("gamma").value;
    Tensor& ggamma = *grads.find(l.param("gamma").name);
    Tensor& gbeta = *grads.find(l.param("beta").name);
    Tensor gx(x.shape);
    const double n = static_cast<double>(geom.per_channel);
    for (size_t c = 0; c < geom.channels; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        bn_for_channel(geom, x, c, [&](size_t i) {
            sum_g += g[i];
            sum_gx += g[i] * cache.xhat[i];
        });
        ggamma[c] += sum_gx;
        gbeta[c] += sum_g;
        const double istd = 1.0 / std::sqrt(cache.var[c] + kBnEps);
        const double k = gamma[c] * istd;
        bn_for_channel(geom, x, c, [&](size_t i) {
            gx[i] = k * (g[i] - sum_g / n - cache.xhat[i] * sum_gx / n);
        });
    }
    return gx;
}

Tensor activation_backward(const Layer& l, const Tensor& x, const Tensor& g, const Tensor& out) {
    Tensor gx(x.shape);
    if (l.fn == ActivationFn::kRelu) {
        for (size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? g[i] : 0.0;
    } else {
        for (size_t i = 0; i < x.size(); ++i) gx[i] = g[i] * (1.0 - out[i] * out[i]);
    }
    return gx;
}

Tensor gap_backward(const Tensor& x, const Tensor& g) {
    const size_t b = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    Tensor gx(x.shape);
    const double inv = 1.0 / static_cast<double>(hw);
    for (size_t bi = 0; bi < b; ++bi)
        for (size_t ci = 0; ci < c; ++ci) {
            const double go = g[bi * c + ci] * inv;
            const size_t base = (bi * c + ci) * hw;
            for (size_t s = 0; s < hw; ++s) gx[base + s] = go;
        }
    return gx;
}

} // namespace

GradientSet zero_gradients(const ModelState& model) {
    GradientSet grads;
    model.for_each_param([&](const Layer&, const Param& p) {
        if (p.role == ParamRole::kTrainable) grads.entries.emplace_back(p.name, Tensor(p.value.shape));
    });
    return grads;
}

GradientSet backward(const ModelState& model, const ForwardTrace& trace, const Tensor& logit_grad,
                     const Tensor* rep_grad) {
    if (!trace.train_mode)
        throw InvalidTraceError("backward requires a trace produced in train mode");
    if (trace.model_revision != model.revision)
        throw InvalidTraceError("trace is stale: model was mutated after forward");
    if (!logit_grad.same_shape(trace.logits))
        throw ConfigError("logit gradient shape " + logit_grad.shape_str() + " does not match logits " +
                          trace.logits.shape_str());

    GradientSet grads = zero_gradients(model);
    Tensor g = logit_grad;
    for (size_t idx = model.layers.size(); idx-- > 0;) {
        const Layer& l = model.layers[idx];
        const Tensor& x = trace.layer_inputs[idx];
        switch (l.kind) {
        case LayerKind::kDense: g = dense_backward(l, x, g, grads); break;
        case LayerKind::kConv: g = conv_backward(l, x, g, grads); break;
        case LayerKind::kBatchNorm: g = bn_backward(l, x, g, trace.bn[idx], grads); break;
        case LayerKind::kActivation: g = activation_backward(l, x, g, trace.act_out[idx]); break;
        case LayerKind::kGlobalAvgPool: g = gap_backward(x, g); break;
        }
        if (idx == model.head_layer && rep_grad) {
            if (!rep_grad->same_shape(g))
                throw ConfigError("representation gradient shape " + rep_grad->shape_str() +
                                  " does not match representation " + g.shape_str());
            for (size_t i = 0; i < g.size(); ++i) g[i] += (*rep_grad)[i];
        }
    }
    grads.input_grad = std::move(g);
    return grads;
}

// --- builders ---------------------------------------------------------------

namespace {

Param make_param(const std::string& layer, const std::string& short_name, Tensor value,
                 ParamRole role = ParamRole::kTrainable) {
    return Param{layer + "." + short_name, role, std::move(value)};
}

Layer make_dense_layer(const std::string& name, size_t in, size_t out, RngStream* rng) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::kDense;
    l.in = in;
    l.out = out;
    Tensor w({out, in});
    if (rng) {
        const double std = std::sqrt(2.0 / static_cast<double>(in));
        for (auto& v : w.data) v = rng->normal() * std;
    }
    l.params.push_back(make_param(name, "weight", std::move(w)));
    l.params.push_back(make_param(name, "bias", Tensor({out})));
    return l;
}

Layer make_conv_layer(const std::string& name, size_t in_c, size_t out_c, size_t k, RngStream& rng) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::kConv;
    l.in = in_c;
    l.out = out_c;
    l.ksize = k;
    l.stride = 1;
    l.pad = k / 2;
    Tensor w({out_c, in_c, k, k});
    const double std = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
    for (auto& v : w.data) v = rng.normal() * std;
    l.params.push_back(make_param(name, "weight", std::move(w)));
    l.params.push_back(make_param(name, "bias", Tensor({out_c})));
    return l;
}

Layer make_bn_layer(const std::string& name, size_t channels) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::kBatchNorm;
    l.in = channels;
    l.out = channels;
    l.params.push_back(make_param(name, "gamma", Tensor::full({channels}, 1.0)));
    l.params.push_back(make_param(name, "beta", Tensor({channels})));
    l.params.push_back(make_param(name, "running_mean", Tensor({channels}), ParamRole::kBnStatistic));
    l.params.push_back(make_param(name, "running_var", Tensor::full({channels}, 1.0), ParamRole::kBnStatistic));
    l.params.push_back(make_param(name, "batches_tracked", Tensor({1}), ParamRole::kBnCounter));
    return l;
}

Layer make_act_layer(const std::string& name, ActivationFn fn) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::kActivation;
    l.fn = fn;
    return l;
}

Layer make_gap_layer(const std::string& name) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::kGlobalAvgPool;
    return l;
}

} // namespace

ModelState make_mlp(size_t input_dim, size_t hidden1, size_t hidden2, size_t classes, uint64_t seed) {
    RngStream rng = RngStream::keyed(seed, "model-init");
    ModelState m;
    m.input_shape = {input_dim};
    m.layers.push_back(make_dense_layer("fc1", input_dim, hidden1, &rng));
    m.layers.push_back(make_bn_layer("bn1", hidden1));
    m.layers.push_back(make_act_layer("act1", ActivationFn::kRelu));
    m.layers.push_back(make_dense_layer("fc2", hidden1, hidden2, &rng));
    m.layers.push_back(make_bn_layer("bn2", hidden2));
    m.layers.push_back(make_act_layer("act2", ActivationFn::kRelu));
    m.layers.push_back(make_dense_layer("head", hidden2, classes, &rng));
    m.head_layer = m.layers.size() - 1;
    return m;
}

ModelState make_cnn(std::vector<size_t> image_shape, size_t channels1, size_t channels2, size_t classes,
                    uint64_t seed) {
    if (image_shape.size() != 3) throw ConfigError("cnn input shape must be [C,H,W]");
    RngStream rng = RngStream::keyed(seed, "model-init");
    ModelState m;
    m.input_shape = image_shape;
    m.layers.push_back(make_conv_layer("conv1", image_shape[0], channels1, 3, rng));
    m.layers.push_back(make_bn_layer("bn1", channels1));
    m.layers.push_back(make_act_layer("act1", ActivationFn::kRelu));
    m.layers.push_back(make_conv_layer("conv2", channels1, channels2, 3, rng));
    m.layers.push_back(make_bn_layer("bn2", channels2));
    m.layers.push_back(make_act_layer("act2", ActivationFn::kRelu));
    m.layers.push_back(make_gap_layer("pool"));
    m.layers.push_back(make_dense_layer("head", channels2, classes, &rng));
    m.head_layer = m.layers.size() - 1;
    return m;
}

ModelState make_dense_only(size_t in, size_t out, const std::vector<double>& weight,
                           const std::vector<double>& bias) {
    ModelState m;
    m.input_shape = {in};
    Layer l = make_dense_layer("fc", in, out, nullptr);
    l.param("weight").value = Tensor({out, in}, weight);
    l.param("bias").value = Tensor({out}, bias);
    m.layers.push_back(std::move(l));
    m.head_layer = 0;
    return m;
}

ModelState make_dense_only_random(size_t in, size_t out, uint64_t seed) {
    RngStream rng = RngStream::keyed(seed, "model-init");
    ModelState m;
    m.input_shape = {in};
    m.layers.push_back(make_dense_layer("fc", in, out, &rng));
    m.head_layer = 0;
    return m;
}

ModelState make_plain_mlp(size_t input_dim, std::vector<size_t> hidden, size_t out_dim, uint64_t seed,
                          ActivationFn fn, std::optional<ActivationFn> out_fn) {
    RngStream rng = RngStream::keyed(seed, "model-init");
    ModelState m;
    m.input_shape = {input_dim};
    size_t prev = input_dim;
    for (size_t i = 0; i < hidden.size(); ++i) {
        const std::string idx = std::to_string(i + 1);
        m.layers.push_back(make_dense_layer("fc" + idx, prev, hidden[i], &rng));
        m.layers.push_back(make_act_layer("act" + idx, fn));
        prev = hidden[i];
    }
    m.layers.push_back(make_dense_layer("head", prev, out_dim, &rng));
    m.head_layer = m.layers.size() - 1;
    if (out_fn) m.layers.push_back(make_act_layer("out_act", *out_fn));
    return m;
}

} // namespace fedbench
