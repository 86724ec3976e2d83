#include "fedbench/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace fedbench {

namespace {

void check_rows(const Tensor& t, const char* what) {
    if (t.shape.size() != 2) throw ConfigError(std::string(what) + " must be [batch, classes]");
}

// log(sum_j s_j * exp(l_j - m)) with m = row max over classes with s_j > 0.
double scaled_log_sum_exp(const double* row, const double* scale, size_t k, double m) {
    double sum = 0.0;
    for (size_t j = 0; j < k; ++j) sum += scale[j] * std::exp(row[j] - m);
    return m + std::log(sum);
}

} // namespace

Tensor scaled_softmax_rows(const Tensor& logits, const std::vector<double>& scale) {
    check_rows(logits, "logits");
    const size_t b = logits.shape[0], k = logits.shape[1];
    if (scale.size() != k) throw ConfigError("softmax scale size does not match class count");
    Tensor p(logits.shape);
    for (size_t i = 0; i < b; ++i) {
        const double* row = &logits.data[i * k];
        double m = -INFINITY;
        for (size_t j = 0; j < k; ++j)
            if (scale[j] > 0.0) m = std::max(m, row[j]);
        if (!std::isfinite(m)) throw DegenerateInputError("softmax: no class has positive scale");
        double sum = 0.0;
        double* pr = &p.data[i * k];
        for (size_t j = 0; j < k; ++j) {
            pr[j] = scale[j] * std::exp(row[j] - m);
            sum += pr[j];
        }
        for (size_t j = 0; j < k; ++j) pr[j] /= sum;
    }
    return p;
}

Tensor softmax_rows(const Tensor& logits) {
    check_rows(logits, "logits");
    return scaled_softmax_rows(logits, std::vector<double>(logits.shape[1], 1.0));
}

Tensor restricted_softmax(const Tensor& logits, const std::vector<uint8_t>& class_present, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("restricted softmax alpha must be in [0,1]");
    bool any = false;
    std::vector<double> scale(class_present.size());
    for (size_t j = 0; j < class_present.size(); ++j) {
        scale[j] = class_present[j] ? 1.0 : alpha;
        any = any || class_present[j];
    }
    if (!any) throw DegenerateInputError("restricted softmax: client has no class present");
    return scaled_softmax_rows(logits, scale);
}

namespace {

double ce_with_scale(const Tensor& logits, const Tensor& labels, const std::vector<double>& scale) {
    check_rows(logits, "logits");
    check_rows(labels, "labels");
    if (!logits.same_shape(labels)) throw ConfigError("logits and labels shapes differ");
    const size_t b = logits.shape[0], k = logits.shape[1];
    double total = 0.0;
    for (size_t i = 0; i < b; ++i) {
        const double* row = &logits.data[i * k];
        const double* y = &labels.data[i * k];
        double m = -INFINITY;
        for (size_t j = 0; j < k; ++j)
            if (scale[j] > 0.0) m = std::max(m, row[j]);
        if (!std::isfinite(m)) throw DegenerateInputError("cross-entropy: no class has positive scale");
        const double lse = scaled_log_sum_exp(row, scale.data(), k, m);
        for (size_t j = 0; j < k; ++j) {
            if (y[j] == 0.0) continue;
            if (scale[j] == 0.0)
                throw DegenerateInputError("cross-entropy: label mass on a zero-scaled class");
            total += y[j] * (lse - row[j] - std::log(scale[j]));
        }
    }
    return total / static_cast<double>(b);
}

Tensor ce_grad_with_scale(const Tensor& logits, const Tensor& labels, const std::vector<double>& scale) {
    Tensor p = scaled_softmax_rows(logits, scale);
    const size_t b = logits.shape[0], k = logits.shape[1];
    Tensor g(logits.shape);
    const double inv_b = 1.0 / static_cast<double>(b);
    for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < k; ++j) {
            const double y = scale[j] > 0.0 ? labels[i * k + j] : 0.0;
            g[i * k + j] = (p[i * k + j] - y) * inv_b;
        }
    return g;
}

} // namespace

double loss_ce_soft(const Tensor& logits, const Tensor& labels) {
    return ce_with_scale(logits, labels, std::vector<double>(logits.shape.size() == 2 ? logits.shape[1] : 0, 1.0));
}

Tensor loss_ce_soft_grad(const Tensor& logits, const Tensor& labels) {
    return ce_grad_with_scale(logits, labels, std::vector<double>(logits.shape.size() == 2 ? logits.shape[1] : 0, 1.0));
}

double loss_restricted_ce(const Tensor& logits, const Tensor& labels,
                          const std::vector<uint8_t>& class_present, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("restricted softmax alpha must be in [0,1]");
    bool any = false;
    std::vector<double> scale(class_present.size());
    for (size_t j = 0; j < class_present.size(); ++j) {
        scale[j] = class_present[j] ? 1.0 : alpha;
        any = any || class_present[j];
    }
    if (!any) throw DegenerateInputError("restricted softmax: client has no class present");
    return ce_with_scale(logits, labels, scale);
}

Tensor loss_restricted_ce_grad(const Tensor& logits, const Tensor& labels,
                               const std::vector<uint8_t>& class_present, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("restricted softmax alpha must be in [0,1]");
    bool any = false;
    std::vector<double> scale(class_present.size());
    for (size_t j = 0; j < class_present.size(); ++j) {
        scale[j] = class_present[j] ? 1.0 : alpha;
        any = any || class_present[j];
    }
    if (!any) throw DegenerateInputError("restricted softmax: client has no class present");
    return ce_grad_with_scale(logits, labels, scale);
}

double loss_prox(const ModelState& params, const ModelState& anchor, double mu) {
    if (mu < 0.0) throw ConfigError("proximal mu must be >= 0");
    if (!params.same_schema(anchor)) throw ConfigError("proximal term: parameter schemas differ");
    if (mu == 0.0) return 0.0;
    // Per-parameter partial sums folded in sorted name order; the result does
    // not depend on how the schema orders its layers.
    std::map<std::string, double> partial;
    for (size_t i = 0; i < params.layers.size(); ++i) {
        for (size_t j = 0; j < params.layers[i].params.size(); ++j) {
            const Param& p = params.layers[i].params[j];
            if (p.role != ParamRole::kTrainable) continue;
            const Param& a = anchor.layers[i].params[j];
            double s = 0.0;
            for (size_t e = 0; e < p.value.size(); ++e) {
                const double d = p.value[e] - a.value[e];
                s += d * d;
            }
            partial[p.name] = s;
        }
    }
    double total = 0.0;
    for (const auto& [name, s] : partial) total += s;
    return mu * total;
}

void add_prox_grad(GradientSet& grads, const ModelState& params, const ModelState& anchor, double mu) {
    if (mu == 0.0) return;
    if (!params.same_schema(anchor)) throw ConfigError("proximal term: parameter schemas differ");
    for (size_t i = 0; i < params.layers.size(); ++i) {
        for (size_t j = 0; j < params.layers[i].params.size(); ++j) {
            const Param& p = params.layers[i].params[j];
            if (p.role != ParamRole::kTrainable) continue;
            const Param& a = anchor.layers[i].params[j];
            Tensor* g = grads.find(p.name);
            if (!g) throw ConfigError("proximal term: gradient set lacks " + p.name);
            for (size_t e = 0; e < p.value.size(); ++e)
                (*g)[e] += 2.0 * mu * (p.value[e] - a.value[e]);
        }
    }
}

namespace {

struct CosineRow {
    double sim_glob, sim_prev;
    double nz, ng, np; // row norms
};

CosineRow cosine_row(const Tensor& z, const Tensor& g, const Tensor& p, size_t i, size_t r) {
    CosineRow c{};
    double zz = 0, gg = 0, pp = 0, zg = 0, zp = 0;
    const double* zr = &z.data[i * r];
    const double* gr = &g.data[i * r];
    const double* pr = &p.data[i * r];
    for (size_t e = 0; e < r; ++e) {
        zz += zr[e] * zr[e];
        gg += gr[e] * gr[e];
        pp += pr[e] * pr[e];
        zg += zr[e] * gr[e];
        zp += zr[e] * pr[e];
    }
    c.nz = std::sqrt(zz);
    c.ng = std::sqrt(gg);
    c.np = std::sqrt(pp);
    if (c.nz == 0.0 || c.ng == 0.0 || c.np == 0.0)
        throw DegenerateInputError("contrastive loss: zero-norm representation at row " + std::to_string(i));
    c.sim_glob = zg / (c.nz * c.ng);
    c.sim_prev = zp / (c.nz * c.np);
    return c;
}

void check_contrastive_shapes(const Tensor& z, const Tensor& g, const Tensor& p, double tau) {
    if (z.shape.size() != 2 || !z.same_shape(g) || !z.same_shape(p))
        throw ConfigError("contrastive loss requires three [batch, dim] tensors of equal shape");
    if (!(tau > 0.0)) throw ConfigError("contrastive loss: tau must be > 0");
}

} // namespace

double loss_contrastive(const Tensor& z, const Tensor& z_glob, const Tensor& z_prev, double tau, double mu) {
    check_contrastive_shapes(z, z_glob, z_prev, tau);
    if (mu == 0.0) return 0.0;
    const size_t b = z.shape[0], r = z.shape[1];
    double total = 0.0;
    for (size_t i = 0; i < b; ++i) {
        const CosineRow c = cosine_row(z, z_glob, z_prev, i, r);
        // -log sigma with sigma = e^{sg/tau} / (e^{sg/tau} + e^{sp/tau})
        const double a = c.sim_glob / tau, d = c.sim_prev / tau;
        const double m = std::max(a, d);
        total += -(a - (m + std::log(std::exp(a - m) + std::exp(d - m))));
    }
    return mu * total / static_cast<double>(b);
}

Tensor loss_contrastive_grad(const Tensor& z, const Tensor& z_glob, const Tensor& z_prev, double tau,
                             double mu) {
    check_contrastive_shapes(z, z_glob, z_prev, tau);
    const size_t b = z.shape[0], r = z.shape[1];
    Tensor grad(z.shape);
    if (mu == 0.0) return grad;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (size_t i = 0; i < b; ++i) {
        const CosineRow c = cosine_row(z, z_glob, z_prev, i, r);
        const double a = c.sim_glob / tau, d = c.sim_prev / tau;
        const double m = std::max(a, d);
        const double ea = std::exp(a - m), ed = std::exp(d - m);
        const double sig_prev = ed / (ea + ed); // 1 - sigma
        const double dl_dsg = -mu * sig_prev / tau;
        const double dl_dsp = mu * sig_prev / tau;
        const double* zr = &z.data[i * r];
        const double* gr = &z_glob.data[i * r];
        const double* pr = &z_prev.data[i * r];
        double* out = &grad.data[i * r];
        for (size_t e = 0; e < r; ++e) {
            // d cos(z,a)/dz = a/(|z||a|) - cos * z/|z|^2
            const double dsg = gr[e] / (c.nz * c.ng) - c.sim_glob * zr[e] / (c.nz * c.nz);
            const double dsp = pr[e] / (c.nz * c.np) - c.sim_prev * zr[e] / (c.nz * c.nz);
            out[e] = (dl_dsg * dsg + dl_dsp * dsp) * inv_b;
        }
    }
    return grad;
}

double loss_kd(const Tensor& student_logits, const Tensor& teacher_logits, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("distillation temperature must be > 0");
    if (!student_logits.same_shape(teacher_logits))
        throw ConfigError("student and teacher logits shapes differ");
    check_rows(student_logits, "logits");
    const size_t b = student_logits.shape[0], k = student_logits.shape[1];
    Tensor ts(student_logits.shape), tt(student_logits.shape);
    for (size_t i = 0; i < ts.size(); ++i) {
        ts[i] = student_logits[i] / temperature;
        tt[i] = teacher_logits[i] / temperature;
    }
    const Tensor q = softmax_rows(ts);
    const Tensor p = softmax_rows(tt);
    double total = 0.0;
    for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < k; ++j) {
            const double pij = p[i * k + j];
            if (pij > 0.0) total += pij * (std::log(pij) - std::log(q[i * k + j]));
        }
    return total / static_cast<double>(b);
}

Tensor loss_kd_grad(const Tensor& student_logits, const Tensor& teacher_logits, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("distillation temperature must be > 0");
    if (!student_logits.same_shape(teacher_logits))
        throw ConfigError("student and teacher logits shapes differ");
    const size_t b = student_logits.shape[0];
    Tensor ts(student_logits.shape), tt(student_logits.shape);
    for (size_t i = 0; i < ts.size(); ++i) {
        ts[i] = student_logits[i] / temperature;
        tt[i] = teacher_logits[i] / temperature;
    }
    const Tensor q = softmax_rows(ts);
    const Tensor p = softmax_rows(tt);
    Tensor g(student_logits.shape);
    const double scale = 1.0 / (temperature * static_cast<double>(b));
    for (size_t i = 0; i < g.size(); ++i) g[i] = (q[i] - p[i]) * scale;
    return g;
}

double loss_mse(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw ConfigError("mse: shapes differ");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

Tensor loss_mse_grad(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw ConfigError("mse: shapes differ");
    Tensor g(pred.shape);
    const double k = 2.0 / static_cast<double>(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) g[i] = k * (pred[i] - target[i]);
    return g;
}

double loss_neg_pairwise_distance(const Tensor& rows) {
    check_rows(rows, "batch");
    const size_t b = rows.shape[0], d = rows.shape[1];
    if (b < 2) return 0.0;
    double total = 0.0;
    for (size_t i = 0; i < b; ++i)
        for (size_t j = i + 1; j < b; ++j) {
            double ss = 0.0;
            for (size_t e = 0; e < d; ++e) {
                const double diff = rows[i * d + e] - rows[j * d + e];
                ss += diff * diff;
            }
            total += std::sqrt(ss + 1e-12);
        }
    const double pairs = static_cast<double>(b * (b - 1) / 2);
    return -total / pairs;
}

Tensor loss_neg_pairwise_distance_grad(const Tensor& rows) {
    check_rows(rows, "batch");
    const size_t b = rows.shape[0], d = rows.shape[1];
    Tensor g(rows.shape);
    if (b < 2) return g;
    const double inv_pairs = 1.0 / static_cast<double>(b * (b - 1) / 2);
    for (size_t i = 0; i < b; ++i)
        for (size_t j = i + 1; j < b; ++j) {
            double ss = 0.0;
            for (size_t e = 0; e < d; ++e) {
                const double diff = rows[i * d + e] - rows[j * d + e];
                ss += diff * diff;
            }
            const double dist = std::sqrt(ss + 1e-12);
            for (size_t e = 0; e < d; ++e) {
                const double diff = rows[i * d + e] - rows[j * d + e];
                const double dd = -inv_pairs * diff / dist;
                g[i * d + e] += dd;
                g[j * d + e] -= dd;
            }
        }
    return g;
}

} // namespace fedbench
