#include "fedbench/aggregate.hpp"

#include <algorithm>
#include <cmath>

namespace fedbench {

AggregationWeights AggregationWeights::from_counts(const std::vector<size_t>& sample_counts) {
    if (sample_counts.empty()) throw ConfigError("aggregation weights need at least one client");
    double total = 0.0;
    for (size_t n : sample_counts) {
        if (n == 0) throw ConfigError("aggregation weights: client with zero samples");
        total += static_cast<double>(n);
    }
    AggregationWeights w;
    w.p.reserve(sample_counts.size());
    for (size_t n : sample_counts) w.p.push_back(static_cast<double>(n) / total);
    return w;
}

void AggregationWeights::validate(size_t expected_clients) const {
    if (p.size() != expected_clients)
        throw ConfigError("weight count does not match model count");
    double sum = 0.0;
    for (double v : p) {
        if (!(v > 0.0)) throw ConfigError("aggregation weights must be positive");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("aggregation weights must sum to 1");
}

ParamPredicate fedavg_mask() {
    return [](const Layer&, const Param& p) {
        return p.role == ParamRole::kTrainable || p.role == ParamRole::kBnStatistic;
    };
}

ParamPredicate fedbn_mask() {
    return [](const Layer& l, const Param& p) {
        if (l.kind == LayerKind::kBatchNorm) return false;
        return p.role == ParamRole::kTrainable || p.role == ParamRole::kBnStatistic;
    };
}

ModelState aggregate_weighted(const std::vector<const ModelState*>& models,
                              const AggregationWeights& weights, const ParamPredicate& mask,
                              const ModelState* base) {
    if (models.empty()) throw ConfigError("aggregate: no models");
    weights.validate(models.size());
    for (const ModelState* m : models)
        if (!models[0]->same_schema(*m)) throw ConfigError("aggregate: schema mismatch across clients");
    if (!base) base = models[0];

    ModelState out = *base;
    const size_t k = models.size();
    std::vector<double> terms(k);
    for (size_t li = 0; li < out.layers.size(); ++li) {
        for (size_t pi = 0; pi < out.layers[li].params.size(); ++pi) {
            Param& target = out.layers[li].params[pi];
            if (!mask(out.layers[li], target)) continue;
            for (size_t e = 0; e < target.value.size(); ++e) {
                for (size_t c = 0; c < k; ++c)
                    terms[c] = weights.p[c] * models[c]->layers[li].params[pi].value[e];
                std::sort(terms.begin(), terms.end());
                double acc = 0.0;
                for (double t : terms) acc += t;
                target.value[e] = acc;
            }
        }
    }
    ++out.revision;
    return out;
}

ModelState overlay_masked(const ModelState& base, const ModelState& source, const ParamPredicate& mask) {
    if (!base.same_schema(source)) throw ConfigError("overlay: schema mismatch");
    ModelState out = base;
    for (size_t li = 0; li < out.layers.size(); ++li)
        for (size_t pi = 0; pi < out.layers[li].params.size(); ++pi) {
            Param& p = out.layers[li].params[pi];
            if (mask(out.layers[li], p)) p.value = source.layers[li].params[pi].value;
        }
    ++out.revision;
    return out;
}

double trainable_distance(const ModelState& a, const ModelState& b) {
    if (!a.same_schema(b)) throw ConfigError("distance: schema mismatch");
    double ss = 0.0;
    for (size_t li = 0; li < a.layers.size(); ++li)
        for (size_t pi = 0; pi < a.layers[li].params.size(); ++pi) {
            const Param& pa = a.layers[li].params[pi];
            if (pa.role != ParamRole::kTrainable) continue;
            const Param& pb = b.layers[li].params[pi];
            for (size_t e = 0; e < pa.value.size(); ++e) {
                const double d = pa.value[e] - pb.value[e];
                ss += d * d;
            }
        }
    return std::sqrt(ss);
}

} // namespace fedbench
