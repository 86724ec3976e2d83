#pragma once

#include <functional>
#include <vector>

#include "fedbench/model.hpp"

namespace fedbench {

// Client aggregation weights p_k = n_k / sum(n_j).
struct AggregationWeights {
    std::vector<double> p;

    static AggregationWeights from_counts(const std::vector<size_t>& sample_counts);
    void validate(size_t expected_clients) const;
};

// Selects which parameters an aggregation averages.
using ParamPredicate = std::function<bool(const Layer&, const Param&)>;

// Trainable weights plus batchnorm running statistics; the batch counter is
// never averaged.
ParamPredicate fedavg_mask();

// Everything fedavg averages except parameters living in batchnorm layers,
// which stay personal.
ParamPredicate fedbn_mask();

// Weighted average of the masked parameters. Parameters outside the mask are
// copied from `base` (default: first model). Each element's contributions are
// accumulated in value-sorted order, so jointly permuting (models, weights)
// cannot change a single bit of the result.
ModelState aggregate_weighted(const std::vector<const ModelState*>& models,
                              const AggregationWeights& weights, const ParamPredicate& mask,
                              const ModelState* base = nullptr);

// `base` with every masked parameter replaced by `source`'s value; how a
// client applies a downloaded global model while keeping its personal
// parameters.
ModelState overlay_masked(const ModelState& base, const ModelState& source, const ParamPredicate& mask);

// L2 distance over trainable parameters; the client-drift metric.
double trainable_distance(const ModelState& a, const ModelState& b);

} // namespace fedbench
