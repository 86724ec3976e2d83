#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedbench/dataset.hpp"

namespace fedbench {

// All partitioners canonicalize sample order by content before applying their
// seeded permutation, so each client receives the same multiset of samples no
// matter how the input dataset was ordered.

struct KFoldSplit {
    std::vector<Dataset> clients; // folds - 1 shards
    Dataset test;                 // the rotated-out fold
};

// Equal-size disjoint folds; `test_fold` selects which fold is held out and
// the rest become clients. When size % folds != 0 the first folds get one
// extra sample each.
KFoldSplit partition_kfold(const Dataset& dataset, size_t folds, size_t test_fold, uint64_t seed);

struct QuantitySplit {
    std::vector<Dataset> clients;
    std::vector<std::string> warnings; // e.g. a class starved on some client
};

// Class-stratified split by explicit proportions; per class, client counts
// differ from the exact quota by less than one (largest remainder rounding).
QuantitySplit partition_quantity(const Dataset& dataset, const std::vector<double>& proportions,
                                 uint64_t seed);

// Label-skew split: per class, a Dirichlet(concentration) draw over clients
// decides how that class's samples are shared. Draws leaving any client empty
// are rejected and resampled (at most 100 times).
std::vector<Dataset> partition_dirichlet(const Dataset& dataset, size_t clients, double concentration,
                                         uint64_t seed);

struct FeatureShiftSpec {
    double brightness_offset = 0.0;
    double contrast_scale = 1.0;
    double noise_sigma = 0.0;
};

// Per-client appearance transform x <- clip(contrast * x + brightness + eta),
// eta ~ N(0, sigma^2) from the seeded stream. Labels, counts and shapes are
// untouched. The identity spec (0, 1, 0) leaves a client bit-identical.
std::vector<Dataset> apply_feature_shift(const std::vector<Dataset>& clients,
                                         const std::vector<FeatureShiftSpec>& specs, uint64_t seed);

} // namespace fedbench
