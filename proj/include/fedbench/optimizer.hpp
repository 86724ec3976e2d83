#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedbench/model.hpp"

namespace fedbench {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 5e-4;
    double eps = 1e-8;
};

struct AdamState {
    uint64_t step = 0;
    std::vector<std::pair<std::string, Tensor>> m, v; // lazily sized from gradients
};

// One Adam update over the trainable parameters. Weight decay is applied as
// L2 gradient augmentation (g <- g + wd * w) before the moment updates.
// Batchnorm statistics and counters are untouched.
void adam_step(ModelState& model, const GradientSet& grads, AdamState& state, const AdamHyper& hyper);

} // namespace fedbench
