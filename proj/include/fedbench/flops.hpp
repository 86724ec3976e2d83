#pragma once

#include <cstdint>

#include "fedbench/model.hpp"

namespace fedbench {

// Deterministic FLOP model: one multiply-accumulate counts as 2 FLOPs, the
// backward pass as twice the forward pass, batchnorm as 4 and activations as
// 1 FLOP per element. Counts scale linearly with batch size.
uint64_t forward_flops(const ModelState& model, size_t batch);

// One training pass: forward + backward = 3x forward.
uint64_t training_flops(const ModelState& model, size_t batch);

} // namespace fedbench
