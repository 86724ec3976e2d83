#include "fedbench/flops.hpp"

namespace fedbench {

uint64_t forward_flops(const ModelState& model, size_t batch) {
    uint64_t per_sample = 0;
    std::vector<size_t> shape = model.input_shape; // per-sample activation shape
    auto elems = [](const std::vector<size_t>& s) {
        size_t n = 1;
        for (size_t d : s) n *= d;
        return n;
    };
    for (const auto& l : model.layers) {
        switch (l.kind) {
        case LayerKind::kDense:
            per_sample += 2ULL * l.in * l.out + l.out; // MACs + bias adds
            shape = {l.out};
            break;
        case LayerKind::kConv: {
            const size_t h = shape[1], w = shape[2];
            const size_t oh = (h + 2 * l.pad - l.ksize) / l.stride + 1;
            const size_t ow = (w + 2 * l.pad - l.ksize) / l.stride + 1;
            per_sample += static_cast<uint64_t>(l.out) * oh * ow * (2ULL * l.in * l.ksize * l.ksize + 1);
            shape = {l.out, oh, ow};
            break;
        }
        case LayerKind::kBatchNorm:
            per_sample += 4ULL * elems(shape);
            break;
        case LayerKind::kActivation:
            per_sample += elems(shape);
            break;
        case LayerKind::kGlobalAvgPool:
            per_sample += elems(shape) + shape[0]; // sums plus one divide per channel
            shape = {shape[0]};
            break;
        }
    }
    return per_sample * batch;
}

uint64_t training_flops(const ModelState& model, size_t batch) {
    return 3 * forward_flops(model, batch);
}

} // namespace fedbench
