#include "fedbench/optimizer.hpp"

#include <cmath>

namespace fedbench {

void adam_step(ModelState& model, const GradientSet& grads, AdamState& state, const AdamHyper& hyper) {
    if (state.m.empty()) {
        for (const auto& [name, g] : grads.entries) {
            state.m.emplace_back(name, Tensor(g.shape));
            state.v.emplace_back(name, Tensor(g.shape));
        }
    }
    if (state.m.size() != grads.entries.size())
        throw ConfigError("adam: optimizer state does not match gradient schema");

    ++state.step;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));

    size_t slot = 0;
    model.for_each_param([&](Layer&, Param& p) {
        if (p.role != ParamRole::kTrainable) return;
        if (slot >= grads.entries.size() || grads.entries[slot].first != p.name)
            throw ConfigError("adam: gradient schema mismatch at " + p.name);
        const Tensor& g = grads.entries[slot].second;
        Tensor& m = state.m[slot].second;
        Tensor& v = state.v[slot].second;
        for (size_t i = 0; i < p.value.size(); ++i) {
            const double gi = g[i] + hyper.weight_decay * p.value[i];
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
        }
        ++slot;
    });
    if (slot != grads.entries.size()) throw ConfigError("adam: unused gradient entries");
    ++model.revision;
}

} // namespace fedbench
