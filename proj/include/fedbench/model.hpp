#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedbench/rng.hpp"
#include "fedbench/tensor.hpp"

namespace fedbench {

// Aggregation-mask role of a parameter. Trainable weights receive gradients;
// batchnorm running statistics are updated by forward passes only; the batch
// counter is an integer bookkeeping value that must never be averaged.
enum class ParamRole : uint8_t { kTrainable = 0, kBnStatistic = 1, kBnCounter = 2 };

enum class LayerKind : uint8_t { kDense = 0, kConv = 1, kBatchNorm = 2, kActivation = 3, kGlobalAvgPool = 4 };

enum class ActivationFn : uint8_t { kRelu = 0, kTanh = 1 };

enum class Mode { kTrain, kEval };

struct Param {
    std::string name; // qualified, e.g. "fc1.weight"
    ParamRole role = ParamRole::kTrainable;
    Tensor value;
};

struct Layer {
    std::string name;
    LayerKind kind = LayerKind::kDense;
    // Dimensions; meaning depends on kind.
    size_t in = 0;      // dense in-features / conv in-channels / bn channels
    size_t out = 0;     // dense out-features / conv out-channels
    size_t ksize = 0;   // conv kernel
    size_t stride = 1;  // conv stride
    size_t pad = 0;     // conv zero padding
    ActivationFn fn = ActivationFn::kRelu;
    std::vector<Param> params;

    Param& param(std::string_view short_name);
    const Param& param(std::string_view short_name) const;
    bool has_trainable() const;
};

// A full network: ordered layers with named parameters. Value semantics —
// copying a ModelState snapshots it. `revision` increments on every parameter
// mutation so stale forward traces can be rejected.
struct ModelState {
    std::vector<size_t> input_shape; // per-sample, e.g. {16} or {1, 8, 8}
    std::vector<Layer> layers;
    size_t head_layer = 0; // layer whose input is the representation
    uint64_t revision = 0;

    Layer& layer(std::string_view name);
    const Layer& layer(std::string_view name) const;

    size_t param_count() const;            // all scalars, every role
    size_t bn_param_count() const;         // scalars belonging to batchnorm layers
    size_t trainable_layer_count() const;  // layers holding >= 1 trainable param
    size_t representation_dim() const;

    void for_each_param(const std::function<void(const Layer&, const Param&)>& fn) const;
    void for_each_param(const std::function<void(Layer&, Param&)>& fn);

    // Names of trainable parameters in model order.
    std::vector<std::string> trainable_names() const;

    // FNV hash over every parameter's bytes; used for content-keyed ordering.
    uint64_t content_hash() const;

    bool same_schema(const ModelState& o) const;
};

// One minibatch: inputs plus per-sample label distributions over K classes.
struct Batch {
    Tensor inputs; // [B, features] or [B, C, H, W]
    Tensor labels; // [B, K], each row a probability vector

    size_t size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
    size_t classes() const { return labels.shape.size() == 2 ? labels.shape[1] : 0; }
};

// Throws if any label row is negative or does not sum to 1 within 1e-9.
void validate_labels(const Tensor& labels);

struct BnCache {
    Tensor mean, var, xhat; // batch statistics captured in train mode
};

struct ForwardTrace {
    Tensor logits;          // [B, K]
    Tensor representation;  // [B, R], input of the head layer
    std::vector<Tensor> layer_inputs; // layer_inputs[i] feeds layers[i]
    std::vector<BnCache> bn;          // indexed by layer, empty when unused
    std::vector<Tensor> act_out;      // activation outputs (tanh backward)
    bool train_mode = false;
    uint64_t model_revision = 0;
    size_t batch = 0;
};

// Gradients aligned with the model's trainable parameters, plus the gradient
// with respect to the batch inputs (needed when a frozen model sits on top of
// a trainable generator).
struct GradientSet {
    std::vector<std::pair<std::string, Tensor>> entries; // model order
    Tensor input_grad;

    Tensor* find(std::string_view name);
    const Tensor* find(std::string_view name) const;
    bool all_finite() const;
    void scale(double s);
};

// Runs the network. In train mode batchnorm layers normalize with batch
// statistics, fold them into the running estimates (momentum 0.1) and bump
// batches_tracked; eval mode uses the running estimates and mutates nothing.
ForwardTrace forward(ModelState& model, const Batch& batch, Mode mode);

// Convenience logits-only eval pass; the model is copied so const contexts
// stay const.
Tensor eval_logits(const ModelState& model, const Tensor& inputs);

// Backpropagates `logit_grad` (dLoss/dlogits) through the trace. `rep_grad`,
// when given, is an extra gradient injected at the representation tap.
GradientSet backward(const ModelState& model, const ForwardTrace& trace,
                     const Tensor& logit_grad, const Tensor* rep_grad = nullptr);

GradientSet zero_gradients(const ModelState& model);

// --- model zoo ------------------------------------------------------------

// fc1 -> bn1 -> relu -> fc2 -> bn2 -> relu -> head
ModelState make_mlp(size_t input_dim, size_t hidden1, size_t hidden2, size_t classes, uint64_t seed);

// conv1 -> bn1 -> relu -> conv2 -> bn2 -> relu -> gap -> head
ModelState make_cnn(std::vector<size_t> image_shape, size_t channels1, size_t channels2,
                    size_t classes, uint64_t seed);

// Single dense layer with explicit weights; test and fixture helper.
ModelState make_dense_only(size_t in, size_t out, const std::vector<double>& weight,
                           const std::vector<double>& bias);
ModelState make_dense_only_random(size_t in, size_t out, uint64_t seed);

// Plain MLP without batchnorm (noise predictors, generators). Hidden layers
// use `fn`; `out_fn` optionally squashes the output.
ModelState make_plain_mlp(size_t input_dim, std::vector<size_t> hidden, size_t out_dim,
                          uint64_t seed, ActivationFn fn = ActivationFn::kRelu,
                          std::optional<ActivationFn> out_fn = std::nullopt);

} // namespace fedbench
