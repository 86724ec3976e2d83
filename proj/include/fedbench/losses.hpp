#pragma once

#include <vector>

#include "fedbench/model.hpp"
#include "fedbench/tensor.hpp"

namespace fedbench {

// Row-wise softmax. Shared code path with the class-restricted variant so the
// unrestricted case is bit-identical to scale weights of all ones.
Tensor softmax_rows(const Tensor& logits);

// Softmax with per-class scale weights s_j: p_j = s_j exp(l_j) / sum_i s_i exp(l_i).
Tensor scaled_softmax_rows(const Tensor& logits, const std::vector<double>& scale);

// Class-restricted softmax: absent classes are scaled by alpha in [0,1].
Tensor restricted_softmax(const Tensor& logits, const std::vector<uint8_t>& class_present, double alpha);

// Mean cross-entropy between soft label rows and softmax(logits).
double loss_ce_soft(const Tensor& logits, const Tensor& labels);
Tensor loss_ce_soft_grad(const Tensor& logits, const Tensor& labels);

// Cross-entropy through the restricted softmax.
double loss_restricted_ce(const Tensor& logits, const Tensor& labels,
                          const std::vector<uint8_t>& class_present, double alpha);
Tensor loss_restricted_ce_grad(const Tensor& logits, const Tensor& labels,
                               const std::vector<uint8_t>& class_present, double alpha);

// Proximal penalty mu * ||w - w_anchor||^2 over trainable parameters.
// Accumulated per layer in name order so the value is independent of layer
// iteration order.
double loss_prox(const ModelState& params, const ModelState& anchor, double mu);
// Adds the penalty's gradient 2*mu*(w - w_anchor) into an existing gradient set.
void add_prox_grad(GradientSet& grads, const ModelState& params, const ModelState& anchor, double mu);

// Model-contrastive loss over batches of representations [B, R]:
//   -mu * log( exp(sim(z, z_glob)/tau) / (exp(sim(z, z_glob)/tau) + exp(sim(z, z_prev)/tau)) )
// with cosine similarity, averaged over the batch. Zero-norm rows raise
// DegenerateInputError.
double loss_contrastive(const Tensor& z, const Tensor& z_glob, const Tensor& z_prev, double tau, double mu);
Tensor loss_contrastive_grad(const Tensor& z, const Tensor& z_glob, const Tensor& z_prev, double tau, double mu);

// KL divergence between temperature-softened teacher and student softmax
// distributions, mean over the batch. Gradient is with respect to the
// student's logits.
double loss_kd(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);
Tensor loss_kd_grad(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);

// Mean squared error over all elements; gradient with respect to prediction.
double loss_mse(const Tensor& pred, const Tensor& target);
Tensor loss_mse_grad(const Tensor& pred, const Tensor& target);

// Negative mean pairwise L2 distance between rows of a batch. Used as a
// diversity penalty for generator training.
double loss_neg_pairwise_distance(const Tensor& batch_rows);
Tensor loss_neg_pairwise_distance_grad(const Tensor& batch_rows);

} // namespace fedbench
