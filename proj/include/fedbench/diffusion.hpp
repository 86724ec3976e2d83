#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "fedbench/dataset.hpp"
#include "fedbench/model.hpp"
#include "fedbench/rng.hpp"

namespace fedbench {

// Linear noising schedule. Variance bookkeeping (alpha, alpha_bar) is cached
// at construction and validated: alpha_bar must be strictly decreasing and
// the single-step variance identity (1 - beta) + beta = 1 must hold.
struct DiffusionSchedule {
    uint32_t steps = 0;          // T
    double beta_start = 0.0, beta_end = 0.0;
    std::vector<double> beta;      // beta[t-1] for t in 1..T
    std::vector<double> alpha;     // 1 - beta
    std::vector<double> alpha_bar; // cumulative product of alpha

    // Defaults chosen so alpha_bar[T-1] < 0.01 and samples at T are
    // indistinguishable from standard normal noise.
    static DiffusionSchedule linear(uint32_t steps = 200, double beta_start = 1e-4,
                                    double beta_end = 0.05);
};

// One forward noising step: sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * eps.
Tensor forward_noise_step(const Tensor& x_prev, double beta_t, const Tensor& eps);

// Closed-form marginal of t iterated steps:
// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, t in 1..T.
Tensor forward_noise_closed(const Tensor& x0, uint32_t t, const Tensor& eps,
                            const DiffusionSchedule& schedule);

// Data-volume-adaptive epoch count: round(1e6 * classes / samples).
uint64_t ddpm_epochs(uint32_t num_classes, uint64_t num_samples);

struct DdpmTrainConfig {
    uint32_t epochs = 0;        // 0: use ddpm_epochs() with the cap below
    uint32_t epoch_cap = 2000;  // desk-scale clamp of the adaptive rule
    uint32_t batch = 32;
    double lr = 1e-3;
    double ema_decay = 0.995;
    uint32_t hidden = 64;       // width of the noise predictor
    uint32_t t_embed_dim = 16;  // sinusoidal time embedding size
};

// Conditional denoising model at desk scale: an MLP noise predictor over
// (flattened pixels, sinusoidal t-embedding, one-hot label) with an EMA
// shadow used for sampling.
struct Ddpm {
    ModelState noise_net;
    ModelState ema_net;
    DiffusionSchedule schedule;
    uint16_t k_classes = 0;
    std::vector<size_t> image_shape;
    uint32_t t_embed_dim = 16;

    size_t pixel_count() const { return Tensor::count(image_shape); }
};

struct DdpmTrainResult {
    Ddpm model;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    uint64_t epochs_requested = 0; // unclamped adaptive value
    uint32_t epochs_used = 0;
};

DdpmTrainResult train_ddpm(const Dataset& data, const DiffusionSchedule& schedule,
                           const DdpmTrainConfig& config, uint64_t seed);

// Ancestral sampling with the EMA network; outputs clipped to [-1, 1].
// Bit-reproducible per (ddpm, label, count, seed).
std::vector<std::vector<float>> sample_ddpm(const Ddpm& ddpm, uint16_t label, size_t count,
                                            uint64_t seed);

// Soft label (1 - alpha) * y + alpha / K; alpha must lie strictly in (0, 1).
std::vector<double> smooth_labels(const std::vector<double>& one_hot, double alpha, size_t k_classes);

struct AugmentResult {
    ClientPartition partition;
    size_t generated = 0;
};

// Tops a client up to target_count samples with generated images, labels
// cycling over the classes the client already holds (ascending). Synthetic
// samples carry smoothed labels when alpha is in (0, 1); alpha == 0 skips
// smoothing. Real samples are untouched.
AugmentResult augment_partition(const ClientPartition& client, const Ddpm& ddpm, size_t target_count,
                                double alpha, uint64_t seed);

// Versioned checkpoint (magic "DDPM1") holding schedule constants, the
// network schema and both parameter sets.
void save_ddpm(const Ddpm& ddpm, const std::filesystem::path& path);
Ddpm load_ddpm(const std::filesystem::path& path);

} // namespace fedbench
