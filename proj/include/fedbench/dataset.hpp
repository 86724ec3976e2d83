#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedbench/model.hpp"
#include "fedbench/tensor.hpp"

namespace fedbench {

enum class Provenance : uint8_t { kReal = 0, kSynthetic = 1 };

struct Sample {
    std::vector<float> pixels; // in [-1, 1]
    uint16_t label = 0;
    Provenance provenance = Provenance::kReal;
    // Soft label attached by augmentation; empty means one-hot(label).
    std::vector<double> soft_label;
};

struct Dataset {
    std::vector<size_t> image_shape; // e.g. {1, 32, 32}
    uint16_t k_classes = 0;
    std::vector<Sample> samples;

    size_t size() const { return samples.size(); }
    size_t pixel_count() const { return Tensor::count(image_shape); }
    std::vector<size_t> class_counts() const;
    std::vector<uint8_t> class_presence() const;
    uint64_t content_hash() const;
};

// A client's local shard is a dataset with provenance flags; n_k == size().
using ClientPartition = Dataset;

struct SyntheticSpec {
    uint16_t k_classes = 2;
    size_t samples_per_class = 50;
    std::vector<size_t> image_shape{1, 32, 32};
    double class_signal = 0.8; // amplitude of the per-class template
    double noise_level = 0.2;  // sigma of the seeded pixel noise
};

// Class-conditional synthetic images: a distinct low-frequency template per
// class plus seeded Gaussian noise, clipped to [-1, 1]. Deterministic per
// (spec, seed).
Dataset gen_synthetic(const SyntheticSpec& spec, uint64_t seed);

// The template for one class, before noise; exposed for oracle tests.
std::vector<float> class_template(const SyntheticSpec& spec, uint16_t cls);

struct PixelStats {
    std::vector<double> histogram; // 256 bins over [-1, 1], frequencies sum to 1
    double mean = 0.0;
    double std_dev = 0.0;
};

PixelStats pixel_stats(const Dataset& dataset);

// Population standard deviation of per-client pixel means.
double cross_client_std(const std::vector<Dataset>& clients);

// Flat binary fixture format, magic "FDS1": u32 class count, u64 sample
// count, u8 rank + u32 dims, then per sample f32 pixels, u16 label,
// u8 provenance; all little-endian. Soft labels are not persisted.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Batch assembly: flattens images when the model expects rank-1 input; labels
// become one-hot rows except for samples carrying soft labels.
Batch assemble_batch(const Dataset& data, const std::vector<size_t>& indices,
                     const std::vector<size_t>& model_input_shape);

} // namespace fedbench
