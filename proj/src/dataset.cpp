#include "fedbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fedbench/rng.hpp"

namespace fedbench {

namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    // Host is little-endian on every supported target.
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_le(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("dataset file is truncated");
}

} // namespace

std::vector<size_t> Dataset::class_counts() const {
    std::vector<size_t> counts(k_classes, 0);
    for (const auto& s : samples) {
        if (s.label >= k_classes) throw ConfigError("sample label out of range");
        ++counts[s.label];
    }
    return counts;
}

std::vector<uint8_t> Dataset::class_presence() const {
    std::vector<uint8_t> present(k_classes, 0);
    for (const auto& s : samples) present[s.label] = 1;
    return present;
}

uint64_t Dataset::content_hash() const {
    uint64_t h = fnv1a(&k_classes, sizeof(k_classes));
    for (size_t d : image_shape) h = fnv1a(&d, sizeof(d), h);
    for (const auto& s : samples) {
        h = fnv1a(s.pixels.data(), s.pixels.size() * sizeof(float), h);
        h = fnv1a(&s.label, sizeof(s.label), h);
        h = fnv1a(&s.provenance, sizeof(s.provenance), h);
    }
    return h;
}

std::vector<float> class_template(const SyntheticSpec& spec, uint16_t cls) {
    // Low-frequency separable pattern; frequency and phase derive from the
    // class index so templates stay distinct without any randomness.
    const size_t d = Tensor::count(spec.image_shape);
    std::vector<float> t(d);
    const size_t w = spec.image_shape.back();
    const size_t h = std::max<size_t>(1, d / w);
    const double fx = 1.0 + 0.5 * static_cast<double>(cls % 4);
    const double fy = 1.0 + 0.5 * static_cast<double>((cls / 4) % 4);
    const double phase = 2.0 * M_PI * static_cast<double>(cls) / 8.0;
    for (size_t i = 0; i < d; ++i) {
        const double x = static_cast<double>(i % w) / static_cast<double>(w);
        const double y = static_cast<double>((i / w) % h) / static_cast<double>(h);
        t[i] = static_cast<float>(spec.class_signal *
                                  std::sin(2.0 * M_PI * (fx * x + fy * y) + phase));
    }
    return t;
}

Dataset gen_synthetic(const SyntheticSpec& spec, uint64_t seed) {
    if (spec.k_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
    Dataset ds;
    ds.image_shape = spec.image_shape;
    ds.k_classes = spec.k_classes;
    const size_t d = ds.pixel_count();
    ds.samples.reserve(static_cast<size_t>(spec.k_classes) * spec.samples_per_class);
    for (uint16_t cls = 0; cls < spec.k_classes; ++cls) {
        const std::vector<float> tmpl = class_template(spec, cls);
        RngStream rng = RngStream::keyed(seed, "synthetic-class", {cls});
        for (size_t i = 0; i < spec.samples_per_class; ++i) {
            Sample s;
            s.label = cls;
            s.pixels.resize(d);
            for (size_t p = 0; p < d; ++p) {
                const double v = tmpl[p] + spec.noise_level * rng.normal();
                s.pixels[p] = static_cast<float>(std::clamp(v, -1.0, 1.0));
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

PixelStats pixel_stats(const Dataset& dataset) {
    if (dataset.samples.empty()) throw DegenerateInputError("pixel stats of an empty dataset");
    PixelStats stats;
    stats.histogram.assign(256, 0.0);
    double sum = 0.0, sumsq = 0.0;
    size_t n = 0;
    for (const auto& s : dataset.samples) {
        for (float pf : s.pixels) {
            const double p = pf;
            sum += p;
            sumsq += p * p;
            ++n;
            const int bin = std::min(255, std::max(0, static_cast<int>((p + 1.0) * 128.0)));
            stats.histogram[bin] += 1.0;
        }
    }
    for (auto& hv : stats.histogram) hv /= static_cast<double>(n);
    stats.mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sumsq / static_cast<double>(n) - stats.mean * stats.mean);
    stats.std_dev = std::sqrt(var);
    return stats;
}

double cross_client_std(const std::vector<Dataset>& clients) {
    if (clients.empty()) throw DegenerateInputError("cross-client std of zero clients");
    std::vector<double> means;
    means.reserve(clients.size());
    for (const auto& c : clients) means.push_back(pixel_stats(c).mean);
    double m = 0.0;
    for (double v : means) m += v;
    m /= static_cast<double>(means.size());
    double var = 0.0;
    for (double v : means) var += (v - m) * (v - m);
    var /= static_cast<double>(means.size()); // population variance
    return std::sqrt(var);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write("FDS1", 4);
    write_le(out, static_cast<uint32_t>(dataset.k_classes));
    write_le(out, static_cast<uint64_t>(dataset.samples.size()));
    write_le(out, static_cast<uint8_t>(dataset.image_shape.size()));
    for (size_t d : dataset.image_shape) write_le(out, static_cast<uint32_t>(d));
    const size_t d = dataset.pixel_count();
    for (const auto& s : dataset.samples) {
        if (s.pixels.size() != d) throw ConfigError("sample pixel count does not match dataset shape");
        out.write(reinterpret_cast<const char*>(s.pixels.data()),
                  static_cast<std::streamsize>(d * sizeof(float)));
        write_le(out, s.label);
        write_le(out, static_cast<uint8_t>(s.provenance));
    }
    if (!out) throw IoError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FDS1", 4) != 0)
        throw IoError(path.string() + " is not a dataset fixture (bad magic)");
    Dataset ds;
    uint32_t k;
    uint64_t count;
    uint8_t rank;
    read_le(in, k);
    read_le(in, count);
    read_le(in, rank);
    ds.k_classes = static_cast<uint16_t>(k);
    ds.image_shape.resize(rank);
    for (auto& dim : ds.image_shape) {
        uint32_t v;
        read_le(in, v);
        dim = v;
    }
    const size_t d = ds.pixel_count();
    ds.samples.resize(count);
    for (auto& s : ds.samples) {
        s.pixels.resize(d);
        in.read(reinterpret_cast<char*>(s.pixels.data()), static_cast<std::streamsize>(d * sizeof(float)));
        if (!in) throw IoError("dataset file is truncated");
        read_le(in, s.label);
        uint8_t prov;
        read_le(in, prov);
        s.provenance = static_cast<Provenance>(prov);
    }
    return ds;
}

Batch assemble_batch(const Dataset& data, const std::vector<size_t>& indices,
                     const std::vector<size_t>& model_input_shape) {
    if (indices.empty()) throw ConfigError("cannot assemble an empty batch");
    const size_t d = data.pixel_count();
    const bool flat = model_input_shape.size() == 1;
    if (flat) {
        if (model_input_shape[0] != d)
            throw ConfigError("model expects " + std::to_string(model_input_shape[0]) +
                              " inputs but images have " + std::to_string(d) + " pixels");
    } else if (model_input_shape != data.image_shape) {
        throw ConfigError("model input shape does not match dataset image shape");
    }
    Batch b;
    std::vector<size_t> shape{indices.size()};
    shape.insert(shape.end(), model_input_shape.begin(), model_input_shape.end());
    b.inputs = Tensor(shape);
    b.labels = Tensor({indices.size(), data.k_classes});
    for (size_t i = 0; i < indices.size(); ++i) {
        const Sample& s = data.samples.at(indices[i]);
        for (size_t p = 0; p < d; ++p) b.inputs[i * d + p] = s.pixels[p];
        if (s.soft_label.empty()) {
            b.labels[i * data.k_classes + s.label] = 1.0;
        } else {
            if (s.soft_label.size() != data.k_classes)
                throw ConfigError("soft label length does not match class count");
            for (size_t j = 0; j < data.k_classes; ++j)
                b.labels[i * data.k_classes + j] = s.soft_label[j];
        }
    }
    return b;
}

} // namespace fedbench
