#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fedbench/dataset.hpp"
#include "fedbench/rng.hpp"

using namespace fedbench;

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.k_classes = 2;
    s.samples_per_class = 40;
    s.image_shape = {1, 8, 8};
    s.class_signal = 0.8;
    s.noise_level = 0.15;
    return s;
}

// Least-squares one-vs-rest linear probe on raw pixels; the oracle for class
// separability. Solves the normal equations with ridge damping.
double linear_probe_accuracy(const Dataset& train, const Dataset& test) {
    const size_t d = train.pixel_count() + 1; // bias column
    const size_t k = train.k_classes;
    std::vector<double> xtx(d * d, 0.0), xty(d * k, 0.0);
    for (const auto& s : train.samples) {
        std::vector<double> row(d, 1.0);
        for (size_t i = 0; i + 1 < d; ++i) row[i] = s.pixels[i];
        for (size_t i = 0; i < d; ++i) {
            for (size_t j = 0; j < d; ++j) xtx[i * d + j] += row[i] * row[j];
            for (size_t c = 0; c < k; ++c) xty[i * k + c] += row[i] * (s.label == c ? 1.0 : -1.0);
        }
    }
    for (size_t i = 0; i < d; ++i) xtx[i * d + i] += 1e-3;
    // Gauss-Jordan solve for W = XtX^-1 XtY.
    std::vector<double> a = xtx, w = xty;
    for (size_t col = 0; col < d; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < d; ++r)
            if (std::abs(a[r * d + col]) > std::abs(a[pivot * d + col])) pivot = r;
        for (size_t j = 0; j < d; ++j) std::swap(a[col * d + j], a[pivot * d + j]);
        for (size_t c = 0; c < k; ++c) std::swap(w[col * k + c], w[pivot * k + c]);
        const double diag = a[col * d + col];
        for (size_t j = 0; j < d; ++j) a[col * d + j] /= diag;
        for (size_t c = 0; c < k; ++c) w[col * k + c] /= diag;
        for (size_t r = 0; r < d; ++r) {
            if (r == col) continue;
            const double f = a[r * d + col];
            if (f == 0.0) continue;
            for (size_t j = 0; j < d; ++j) a[r * d + j] -= f * a[col * d + j];
            for (size_t c = 0; c < k; ++c) w[r * k + c] -= f * w[col * k + c];
        }
    }
    size_t correct = 0;
    for (const auto& s : test.samples) {
        std::vector<double> row(d, 1.0);
        for (size_t i = 0; i + 1 < d; ++i) row[i] = s.pixels[i];
        size_t best = 0;
        double best_score = -1e300;
        for (size_t c = 0; c < k; ++c) {
            double score = 0.0;
            for (size_t i = 0; i < d; ++i) score += row[i] * w[i * k + c];
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        if (best == s.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

} // namespace

TEST_CASE("synthetic generation is deterministic per (spec, seed)") {
    const SyntheticSpec spec = small_spec();
    Dataset a = gen_synthetic(spec, 42);
    Dataset b = gen_synthetic(spec, 42);
    CHECK(a.content_hash() == b.content_hash());
    Dataset c = gen_synthetic(spec, 43);
    CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("zero noise collapses each class onto its template") {
    SyntheticSpec spec = small_spec();
    spec.noise_level = 0.0;
    Dataset ds = gen_synthetic(spec, 7);
    for (uint16_t cls = 0; cls < spec.k_classes; ++cls) {
        const Sample* first = nullptr;
        for (const auto& s : ds.samples) {
            if (s.label != cls) continue;
            if (!first)
                first = &s;
            else
                CHECK(s.pixels == first->pixels);
        }
    }
}

TEST_CASE("a linear probe separates two classes at moderate noise") {
    SyntheticSpec spec = small_spec();
    Dataset train = gen_synthetic(spec, 11);
    Dataset test = gen_synthetic(spec, 12);
    CHECK(linear_probe_accuracy(train, test) >= 0.95);
}

TEST_CASE("pixel stats of a constant dataset: zero std, single occupied bin") {
    Dataset ds;
    ds.image_shape = {4};
    ds.k_classes = 2;
    for (int i = 0; i < 3; ++i) {
        Sample s;
        s.pixels = {0.25f, 0.25f, 0.25f, 0.25f};
        s.label = 0;
        ds.samples.push_back(s);
    }
    PixelStats st = pixel_stats(ds);
    CHECK(st.std_dev == doctest::Approx(0.0));
    CHECK(st.mean == doctest::Approx(0.25));
    size_t nonzero = 0;
    for (double h : st.histogram) nonzero += h > 0.0;
    CHECK(nonzero == 1);
}

TEST_CASE("histogram frequencies sum to one") {
    Dataset ds = gen_synthetic(small_spec(), 5);
    PixelStats st = pixel_stats(ds);
    double sum = 0.0;
    for (double h : st.histogram) sum += h;
    CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("cross-client std of two clients is half the mean gap") {
    auto constant_client = [](float v) {
        Dataset d;
        d.image_shape = {2};
        d.k_classes = 2;
        Sample s;
        s.pixels = {v, v};
        d.samples.push_back(s);
        return d;
    };
    std::vector<Dataset> clients{constant_client(0.1f), constant_client(0.5f)};
    CHECK(cross_client_std(clients) == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("pixel stats reject an empty dataset") {
    Dataset ds;
    ds.image_shape = {2};
    ds.k_classes = 2;
    CHECK_THROWS_AS(pixel_stats(ds), DegenerateInputError);
}

TEST_CASE("dataset fixture files round-trip bit-exactly") {
    Dataset ds = gen_synthetic(small_spec(), 9);
    ds.samples[3].provenance = Provenance::kSynthetic;
    const auto path = std::filesystem::temp_directory_path() / "fedbench_roundtrip.fds";
    save_dataset(ds, path);
    Dataset back = load_dataset(path);
    CHECK(back.content_hash() == ds.content_hash());
    CHECK(back.samples[3].provenance == Provenance::kSynthetic);
    std::filesystem::remove(path);
}

TEST_CASE("loading a non-fixture file fails cleanly") {
    const auto path = std::filesystem::temp_directory_path() / "fedbench_bad.fds";
    {
        std::ofstream out(path);
        out << "not a fixture";
    }
    CHECK_THROWS_AS(load_dataset(path), IoError);
    std::filesystem::remove(path);
}

TEST_CASE("batch assembly: soft labels override one-hot rows") {
    Dataset ds;
    ds.image_shape = {2};
    ds.k_classes = 2;
    Sample real;
    real.pixels = {0.5f, -0.5f};
    real.label = 1;
    Sample synth = real;
    synth.provenance = Provenance::kSynthetic;
    synth.soft_label = {0.3, 0.7};
    ds.samples = {real, synth};
    Batch b = assemble_batch(ds, {0, 1}, {2});
    CHECK(b.labels[0] == 0.0);
    CHECK(b.labels[1] == 1.0);
    CHECK(b.labels[2] == doctest::Approx(0.3));
    CHECK(b.labels[3] == doctest::Approx(0.7));
}
