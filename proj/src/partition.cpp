#include "fedbench/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedbench/rng.hpp"

namespace fedbench {

namespace {

uint64_t sample_key(const Sample& s) {
    uint64_t h = fnv1a(&s.label, sizeof(s.label));
    h = fnv1a(s.pixels.data(), s.pixels.size() * sizeof(float), h);
    return h;
}

// Content-canonical index order followed by a seeded shuffle. Identical
// datasets in any input order yield identical index sequences.
std::vector<size_t> canonical_shuffled_indices(const Dataset& dataset, uint64_t seed,
                                               std::string_view purpose) {
    std::vector<size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<uint64_t> keys(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i) keys[i] = sample_key(dataset.samples[i]);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return keys[a] < keys[b]; });
    RngStream rng = RngStream::keyed(seed, purpose);
    rng.shuffle(idx);
    return idx;
}

Dataset shard_like(const Dataset& dataset) {
    Dataset d;
    d.image_shape = dataset.image_shape;
    d.k_classes = dataset.k_classes;
    return d;
}

// Per-class canonical+shuffled index lists.
std::vector<std::vector<size_t>> per_class_indices(const Dataset& dataset, uint64_t seed,
                                                   std::string_view purpose) {
    std::vector<std::vector<size_t>> by_class(dataset.k_classes);
    for (size_t i : canonical_shuffled_indices(dataset, seed, purpose))
        by_class[dataset.samples[i].label].push_back(i);
    return by_class;
}

// Largest-remainder apportionment of `total` into weighted shares.
std::vector<size_t> apportion(size_t total, const std::vector<double>& weights) {
    const size_t n = weights.size();
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    std::vector<size_t> counts(n, 0);
    std::vector<std::pair<double, size_t>> remainders(n);
    size_t assigned = 0;
    for (size_t i = 0; i < n; ++i) {
        const double quota = static_cast<double>(total) * weights[i] / wsum;
        counts[i] = static_cast<size_t>(std::floor(quota));
        remainders[i] = {quota - std::floor(quota), i};
        assigned += counts[i];
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (size_t r = 0; assigned < total; ++r, ++assigned) ++counts[remainders[r % n].second];
    return counts;
}

} // namespace

KFoldSplit partition_kfold(const Dataset& dataset, size_t folds, size_t test_fold, uint64_t seed) {
    if (folds < 2) throw ConfigError("k-fold partition requires folds >= 2");
    if (folds > dataset.size()) throw ConfigError("more folds than samples");
    if (test_fold >= folds) throw ConfigError("test fold index out of range");
    const std::vector<size_t> idx = canonical_shuffled_indices(dataset, seed, "kfold");
    const size_t base = dataset.size() / folds;
    const size_t extra = dataset.size() % folds; // first `extra` folds get one more
    KFoldSplit split;
    size_t pos = 0;
    for (size_t f = 0; f < folds; ++f) {
        const size_t count = base + (f < extra ? 1 : 0);
        Dataset shard = shard_like(dataset);
        shard.samples.reserve(count);
        for (size_t i = 0; i < count; ++i) shard.samples.push_back(dataset.samples[idx[pos++]]);
        if (f == test_fold)
            split.test = std::move(shard);
        else
            split.clients.push_back(std::move(shard));
    }
    return split;
}

QuantitySplit partition_quantity(const Dataset& dataset, const std::vector<double>& proportions,
                                 uint64_t seed) {
    if (proportions.empty()) throw ConfigError("quantity partition requires proportions");
    double sum = 0.0;
    for (double p : proportions) {
        if (p <= 0.0) throw ConfigError("quantity partition proportions must be positive");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("quantity partition proportions must sum to 1");

    QuantitySplit split;
    split.clients.assign(proportions.size(), shard_like(dataset));
    const auto by_class = per_class_indices(dataset, seed, "quantity");
    for (uint16_t cls = 0; cls < dataset.k_classes; ++cls) {
        const auto& pool = by_class[cls];
        const std::vector<size_t> counts = apportion(pool.size(), proportions);
        size_t pos = 0;
        for (size_t c = 0; c < counts.size(); ++c) {
            if (counts[c] == 0 && !pool.empty())
                split.warnings.push_back("client " + std::to_string(c) + " received no samples of class " +
                                         std::to_string(cls));
            for (size_t i = 0; i < counts[c]; ++i)
                split.clients[c].samples.push_back(dataset.samples[pool[pos++]]);
        }
    }
    return split;
}

std::vector<Dataset> partition_dirichlet(const Dataset& dataset, size_t clients, double concentration,
                                         uint64_t seed) {
    if (clients < 2) throw ConfigError("dirichlet partition requires at least 2 clients");
    if (!(concentration > 0.0)) throw ConfigError("dirichlet concentration must be > 0");
    const auto by_class = per_class_indices(dataset, seed, "dirichlet");
    for (int attempt = 0; attempt < 100; ++attempt) {
        RngStream rng = RngStream::keyed(seed, "dirichlet-draw", {static_cast<uint64_t>(attempt)});
        std::vector<Dataset> shards(clients, shard_like(dataset));
        for (uint16_t cls = 0; cls < dataset.k_classes; ++cls) {
            const auto& pool = by_class[cls];
            if (pool.empty()) continue;
            const std::vector<double> share = rng.dirichlet(concentration, clients);
            const std::vector<size_t> counts = apportion(pool.size(), share);
            size_t pos = 0;
            for (size_t c = 0; c < clients; ++c)
                for (size_t i = 0; i < counts[c]; ++i)
                    shards[c].samples.push_back(dataset.samples[pool[pos++]]);
        }
        const bool any_empty =
            std::any_of(shards.begin(), shards.end(), [](const Dataset& d) { return d.samples.empty(); });
        if (!any_empty) return shards;
    }
    throw RuntimeFailure("dirichlet partition left a client empty after 100 attempts");
}

std::vector<Dataset> apply_feature_shift(const std::vector<Dataset>& clients,
                                         const std::vector<FeatureShiftSpec>& specs, uint64_t seed) {
    if (specs.size() != clients.size())
        throw ConfigError("feature shift needs one spec per client");
    std::vector<Dataset> out;
    out.reserve(clients.size());
    for (size_t c = 0; c < clients.size(); ++c) {
        const FeatureShiftSpec& sp = specs[c];
        Dataset shifted = clients[c];
        const bool identity =
            sp.brightness_offset == 0.0 && sp.contrast_scale == 1.0 && sp.noise_sigma == 0.0;
        if (!identity) {
            RngStream rng = RngStream::keyed(seed, "feature-shift", {static_cast<uint64_t>(c)});
            for (auto& s : shifted.samples)
                for (auto& p : s.pixels) {
                    const double eta = sp.noise_sigma > 0.0 ? sp.noise_sigma * rng.normal() : 0.0;
                    const double v = sp.contrast_scale * p + sp.brightness_offset + eta;
                    p = static_cast<float>(std::clamp(v, -1.0, 1.0));
                }
        }
        out.push_back(std::move(shifted));
    }
    return out;
}

} // namespace fedbench
