#pragma once

// Shared desk-scale fixtures for the federation and strategy tests.

#include <vector>

#include "fedbench/dataset.hpp"
#include "fedbench/federation.hpp"
#include "fedbench/partition.hpp"

namespace fedbench::testing {

// Small separable two-class image problem.
inline SyntheticSpec two_class_spec(size_t per_class = 30) {
    SyntheticSpec spec;
    spec.k_classes = 2;
    spec.samples_per_class = per_class;
    spec.image_shape = {1, 4, 4};
    spec.class_signal = 0.8;
    spec.noise_level = 0.15;
    return spec;
}

struct Scenario {
    FederationConfig fed;
    std::vector<ClientPartition> clients;
    Dataset test;
    ModelState model;
};

// IID clients over the two-class problem with a small batchnorm MLP.
inline Scenario iid_scenario(uint32_t clients, uint32_t rounds, uint64_t seed,
                             size_t per_class = 30, uint32_t local_epochs = 2,
                             uint32_t batch_size = 16) {
    Scenario s;
    Dataset pool = gen_synthetic(two_class_spec(per_class), seed);
    std::vector<double> props(clients, 1.0 / static_cast<double>(clients));
    s.clients = partition_quantity(pool, props, seed + 1).clients;
    s.test = gen_synthetic(two_class_spec(20), seed + 2);
    s.fed.clients = clients;
    s.fed.rounds = rounds;
    s.fed.local_epochs = local_epochs;
    s.fed.batch_size = batch_size;
    s.fed.seed = seed;
    s.model = make_mlp(16, 12, 8, 2, seed + 3);
    return s;
}

} // namespace fedbench::testing
