#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace fedbench {

// Deterministic random stream. Every stochastic choice in a run derives its
// own stream from (seed, purpose, ids...) so that adding or removing one
// consumer never perturbs another. Distributions are hand-rolled so results
// are reproducible across standard library implementations.
class RngStream {
public:
    explicit RngStream(uint64_t state);

    // Derives an independent stream keyed by a root seed, a purpose label and
    // integer coordinates such as (client, round, epoch).
    static RngStream keyed(uint64_t seed, std::string_view purpose,
                           std::initializer_list<uint64_t> ids = {});

    uint64_t next_u64();
    double uniform();                 // [0, 1)
    double normal();                  // standard normal, Box-Muller
    double gamma(double shape);       // Gamma(shape, 1), shape > 0
    size_t uniform_index(size_t n);   // [0, n)

    // Dirichlet(concentration) over n components.
    std::vector<double> dirichlet(double concentration, size_t n);

    // Fisher-Yates shuffle of an index vector.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t s_[4]; // xoshiro256** state
};

// 64-bit FNV-1a, used for content keys (order-independent partitioning,
// permutation-invariant aggregation).
uint64_t fnv1a(const void* data, size_t len, uint64_t h = 1469598103934665603ULL);

} // namespace fedbench
