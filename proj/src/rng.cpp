#include "fedbench/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fedbench {

namespace {

uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

} // namespace

uint64_t fnv1a(const void* data, size_t len, uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

RngStream::RngStream(uint64_t state) {
    // Expand one 64-bit key into full xoshiro256** state.
    uint64_t x = state;
    for (auto& s : s_) s = splitmix64(x);
}

RngStream RngStream::keyed(uint64_t seed, std::string_view purpose,
                           std::initializer_list<uint64_t> ids) {
    uint64_t h = fnv1a(&seed, sizeof(seed));
    h = fnv1a(purpose.data(), purpose.size(), h);
    for (uint64_t id : ids) h = fnv1a(&id, sizeof(id), h);
    return RngStream(h);
}

uint64_t RngStream::next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    // Box-Muller; u1 shifted into (0, 1] so log() stays finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double RngStream::gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
    if (shape < 1.0) {
        // Boost via Gamma(shape+1) and U^{1/shape}.
        double u = 1.0 - uniform();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    // Marsaglia-Tsang squeeze method.
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = 1.0 - uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

size_t RngStream::uniform_index(size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be > 0");
    // Rejection sampling to avoid modulo bias.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<size_t>(x % n);
}

std::vector<double> RngStream::dirichlet(double concentration, size_t n) {
    std::vector<double> g(n);
    for (;;) {
        double sum = 0.0;
        for (auto& gi : g) {
            gi = gamma(concentration);
            sum += gi;
        }
        if (sum > 0.0) {
            for (auto& gi : g) gi /= sum;
            return g;
        }
        // All draws underflowed to zero; retry with fresh randomness.
    }
}

} // namespace fedbench
