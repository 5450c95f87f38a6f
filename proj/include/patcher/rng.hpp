#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace patcher {

// Deterministic RNG built on std::mt19937 (whose output sequence is fixed by
// the standard) with hand-rolled distributions. The standard library's
// distribution objects are implementation-defined, so using them would make
// datasets and weight init differ across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    uint32_t next_u32() { return gen_(); }

    // Uniform in [0, 1) with 24 bits of mantissa.
    float uniform() { return static_cast<float>(gen_() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    int uniform_int(int lo, int hi) {
        if (hi <= lo) return lo;
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(static_cast<uint64_t>(gen_()) % span);
    }

    // Standard normal via Box-Muller; consumes two uniforms per pair.
    float normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        float u1 = 0.0f;
        do {
            u1 = uniform();
        } while (u1 <= 1e-12f);
        float u2 = uniform();
        float r = std::sqrt(-2.0f * std::log(u1));
        float theta = 6.28318530718f * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Normal(0, std) resampled until within +-2 std.
    float trunc_normal(float stddev) {
        for (;;) {
            float z = normal();
            if (z >= -2.0f && z <= 2.0f) return z * stddev;
        }
    }

private:
    std::mt19937 gen_;
    bool have_spare_ = false;
    float spare_ = 0.0f;
};

// Stateless seed mixing for derived streams (per-sample, per-epoch).
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace patcher
