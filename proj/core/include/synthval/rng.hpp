#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>

#include "synthval/common.hpp"

namespace synthval {

/// Deterministic random stream. splitmix64 core with Box-Muller normals;
/// identical sequences on every platform, no global state.
///
/// All randomness in the project flows from one master seed through named
/// substreams (e.g. "data", "init", "noise", "sampling") so that each
/// consumer can be reproduced in isolation.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {
        // avoid the all-zero fixed point and decorrelate small seeds
        next_u64();
        next_u64();
    }

    /// Substream derived from (master seed, name); independent of call order.
    static Rng substream(uint64_t master, std::string_view name) {
        uint64_t h = fnv1a64(name);
        h = fnv1a64(&master, sizeof(master), h);
        return Rng(h);
    }

    /// Substream further keyed by an index (e.g. per-sample noise).
    static Rng substream(uint64_t master, std::string_view name, uint64_t index) {
        uint64_t h = fnv1a64(name);
        h = fnv1a64(&master, sizeof(master), h);
        h = fnv1a64(&index, sizeof(index), h);
        return Rng(h);
    }

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

    /// Uniform in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    float uniform_f(float lo, float hi) { return static_cast<float>(uniform(lo, hi)); }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    /// Standard normal via Box-Muller (caches the spare draw).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    float normal_f() { return static_cast<float>(normal()); }

    void fill_normal(std::span<float> out, float mean = 0.0f, float stddev = 1.0f) {
        for (auto& v : out) {
            v = mean + stddev * normal_f();
        }
    }

    void fill_uniform(std::span<float> out, float lo, float hi) {
        for (auto& v : out) {
            v = uniform_f(lo, hi);
        }
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace synthval
