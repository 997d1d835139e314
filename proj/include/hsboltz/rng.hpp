#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace hsboltz {

/// Counter-based generator: every draw is a pure function of (seed, stream, counter),
/// so workers can draw from disjoint streams without sharing state.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t bits_at(std::uint64_t counter) const { return mix(key_ ^ mix(counter)); }

    /// Uniform in (0,1), never exactly 0.
    double uniform_at(std::uint64_t counter) const {
        return (static_cast<double>(bits_at(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal from two uniforms (Box-Muller, cosine branch).
    double normal_at(std::uint64_t counter) const {
        double u1 = uniform_at(2 * counter);
        double u2 = uniform_at(2 * counter + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double uniform() { return uniform_at(next_++); }
    double normal() { return normal_at(next_++); }
    std::uint64_t counter() const { return next_; }

private:
    std::uint64_t key_;
    std::uint64_t next_ = 0;
};

}  // namespace hsboltz
