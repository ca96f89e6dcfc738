#pragma once

#include <cmath>
#include <cstdint>

namespace zone {

// splitmix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based hash of (seed, stream, index). Every pseudo-random value in
/// the library is drawn through this, so results never depend on call order:
///   h = splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
constexpr std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream,
                                     std::uint64_t index) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

/// Uniform double in [0, 1) from the top 53 bits of counter_hash.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index) noexcept {
    return static_cast<double>(counter_hash(seed, stream, index) >> 11) * 0x1.0p-53;
}

/// Sequential generator over one (seed, stream) pair.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept : seed_(seed), stream_(stream) {}

    std::uint64_t next_u64() noexcept { return counter_hash(seed_, stream_, counter_++); }
    double uniform() noexcept { return counter_uniform(seed_, stream_, counter_++); }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one sample per two uniforms).
    double normal() noexcept {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

}  // namespace zone

