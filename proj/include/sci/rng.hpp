#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sci::rng {

/// splitmix64 finalizer; used to derive well-separated seeds from (seed, index) pairs.
inline std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return mix(mix(seed ^ 0x6a09e667f3bcc909ULL) + mix(a) + 0x9e3779b97f4a7c15ULL * b);
}

/// Independent stream for one (seed, index[, salt]) triple. Streams are a pure
/// function of their arguments, so results do not depend on worker count.
inline std::mt19937_64 engine(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0) {
    return std::mt19937_64(derive(seed, index, salt));
}

/// Uniform double in [0, 1): 53 random bits, portable across standard libraries.
inline double uniform01(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller. Implemented directly (instead of
/// std::normal_distribution) so streams are identical across toolchains.
class NormalSampler {
public:
    double operator()(std::mt19937_64& gen) {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01(gen);
        while (u1 <= 0.0) u1 = uniform01(gen);
        const double u2 = uniform01(gen);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Uniform integer in [0, n).
inline std::uint64_t below(std::mt19937_64& gen, std::uint64_t n) {
    // rejection sampling keeps the draw unbiased
    const std::uint64_t limit = ~0ULL - ~0ULL % n;
    std::uint64_t x = gen();
    while (x >= limit) x = gen();
    return x % n;
}

}  // namespace sci::rng
