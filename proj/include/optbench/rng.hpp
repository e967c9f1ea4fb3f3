#pragma once

#include <cmath>
#include <cstdint>

namespace optbench {

/// Deterministic 64-bit generator (splitmix64). The standard library's
/// distributions are not bit-stable across implementations, so every draw
/// in the project goes through this class: identical seeds give identical
/// streams on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1), 53 bits of mantissa.
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n), n >= 1.
    std::uint64_t below(std::uint64_t n) {
        // multiply-shift; bias is negligible for n << 2^64 and the mapping is fixed
        return std::uint64_t((__uint128_t(next_u64()) * n) >> 64);
    }

    /// Standard normal via polar Box-Muller; spare value cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    /// Derive an independent stream from a base seed. Used to give each
    /// consumer (init, shuffles, environments, replay sampling) its own
    /// deterministic stream.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        Rng r(seed ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL));
        return r.next_u64();
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace optbench
