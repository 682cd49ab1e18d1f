#pragma once

// Seeded random source with hand-rolled distributions. The standard
// distribution adapters are implementation-defined, so sampling through them
// would not reproduce across standard libraries; everything here is pinned to
// the mt19937_64 bit stream.

#include <cmath>
#include <cstdint>

namespace tednet {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // SplitMix64 warm-up so nearby seeds decorrelate
        for (int i = 0; i < 4; ++i) next_u64();
    }

    std::uint64_t next_u64() {
        // xorshift* variant of SplitMix64
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Unbiased integer in [0, bound)
    std::uint64_t below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        const std::uint64_t min = (0 - bound) % bound;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x < min);
        return x % bound;
    }

    int range_int(int lo, int hi) {  // inclusive
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    double uniform() {  // [0, 1)
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {  // Box-Muller, one value per pair cached
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace tednet
