#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>

namespace wfsim::rng {

// splitmix64 step; the workhorse behind every random draw in the library.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Mix an arbitrary list of tags into a single 64-bit key. Used to derive
// independent counter-based streams keyed by (seed, element, shift, ...),
// so draws do not depend on evaluation order across measurements.
inline std::uint64_t mix_key(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = seed;
    (void)splitmix64(s);
    for (std::uint64_t t : tags) {
        s ^= t + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        (void)splitmix64(s);
    }
    return s;
}

// Deterministic random stream. Same key => same sequence, on every platform.
class Stream {
public:
    explicit Stream(std::uint64_t key) : state_(key) {}

    static Stream keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
        return Stream(mix_key(seed, tags));
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0,1)
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in [0, bound)
    std::uint64_t next_below(std::uint64_t bound) {
        // rejection-free Lemire-style reduction is overkill here; modulo bias
        // is < 2^-53 for the bounds we use (n <= 4096)
        return next_u64() % bound;
    }

    // standard normal via Box-Muller (no rejection, keeps streams aligned)
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace wfsim::rng
