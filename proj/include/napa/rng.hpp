#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace napa {

// SplitMix64 finalizer. Used both as the per-draw output mix and to derive
// independent substream seeds from (seed, path...) tuples.
inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// Counter-based pseudo-random stream (SplitMix64). Streams derived from the
// same seed with different paths are independent for simulation purposes, and
// a stream's output depends only on (seed, path, draw index) — never on
// scheduling — which is what makes replicated experiments order-invariant.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    // Derives the substream identified by `path` (e.g. {sweep, replication}).
    static RngStream substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        std::uint64_t s = mix64(seed + 0x9e3779b97f4a7c15ull);
        for (std::uint64_t p : path) s = mix64(s ^ (p + 0x9e3779b97f4a7c15ull));
        return RngStream(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix64(state_);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // Unbiased integer in [0, n). Lemire's multiply-shift rejection.
    std::uint64_t below(std::uint64_t n) {
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal draw, Box-Muller with one cached value.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        double a = 6.283185307179586476925286766559 * uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace napa
