#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace windkit {

namespace detail {

// splitmix64 finalizer; decorrelates derived seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Deterministic random stream. Uniform and normal draws are generated with
/// fixed algorithms (not std::*_distribution) so identical seeds yield
/// identical sequences on every standard library.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform draw in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; the spare of each pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so log(u1) is finite.
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Root seed plus named sub-streams. Identical (master_seed, label, index)
/// always map to the same stream.
struct SeedPolicy {
    std::uint64_t master_seed = 0;

    std::uint64_t derive(std::string_view label, std::uint64_t index = 0) const {
        std::uint64_t h = detail::mix64(master_seed ^ detail::fnv1a(label));
        return detail::mix64(h ^ (0x51'7c'c1'b7'27'22'0a'95ULL + index));
    }

    RandomStream stream(std::string_view label, std::uint64_t index = 0) const {
        return RandomStream(derive(label, index));
    }
};

}  // namespace windkit
