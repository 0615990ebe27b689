#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace toyvlm {

// Deterministic RNG with hand-rolled distributions so streams are stable
// across standard-library implementations. splitmix64 core.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, one value per call (the pair's second half is discarded
    // to keep the stream position independent of call parity).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::uint64_t state_;
};

// FNV-1a over a string, used to derive independent sub-seeds from
// (global seed, stream name, index).
inline std::uint64_t hash_str(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t global_seed, const std::string& stream, std::uint64_t index) {
    std::uint64_t h = hash_str(stream);
    h ^= global_seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= index + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

}  // namespace toyvlm
