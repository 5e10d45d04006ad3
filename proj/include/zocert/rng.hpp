#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace zocert {

// splitmix64; also used to hash seed words together for substream derivation.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a root seed and a list of stream
// coordinates (tag, epoch, example index, ...). Pure function of its inputs,
// so draws do not depend on iteration order.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> words) {
    std::uint64_t h = mix64(root ^ 0x5bf03635e3b4b2e1ULL);
    for (std::uint64_t w : words) h = mix64(h ^ mix64(w));
    return h;
}

// Compact tag constants for substream derivation.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kNoise = 3;
inline constexpr std::uint64_t kEstimator = 4;
inline constexpr std::uint64_t kCertifySelect = 5;
inline constexpr std::uint64_t kCertifyEstimate = 6;
inline constexpr std::uint64_t kDataTrain = 7;
inline constexpr std::uint64_t kDataTest = 8;
}  // namespace stream

// xoshiro256** with hand-rolled uniform/normal transforms. std::mt19937_64 is
// portable but std::normal_distribution is implementation-defined; run logs
// and checkpoints must be byte-identical under a fixed seed, so every
// transform here is spelled out.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) {
            s = mix64(s);
            word = s;
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe as a log() argument.
    double uniform01_open() { return 1.0 - uniform01(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller. One value per call; the pair's second member is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01_open();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Integer in [0, n), n >= 1. Rejection-free modulo of a 64-bit draw is
    // biased by < 2^-52 for desk-scale n; use rejection anyway, it is cheap.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~0ULL - ~0ULL % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace zocert
