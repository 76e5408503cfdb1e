#pragma once

#include <cstdint>
#include <utility>

namespace mcm {

// Named draw streams. Distinct streams yield independent sequences from the
// same seed, so adding a consumer never perturbs another consumer's draws.
enum class Stream : std::uint64_t {
    init = 1,
    dropout = 2,
    shuffle = 3,
    negative_sampling = 4,
    split = 5,
    data = 6,
    misc = 7,
};

// Counter-based generator: output i is a pure function of (seed, stream, i).
// Built from the splitmix64 finalizer; identical results on every platform
// with 64-bit unsigned arithmetic.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream) {}
    Rng(std::uint64_t seed, Stream stream)
        : Rng(seed, static_cast<std::uint64_t>(stream)) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint64_t next_u64() {
        std::uint64_t z = counter_++;
        z = mix(z + 0x9e3779b97f4a7c15ULL * (stream_ + 1));
        z ^= mix(seed_ + 0xbf58476d1ce4e5b9ULL * (stream_ + 2));
        return mix(z);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    float uniform(float lo, float hi) {
        return lo + static_cast<float>(next_double()) * (hi - lo);
    }

    // Unbiased integer in [0, n) via rejection.
    std::uint64_t next_below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = ~0ULL - ~0ULL % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    bool bernoulli(double p) { return next_double() < p; }

    // Fisher-Yates.
    template <class RandomIt>
    void shuffle(RandomIt first, RandomIt last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const auto j = next_below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    // Derived generator with an independent stream, e.g. one per grid cell.
    Rng fork(std::uint64_t substream) const {
        return Rng(mix(seed_ ^ mix(stream_ + 0x632be59bd9b4e019ULL)),
                   mix(substream + 0xd6e8feb86659fd93ULL));
    }

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

}  // namespace mcm
