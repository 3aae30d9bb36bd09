#pragma once

#include <cstdint>
#include <random>

namespace saife {

// SplitMix64 finaliser; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for item `index` of stream `stream` under a run seed. Every random
// draw in the library flows from the run seed through this function.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return mix_seed(mix_seed(seed ^ mix_seed(stream)) + index);
}

// Named streams for derive_seed.
enum class Stream : std::uint64_t {
    frames = 1,
    split = 2,
    labels = 3,
    init = 4,
    shuffle = 5,
    prior = 6,
    anomaly = 7,
    library = 8,
};

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    return derive_seed(seed, static_cast<std::uint64_t>(stream), index);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    // Inclusive on both ends.
    long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(engine_); }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace saife
