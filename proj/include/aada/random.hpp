#pragma once

#include <cstdint>
#include <random>

namespace aada {

/// Deterministic random stream. Every consumer gets its own stream derived
/// from (seed, stream_id) so that concurrent data workers stay reproducible.
class RngStream {
public:
    explicit RngStream(uint64_t seed, uint64_t stream_id = 0)
        : engine_(mix(seed, stream_id)) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }
    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    RngStream fork(uint64_t stream_id) { return RngStream(engine_(), stream_id); }

    std::mt19937_64& engine() { return engine_; }

private:
    static uint64_t mix(uint64_t seed, uint64_t stream_id) {
        // splitmix64 over the pair; avoids correlated mt19937 seedings
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace aada
