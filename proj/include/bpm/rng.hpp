#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace bpm {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for a named substream of a master seed. Every source of randomness in a
// run (exploration, goal sampling, jitter, replay, thompson, ...) owns one
// stream, so components can be replayed in isolation.
inline uint64_t stream_seed(uint64_t master, std::string_view name) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return splitmix64(master ^ h);
}

// mt19937_64 with hand-rolled distributions. std::uniform_real_distribution and
// std::normal_distribution are implementation-defined, which would tie replays
// to a particular libstdc++.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : gen_(seed) {}
    RngStream(uint64_t master, std::string_view name) : gen_(stream_seed(master, name)) {}

    uint64_t next_u64() { return gen_(); }

    // [0,1) with 53-bit resolution
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Marsaglia polar method; the spare value is discarded so one call always
    // consumes a whole rejection loop and replay stays independent of history.
    double normal() {
        for (;;) {
            double u = 2.0 * uniform01() - 1.0;
            double v = 2.0 * uniform01() - 1.0;
            double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // uniform in [0,n); modulo bias is ~n/2^64, irrelevant for our n
    size_t index(size_t n) { return static_cast<size_t>(gen_() % n); }

private:
    std::mt19937_64 gen_;
};

}  // namespace bpm
