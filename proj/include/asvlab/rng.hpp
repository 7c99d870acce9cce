#pragma once

#include <cstdint>
#include <cstddef>
#include <random>
#include <utility>

namespace asvlab {

/// SplitMix64 finalizer. Used to derive independent substream seeds from a
/// (seed, stream, index) triple so parallel workers never share a generator.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream,
                                       std::uint64_t index = 0) {
    return mix64(mix64(mix64(seed) ^ stream) ^ index);
}

/// Named stream identifiers. Keeping them in one place prevents two
/// subsystems from accidentally drawing from the same substream.
namespace streams {
inline constexpr std::uint64_t train_scenario = 0x1001;
inline constexpr std::uint64_t test_scenario = 0x1002;
inline constexpr std::uint64_t pilot = 0x2001;
inline constexpr std::uint64_t synth_mixed = 0x2002;
inline constexpr std::uint64_t synth_dynamic = 0x2003;
inline constexpr std::uint64_t synth_static = 0x2004;
inline constexpr std::uint64_t rotation = 0x2005;
inline constexpr std::uint64_t split = 0x2006;
inline constexpr std::uint64_t noise = 0x2007;
inline constexpr std::uint64_t init = 0x3001;
inline constexpr std::uint64_t shuffle = 0x3002;
inline constexpr std::uint64_t reparam = 0x3003;
inline constexpr std::uint64_t policy = 0x4001;
}  // namespace streams

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0)
        : engine_(substream_seed(seed, stream, index)) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double uniform() { return uniform(0.0, 1.0); }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    /// Inclusive integer range.
    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }
    std::int64_t poisson(double mean) {
        return std::poisson_distribution<std::int64_t>(mean)(engine_);
    }
    std::uint64_t next() { return engine_(); }

    /// Fisher-Yates with our own index draws so the permutation does not
    /// depend on the standard library's shuffle implementation.
    template <typename Container>
    void shuffle(Container& c) {
        for (std::size_t i = c.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(integer(0, static_cast<std::int64_t>(i) - 1));
            using std::swap;
            swap(c[i - 1], c[j]);
        }
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace asvlab
