#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace rsmerton {

inline constexpr const char* kRngAlgorithm = "mt19937_64/splitmix64-seeded";

/// Identifies a reproducible random stream: same (algorithm, seed, stream)
/// gives the same draws.
struct RngSpec {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::string algorithm = kRngAlgorithm;

    RngSpec substream(std::uint64_t k) const {
        return RngSpec{seed, mix(stream * 0x9E3779B97F4A7C15ull + k + 1), algorithm};
    }

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    bool operator==(const RngSpec&) const = default;
};

/// Purpose tags so chain and Brownian draws never share a stream.
enum class StreamPurpose : std::uint64_t { chain = 1, brownian = 2 };

inline RngSpec purpose_stream(const RngSpec& rng, StreamPurpose p) {
    return RngSpec{RngSpec::mix(rng.seed ^ (static_cast<std::uint64_t>(p) << 56)), rng.stream,
                   rng.algorithm};
}

using Engine = std::mt19937_64;

inline Engine make_engine(const RngSpec& rng) {
    const std::uint64_t a = RngSpec::mix(rng.seed);
    const std::uint64_t b = RngSpec::mix(a ^ rng.stream);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return Engine(seq);
}

/// Uniform on (0, 1], never exactly zero.
inline double uniform_open0(Engine& eng) {
    return (static_cast<double>(eng() >> 11) + 1.0) * 0x1.0p-53;
}

} // namespace rsmerton
