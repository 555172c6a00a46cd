#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace symbiotic {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// Counter-based: the output is a pure function of (key, counter), so every
// trial / stream can be addressed directly without sequential state.
class Philox4x32 {
public:
    using block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t seed, std::uint64_t stream = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    block generate(std::uint64_t counter) const {
        block ctr{static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
                  static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        std::array<std::uint32_t, 2> key = key_;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return ctr;
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
};

/// Sequential view over a Philox stream. Gaussian draws use Box-Muller so the
/// sequence is identical across standard libraries.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0) : gen_(seed, stream) {}

    /// Uniform on the open interval (0, 1).
    double uniform() {
        if (pos_ == 4) {
            buf_ = gen_.generate(counter_++);
            pos_ = 0;
        }
        const std::uint32_t hi = buf_[pos_++];
        if (pos_ == 4) {
            buf_ = gen_.generate(counter_++);
            pos_ = 0;
        }
        const std::uint32_t lo = buf_[pos_++];
        const std::uint64_t bits = (std::uint64_t{hi} << 21) ^ (lo >> 11);  // 53 bits
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(phi);
        has_spare_ = true;
        return r * std::cos(phi);
    }

    /// Circularly-symmetric complex Gaussian with unit variance, CN(0, 1).
    std::complex<double> complex_normal() {
        const double s = std::sqrt(0.5);
        const double re = normal();
        const double im = normal();
        return {s * re, s * im};
    }

    double phase() { return 2.0 * std::numbers::pi * uniform(); }

private:
    Philox4x32 gen_;
    std::uint64_t counter_ = 0;
    Philox4x32::block buf_{};
    int pos_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Per-trial seed derivation used by the Monte-Carlo harness.
inline std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t trial) { return base_seed ^ trial; }

// Stream identifiers so that independent consumers of one trial seed never
// share random numbers.
namespace streams {
inline constexpr std::uint64_t channel = 1;
inline constexpr std::uint64_t random_beam = 2;
inline constexpr std::uint64_t randomization = 3;
inline constexpr std::uint64_t restarts = 4;
}  // namespace streams

}  // namespace symbiotic
