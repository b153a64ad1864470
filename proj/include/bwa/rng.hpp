#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace bwa {

// splitmix64 step; used both for seeding and for deriving child seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seeded random stream (xoshiro256++). The only contract callers may rely
/// on is bit-reproducibility: the same seed yields the same draw sequence.
/// Streams are cheap to construct; parallel work derives one child stream
/// per work unit instead of sharing a stream across threads.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    /// Child stream for a work unit addressed by `path` (e.g. {cell, rep}).
    static RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        std::uint64_t h = seed;
        for (std::uint64_t component : path) {
            std::uint64_t mix = h ^ (component + 0x9E3779B97F4A7C15ULL);
            h = splitmix64(mix);
        }
        return RngStream(h);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        ++position_;
        return result;
    }

    /// Uniform draw in (0,1]; 53-bit resolution.
    double next_uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal draw (Box-Muller, spare cached).
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double next_normal(double mu, double sigma) {
        if (!(sigma >= 0.0)) throw std::domain_error("normal draw: sigma must be >= 0");
        return mu + sigma * next_normal();
    }

    void fill_normal(std::vector<double>& out, double mu, double sigma) {
        if (!(sigma >= 0.0)) throw std::domain_error("normal draw: sigma must be >= 0");
        for (auto& x : out) x = mu + sigma * next_normal();
    }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // rejection sampling keeps the draw unbiased
        const std::uint64_t limit = n * (UINT64_MAX / n);
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return draw % n;
    }

    std::uint64_t position() const { return position_; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4]{};
    std::uint64_t position_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace bwa
