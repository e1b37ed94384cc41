#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace sinelab {

/// Philox4x64-10 block function (Salmon et al., SC'11).
struct Philox4x64 {
    using counter_type = std::array<std::uint64_t, 4>;
    using key_type = std::array<std::uint64_t, 2>;

    static counter_type block(counter_type ctr, key_type key)
    {
        constexpr std::uint64_t m0 = 0xD2E7470EE14C6C93ULL;
        constexpr std::uint64_t m1 = 0xCA5A826395121157ULL;
        constexpr std::uint64_t w0 = 0x9E3779B97F4A7C15ULL;
        constexpr std::uint64_t w1 = 0xBB67AE8584CAA73BULL;
        for (int round = 0; round < 10; ++round) {
            const unsigned __int128 p0 = static_cast<unsigned __int128>(m0) * ctr[0];
            const unsigned __int128 p1 = static_cast<unsigned __int128>(m1) * ctr[2];
            const auto hi0 = static_cast<std::uint64_t>(p0 >> 64);
            const auto lo0 = static_cast<std::uint64_t>(p0);
            const auto hi1 = static_cast<std::uint64_t>(p1 >> 64);
            const auto lo1 = static_cast<std::uint64_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += w0;
            key[1] += w1;
        }
        return ctr;
    }
};

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Counter-based stream: (seed, stream_id) fixes the whole draw sequence.
/// Satisfies UniformRandomBitGenerator, so std distributions can consume it.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    result_type operator()()
    {
        if (pos_ == 4) {
            buffer_ = Philox4x64::block({block_, 0, 0, 0}, {seed_, stream_id_});
            ++block_;
            pos_ = 0;
        }
        return buffer_[pos_++];
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform in the open interval (0, 1).
    double uniform_open() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() { return normal_(*this); }

    /// Chi-distributed draw with `dof` degrees of freedom.
    double chi(double dof)
    {
        std::gamma_distribution<double> gamma(0.5 * dof, 2.0);
        return std::sqrt(gamma(*this));
    }

    /// Independent child stream, derived from this stream's identity only.
    RngStream child(std::uint64_t index) const
    {
        return RngStream(seed_, splitmix64(stream_id_ ^ splitmix64(index + 0x632BE59BD9B4E019ULL)));
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 4> buffer_{};
    int pos_ = 4;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace sinelab
