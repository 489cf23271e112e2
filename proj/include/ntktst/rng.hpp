#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace ntktst {

// Philox4x32-10 counter-based generator. Every (seed, stream) pair gives an
// independent sequence, so parallel trials can draw without sharing state.
class Philox {
public:
    using result_type = std::uint32_t;

    explicit Philox(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          ctr_{0, 0, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)} {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (idx_ == 4) {
            out_ = round10(ctr_, key_);
            bump();
            idx_ = 0;
        }
        return out_[idx_++];
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept {
        std::uint64_t hi = (*this)() >> 5;
        std::uint64_t lo = (*this)() >> 6;
        return (static_cast<double>(hi) * 67108864.0 + static_cast<double>(lo)) * 0x1.0p-53;
    }

    void discard(std::uint64_t n) noexcept {
        while (n-- > 0) (*this)();
    }

private:
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Block round10(Block c, Key k) noexcept {
        constexpr std::uint64_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
        constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
        for (int r = 0; r < 10; ++r) {
            std::uint64_t p0 = m0 * c[0];
            std::uint64_t p1 = m1 * c[2];
            c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
            k[0] += w0;
            k[1] += w1;
        }
        return c;
    }

    void bump() noexcept {
        if (++ctr_[0] == 0) ++ctr_[1];
    }

    Key key_;
    Block ctr_;
    Block out_{};
    int idx_ = 4;
};

// SplitMix64 finalizer chained over the parts; used to derive per-trial seeds.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts) noexcept {
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(master);
    for (auto p : parts) h = mix(h ^ mix(p));
    return h;
}

}  // namespace ntktst
