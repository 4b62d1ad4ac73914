#pragma once

#include <cstdint>

namespace scale_scribe {

// PCG32 (pcg_setseq_64_xsh_rr_32): 64-bit LCG state, xorshift-high +
// random-rotate output. Seeding and bounded draws follow the reference
// pcg32_srandom_r / pcg32_boundedrand_r so other implementations can
// reproduce the stream bit for bit.
class Pcg32 {
public:
    using result_type = std::uint32_t;

    Pcg32(std::uint64_t seed, std::uint64_t stream) : inc_((stream << 1u) | 1u) {
        next();
        state_ += seed;
        next();
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return 0xffffffffu; }

    result_type operator()() { return next(); }

    result_type next() {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // Uniform in [0, bound) by rejecting draws below 2^32 mod bound.
    result_type bounded(result_type bound) {
        const result_type threshold = (-bound) % bound;
        for (;;) {
            const result_type r = next();
            if (r >= threshold) return r % bound;
        }
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_;
};

// Stream id used for bootstrap resampling.
inline constexpr std::uint64_t kBootstrapStream = 0x5353;

}  // namespace scale_scribe
