#pragma once

#include <cstdint>
#include <limits>

namespace icdesign {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// What a substream is used for. Distinct tags never share draws.
enum class StreamPurpose : std::uint32_t {
    Assignment = 1,
    Outcomes = 2,
    TieBreak = 3,
    CellOutcomes = 4,
    Profiles = 5,
};

/// Counter-based generator: the n-th output is a pure function of (key, n),
/// so a replication's draws never depend on which thread ran it or in which
/// order. Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit constexpr CounterRng(std::uint64_t key) : key_(key) {}

    /// Substream for (master_seed, replication, block, purpose[, lane]).
    static constexpr CounterRng substream(std::uint64_t master_seed, std::uint64_t replication,
                                          std::uint64_t block, StreamPurpose purpose,
                                          std::uint64_t lane = 0) {
        std::uint64_t k = detail::mix64(master_seed ^ 0x6A09E667F3BCC908ULL);
        k = detail::mix64(k ^ (replication * detail::kGolden));
        k = detail::mix64(k ^ ((block << 32) | static_cast<std::uint64_t>(purpose)));
        k = detail::mix64(k ^ (lane + 0x3C6EF372FE94F82BULL));
        return CounterRng(k);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() {
        ++counter_;
        return detail::mix64(key_ + counter_ * detail::kGolden);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    std::uint64_t key() const { return key_; }
    std::uint64_t position() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace icdesign
