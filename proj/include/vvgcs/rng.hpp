#ifndef VVGCS_RNG_HPP
#define VVGCS_RNG_HPP

// Counter-based random numbers (Philox4x32-10).
//
// A stream is identified by (seed, stream id). The seed is the Philox key;
// the stream id occupies the upper 64 bits of the 128-bit counter and the
// block index the lower 64 bits, so distinct stream ids under one seed map
// to disjoint counter ranges and can never overlap.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace vvgcs {

class PhiloxEngine {
public:
    using result_type = std::uint32_t;

    PhiloxEngine(std::uint64_t seed, std::uint64_t stream_id) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;

    // Raw block function; exposed for known-answer tests.
    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                              std::array<std::uint32_t, 2> key) noexcept;

private:
    void refill() noexcept;

    std::array<std::uint32_t, 2> key_{};
    std::uint64_t stream_id_ = 0;
    std::uint64_t block_index_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    unsigned used_ = 4;
};

// 64-bit FNV-1a, used to turn substream names into ids.
std::uint64_t hash_name(std::string_view name) noexcept;

// Combines a path of ids (e.g. {hash("channel"), batch}) into one stream id.
std::uint64_t stream_id(std::initializer_list<std::uint64_t> path) noexcept;

inline PhiloxEngine make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    return PhiloxEngine(seed, stream_id(path));
}

}  // namespace vvgcs

#endif  // VVGCS_RNG_HPP
