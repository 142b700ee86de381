#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

// Counter-based random numbers. Every random draw in the library comes from a
// Philox4x32-10 stream addressed by (seed, stream id), so replicates can be
// computed in any order or in parallel and still reproduce bit-for-bit on one
// platform. Cross-platform identity is not promised: the normal variates go
// through std::normal_distribution, whose algorithm is implementation-defined.

namespace rfm::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Philox4x32 with 10 rounds (Salmon et al., SC'11), exposed as a 64-bit
/// UniformRandomBitGenerator. The 128-bit counter is split into a 64-bit
/// block index (low words) and a 64-bit stream id (high words).
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32() : Philox4x32(0, 0) {}
  Philox4x32(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_{stream} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (lane_ == 2) {
      refill();
    }
    const auto lo = static_cast<std::uint64_t>(buffer_[2 * lane_]);
    const auto hi = static_cast<std::uint64_t>(buffer_[2 * lane_ + 1]);
    ++lane_;
    return lo | (hi << 32);
  }

  void discard(std::uint64_t n) noexcept {
    for (; n > 0; --n) {
      (*this)();
    }
  }

  /// The raw bijection; exposed for known-answer tests.
  static constexpr Block apply(Block ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t block_index() const noexcept { return block_; }

  friend bool operator==(const Philox4x32& a, const Philox4x32& b) noexcept {
    return a.key_ == b.key_ && a.stream_ == b.stream_ && a.block_ == b.block_ && a.lane_ == b.lane_;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  void refill() noexcept {
    const Block ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                    static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = apply(ctr, key_);
    ++block_;
    lane_ = 0;
  }

  Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Block buffer_{};
  int lane_ = 2;
};

using Engine = Philox4x32;

/// Stream id for a named purpose plus up to three integer coordinates.
inline constexpr std::uint64_t stream_id(std::string_view purpose, std::uint64_t a = 0,
                                         std::uint64_t b = 0, std::uint64_t c = 0) noexcept {
  std::uint64_t h = splitmix64(fnv1a(purpose));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return splitmix64(h ^ c);
}

/// Seed of replicate `index` in a run seeded with `seed`.
inline constexpr std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(seed ^ splitmix64(index + 0x5851F42D4C957F2Dull));
}

inline Engine make_engine(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0,
                          std::uint64_t b = 0, std::uint64_t c = 0) noexcept {
  return Engine(seed, stream_id(purpose, a, b, c));
}

}  // namespace rfm::rng
