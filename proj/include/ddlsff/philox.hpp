#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace ddlsff {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123). Every
/// output block is a pure function of (key, counter), so independent streams
/// can be evaluated in any order or on any thread.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr const char* kAlgorithm = "philox4x32-10";

  static constexpr Counter block(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

  static constexpr Key key_from_seed(std::uint64_t seed) noexcept {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  }
};

/// Uniform double in [0, 1) from two 32-bit words (53 significant bits).
constexpr double uniform_from_bits(std::uint32_t a, std::uint32_t b) noexcept {
  const std::uint64_t bits = (std::uint64_t{a >> 5} << 26) | (b >> 6);
  return static_cast<double>(bits) * 0x1.0p-53;
}

/// Deterministic random source addressed by (seed, stream, index). Draw k of
/// element `index` in `stream` is fully determined by those values.
class RandomStream {
 public:
  constexpr RandomStream(std::uint64_t seed, std::uint32_t stream, std::uint32_t tag = 0) noexcept
      : key_(Philox4x32::key_from_seed(seed)), stream_(stream), tag_(tag) {}

  /// Two uniforms in [0,1) for element `index`, sub-draw `sub`.
  constexpr std::array<double, 2> uniforms(std::uint64_t index, std::uint32_t sub = 0) const noexcept {
    const auto lo = static_cast<std::uint32_t>(index);
    const auto hi = static_cast<std::uint32_t>(index >> 32);
    const auto out = Philox4x32::block({lo, hi ^ (sub << 16), stream_, tag_}, key_);
    return {uniform_from_bits(out[0], out[1]), uniform_from_bits(out[2], out[3])};
  }

  double uniform(std::uint64_t index, std::uint32_t sub = 0) const noexcept { return uniforms(index, sub)[0]; }

  /// Standard normal via Box-Muller (cosine branch) on the element's two uniforms.
  double normal(std::uint64_t index, std::uint32_t sub = 0) const noexcept {
    const auto [u1, u2] = uniforms(index, sub);
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  Philox4x32::Key key_;
  std::uint32_t stream_;
  std::uint32_t tag_;
};

}  // namespace ddlsff
