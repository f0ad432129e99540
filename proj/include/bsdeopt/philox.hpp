#pragma once

// Philox4x32-10 counter-based generator (Salmon et al. construction) plus a
// Box-Muller layer producing standard normals addressed by (seed, path, step,
// component).  Because every draw is a pure function of its address, path
// generation can run in any order -- or in parallel -- and still reproduce the
// same numbers bit for bit.

#include <array>
#include <cmath>
#include <cstdint>

namespace bsdeopt {

struct Philox4x32 {
  static constexpr std::uint32_t M0 = 0xD2511F53u;
  static constexpr std::uint32_t M1 = 0xCD9E8D57u;
  static constexpr std::uint32_t W0 = 0x9E3779B9u;
  static constexpr std::uint32_t W1 = 0xBB67AE85u;

  using ctr_t = std::array<std::uint32_t, 4>;
  using key_t = std::array<std::uint32_t, 2>;

  static ctr_t round(const ctr_t& c, const key_t& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }

  /// Ten-round block cipher; the published known-answer vectors pin this down.
  static ctr_t run(ctr_t c, key_t k) {
    for (int i = 0; i < 10; ++i) {
      if (i > 0) { k[0] += W0; k[1] += W1; }
      c = round(c, k);
    }
    return c;
  }
};

namespace detail {
inline constexpr double kTwoPi = 6.283185307179586476925286766559;
}

/// Two independent N(0,1) draws for the address (seed, path, step, block).
inline std::array<double, 2> philox_normal_pair(std::uint64_t seed,
                                                std::uint64_t path,
                                                std::uint32_t step,
                                                std::uint32_t block) {
  const Philox4x32::ctr_t c = {step, block,
                               static_cast<std::uint32_t>(path),
                               static_cast<std::uint32_t>(path >> 32)};
  const Philox4x32::key_t k = {static_cast<std::uint32_t>(seed),
                               static_cast<std::uint32_t>(seed >> 32)};
  const auto o = Philox4x32::run(c, k);
  const std::uint64_t a = (static_cast<std::uint64_t>(o[1]) << 32) | o[0];
  const std::uint64_t b = (static_cast<std::uint64_t>(o[3]) << 32) | o[2];
  // u1 in (0,1] so the log is finite; u2 in [0,1).
  const double u1 = 1.0 - static_cast<double>(a >> 11) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  const double rad = std::sqrt(-2.0 * std::log(u1));
  return {rad * std::cos(detail::kTwoPi * u2), rad * std::sin(detail::kTwoPi * u2)};
}

/// Single N(0,1) draw, component j of the (path, step) cell.
inline double philox_normal(std::uint64_t seed, std::uint64_t path,
                            std::uint32_t step, std::uint32_t j) {
  return philox_normal_pair(seed, path, step, j / 2)[j % 2];
}

}  // namespace bsdeopt
