#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "bsdeopt/philox.hpp"

using namespace bsdeopt;

// Published known-answer vectors for philox4x32-10 (Random123 kat_vectors).
TEST_CASE("philox4x32-10 known-answer vectors") {
  {
    auto o = Philox4x32::run({0u, 0u, 0u, 0u}, {0u, 0u});
    CHECK(o[0] == 0x6627e8d5u);
    CHECK(o[1] == 0xe169c58du);
    CHECK(o[2] == 0xbc57ac4cu);
    CHECK(o[3] == 0x9b00dbd8u);
  }
  {
    auto o = Philox4x32::run({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                             {0xffffffffu, 0xffffffffu});
    CHECK(o[0] == 0x408f276du);
    CHECK(o[1] == 0x41c83b0eu);
    CHECK(o[2] == 0xa20bc7c6u);
    CHECK(o[3] == 0x6d5451fdu);
  }
  {
    auto o = Philox4x32::run({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                             {0xa4093822u, 0x299f31d0u});
    CHECK(o[0] == 0xd16cfe09u);
    CHECK(o[1] == 0x94fdccebu);
    CHECK(o[2] == 0x5001e420u);
    CHECK(o[3] == 0x24126ea1u);
  }
}

TEST_CASE("normals are addressable and order-independent") {
  // Same address twice -> identical bits.
  CHECK(philox_normal(42, 7, 3, 1) == philox_normal(42, 7, 3, 1));
  // Different seed/path/step/component all decorrelate the stream.
  CHECK(philox_normal(42, 7, 3, 0) != philox_normal(43, 7, 3, 0));
  CHECK(philox_normal(42, 7, 3, 0) != philox_normal(42, 8, 3, 0));
  CHECK(philox_normal(42, 7, 3, 0) != philox_normal(42, 7, 4, 0));

  // Generating a block in shuffled order reproduces in-order generation.
  struct Addr { std::uint64_t p; std::uint32_t k, j; };
  std::vector<Addr> addrs;
  for (std::uint64_t p = 0; p < 20; ++p)
    for (std::uint32_t k = 0; k < 20; ++k)
      for (std::uint32_t j = 0; j < 2; ++j) addrs.push_back({p, k, j});
  std::vector<double> in_order(addrs.size());
  for (std::size_t i = 0; i < addrs.size(); ++i)
    in_order[i] = philox_normal(9, addrs[i].p, addrs[i].k, addrs[i].j);

  std::mt19937 rng(123);
  std::vector<std::size_t> perm(addrs.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  for (auto i : perm)
    CHECK(philox_normal(9, addrs[i].p, addrs[i].k, addrs[i].j) == in_order[i]);
}

TEST_CASE("normal moments at five standard errors") {
  const int paths = 4000, steps = 50;
  const std::size_t count = std::size_t{paths} * steps;
  double sum = 0, sum2 = 0, sum3 = 0, sum4 = 0;
  for (int p = 0; p < paths; ++p)
    for (int k = 0; k < steps; ++k) {
      const double z = philox_normal(2024, p, k, 0);
      sum += z;
      sum2 += z * z;
      sum3 += z * z * z;
      sum4 += z * z * z * z;
    }
  const double inv = 1.0 / static_cast<double>(count);
  const double mean = sum * inv;
  const double var = sum2 * inv - mean * mean;
  const double skew = sum3 * inv;
  const double kurt = sum4 * inv;
  const double root_n = std::sqrt(static_cast<double>(count));
  CHECK(std::abs(mean) < 5.0 / root_n);
  CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0) / root_n);
  CHECK(std::abs(skew) < 5.0 * std::sqrt(15.0) / root_n);   // Var(z^3) = 15
  CHECK(std::abs(kurt - 3.0) < 5.0 * std::sqrt(96.0) / root_n);  // Var(z^4) = 96

  // Components of a pair are uncorrelated (Box-Muller pairs share a radius,
  // so check the cross moment explicitly).
  double cross = 0;
  for (int p = 0; p < paths; ++p)
    for (int k = 0; k < steps; ++k) {
      auto z = philox_normal_pair(2024, p, k, 0);
      cross += z[0] * z[1];
    }
  CHECK(std::abs(cross * inv) < 5.0 / root_n);
}
