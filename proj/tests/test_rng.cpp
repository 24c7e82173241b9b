#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "coarse_forge/rng.hpp"
#include "doctest.h"

using namespace cforge;

// Known-answer vectors published with the Random123 reference implementation.
TEST_CASE("Philox4x32-10 known answers") {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  CHECK(Philox4x32::block(C{0, 0, 0, 0}, K{0, 0}) ==
        C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Philox4x32::block(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                          K{0xffffffffu, 0xffffffffu}) ==
        C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Philox4x32::block(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                          K{0xa4093822u, 0x299f31d0u}) ==
        C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are pure functions of (seed, path, tag)") {
  CounterStream a(42, 7, StreamTag::noise), b(42, 7, StreamTag::noise);
  for (int i = 0; i < 1000; ++i) CHECK(a.normal() == b.normal());

  // copies fork
  CounterStream c(1, 2, StreamTag::clock);
  c.normal();
  CounterStream d = c;
  CHECK(c.uniform() == d.uniform());
}

TEST_CASE("different seeds, paths and tags give different streams") {
  std::set<std::uint64_t> first;
  for (std::uint64_t seed : {0u, 1u})
    for (std::uint64_t path : {0u, 1u, 2u})
      for (auto tag : {StreamTag::noise, StreamTag::equilibrium, StreamTag::clock,
                       StreamTag::mcmc, StreamTag::bridge})
        first.insert(CounterStream(seed, path, tag).next_u64());
  CHECK(first.size() == 2 * 3 * 5);
  // path indices beyond 32 bits do not alias the low word
  CHECK(CounterStream(0, 5, StreamTag::noise).next_u64() !=
        CounterStream(0, 5 + (std::uint64_t{1} << 32), StreamTag::noise).next_u64());
}

TEST_CASE("seek replays a block") {
  CounterStream a(9, 0, StreamTag::noise);
  std::vector<std::uint64_t> v;
  for (int i = 0; i < 10; ++i) v.push_back(a.next_u64());
  a.seek(2);  // two u64 per block
  CHECK(a.next_u64() == v[4]);
  CHECK(a.next_u64() == v[5]);
}

TEST_CASE("uniforms lie in the open unit interval with the right moments") {
  CounterStream s(3, 0, StreamTag::noise);
  const int n = 1'000'000;
  double sum = 0.0, sum2 = 0.0, lo = 1.0, hi = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    sum += u;
    sum2 += u * u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  const double mean = sum / n, var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(var - 1.0 / 12.0) < 0.002);
}

TEST_CASE("normals have unit variance and light tails") {
  CounterStream s(4, 1, StreamTag::equilibrium);
  const int n = 1'000'000;
  double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sum2 += z * z;
    sum4 += z * z * z * z;
  }
  CHECK(std::abs(sum / n) < 3.0 / std::sqrt(n));
  CHECK(std::abs(sum2 / n - 1.0) < 3.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(sum4 / n - 3.0) < 3.0 * std::sqrt(96.0 / n));
}
