#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdint>
#include <set>
#include <vector>

#include "naturalmos/rng.hpp"

using naturalmos::RngStream;
using naturalmos::SequentialRng;

TEST_CASE("counter rng is deterministic and purpose-separated", "[rng]") {
  RngStream a(42, "alpha");
  RngStream a2(42, "alpha");
  RngStream b(42, "beta");
  RngStream c(43, "alpha");

  for (std::size_t i = 0; i < 32; ++i) {
    REQUIRE(a.bits(i) == a2.bits(i));
  }
  std::size_t diff_purpose = 0, diff_seed = 0;
  for (std::size_t i = 0; i < 32; ++i) {
    if (a.bits(i) != b.bits(i)) ++diff_purpose;
    if (a.bits(i) != c.bits(i)) ++diff_seed;
  }
  REQUIRE(diff_purpose >= 30);
  REQUIRE(diff_seed >= 30);
}

TEST_CASE("indexed streams with the same purpose differ", "[rng]") {
  RngStream s0(7, "corpus", 0);
  RngStream s1(7, "corpus", 1);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < 32; ++i)
    if (s0.bits(i) != s1.bits(i)) ++diff;
  REQUIRE(diff >= 30);
}

TEST_CASE("uniform values stay inside their interval", "[rng]") {
  RngStream s(1234, "uniform-test");
  for (std::size_t i = 0; i < 1000; ++i) {
    const double u = s.uniform(i);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double v = s.uniform(i, -2.5, 4.0);
    REQUIRE(v >= -2.5);
    REQUIRE(v < 4.0);
  }
}

TEST_CASE("normal samples have roughly standard moments", "[rng]") {
  RngStream s(99, "normal-test");
  const std::size_t n = 40000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = s.normal(i);
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  // 5-sigma bands for n = 40000 draws.
  REQUIRE(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
  REQUIRE(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("below() respects its bound", "[rng]") {
  RngStream s(5, "below-test");
  for (std::size_t i = 0; i < 500; ++i) {
    REQUIRE(s.below(i, 7) < 7);
  }
  // every residue appears eventually
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < 500; ++i) seen.insert(s.below(i, 7));
  REQUIRE(seen.size() == 7);
}

TEST_CASE("sequential shuffle yields a permutation, deterministically", "[rng]") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;

  SequentialRng r1(11, "shuffle-test");
  SequentialRng r2(11, "shuffle-test");
  r1.shuffle(v);
  r2.shuffle(w);
  REQUIRE(v == w);

  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) REQUIRE(sorted[static_cast<std::size_t>(i)] == i);

  SequentialRng r3(12, "shuffle-test");
  auto u = sorted;
  r3.shuffle(u);
  REQUIRE(u != v);  // different seed, different permutation (overwhelmingly)
}

TEST_CASE("hash primitives are stable across runs", "[rng]") {
  // Snapshot values: locking these pins every derived random stream in the
  // project (corpus splits, dropout masks, shuffles). If one of these
  // changes, every seeded artifact changes with it.
  REQUIRE(naturalmos::detail::splitmix64(0) == 0xE220A8397B1DCDAFull);
  REQUIRE(naturalmos::detail::splitmix64(1234) == 0xBB0CF61B2F181CDBull);
  REQUIRE(naturalmos::detail::fnv1a64("") == 0xCBF29CE484222325ull);
  REQUIRE(naturalmos::detail::fnv1a64("naturalmos") == naturalmos::detail::fnv1a64("naturalmos"));
  REQUIRE(naturalmos::detail::fnv1a64("a") != naturalmos::detail::fnv1a64("b"));
}
