#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "fsloc/rng.hpp"

using namespace fsloc;

TEST_CASE("same seed replays the stream") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    differs |= x != c.next();
  }
  CHECK(differs);
}

TEST_CASE("uniform and normal moments") {
  Rng r(5);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(std::abs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(sn / n) < 5 / std::sqrt(double(n)));
  CHECK(std::abs(sn2 / n - 1.0) < 0.02);
}

TEST_CASE("below is uniform over its range") {
  Rng r(9);
  const int n = 70000, k = 7;
  std::vector<int> hits(k, 0);
  for (int i = 0; i < n; ++i) ++hits[r.below(k)];
  const double p = 1.0 / k, sd = std::sqrt(n * p * (1 - p));
  for (int h : hits) CHECK(std::abs(h - n * p) < 4 * sd);
}

TEST_CASE("choose draws distinct indices") {
  Rng r(3);
  for (int t = 0; t < 50; ++t) {
    const auto v = r.choose(10, 6);
    REQUIRE(v.size() == 6);
    CHECK(std::set<std::size_t>(v.begin(), v.end()).size() == 6);
    CHECK(*std::max_element(v.begin(), v.end()) < 10);
  }
  CHECK(r.choose(4, 4).size() == 4);
}

TEST_CASE("derived seeds are independent of each other and reproducible") {
  CHECK(derive_seed(1, "episodes") == derive_seed(1, "episodes"));
  CHECK(derive_seed(1, "episodes") != derive_seed(1, "split"));
  CHECK(derive_seed(1, "episodes") != derive_seed(2, "episodes"));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(7, i));
  CHECK(seen.size() == 1000);
}
