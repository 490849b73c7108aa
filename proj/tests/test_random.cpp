#include "apportion/random.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace apportion;

TEST_CASE("Philox4x64-10 known-answer vectors") {
  using B = Philox4x64::Block;
  CHECK(Philox4x64::generate(B{1, 0, 0, 0}, {0, 0}) ==
        B{0x02f4ba6408e4d89bULL, 0x3dd62b0b9ca8c5b2ULL, 0x1c8667a55d902e79ULL, 0x907d7a052fd5b4dcULL});
  CHECK(Philox4x64::generate(B{6, 0, 0, 0}, {0xfedcba9876543210ULL, 0x123456789abcdef0ULL}) ==
        B{0x332671f4638d8eb2ULL, 0x10e8e694a9075b58ULL, 0xcf996c641f974474ULL, 0x91328592eb735f86ULL});
  CHECK(Philox4x64::generate(B{2, 9, 3, 0}, {7, 1}) ==
        B{0x4568bdccb5eceb7cULL, 0x72836204a6a4969cULL, 0x8fc2e704c0e09188ULL, 0x13c91471eafcc91bULL});
}

TEST_CASE("streams are reproducible and distinct") {
  CHECK(derive_stream({3, 1, 2}) == derive_stream({3, 1, 2}));
  CHECK(derive_stream({3, 1, 2}) != derive_stream({3, 2, 1}));
  CHECK(derive_stream({3, 1}) != derive_stream({3, 1, 0}));

  RandomStream a(42, {7, 1}), b(42, {7, 1}), c(43, {7, 1}), d(42, {7, 2});
  std::set<std::uint64_t> firsts;
  for (int i = 0; i < 10; ++i) {
    const auto va = a();
    CHECK(va == b());
    firsts.insert(va);
    CHECK(va != c());
    CHECK(va != d());
  }
  CHECK(firsts.size() == 10);
}

TEST_CASE("uniform and normal draws have the right moments") {
  RandomStream rng(9, {1});
  const int n = 200000;
  double su = 0, su2 = 0, sz = 0, sz2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    su += u;
    su2 += u * u;
    const double z = rng.normal();
    sz += z;
    sz2 += z * z;
  }
  CHECK(std::abs(su / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(su2 / n - 1.0 / 3) < 0.005);
  CHECK(std::abs(sz / n) < 4 / std::sqrt(double(n)));
  CHECK(std::abs(sz2 / n - 1.0) < 4 * std::sqrt(2.0 / n));
}

TEST_CASE("log-gamma variates") {
  RandomStream rng(10, {2});
  for (double shape : {0.05, 0.2, 1.0, 3.5}) {
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double lg = rng.log_gamma_variate(shape);
      REQUIRE(std::isfinite(lg));
      const double g = std::exp(lg);
      s += g;
      s2 += g * g;
    }
    // Gamma(shape, 1): mean = variance = shape.
    const double mean = s / n;
    CHECK(std::abs(mean - shape) < 5 * std::sqrt(shape / n));
    CHECK(std::abs((s2 / n - mean * mean) - shape) < 0.05 * shape + 0.01);
  }
}
