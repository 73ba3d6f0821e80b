#include <doctest.h>

#include <cmath>
#include <vector>

#include "couplemc/rng.hpp"

using couplemc::rng::NormalStream;

TEST_CASE("streams are deterministic and position-based") {
  NormalStream a(42, 7, 0), b(42, 7, 0);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("distinct paths and stream ids decorrelate") {
  NormalStream a(42, 7, 0), b(42, 8, 0), c(42, 7, 1);
  int equal_ab = 0, equal_ac = 0;
  for (int i = 0; i < 64; ++i) {
    const double va = a.next(), vb = b.next(), vc = c.next();
    equal_ab += va == vb;
    equal_ac += va == vc;
  }
  CHECK(equal_ab == 0);
  CHECK(equal_ac == 0);
}

TEST_CASE("normal moments") {
  NormalStream s(123, 0, 0);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0, sum3 = 0.0, sum4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.next();
    sum += z;
    sum2 += z * z;
    sum3 += z * z * z;
    sum4 += z * z * z * z;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(sum3 / n) < 5.0 * std::sqrt(15.0 / n));
  CHECK(std::abs(sum4 / n - 3.0) < 5.0 * std::sqrt(96.0 / n));
}

TEST_CASE("uniforms live strictly inside (0,1)") {
  NormalStream s(9, 1, 2);
  for (int i = 0; i < 100000; ++i) {
    const double u = s.next_uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}
