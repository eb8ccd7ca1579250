// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <initializer_list>

#include "doctest.h"
#include "smp/special.hpp"

namespace {
constexpr double kGamma = 0.57721566490153286060651209008240;  // Euler–Mascheroni
constexpr double kPi = 3.14159265358979323846264338327950;
}  // namespace

TEST_CASE("digamma closed forms") {
  using smp::special::digamma;
  CHECK(digamma(1.0) == doctest::Approx(-kGamma).epsilon(1e-12));
  CHECK(digamma(2.0) == doctest::Approx(1.0 - kGamma).epsilon(1e-12));
  CHECK(digamma(0.5) == doctest::Approx(-kGamma - 2.0 * std::log(2.0)).epsilon(1e-12));
  // psi(n) = -gamma + sum_{k<n} 1/k
  double h = 0.0;
  for (int k = 1; k < 7; ++k) h += 1.0 / k;
  CHECK(digamma(7.0) == doctest::Approx(-kGamma + h).epsilon(1e-12));
}

TEST_CASE("digamma recurrence psi(x+1) = psi(x) + 1/x") {
  using smp::special::digamma;
  for (double x : {0.5, 1.0, 2.0, 5.0, 10.0}) {
    CHECK(std::abs(digamma(x + 1.0) - (digamma(x) + 1.0 / x)) < 1e-10);
  }
}

TEST_CASE("trigamma closed forms and recurrence") {
  using smp::special::trigamma;
  CHECK(trigamma(1.0) == doctest::Approx(kPi * kPi / 6.0).epsilon(1e-12));
  CHECK(trigamma(0.5) == doctest::Approx(kPi * kPi / 2.0).epsilon(1e-12));
  for (double x : {0.5, 1.0, 2.0, 5.0, 10.0}) {
    CHECK(std::abs(trigamma(x + 1.0) - (trigamma(x) - 1.0 / (x * x))) < 1e-10);
  }
}

TEST_CASE("trigamma is the derivative of digamma") {
  using smp::special::digamma;
  using smp::special::trigamma;
  const double h = 1e-6;
  for (double x : {0.3, 1.0, 2.5, 8.0, 20.0}) {
    const double fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
    CHECK(trigamma(x) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("non-positive arguments return NaN") {
  CHECK(std::isnan(smp::special::digamma(0.0)));
  CHECK(std::isnan(smp::special::digamma(-1.5)));
  CHECK(std::isnan(smp::special::trigamma(0.0)));
  CHECK(std::isnan(smp::special::trigamma(-0.25)));
}
