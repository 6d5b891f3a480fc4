#include "braess/delay.hpp"

#include <cmath>
#include <doctest.h>
#include <functional>
#include <random>

#include "braess/errors.hpp"
#include "oracles.hpp"

using namespace braess;
using oracles::integrate_delay;
using oracles::random_delay;

TEST_CASE("bpr evaluation") {
  BprDelay fn{10.0, 0.15, 4.0, 1000.0};
  CHECK(eval(fn, 0.0) == doctest::Approx(10.0));
  CHECK(eval(fn, 1000.0) == doctest::Approx(10.0 * 1.15));
  CHECK(eval(fn, 2000.0) == doctest::Approx(34.0));  // 10 * (1 + 0.15 * 16)
  CHECK_THROWS_AS(eval(fn, -1.0), InputError);
}

TEST_CASE("bpr handles non-integer exponents and zero flow") {
  BprDelay fn{1.0, 1.0, 2.7, 500.0};
  CHECK(eval(fn, 0.0) == doctest::Approx(1.0));
  CHECK(eval(fn, 500.0) == doctest::Approx(2.0));
  CHECK(beckmann(fn, 0.0) == 0.0);
}

TEST_CASE("bpr parameter validation") {
  auto check = [](double t0, double a, double b, double cap) {
    BprDelay fn{t0, a, b, cap};
    fn.validate();
  };
  CHECK_THROWS_AS(check(0.0, 0.15, 4.0, 1000.0), InputError);
  CHECK_THROWS_AS(check(1.0, -0.1, 4.0, 1000.0), InputError);
  CHECK_THROWS_AS(check(1.0, 0.15, 0.0, 1000.0), InputError);
  CHECK_THROWS_AS(check(1.0, 0.15, 4.0, 0.0), InputError);
  CHECK_NOTHROW(check(1.0, 0.0, 1.0, 1.0));
}

TEST_CASE("queue evaluation and continuity") {
  const double d0 = 0.002, alpha = 1e-5, s = 900.0;
  QueueDelay fn = QueueDelay::from_saturation(d0, alpha, s);
  CHECK(eval(fn, 0.0) == doctest::Approx(d0));
  // At the breakpoint the two branches agree up to the eps term.
  CHECK(eval(fn, s) == doctest::Approx(d0 + fn.eps * s));
  CHECK(eval(fn, 1800.0) == doctest::Approx(alpha * 1800.0 + fn.beta_h + fn.eps * 1800.0));
  const double just_below = eval(fn, std::nextafter(s, 0.0));
  CHECK(std::abs(eval(fn, s) - just_below) < 1e-12);
  CHECK_THROWS_AS(eval(fn, -5.0), InputError);
}

TEST_CASE("queue continuity invariant is enforced") {
  QueueDelay broken;
  broken.d0_h = 0.01;
  broken.alpha = 1e-5;
  broken.beta_h = 0.5;  // not d0 - alpha * s
  broken.s_vph = 900.0;
  CHECK_THROWS_AS(broken.validate(), InputError);
}

TEST_CASE("queue delay is non-decreasing") {
  QueueDelay fn = QueueDelay::from_saturation(0.004, 3e-5, 700.0);
  double prev = eval(fn, 0.0);
  for (double z = 10.0; z <= 3000.0; z += 10.0) {
    const double cur = eval(fn, z);
    CHECK(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("beckmann closed forms") {
  CHECK(beckmann(BprDelay{1.0, 1.0, 1.0, 1.0}, 2.0) == doctest::Approx(4.0));
  QueueDelay q = QueueDelay::from_saturation(0.002, 1e-5, 900.0);
  CHECK(beckmann(q, 0.0) == 0.0);
  // Quadrature oracle at twice the saturation rate.
  const double z = 2.0 * q.s_vph;
  CHECK(beckmann(q, z) == doctest::Approx(integrate_delay(q, z)).epsilon(1e-8));
}

TEST_CASE("beckmann matches quadrature and central differences") {
  std::mt19937_64 rng(20240817);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const DelayFunction fn = random_delay(rng);
    double z = 1.0 + 2999.0 * u(rng);
    const double h = 1e-3 * std::max(z, 1.0);
    // A central difference across the queue kink is only O(h); sample away
    // from it so the O(h^2) bound applies.
    if (const auto* q = std::get_if<QueueDelay>(&fn))
      while (std::abs(z - q->s_vph) <= 3.0 * h) z = 1.0 + 2999.0 * u(rng);

    const double numeric = integrate_delay(fn, z);
    const double exact = beckmann(fn, z);
    CHECK(exact == doctest::Approx(numeric).epsilon(1e-6));

    const double fd = (beckmann(fn, z + h) - beckmann(fn, z - h)) / (2.0 * h);
    CHECK(fd == doctest::Approx(eval(fn, z)).epsilon(1e-5));
  }
}

TEST_CASE("beckmann is convex") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const DelayFunction fn = random_delay(rng);
    const double step = 25.0;
    for (double z = step; z <= 2900.0; z += step) {
      const double second =
          beckmann(fn, z + step) - 2.0 * beckmann(fn, z) + beckmann(fn, z - step);
      CHECK(second >= -1e-9 * std::max(1.0, std::abs(beckmann(fn, z))));
    }
  }
}
