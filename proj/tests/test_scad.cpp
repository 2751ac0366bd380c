#include <doctest.h>

#include <cmath>

#include "dpie/rng.hpp"
#include "dpie/scad.hpp"

using dpie::scad_derivative;
using dpie::scad_univariate_update;
using dpie::scad_value;

TEST_CASE("derivative branch values") {
  CHECK(scad_derivative(0.5, 1.0, 3.7) == 1.0);           // flat branch returns lambda
  CHECK(scad_derivative(4.0, 1.0, 3.7) == 0.0);           // beyond a*lambda
  CHECK(scad_derivative(2.0, 1.0, 3.7) ==
        doctest::Approx(1.7 / 2.7).epsilon(1e-12));       // middle branch
  CHECK_THROWS(scad_derivative(1.0, 1.0, 2.0));           // a must exceed 2
}

TEST_CASE("value branch values") {
  CHECK(scad_value(0.0, 1.0, 3.7) == 0.0);
  CHECK(scad_value(0.0, 2.5, 2.1) == 0.0);
  CHECK(scad_value(2.0, 2.0, 3.7) == doctest::Approx(4.0).epsilon(1e-12));  // lambda*t at the knot
  CHECK(scad_value(10.0, 1.0, 3.7) == doctest::Approx(2.35).epsilon(1e-12));  // lambda^2(a+1)/2
}

TEST_CASE("derivative is continuous at both knots") {
  const double a = 3.7;
  for (const double lambda : {0.3, 1.0, 2.5}) {
    const double h = 1e-9;
    CHECK(std::fabs(scad_derivative(lambda - h, lambda, a) -
                    scad_derivative(lambda + h, lambda, a)) < 1e-6 * lambda);
    CHECK(std::fabs(scad_derivative(a * lambda - h, lambda, a) -
                    scad_derivative(a * lambda + h, lambda, a)) < 1e-6 * lambda);
  }
}

TEST_CASE("value is continuous, non-decreasing, and integrates the derivative") {
  const double a = 3.7, lambda = 1.3;
  double prev = 0.0;
  for (double t = 0.0; t <= a * lambda + 1.0; t += 0.01) {
    const double v = scad_value(t, lambda, a);
    CHECK(v >= prev - 1e-14);
    prev = v;
  }
  // central finite differences away from the knots
  const double h = 1e-6;
  for (const double t : {0.4, 0.9, 1.8, 3.0, 4.5, 5.5}) {
    if (std::fabs(t - lambda) < 0.05 || std::fabs(t - a * lambda) < 0.05) continue;
    const double fd =
        (scad_value(t + h, lambda, a) - scad_value(t - h, lambda, a)) / (2 * h);
    CHECK(std::fabs(fd - scad_derivative(t, lambda, a)) < 1e-4);
  }
}

namespace {

double objective(double theta, double z, double v, double lambda, double a) {
  return 0.5 * v * theta * theta - z * theta +
         scad_value(std::fabs(theta), lambda, a);
}

// brute-force scan at step 1e-6 over a window that provably brackets the
// minimizer (|theta*| <= |z|/v since the penalty is non-decreasing)
double grid_minimizer(double z, double v, double lambda, double a) {
  const double span = std::fabs(z) / v + 1.0;
  double best_t = 0.0, best_val = objective(0.0, z, v, lambda, a);
  const double step = 1e-6;
  for (double t = -span; t <= span; t += step) {
    const double val = objective(t, z, v, lambda, a);
    if (val < best_val) {
      best_val = val;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace

TEST_CASE("univariate update closed forms") {
  CHECK(scad_univariate_update(1.5, 2.0, 0.0, 3.7) == 0.75);  // no penalty
  // unbiasedness region: |z|/v beyond a*lambda returns plain least squares
  CHECK(scad_univariate_update(4.0, 1.0, 1.0, 3.7) == 4.0);
  CHECK(scad_univariate_update(-4.0, 1.0, 1.0, 3.7) == -4.0);
  // dominated by the penalty
  CHECK(scad_univariate_update(0.3, 1.0, 1.0, 3.7) == 0.0);
}

TEST_CASE("univariate update agrees with a fine grid scan") {
  const struct {
    double z, v, lambda, a;
  } cases[] = {
      {1.5, 1.0, 1.0, 3.7},  {0.8, 1.0, 1.0, 3.7},  {2.5, 1.0, 1.0, 3.7},
      {-1.7, 1.0, 1.0, 3.7}, {1.2, 0.5, 0.7, 3.7},  {3.0, 2.0, 0.4, 2.5},
      {0.9, 0.3, 1.1, 2.2},  {2.2, 1.0, 1.0, 2.05},
  };
  for (const auto& c : cases) {
    const double got = scad_univariate_update(c.z, c.v, c.lambda, c.a);
    const double oracle = grid_minimizer(c.z, c.v, c.lambda, c.a);
    CHECK(std::fabs(got - oracle) < 1e-5);
    // and never worse than the scan by objective value
    CHECK(objective(got, c.z, c.v, c.lambda, c.a) <=
          objective(oracle, c.z, c.v, c.lambda, c.a) + 1e-12);
  }
}

TEST_CASE("univariate update is a global minimizer on random cases") {
  dpie::Philox rng(2024);
  for (int i = 0; i < 200; ++i) {
    const double z = rng.uniform(-4, 4);
    const double v = rng.uniform(0.2, 3.0);
    const double lambda = rng.uniform(0.0, 2.0);
    const double a = rng.uniform(2.05, 5.0);
    const double got = scad_univariate_update(z, v, lambda, a);
    const double base = objective(got, z, v, lambda, a);
    for (double t = -5; t <= 5; t += 1e-3)
      CHECK(base <= objective(t, z, v, lambda, a) + 1e-10);
  }
}
