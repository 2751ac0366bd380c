#include "dpie/scad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dpie {

namespace {

void check_shape(double a) {
  if (!(a > 2.0)) throw std::invalid_argument("SCAD shape parameter a must exceed 2");
}

}  // namespace

double scad_derivative(double t, double lambda, double a) {
  check_shape(a);
  if (t <= lambda) return lambda;
  if (t >= a * lambda) return 0.0;
  return (a * lambda - t) / (a - 1.0);
}

double scad_value(double t, double lambda, double a) {
  check_shape(a);
  if (t <= lambda) return lambda * t;
  if (t >= a * lambda) return lambda * lambda * (a + 1.0) / 2.0;
  return (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0));
}

double scad_univariate_update(double z, double v, double lambda, double a) {
  check_shape(a);
  if (!(v > 0.0)) throw std::invalid_argument("curvature v must be positive");
  if (lambda == 0.0) return z / v;

  const double zeta = std::fabs(z);
  const double sign = (z >= 0.0) ? 1.0 : -1.0;
  const auto obj = [&](double t) {
    return 0.5 * v * t * t - zeta * t + scad_value(t, lambda, a);
  };

  double best_t = 0.0;
  double best_val = obj(0.0);
  const auto consider = [&](double t) {
    const double val = obj(t);
    if (val < best_val || (val == best_val && t < best_t)) {
      best_val = val;
      best_t = t;
    }
  };

  // branch [0, lambda]: soft threshold
  consider(std::clamp((zeta - lambda) / v, 0.0, lambda));

  // branch [lambda, a*lambda]: stationary point if convex there,
  // otherwise the endpoints carry the minimum
  const double denom = v * (a - 1.0) - 1.0;
  if (denom > 0.0) {
    consider(std::clamp((zeta * (a - 1.0) - a * lambda) / denom, lambda, a * lambda));
  } else {
    consider(lambda);
    consider(a * lambda);
  }

  // branch [a*lambda, inf): flat penalty, plain least squares
  consider(std::max(zeta / v, a * lambda));

  return sign * best_t;
}

}  // namespace dpie
