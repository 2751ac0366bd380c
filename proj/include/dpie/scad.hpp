#pragma once

namespace dpie {

// SCAD penalty derivative P'(t) for t >= 0:
//   lambda                          t <= lambda
//   (a*lambda - t) / (a - 1)        lambda < t < a*lambda
//   0                               t >= a*lambda
// Requires a > 2.
double scad_derivative(double t, double lambda, double a);

// SCAD penalty value, the antiderivative of scad_derivative with P(0)=0:
//   lambda*t                                    on [0, lambda]
//   (2a*lambda*t - t^2 - lambda^2)/(2(a-1))     on (lambda, a*lambda]
//   lambda^2 (a+1)/2                            beyond a*lambda
double scad_value(double t, double lambda, double a);

// Exact global minimizer of the scalar objective
//   h(theta) = v/2 * theta^2 - z*theta + P_lambda(|theta|),  v > 0.
// Each penalty branch contributes one clamped stationary candidate; the
// candidates are compared by objective value, so the result is exact even
// when the middle branch is non-convex (v*(a-1) <= 1). Ties resolve to the
// smaller |theta|.
double scad_univariate_update(double z, double v, double lambda, double a);

}  // namespace dpie
