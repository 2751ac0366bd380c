#pragma once

#include <Eigen/Dense>
#include <set>
#include <vector>

#include "dpie/basis.hpp"

namespace dpie {

// Two independent SCAD penalty levels: lambda1 on the outcome-model group
// (intercept/treatment/mu columns, minus exemptions), lambda2 on the bias
// group. Intercept and treatment are exempt by default so the target
// coefficient is never shrunk.
struct PenaltyConfig {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double a = 3.7;
  std::set<ColumnGroup> exempt = {ColumnGroup::intercept, ColumnGroup::treatment};
  double tol = 1e-7;
  int max_sweeps = 10000;
  int n_starts = 3;
};

struct FitResult {
  Eigen::VectorXd theta;                  // original column scale, length K
  std::vector<Eigen::Index> active_beta;  // nonzero non-bias coordinates
  std::vector<Eigen::Index> active_delta; // nonzero bias coordinates
  std::vector<double> objective_trace;    // after each full sweep
  bool converged = false;
  int n_sweeps = 0;
  double objective = 0.0;                 // final trace value
};

// Minimizes  sum_i (y_i - p_i' theta)^2 + N * sum_j P_{lambda(j)}(|theta_j|)
// by cyclic coordinate descent. Penalized columns are standardized to mean 0
// and unit sample variance internally and the penalty applies on that scale;
// reported coefficients are back-transformed. Exempt columns take exact
// unpenalized least-squares steps. All-zero (degenerate) columns are pinned
// at zero. Multi-start order: warm start when given, then zero, ridge,
// jittered zeros; the lowest final objective wins.
FitResult fit_penalized_ls(const DesignMatrix& D, const Eigen::VectorXd& y,
                           const PenaltyConfig& cfg,
                           const Eigen::VectorXd* warm_start = nullptr);

// Objective on the original coefficient scale. Matches the solver's internal
// objective exactly when the penalized columns already have sample mean 0 and
// variance 1.
double penalized_objective(const DesignMatrix& D, const Eigen::VectorXd& y,
                           const PenaltyConfig& cfg, const Eigen::VectorXd& theta);

// Smallest penalty levels that zero out every penalized coefficient,
// per group, after fitting the exempt columns alone. Returned as
// (mu-group max, bias-group max); 0 for an empty group.
std::pair<double, double> lambda_max_by_group(const DesignMatrix& D,
                                              const Eigen::VectorXd& y,
                                              const PenaltyConfig& cfg);

struct RefitResult {
  Eigen::VectorXd theta;              // full length, zero off the active set
  Eigen::MatrixXd cov;                // |active| x |active|, ordered as active
  std::vector<Eigen::Index> active;   // sorted, deduplicated
  double sigma2 = 0.0;                // RSS / (N - |active|)
  double rss = 0.0;
};

// OLS on the active columns; throws on rank deficiency naming the column.
RefitResult refit_ols(const DesignMatrix& D, const Eigen::VectorXd& y,
                      std::vector<Eigen::Index> active);

}  // namespace dpie
