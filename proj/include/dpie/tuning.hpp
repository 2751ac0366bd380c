#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dpie/dataset.hpp"
#include "dpie/solver.hpp"

namespace dpie {

// Cross-validation plan over the penalty-ratio grid sc = lambda2/lambda1.
// For each sc a log-spaced lambda2 path is walked from the smallest value
// that zeroes every penalized coefficient down to lambda2_max * min_ratio.
struct CVPlan {
  int folds = 10;
  std::vector<double> sc_grid;  // empty -> default_sc_grid()
  int n_lambda = 50;
  double lambda_min_ratio = 1e-3;
  uint64_t seed = 0;
  // convergence tolerance for the warm-started path fits; the fit at the
  // selected pair always runs at the full PenaltyConfig tolerance
  double path_tol = 1e-5;
};

// 13 log-spaced ratios spanning [1e-2, 1e2]
std::vector<double> default_sc_grid();

struct FoldAssignment {
  std::vector<int> fold;  // per row, in 0..k-1
  int k = 0;
};

// Stratified by (A, S) so each fold sees treated-experiment,
// control-experiment and external rows whenever they exist.
// Deterministic given the seed.
FoldAssignment make_folds(const Dataset& ds, int k, uint64_t seed);
FoldAssignment make_folds(const Eigen::VectorXd& A, const Eigen::VectorXd& S,
                          int k, uint64_t seed);

struct CVCell {
  double sc = 1.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double mean_err = 0.0;
  double se = 0.0;
  bool valid = false;
};

struct CVResult {
  double best_lambda1 = 0.0;
  double best_lambda2 = 0.0;
  double best_err = 0.0;      // mean error of the selected cell
  std::vector<CVCell> table;  // sc-major, then lambda path order
  FoldAssignment folds_used;
};

// Held-out error is the mean squared prediction error of the penalized fit
// at that cell (the post-selection refit is only used for final estimates).
// A cell is invalid when no fold fit converges or a fold fit fails. The
// reported pair is the minimum-error cell, with near-ties (within a quarter
// standard error) resolved toward larger sc and then larger lambda2.
CVResult cv_select(const DesignMatrix& D, const Eigen::VectorXd& y,
                   const Dataset& ds, const CVPlan& plan,
                   const PenaltyConfig& cfg_base);

void write_cv_table_csv(const CVResult& result, const std::string& path);

}  // namespace dpie
