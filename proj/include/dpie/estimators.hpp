#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dpie/basis.hpp"
#include "dpie/dataset.hpp"
#include "dpie/matching.hpp"
#include "dpie/solver.hpp"
#include "dpie/tuning.hpp"

namespace dpie {

inline constexpr double kZ975 = 1.959964;

enum class Method { DPIE, SPIE, RE, MBA, BPP };
std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct ATEResult {
  double tau_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int n_selected_mu = 0;
  int n_selected_bias = 0;
  Method method = Method::DPIE;
  bool has_lambda = false;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool converged = true;
  std::string note;  // caveats: heuristic baseline se, m=0 fallback, clipping
};

// Everything the Monte Carlo harness needs beyond the headline numbers.
struct EstimatorOutput {
  ATEResult ate;
  Eigen::VectorXd theta_refit;              // over design columns
  std::vector<Eigen::Index> active_mu;      // selected mu-basis columns
  std::vector<Eigen::Index> active_bias;    // selected bias columns
  std::vector<Eigen::Index> mu_cols;        // all mu-basis columns, in order
  std::vector<Eigen::Index> bias_cols;      // all bias columns, in order
  CVResult cv;
  FitResult fit;
};

// Double-penalty estimator: assemble design, pick (lambda1, lambda2) by
// cross-validation, fit, refit OLS on the selected support, and read the
// treatment coefficient. With m = 0 this reduces to the experiment-only fit.
EstimatorOutput dpie_full(const Dataset& ds, const BasisSpec& mu_spec,
                          const BasisSpec& b_spec, const CVPlan& plan,
                          const PenaltyConfig& cfg);
ATEResult dpie(const Dataset& ds, const BasisSpec& mu_spec, const BasisSpec& b_spec,
               const CVPlan& plan, const PenaltyConfig& cfg);

// Same pipeline with sc forced to 1 (a single shared penalty level).
EstimatorOutput spie_full(const Dataset& ds, const BasisSpec& mu_spec,
                          const BasisSpec& b_spec, const CVPlan& plan,
                          const PenaltyConfig& cfg);
ATEResult spie(const Dataset& ds, const BasisSpec& mu_spec, const BasisSpec& b_spec,
               const CVPlan& plan, const PenaltyConfig& cfg);

// Discards external controls and fits the penalized ANCOVA on S=1 rows.
EstimatorOutput re_only_full(const Dataset& ds, const BasisSpec& mu_spec,
                             const CVPlan& plan, const PenaltyConfig& cfg);
ATEResult re_only(const Dataset& ds, const BasisSpec& mu_spec, const CVPlan& plan,
                  const PenaltyConfig& cfg);

struct VarianceReport {
  double v_combined = 0.0;   // plug-in variance of the combined-data tau-hat
  double v_re_only = 0.0;    // plug-in variance of the experiment-only tau-hat
  double sigma2_hat = 0.0;
  bool ec_gram_singular = false;
};

// Influence-function plug-in variances for the treatment coordinate from
// sample moment matrices over the active columns. The combined-data bracket
// adds a positive semidefinite external-control Schur complement to the
// experiment-only moment matrix, so v_combined <= v_re_only by construction.
VarianceReport plugin_variance(const DesignMatrix& D, const Eigen::VectorXd& y,
                               const std::vector<Eigen::Index>& active);

// Three-stage matching baseline with a scalar bias correction: treated rows
// match concurrent controls, concurrent controls match external controls to
// measure the shift, and leftover treated rows match the unused externals.
ATEResult mba_estimate(const Dataset& ds, const MatchSpec& spec);

// Power-prior baseline in its Gaussian-likelihood form: external rows are
// downweighted by the estimated inclusion probability P(S=1|X) inside a
// weighted least-squares ANCOVA without bias terms.
ATEResult bpp_estimate(const Dataset& ds, const BasisSpec& inclusion_basis);

// pieces of bpp_estimate, exposed so the degenerate-weight cases are testable
Eigen::VectorXd logistic_inclusion_weights(const Dataset& ds,
                                           const BasisSpec& inclusion_basis,
                                           bool* clipped = nullptr);
ATEResult bpp_weighted_ls(const Dataset& ds, const BasisSpec& basis,
                          const Eigen::VectorXd& weights);

}  // namespace dpie
