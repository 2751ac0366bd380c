#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "dpie/dataset.hpp"
#include "dpie/estimators.hpp"

namespace dpie {

// Coefficient-recovery study: 50 uniform covariates on [1-sqrt(3), 1+sqrt(3)],
// fixed beta0 = (1..50)/50, and a bias vector delta0 with the trailing
// ceil(50 * zero_fraction) entries zeroed and the rest proportional to
// (1, 2, ...) rescaled so |delta0|_1 = c |beta0|_1. No treatment arm.
struct Study1Spec {
  int n = 1000;
  int m = 1000;
  double c = 1.0;
  double zero_fraction_delta = 0.5;
  uint64_t seed = 0;
};

struct Study1Truth {
  Eigen::VectorXd beta0;
  Eigen::VectorXd delta0;
};

std::pair<Dataset, Study1Truth> gen_study1(const Study1Spec& spec);

// ATE-recovery study: two uniform covariates on [-1.5, 1.5], Bernoulli(0.5)
// treatment on experiment rows, tau = 2. Setting S1 keeps the outcome model
// inside the cubic power basis; S2 replaces the linear term with exp(X2) so
// the working model is misspecified. Both settings share the same bias
// function on external rows.
enum class Study2Setting { S1, S2 };

struct Study2Spec {
  Study2Setting setting = Study2Setting::S1;
  int n = 1000;
  int m = 1000;
  uint64_t seed = 0;
};

std::pair<Dataset, double> gen_study2(const Study2Spec& spec);

// noise-free outcome means, shared with the generators
double study1_mean(const Eigen::RowVectorXd& x, const Study1Truth& truth, double s);
double study2_mean(Study2Setting setting, double x1, double x2, double a, double s);

struct MCMetrics {
  double abs_bias = 0.0;       // |mean(tau_hat) - tau|
  double true_var = 0.0;       // sample variance of tau_hat
  double mse_tau = 0.0;        // mean (tau_hat - tau)^2
  double mean_est_var = 0.0;   // mean se^2
  double coverage = 0.0;       // fraction of CIs containing tau
  double mse_beta = 0.0;       // mean over replicates of the root-mean-square
                               // coefficient error (study 1)
  double pct_over_select = 0.0;
  double pct_under_select = 0.0;
  int T = 0;
  int n_failed = 0;
  bool valid = true;           // false when more than 10% of replicates failed
};

struct HarnessConfig {
  BasisSpec mu_spec;        // study 2 / real data; study 1 always uses the
  BasisSpec b_spec;         //   identity basis (q = 1, no cross terms)
  BasisSpec inclusion;      // BPP inclusion-probability basis
  CVPlan plan;
  PenaltyConfig penalty;
  MatchSpec match;
  int jobs = 1;
};

HarnessConfig default_harness_config();

using StudySpec = std::variant<Study1Spec, Study2Spec>;

// per-replicate raw outcome, before aggregation
struct ReplicateRecord {
  bool ok = false;
  double tau_hat = 0.0;
  double se = 0.0;
  bool covered = false;
  double mse_beta = 0.0;
  bool over_select = false;
  bool under_select = false;
};

// deterministic fold over replicate index; failed replicates are excluded
// from every mean and counted
MCMetrics aggregate_replicates(const std::vector<ReplicateRecord>& reps,
                               double tau, bool is_study1);

// Replicate r (0-based) is generated with seed = base_seed xor r. A replicate
// whose fit fails or does not converge is excluded from the means and counted
// in n_failed; more than 10% failures invalidates the run.
std::map<Method, MCMetrics> run_monte_carlo(const StudySpec& study,
                                            const std::vector<Method>& methods,
                                            int T, uint64_t base_seed,
                                            const HarnessConfig& cfg);

}  // namespace dpie
