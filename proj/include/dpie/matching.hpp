#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dpie/dataset.hpp"

namespace dpie {

struct MatchSpec {
  enum class Distance { mahalanobis, euclidean };
  int ratio = 1;
  Distance distance = Distance::mahalanobis;
  bool with_replacement = false;
};

struct MatchPair {
  Eigen::Index cc_row = 0;   // row index into the query set
  Eigen::Index pool_row = 0; // row index into the pool
  double distance = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;            // in claim order
  std::vector<Eigen::Index> claimed_rows;  // pool rows, in claim order
};

// Greedy nearest-neighbor pass in query row order: each query row claims its
// `ratio` nearest pool rows under the configured metric (ties broken by lower
// pool row index). Without replacement a claimed row is never reused. The
// Mahalanobis covariance is pooled over query and pool rows.
MatchResult greedy_match(const Eigen::MatrixXd& query, const Eigen::MatrixXd& pool,
                         const MatchSpec& spec);

// 1:1 variant that stops when the pool runs out instead of throwing; later
// query rows stay unmatched. Used by staged matching estimators.
MatchResult greedy_match_exhaustive(const Eigen::MatrixXd& query,
                                    const Eigen::MatrixXd& pool,
                                    MatchSpec::Distance distance);

// Dataset-level wrapper: matches the concurrent-control rows of `cc` against
// `pool` covariates and returns the claimed pool rows flagged S=0, A=0.
struct MatchedControls {
  Dataset ec;
  MatchResult report;
};
MatchedControls match_external_controls(const Dataset& cc, const Dataset& pool,
                                        const MatchSpec& spec);

void save_match_report_csv(const MatchResult& result, const std::string& path);

}  // namespace dpie
