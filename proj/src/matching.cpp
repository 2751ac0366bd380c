#include "dpie/matching.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace dpie {

namespace {

// inverse covariance for the Mahalanobis metric, pooled over both samples;
// a small ridge keeps near-degenerate directions finite
Eigen::MatrixXd pooled_precision(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index d = a.cols();
  Eigen::MatrixXd all(a.rows() + b.rows(), d);
  all << a, b;
  const Eigen::RowVectorXd mean = all.colwise().mean();
  const Eigen::MatrixXd centered = all.rowwise() - mean;
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(all.rows() - 1);
  const double ridge = 1e-10 * std::max(1.0, cov.trace() / static_cast<double>(d));
  cov.diagonal().array() += ridge;
  return cov.llt().solve(Eigen::MatrixXd::Identity(d, d));
}

}  // namespace

MatchResult greedy_match(const Eigen::MatrixXd& query, const Eigen::MatrixXd& pool,
                         const MatchSpec& spec) {
  if (spec.ratio < 1) throw std::invalid_argument("match ratio must be >= 1");
  if (query.cols() != pool.cols())
    throw std::invalid_argument("query and pool have different covariate counts");
  const Eigen::Index nq = query.rows();
  const Eigen::Index np = pool.rows();
  if (!spec.with_replacement &&
      np < static_cast<Eigen::Index>(spec.ratio) * nq) {
    throw std::runtime_error(
        "matching pool exhausted: need " + std::to_string(spec.ratio * nq) +
        " rows, have " + std::to_string(np));
  }

  Eigen::MatrixXd precision;
  if (spec.distance == MatchSpec::Distance::mahalanobis)
    precision = pooled_precision(query, pool);

  const auto dist = [&](Eigen::Index qi, Eigen::Index pi) {
    const Eigen::VectorXd diff = query.row(qi) - pool.row(pi);
    if (spec.distance == MatchSpec::Distance::euclidean) return diff.norm();
    return std::sqrt(std::max(0.0, diff.dot(precision * diff)));
  };

  std::vector<bool> used(static_cast<size_t>(np), false);
  MatchResult out;
  for (Eigen::Index qi = 0; qi < nq; ++qi) {
    for (int r = 0; r < spec.ratio; ++r) {
      Eigen::Index best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index pi = 0; pi < np; ++pi) {
        if (!spec.with_replacement && used[static_cast<size_t>(pi)]) continue;
        const double dv = dist(qi, pi);
        if (dv < best_d) {  // ties keep the lower pool index
          best_d = dv;
          best = pi;
        }
      }
      if (best < 0)
        throw std::runtime_error("matching pool exhausted at query row " +
                                 std::to_string(qi + 1));
      used[static_cast<size_t>(best)] = true;
      out.pairs.push_back({qi, best, best_d});
      out.claimed_rows.push_back(best);
    }
  }
  return out;
}

MatchResult greedy_match_exhaustive(const Eigen::MatrixXd& query,
                                    const Eigen::MatrixXd& pool,
                                    MatchSpec::Distance distance) {
  const Eigen::Index take = std::min(query.rows(), pool.rows());
  if (take == 0) return {};
  MatchSpec spec;
  spec.ratio = 1;
  spec.distance = distance;
  spec.with_replacement = false;
  return greedy_match(query.topRows(take), pool, spec);
}

MatchedControls match_external_controls(const Dataset& cc, const Dataset& pool,
                                        const MatchSpec& spec) {
  const MatchResult rep = greedy_match(cc.X, pool.X, spec);
  Dataset ec = pool.rows(rep.claimed_rows);
  ec.S.setZero();
  ec.A.setZero();
  return {std::move(ec), rep};
}

void save_match_report_csv(const MatchResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "cc_row,ec_row,distance\n";
  for (const auto& p : result.pairs) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), p.distance);
    out << p.cc_row << ',' << p.pool_row << ','
        << std::string(buf, res.ptr) << '\n';
  }
}

}  // namespace dpie
