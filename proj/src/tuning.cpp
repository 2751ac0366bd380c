#include "dpie/tuning.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "dpie/rng.hpp"

namespace dpie {

std::vector<double> default_sc_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 13; ++i)
    grid.push_back(std::pow(10.0, -2.0 + 4.0 * i / 12.0));
  return grid;
}

FoldAssignment make_folds(const Eigen::VectorXd& A, const Eigen::VectorXd& S,
                          int k, uint64_t seed) {
  if (k < 2) throw std::invalid_argument("cross-validation needs k >= 2 folds");
  const Eigen::Index n = A.size();

  // strata keyed by (A, S); only (1,1), (0,1), (0,0) can occur
  std::map<std::pair<int, int>, std::vector<Eigen::Index>> strata;
  for (Eigen::Index i = 0; i < n; ++i)
    strata[{static_cast<int>(A[i]), static_cast<int>(S[i])}].push_back(i);

  FoldAssignment fa;
  fa.k = k;
  fa.fold.assign(static_cast<size_t>(n), -1);
  uint64_t stream = 1;
  for (auto& [key, idx] : strata) {
    if (static_cast<int>(idx.size()) < k)
      throw std::runtime_error("stratum (A=" + std::to_string(key.first) +
                               ", S=" + std::to_string(key.second) + ") has only " +
                               std::to_string(idx.size()) + " rows for " +
                               std::to_string(k) + " folds");
    Philox rng(seed, stream++);
    rng.shuffle(idx);
    for (size_t p = 0; p < idx.size(); ++p)
      fa.fold[static_cast<size_t>(idx[p])] = static_cast<int>(p % static_cast<size_t>(k));
  }
  return fa;
}

FoldAssignment make_folds(const Dataset& ds, int k, uint64_t seed) {
  return make_folds(ds.A, ds.S, k, seed);
}

namespace {

DesignMatrix design_rows(const DesignMatrix& D, const std::vector<Eigen::Index>& idx) {
  DesignMatrix out;
  out.groups = D.groups;
  out.names = D.names;
  out.has_treatment = D.has_treatment;
  out.M.resize(static_cast<Eigen::Index>(idx.size()), D.n_cols());
  out.study.resize(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) {
    out.M.row(static_cast<Eigen::Index>(i)) = D.M.row(idx[i]);
    out.study[static_cast<Eigen::Index>(i)] = D.study[idx[i]];
  }
  for (Eigen::Index j = 0; j < out.n_cols(); ++j) {
    if (out.groups[static_cast<size_t>(j)] == ColumnGroup::bias_basis &&
        (out.M.col(j).array() == 0.0).all())
      out.degenerate_cols.push_back(j);
  }
  return out;
}

Eigen::VectorXd subset(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

}  // namespace

CVResult cv_select(const DesignMatrix& D, const Eigen::VectorXd& y,
                   const Dataset& ds, const CVPlan& plan,
                   const PenaltyConfig& cfg_base) {
  if (D.n_rows() != y.size() || D.n_rows() != ds.n_rows())
    throw std::invalid_argument("cv_select inputs are not row-conformant");
  if (plan.n_lambda < 1) throw std::invalid_argument("n_lambda must be >= 1");
  if (!(plan.lambda_min_ratio > 0 && plan.lambda_min_ratio < 1))
    throw std::invalid_argument("lambda_min_ratio must lie in (0,1)");
  const std::vector<double> sc_grid =
      plan.sc_grid.empty() ? default_sc_grid() : plan.sc_grid;
  for (const double sc : sc_grid)
    if (!(sc > 0)) throw std::invalid_argument("sc grid values must be positive");

  CVResult result;
  result.folds_used = make_folds(ds, plan.folds, plan.seed);
  const int k = result.folds_used.k;

  // per-fold train/test row sets and slices, shared across the grid
  std::vector<std::vector<Eigen::Index>> train_idx(static_cast<size_t>(k)),
      test_idx(static_cast<size_t>(k));
  for (Eigen::Index i = 0; i < D.n_rows(); ++i) {
    for (int f = 0; f < k; ++f) {
      if (result.folds_used.fold[static_cast<size_t>(i)] == f)
        test_idx[static_cast<size_t>(f)].push_back(i);
      else
        train_idx[static_cast<size_t>(f)].push_back(i);
    }
  }
  std::vector<DesignMatrix> train_D, test_D;
  std::vector<Eigen::VectorXd> train_y, test_y;
  for (int f = 0; f < k; ++f) {
    train_D.push_back(design_rows(D, train_idx[static_cast<size_t>(f)]));
    test_D.push_back(design_rows(D, test_idx[static_cast<size_t>(f)]));
    train_y.push_back(subset(y, train_idx[static_cast<size_t>(f)]));
    test_y.push_back(subset(y, test_idx[static_cast<size_t>(f)]));
  }

  const auto [mu_max, bias_max] = lambda_max_by_group(D, y, cfg_base);

  PenaltyConfig cfg_path = cfg_base;
  cfg_path.n_starts = 1;  // warm starts along the path
  cfg_path.tol = std::max(cfg_base.tol, plan.path_tol);

  for (const double sc : sc_grid) {
    const double l2_max = std::max(sc * mu_max, bias_max);
    // the floor tracks the bias group's own scale: when sc * mu_max towers
    // over bias_max, a floor of l2_max * ratio would leave the entire
    // bias-relevant range uncovered
    const double l2_floor_base =
        (bias_max > 0.0) ? std::min(l2_max, bias_max) : l2_max;
    std::vector<double> path;
    if (l2_max <= 0.0) {
      path.assign(static_cast<size_t>(plan.n_lambda), 0.0);
    } else {
      const double l2_min = l2_floor_base * plan.lambda_min_ratio;
      for (int t = 0; t < plan.n_lambda; ++t) {
        const double frac = (plan.n_lambda == 1)
                                ? 0.0
                                : static_cast<double>(t) / (plan.n_lambda - 1);
        path.push_back(l2_max * std::pow(l2_min / l2_max, frac));
      }
    }

    // per-fold path state
    std::vector<Eigen::VectorXd> warm(static_cast<size_t>(k),
                                      Eigen::VectorXd::Zero(D.n_cols()));

    // fold-level errors per path point
    std::vector<std::vector<double>> errs(path.size());
    std::vector<int> n_converged(path.size(), 0);
    std::vector<bool> failed(path.size(), false);

    for (int f = 0; f < k; ++f) {
      for (size_t t = 0; t < path.size(); ++t) {
        if (failed[t]) continue;
        cfg_path.lambda2 = path[t];
        cfg_path.lambda1 = path[t] / sc;
        try {
          const FitResult fit = fit_penalized_ls(train_D[static_cast<size_t>(f)],
                                                 train_y[static_cast<size_t>(f)],
                                                 cfg_path, &warm[static_cast<size_t>(f)]);
          warm[static_cast<size_t>(f)] = fit.theta;
          if (fit.converged) ++n_converged[t];
          // held-out error of the penalized fit itself; the post-selection
          // refit only produces the final reported estimates
          const Eigen::VectorXd pred = test_D[static_cast<size_t>(f)].M * fit.theta;
          errs[t].push_back((test_y[static_cast<size_t>(f)] - pred).squaredNorm() /
                            static_cast<double>(pred.size()));
        } catch (const std::exception&) {
          failed[t] = true;
        }
      }
    }

    for (size_t t = 0; t < path.size(); ++t) {
      CVCell cell;
      cell.sc = sc;
      cell.lambda2 = path[t];
      cell.lambda1 = path[t] / sc;
      cell.valid = !failed[t] && n_converged[t] > 0 &&
                   static_cast<int>(errs[t].size()) == k;
      if (cell.valid) {
        double mean = 0.0;
        for (const double e : errs[t]) mean += e;
        mean /= static_cast<double>(k);
        double var = 0.0;
        for (const double e : errs[t]) var += (e - mean) * (e - mean);
        var /= static_cast<double>(k - 1);
        cell.mean_err = mean;
        cell.se = std::sqrt(var / static_cast<double>(k));
      }
      result.table.push_back(cell);
    }
  }

  double min_err = std::numeric_limits<double>::infinity();
  double min_se = 0.0;
  bool any_valid = false;
  for (const auto& cell : result.table) {
    if (!cell.valid) continue;
    any_valid = true;
    if (cell.mean_err < min_err) {
      min_err = cell.mean_err;
      min_se = cell.se;
    }
  }
  if (!any_valid)
    throw std::runtime_error("cross-validation failed: every grid cell is invalid");

  // SCAD leaves large coefficients unbiased, so whole stretches of the grid
  // are statistically tied. Within a quarter standard error of the minimum,
  // resolve toward the most asymmetric penalty (largest sc keeps lambda1 off
  // the outcome model) and then the strongest sieve control (largest
  // lambda2). Far from ties this reduces to the plain minimum.
  const double window = min_err + 0.25 * min_se;
  const CVCell* pick = nullptr;
  for (const auto& cell : result.table) {
    if (!cell.valid || cell.mean_err > window) continue;
    if (!pick || cell.sc > pick->sc ||
        (cell.sc == pick->sc && cell.lambda2 > pick->lambda2))
      pick = &cell;
  }
  result.best_lambda1 = pick->lambda1;
  result.best_lambda2 = pick->lambda2;
  result.best_err = pick->mean_err;
  return result;
}

void write_cv_table_csv(const CVResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  const auto fmt = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  out << "sc,lambda2,lambda1,mean_err,se,valid\n";
  for (const auto& c : result.table) {
    out << fmt(c.sc) << ',' << fmt(c.lambda2) << ',' << fmt(c.lambda1) << ','
        << fmt(c.mean_err) << ',' << fmt(c.se) << ',' << (c.valid ? 1 : 0) << '\n';
  }
}

}  // namespace dpie
