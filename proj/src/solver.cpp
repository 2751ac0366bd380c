#include "dpie/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dpie/rng.hpp"
#include "dpie/scad.hpp"

namespace dpie {

namespace {

struct Workspace {
  Eigen::MatrixXd Xs;          // standardized columns
  Eigen::VectorXd mean, scale; // per column; intercept/degenerate: (0, 1)
  Eigen::VectorXd v;           // column curvature |x_j|^2 / N
  Eigen::VectorXd lambda;      // penalty level per column (0 if unpenalized)
  std::vector<char> penalized;
  std::vector<char> degenerate;
};

Workspace make_workspace(const DesignMatrix& D, const PenaltyConfig& cfg) {
  const Eigen::Index n = D.n_rows();
  const Eigen::Index k = D.n_cols();
  const double dn = static_cast<double>(n);

  Workspace w;
  w.Xs = D.M;
  w.mean = Eigen::VectorXd::Zero(k);
  w.scale = Eigen::VectorXd::Ones(k);
  w.v = Eigen::VectorXd::Ones(k);
  w.lambda = Eigen::VectorXd::Zero(k);
  w.penalized.assign(static_cast<size_t>(k), 0);
  w.degenerate.assign(static_cast<size_t>(k), 0);

  for (Eigen::Index j = 0; j < k; ++j) {
    const ColumnGroup g = D.groups[static_cast<size_t>(j)];
    const bool exempt = cfg.exempt.count(g) > 0;

    if (g == ColumnGroup::intercept) {
      w.v[j] = w.Xs.col(j).squaredNorm() / dn;
      continue;  // never standardized
    }
    const double m = w.Xs.col(j).mean();
    const double var = (w.Xs.col(j).array() - m).square().sum() / dn;
    if (var == 0.0) {
      if (!(g == ColumnGroup::bias_basis && (w.Xs.col(j).array() == 0.0).all()))
        throw std::invalid_argument("constant design column " + std::to_string(j) +
                                    " (" + D.names[static_cast<size_t>(j)] + ")");
      w.degenerate[static_cast<size_t>(j)] = 1;
      continue;
    }
    const double s = std::sqrt(var);
    w.Xs.col(j) = (w.Xs.col(j).array() - m) / s;
    w.mean[j] = m;
    w.scale[j] = s;
    w.v[j] = w.Xs.col(j).squaredNorm() / dn;
    if (!exempt) {
      w.penalized[static_cast<size_t>(j)] = 1;
      w.lambda[j] = (g == ColumnGroup::bias_basis) ? cfg.lambda2 : cfg.lambda1;
    }
  }
  return w;
}

double penalty_total(const Workspace& w, const Eigen::VectorXd& theta, double a,
                     double n) {
  double p = 0.0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    if (w.penalized[static_cast<size_t>(j)])
      p += scad_value(std::fabs(theta[j]), w.lambda[j], a);
  }
  return n * p;
}

struct RunResult {
  Eigen::VectorXd theta_std;
  std::vector<double> trace;
  bool converged = false;
  int n_sweeps = 0;
};

RunResult run_descent(const Workspace& w, const Eigen::VectorXd& y,
                      const PenaltyConfig& cfg, Eigen::VectorXd theta) {
  const Eigen::Index n = y.size();
  const Eigen::Index k = w.Xs.cols();
  const double dn = static_cast<double>(n);

  for (Eigen::Index j = 0; j < k; ++j)
    if (w.degenerate[static_cast<size_t>(j)]) theta[j] = 0.0;

  Eigen::VectorXd r = y - w.Xs * theta;

  const auto update_col = [&](Eigen::Index j) -> double {
    if (w.degenerate[static_cast<size_t>(j)]) return 0.0;
    const double old = theta[j];
    const double xr = w.Xs.col(j).dot(r) / dn;
    double next;
    if (!w.penalized[static_cast<size_t>(j)]) {
      next = old + xr / w.v[j];
    } else {
      const double z = xr + w.v[j] * old;
      next = scad_univariate_update(2.0 * z, 2.0 * w.v[j], w.lambda[j], cfg.a);
    }
    if (next != old) {
      r -= w.Xs.col(j) * (next - old);
      theta[j] = next;
    }
    return std::fabs(next - old);
  };

  RunResult out;
  out.trace.reserve(16);
  std::vector<Eigen::Index> active;
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < k; ++j)
      max_delta = std::max(max_delta, update_col(j));
    out.n_sweeps = sweep;
    out.trace.push_back(r.squaredNorm() + penalty_total(w, theta, cfg.a, dn));
    if (max_delta < cfg.tol) {
      out.converged = true;
      break;
    }
    // iterate the current active set before the next full sweep
    active.clear();
    for (Eigen::Index j = 0; j < k; ++j)
      if (theta[j] != 0.0 || !w.penalized[static_cast<size_t>(j)]) active.push_back(j);
    for (int inner = 0; inner < 50; ++inner) {
      double d = 0.0;
      for (const Eigen::Index j : active) d = std::max(d, update_col(j));
      if (d < cfg.tol) break;
    }
  }
  out.theta_std = std::move(theta);
  return out;
}

Eigen::VectorXd to_original_scale(const Workspace& w, const Eigen::VectorXd& ts) {
  Eigen::VectorXd theta = ts;
  double intercept_shift = 0.0;
  for (Eigen::Index j = 1; j < theta.size(); ++j) {
    theta[j] /= w.scale[j];
    intercept_shift += theta[j] * w.mean[j];
  }
  theta[0] -= intercept_shift;
  return theta;
}

Eigen::VectorXd to_standardized_scale(const Workspace& w, const Eigen::VectorXd& t) {
  Eigen::VectorXd ts = t;
  double intercept_shift = 0.0;
  for (Eigen::Index j = 1; j < ts.size(); ++j) {
    intercept_shift += ts[j] * w.mean[j];
    ts[j] *= w.scale[j];
  }
  ts[0] += intercept_shift;
  return ts;
}

}  // namespace

FitResult fit_penalized_ls(const DesignMatrix& D, const Eigen::VectorXd& y,
                           const PenaltyConfig& cfg,
                           const Eigen::VectorXd* warm_start) {
  if (D.n_rows() != y.size())
    throw std::invalid_argument("design and response have different row counts");
  if (D.groups.empty() || D.groups[0] != ColumnGroup::intercept)
    throw std::invalid_argument("design must start with an intercept column");
  if (cfg.lambda1 < 0 || cfg.lambda2 < 0)
    throw std::invalid_argument("penalty levels must be nonnegative");

  const Eigen::Index k = D.n_cols();
  const Workspace w = make_workspace(D, cfg);

  // with no effective penalty the minimizer is plain least squares; solve it
  // directly instead of iterating
  bool any_penalty = false;
  for (Eigen::Index j = 0; j < k; ++j)
    if (w.penalized[static_cast<size_t>(j)] && w.lambda[j] > 0.0) any_penalty = true;
  if (!any_penalty) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < k; ++j)
      if (!w.degenerate[static_cast<size_t>(j)]) keep.push_back(j);
    Eigen::MatrixXd Xk(D.n_rows(), static_cast<Eigen::Index>(keep.size()));
    for (size_t c = 0; c < keep.size(); ++c)
      Xk.col(static_cast<Eigen::Index>(c)) = w.Xs.col(keep[c]);
    const Eigen::VectorXd coef = Xk.colPivHouseholderQr().solve(y);
    Eigen::VectorXd theta_std = Eigen::VectorXd::Zero(k);
    for (size_t c = 0; c < keep.size(); ++c)
      theta_std[keep[c]] = coef[static_cast<Eigen::Index>(c)];

    FitResult fit;
    fit.theta = to_original_scale(w, theta_std);
    for (Eigen::Index j = 1; j < k; ++j)
      if (theta_std[j] == 0.0) fit.theta[j] = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (theta_std[j] == 0.0) continue;
      if (D.groups[static_cast<size_t>(j)] == ColumnGroup::bias_basis)
        fit.active_delta.push_back(j);
      else
        fit.active_beta.push_back(j);
    }
    fit.objective_trace = {(y - Xk * coef).squaredNorm()};
    fit.objective = fit.objective_trace.back();
    fit.converged = true;
    fit.n_sweeps = 1;
    return fit;
  }

  std::vector<Eigen::VectorXd> starts;
  if (warm_start) {
    if (warm_start->size() != k)
      throw std::invalid_argument("warm start has wrong length");
    starts.push_back(to_standardized_scale(w, *warm_start));
  }
  starts.push_back(Eigen::VectorXd::Zero(k));
  if (static_cast<int>(starts.size()) < cfg.n_starts) {
    // ridge start on the standardized columns
    Eigen::MatrixXd gram = w.Xs.transpose() * w.Xs / static_cast<double>(y.size());
    gram.diagonal().array() += 1e-3;
    starts.push_back(gram.ldlt().solve(w.Xs.transpose() * y / static_cast<double>(y.size())));
  }
  int jitter_id = 0;
  while (static_cast<int>(starts.size()) < cfg.n_starts) {
    Philox rng(0x5eed0000ULL + static_cast<uint64_t>(++jitter_id), 7);
    Eigen::VectorXd t(k);
    for (Eigen::Index j = 0; j < k; ++j) t[j] = rng.uniform(-0.1, 0.1);
    starts.push_back(std::move(t));
  }
  if (static_cast<int>(starts.size()) > std::max(cfg.n_starts, 1))
    starts.resize(static_cast<size_t>(std::max(cfg.n_starts, 1)));

  RunResult best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    RunResult run = run_descent(w, y, cfg, s);
    if (run.trace.back() < best_obj) {
      best_obj = run.trace.back();
      best = std::move(run);
    }
  }

  FitResult fit;
  fit.theta = to_original_scale(w, best.theta_std);
  // exact zeros on the standardized scale stay exact zeros after rescale
  for (Eigen::Index j = 1; j < k; ++j)
    if (best.theta_std[j] == 0.0) fit.theta[j] = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const bool nonzero = best.theta_std[j] != 0.0;
    if (!nonzero) continue;
    if (D.groups[static_cast<size_t>(j)] == ColumnGroup::bias_basis)
      fit.active_delta.push_back(j);
    else
      fit.active_beta.push_back(j);
  }
  fit.objective_trace = std::move(best.trace);
  fit.objective = fit.objective_trace.back();
  fit.converged = best.converged;
  fit.n_sweeps = best.n_sweeps;
  return fit;
}

double penalized_objective(const DesignMatrix& D, const Eigen::VectorXd& y,
                           const PenaltyConfig& cfg, const Eigen::VectorXd& theta) {
  const double rss = (y - D.M * theta).squaredNorm();
  double p = 0.0;
  for (Eigen::Index j = 0; j < D.n_cols(); ++j) {
    const ColumnGroup g = D.groups[static_cast<size_t>(j)];
    if (cfg.exempt.count(g)) continue;
    const double lam = (g == ColumnGroup::bias_basis) ? cfg.lambda2 : cfg.lambda1;
    p += scad_value(std::fabs(theta[j]), lam, cfg.a);
  }
  return rss + static_cast<double>(D.n_rows()) * p;
}

std::pair<double, double> lambda_max_by_group(const DesignMatrix& D,
                                              const Eigen::VectorXd& y,
                                              const PenaltyConfig& cfg) {
  // fit the exempt columns alone, then measure the largest standardized
  // gradient per group; 2|z| is the level at which the SCAD update is zero
  std::vector<Eigen::Index> exempt_cols;
  for (Eigen::Index j = 0; j < D.n_cols(); ++j)
    if (cfg.exempt.count(D.groups[static_cast<size_t>(j)]))
      exempt_cols.push_back(j);

  Eigen::VectorXd r = y;
  if (!exempt_cols.empty()) {
    Eigen::MatrixXd E(D.n_rows(), static_cast<Eigen::Index>(exempt_cols.size()));
    for (size_t c = 0; c < exempt_cols.size(); ++c) E.col(static_cast<Eigen::Index>(c)) = D.M.col(exempt_cols[c]);
    const Eigen::VectorXd coef =
        (E.transpose() * E).ldlt().solve(E.transpose() * y);
    r -= E * coef;
  }

  const double dn = static_cast<double>(D.n_rows());
  double max_mu = 0.0, max_bias = 0.0;
  for (Eigen::Index j = 0; j < D.n_cols(); ++j) {
    const ColumnGroup g = D.groups[static_cast<size_t>(j)];
    if (cfg.exempt.count(g)) continue;
    const double m = D.M.col(j).mean();
    const double var = (D.M.col(j).array() - m).square().sum() / dn;
    if (var == 0.0) continue;
    const double z =
        std::fabs(((D.M.col(j).array() - m) * r.array()).sum() / dn) / std::sqrt(var);
    if (g == ColumnGroup::bias_basis)
      max_bias = std::max(max_bias, 2.0 * z);
    else
      max_mu = std::max(max_mu, 2.0 * z);
  }
  return {max_mu, max_bias};
}

RefitResult refit_ols(const DesignMatrix& D, const Eigen::VectorXd& y,
                      std::vector<Eigen::Index> active) {
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  const Eigen::Index p = static_cast<Eigen::Index>(active.size());
  const Eigen::Index n = D.n_rows();
  if (p == 0) throw std::invalid_argument("refit needs a nonempty active set");
  if (n <= p)
    throw std::runtime_error("refit has more active columns (" + std::to_string(p) +
                             ") than degrees of freedom (" + std::to_string(n) + " rows)");

  Eigen::MatrixXd Xa(n, p);
  for (Eigen::Index c = 0; c < p; ++c) Xa.col(c) = D.M.col(active[static_cast<size_t>(c)]);

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xa);
  if (qr.rank() < p) {
    const auto perm = qr.colsPermutation().indices();
    const Eigen::Index offender = active[static_cast<size_t>(perm[p - 1])];
    throw std::runtime_error("refit design is rank deficient; column " +
                             std::to_string(offender) + " (" +
                             D.names[static_cast<size_t>(offender)] +
                             ") is collinear with the others");
  }

  RefitResult out;
  out.active = active;
  const Eigen::VectorXd coef = qr.solve(y);
  out.rss = (y - Xa * coef).squaredNorm();
  out.sigma2 = out.rss / static_cast<double>(n - p);
  out.cov = out.sigma2 *
            (Xa.transpose() * Xa).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  out.theta = Eigen::VectorXd::Zero(D.n_cols());
  for (Eigen::Index c = 0; c < p; ++c) out.theta[active[static_cast<size_t>(c)]] = coef[c];
  return out;
}

}  // namespace dpie
