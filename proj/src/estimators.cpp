#include "dpie/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dpie {

std::string method_name(Method m) {
  switch (m) {
    case Method::DPIE: return "DPIE";
    case Method::SPIE: return "SPIE";
    case Method::RE: return "RE";
    case Method::MBA: return "MBA";
    case Method::BPP: return "BPP";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  std::string up = name;
  std::transform(up.begin(), up.end(), up.begin(), ::toupper);
  if (up == "DPIE") return Method::DPIE;
  if (up == "SPIE") return Method::SPIE;
  if (up == "RE" || up == "ANCOVA") return Method::RE;
  if (up == "MBA") return Method::MBA;
  if (up == "BPP") return Method::BPP;
  throw std::invalid_argument("unknown method '" + name + "'");
}

namespace {

// [1 | A | p_mu(X)] with no bias block, for experiment-only fits
DesignMatrix assemble_mu_design(const Dataset& ds, const BasisSpec& mu_spec) {
  const Eigen::Index n = ds.n_rows();
  const Eigen::MatrixXd mu = power_basis(ds.X, mu_spec);
  const auto mu_names = basis_names(ds.column_names, mu_spec);

  DesignMatrix D;
  D.has_treatment = !ds.treatment_is_constant();
  const Eigen::Index fixed = D.has_treatment ? 2 : 1;
  D.M.resize(n, fixed + mu.cols());
  D.study = ds.S;
  D.M.col(0).setOnes();
  D.groups.push_back(ColumnGroup::intercept);
  D.names.push_back("(intercept)");
  if (D.has_treatment) {
    D.M.col(1) = ds.A;
    D.groups.push_back(ColumnGroup::treatment);
    D.names.push_back("A");
  }
  for (Eigen::Index j = 0; j < mu.cols(); ++j) {
    D.M.col(fixed + j) = mu.col(j);
    D.groups.push_back(ColumnGroup::mu_basis);
    D.names.push_back("mu:" + mu_names[static_cast<size_t>(j)]);
  }
  return D;
}

// fit at the chosen penalties, refit OLS on the support, read off tau
EstimatorOutput finish_penalized(const DesignMatrix& D, const Eigen::VectorXd& y,
                                 const CVResult& cv, const PenaltyConfig& cfg_base,
                                 Method method) {
  PenaltyConfig cfg = cfg_base;
  cfg.lambda1 = cv.best_lambda1;
  cfg.lambda2 = cv.best_lambda2;

  EstimatorOutput out;
  out.cv = cv;
  out.fit = fit_penalized_ls(D, y, cfg);
  out.mu_cols = D.group_cols(ColumnGroup::mu_basis);
  out.bias_cols = D.group_cols(ColumnGroup::bias_basis);

  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < D.n_cols(); ++j)
    if (cfg.exempt.count(D.groups[static_cast<size_t>(j)])) active.push_back(j);
  active.insert(active.end(), out.fit.active_beta.begin(), out.fit.active_beta.end());
  active.insert(active.end(), out.fit.active_delta.begin(), out.fit.active_delta.end());

  const RefitResult refit = refit_ols(D, y, active);
  out.theta_refit = refit.theta;

  for (const Eigen::Index j : out.fit.active_beta)
    if (D.groups[static_cast<size_t>(j)] == ColumnGroup::mu_basis)
      out.active_mu.push_back(j);
  out.active_bias = out.fit.active_delta;

  ATEResult& ate = out.ate;
  ate.method = method;
  ate.converged = out.fit.converged;
  ate.has_lambda = true;
  ate.lambda1 = cv.best_lambda1;
  ate.lambda2 = cv.best_lambda2;
  ate.n_selected_mu = static_cast<int>(out.active_mu.size());
  ate.n_selected_bias = static_cast<int>(out.active_bias.size());

  const Eigen::Index tc = D.treatment_col();
  if (tc < 0) {
    ate.tau_hat = std::numeric_limits<double>::quiet_NaN();
    ate.se = std::numeric_limits<double>::quiet_NaN();
    ate.ci_lo = ate.ci_hi = ate.tau_hat;
    ate.note = "no treatment column in design; coefficient recovery only";
    return out;
  }
  const auto pos = std::find(refit.active.begin(), refit.active.end(), tc);
  const Eigen::Index ti = pos - refit.active.begin();
  ate.tau_hat = refit.theta[tc];
  ate.se = std::sqrt(std::max(0.0, refit.cov(ti, ti)));
  ate.ci_lo = ate.tau_hat - kZ975 * ate.se;
  ate.ci_hi = ate.tau_hat + kZ975 * ate.se;
  return out;
}

}  // namespace

EstimatorOutput dpie_full(const Dataset& ds, const BasisSpec& mu_spec,
                          const BasisSpec& b_spec, const CVPlan& plan,
                          const PenaltyConfig& cfg) {
  if (ds.n_ec() == 0) {
    EstimatorOutput out = re_only_full(ds, mu_spec, plan, cfg);
    out.ate.method = Method::DPIE;
    out.ate.note = "no external controls; reduced to the experiment-only fit";
    return out;
  }
  const DesignMatrix D = assemble_design(ds, mu_spec, b_spec);
  const CVResult cv = cv_select(D, ds.Y, ds, plan, cfg);
  return finish_penalized(D, ds.Y, cv, cfg, Method::DPIE);
}

ATEResult dpie(const Dataset& ds, const BasisSpec& mu_spec, const BasisSpec& b_spec,
               const CVPlan& plan, const PenaltyConfig& cfg) {
  return dpie_full(ds, mu_spec, b_spec, plan, cfg).ate;
}

EstimatorOutput spie_full(const Dataset& ds, const BasisSpec& mu_spec,
                          const BasisSpec& b_spec, const CVPlan& plan,
                          const PenaltyConfig& cfg) {
  CVPlan single = plan;
  single.sc_grid = {1.0};
  EstimatorOutput out = dpie_full(ds, mu_spec, b_spec, single, cfg);
  out.ate.method = Method::SPIE;
  return out;
}

ATEResult spie(const Dataset& ds, const BasisSpec& mu_spec, const BasisSpec& b_spec,
               const CVPlan& plan, const PenaltyConfig& cfg) {
  return spie_full(ds, mu_spec, b_spec, plan, cfg).ate;
}

EstimatorOutput re_only_full(const Dataset& ds, const BasisSpec& mu_spec,
                             const CVPlan& plan, const PenaltyConfig& cfg) {
  const Dataset re = ds.re_subset();
  const DesignMatrix D = assemble_mu_design(re, mu_spec);
  CVPlan single = plan;
  single.sc_grid = {1.0};  // one group, one effective penalty
  const CVResult cv = cv_select(D, re.Y, re, single, cfg);
  return finish_penalized(D, re.Y, cv, cfg, Method::RE);
}

ATEResult re_only(const Dataset& ds, const BasisSpec& mu_spec, const CVPlan& plan,
                  const PenaltyConfig& cfg) {
  return re_only_full(ds, mu_spec, plan, cfg).ate;
}

namespace {

// [M^-1]_(t,t) through an eigendecomposition with an explicit rank check
double inverse_diagonal_entry(const Eigen::MatrixXd& M, Eigen::Index t,
                              const char* label) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  const double floor = 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff());
  if (eig.eigenvalues().minCoeff() <= floor)
    throw std::runtime_error(std::string(label) + " moment matrix is singular");
  const Eigen::VectorXd row = eig.eigenvectors().row(t);
  return (row.array().square() / eig.eigenvalues().array()).sum();
}

}  // namespace

VarianceReport plugin_variance(const DesignMatrix& D, const Eigen::VectorXd& y,
                               const std::vector<Eigen::Index>& active) {
  const Eigen::Index tc = D.treatment_col();
  if (tc < 0)
    throw std::invalid_argument("plugin variance needs a treatment column");

  const RefitResult refit = refit_ols(D, y, active);

  std::vector<Eigen::Index> mu_act, bias_act;
  for (const Eigen::Index j : refit.active) {
    if (D.groups[static_cast<size_t>(j)] == ColumnGroup::bias_basis)
      bias_act.push_back(j);
    else
      mu_act.push_back(j);
  }
  const auto tpos_it = std::find(mu_act.begin(), mu_act.end(), tc);
  if (tpos_it == mu_act.end())
    throw std::invalid_argument("active set must contain the treatment column");
  const Eigen::Index tpos = tpos_it - mu_act.begin();

  const Eigen::Index n = D.n_rows();
  const double dn = static_cast<double>(n);
  const Eigen::Index p1 = static_cast<Eigen::Index>(mu_act.size());
  const Eigen::Index p2 = static_cast<Eigen::Index>(bias_act.size());

  Eigen::MatrixXd Pmu(n, p1);
  for (Eigen::Index c = 0; c < p1; ++c) Pmu.col(c) = D.M.col(mu_act[static_cast<size_t>(c)]);
  Eigen::MatrixXd Pb(n, p2);
  for (Eigen::Index c = 0; c < p2; ++c) Pb.col(c) = D.M.col(bias_act[static_cast<size_t>(c)]);

  Eigen::MatrixXd m_re = Eigen::MatrixXd::Zero(p1, p1);
  Eigen::MatrixXd m_ec = Eigen::MatrixXd::Zero(p1, p1);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(p1, p2);
  Eigen::MatrixXd gram_ec = Eigen::MatrixXd::Zero(p2, p2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd pm = Pmu.row(i);
    if (D.study[i] == 1.0) {
      m_re += pm * pm.transpose();
    } else {
      m_ec += pm * pm.transpose();
      const Eigen::VectorXd pb = Pb.row(i);
      cross += pm * pb.transpose();
      gram_ec += pb * pb.transpose();
    }
  }
  m_re /= dn;
  m_ec /= dn;
  cross /= dn;
  gram_ec /= dn;

  VarianceReport report;
  report.sigma2_hat = refit.sigma2;

  // external-control Schur complement; pseudo-inverse when the EC Gram is
  // rank deficient (range(cross') is inside range(gram_ec), so the
  // complement stays positive semidefinite either way)
  Eigen::MatrixXd schur = m_ec;
  if (p2 > 0) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram_ec);
    const double floor = 1e-12 * std::max(1e-300, eig.eigenvalues().maxCoeff());
    Eigen::VectorXd inv_ev = eig.eigenvalues();
    for (Eigen::Index i = 0; i < inv_ev.size(); ++i) {
      if (inv_ev[i] > floor) {
        inv_ev[i] = 1.0 / inv_ev[i];
      } else {
        inv_ev[i] = 0.0;
        report.ec_gram_singular = true;
      }
    }
    const Eigen::MatrixXd ginv = eig.eigenvectors() * inv_ev.asDiagonal() *
                                 eig.eigenvectors().transpose();
    schur -= cross * ginv * cross.transpose();
  }
  schur = 0.5 * (schur + schur.transpose());

  // clamp the tiny negative eigenvalues that are pure roundoff, keeping the
  // bracket at least as large as the experiment-only moments
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> seig(schur);
  Eigen::VectorXd ev = seig.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd schur_psd =
      seig.eigenvectors() * ev.asDiagonal() * seig.eigenvectors().transpose();

  const Eigen::MatrixXd bracket = m_re + schur_psd;
  report.v_re_only =
      refit.sigma2 * inverse_diagonal_entry(m_re, tpos, "experiment-row") / dn;
  report.v_combined =
      refit.sigma2 * inverse_diagonal_entry(bracket, tpos, "combined") / dn;
  return report;
}

ATEResult mba_estimate(const Dataset& ds, const MatchSpec& spec) {
  std::vector<Eigen::Index> ct, cc, ec;
  for (Eigen::Index i = 0; i < ds.n_rows(); ++i) {
    if (ds.S[i] == 1.0 && ds.A[i] == 1.0) ct.push_back(i);
    else if (ds.S[i] == 1.0) cc.push_back(i);
    else ec.push_back(i);
  }
  if (ct.empty() || cc.empty() || ec.empty())
    throw std::runtime_error("MBA needs treated, concurrent-control and external rows");

  const auto rows_of = [&](const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(idx.size()), ds.n_cols());
    for (size_t i = 0; i < idx.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = ds.X.row(idx[i]);
    return X;
  };
  const Eigen::MatrixXd Xct = rows_of(ct), Xcc = rows_of(cc), Xec = rows_of(ec);

  // stage 1: treated rows claim concurrent controls until those run out
  const MatchResult stage1 = greedy_match_exhaustive(Xct, Xcc, spec.distance);
  std::vector<bool> ct_matched(ct.size(), false);
  for (const auto& p : stage1.pairs) ct_matched[static_cast<size_t>(p.cc_row)] = true;

  // stage 2: concurrent controls claim externals; the pair mean difference
  // is the scalar bias estimate
  MatchSpec one = spec;
  one.ratio = 1;
  one.with_replacement = false;
  const MatchResult stage2 = greedy_match(Xcc, Xec, one);
  double delta_hat = 0.0;
  std::vector<bool> ec_used(ec.size(), false);
  for (const auto& p : stage2.pairs) {
    delta_hat += ds.Y[ec[static_cast<size_t>(p.pool_row)]] - ds.Y[cc[static_cast<size_t>(p.cc_row)]];
    ec_used[static_cast<size_t>(p.pool_row)] = true;
  }
  delta_hat /= static_cast<double>(stage2.pairs.size());

  // stage 3: leftover treated rows claim unused externals, with outcomes
  // shifted down by the bias estimate
  std::vector<Eigen::Index> ct_left, ec_left;
  for (size_t i = 0; i < ct.size(); ++i)
    if (!ct_matched[i]) ct_left.push_back(static_cast<Eigen::Index>(i));
  for (size_t i = 0; i < ec.size(); ++i)
    if (!ec_used[i]) ec_left.push_back(static_cast<Eigen::Index>(i));
  if (ct_left.size() > ec_left.size())
    throw std::runtime_error("MBA stage 3 needs " + std::to_string(ct_left.size()) +
                             " unused external controls but only " +
                             std::to_string(ec_left.size()) + " remain");

  std::vector<double> diffs;
  for (const auto& p : stage1.pairs)
    diffs.push_back(ds.Y[ct[static_cast<size_t>(p.cc_row)]] - ds.Y[cc[static_cast<size_t>(p.pool_row)]]);
  if (!ct_left.empty()) {
    Eigen::MatrixXd Xq(static_cast<Eigen::Index>(ct_left.size()), ds.n_cols());
    for (size_t i = 0; i < ct_left.size(); ++i) Xq.row(static_cast<Eigen::Index>(i)) = Xct.row(ct_left[i]);
    Eigen::MatrixXd Xp(static_cast<Eigen::Index>(ec_left.size()), ds.n_cols());
    for (size_t i = 0; i < ec_left.size(); ++i) Xp.row(static_cast<Eigen::Index>(i)) = Xec.row(ec_left[i]);
    const MatchResult stage3 = greedy_match(Xq, Xp, one);
    for (const auto& p : stage3.pairs) {
      const Eigen::Index trow = ct[static_cast<size_t>(ct_left[static_cast<size_t>(p.cc_row)])];
      const Eigen::Index erow = ec[static_cast<size_t>(ec_left[static_cast<size_t>(p.pool_row)])];
      diffs.push_back(ds.Y[trow] - (ds.Y[erow] - delta_hat));
    }
  }

  const double np = static_cast<double>(diffs.size());
  double mean = 0.0;
  for (const double d : diffs) mean += d;
  mean /= np;
  double var = 0.0;
  for (const double d : diffs) var += (d - mean) * (d - mean);
  var /= (np - 1.0);

  ATEResult out;
  out.method = Method::MBA;
  out.tau_hat = mean;
  out.se = std::sqrt(var / np);
  out.ci_lo = out.tau_hat - kZ975 * out.se;
  out.ci_hi = out.tau_hat + kZ975 * out.se;
  out.note = "paired-difference se; constant bias shift " + std::to_string(delta_hat);
  return out;
}

Eigen::VectorXd logistic_inclusion_weights(const Dataset& ds,
                                           const BasisSpec& inclusion_basis,
                                           bool* clipped) {
  const Eigen::Index n = ds.n_rows();
  const Eigen::MatrixXd B = power_basis(ds.X, inclusion_basis);
  Eigen::MatrixXd Z(n, 1 + B.cols());
  Z.col(0).setOnes();
  Z.rightCols(B.cols()) = B;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(Z.cols());
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = Z * beta;
    const Eigen::VectorXd p = 1.0 / (1.0 + (-eta.array()).exp());
    Eigen::VectorXd w = p.array() * (1.0 - p.array());
    w = w.cwiseMax(1e-10);
    const Eigen::MatrixXd zw = Z.array().colwise() * w.array();
    Eigen::MatrixXd h = zw.transpose() * Z;
    h.diagonal().array() += 1e-10;
    const Eigen::VectorXd step = h.ldlt().solve(Z.transpose() * (ds.S - p));
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-10) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw std::runtime_error("inclusion-probability logistic fit did not converge");

  Eigen::VectorXd probs = 1.0 / (1.0 + (-(Z * beta).array()).exp());
  bool any_clip = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (probs[i] < 1e-6 || probs[i] > 1.0 - 1e-6) any_clip = true;
    probs[i] = std::clamp(probs[i], 1e-6, 1.0 - 1e-6);
  }
  if (clipped) *clipped = any_clip;
  return probs;
}

ATEResult bpp_weighted_ls(const Dataset& ds, const BasisSpec& basis,
                          const Eigen::VectorXd& weights) {
  if (weights.size() != ds.n_rows())
    throw std::invalid_argument("weight vector has wrong length");
  const DesignMatrix D = assemble_mu_design(ds, basis);
  if (!D.has_treatment)
    throw std::invalid_argument("weighted ANCOVA needs a treatment column");

  const Eigen::MatrixXd Xw = D.M.array().colwise() * weights.array();
  const Eigen::MatrixXd G = Xw.transpose() * D.M;
  const Eigen::VectorXd b = Xw.transpose() * ds.Y;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("weighted least squares is singular");
  const Eigen::VectorXd coef = ldlt.solve(b);

  const Eigen::VectorXd r = ds.Y - D.M * coef;
  const double wsum = weights.sum();
  const double p = static_cast<double>(D.n_cols());
  const double sigma2 =
      (weights.array() * r.array().square()).sum() / std::max(1.0, wsum - p);
  const Eigen::MatrixXd cov = sigma2 * ldlt.solve(Eigen::MatrixXd::Identity(D.n_cols(), D.n_cols()));

  ATEResult out;
  out.method = Method::BPP;
  out.tau_hat = coef[D.treatment_col()];
  out.se = std::sqrt(std::max(0.0, cov(D.treatment_col(), D.treatment_col())));
  out.ci_lo = out.tau_hat - kZ975 * out.se;
  out.ci_hi = out.tau_hat + kZ975 * out.se;
  out.note = "weighted-OLS se over inclusion-probability weights";
  return out;
}

ATEResult bpp_estimate(const Dataset& ds, const BasisSpec& inclusion_basis) {
  if (ds.n_ec() == 0 || ds.n_re() == 0)
    throw std::runtime_error("BPP needs both experiment and external rows");
  bool clipped = false;
  const Eigen::VectorXd probs = logistic_inclusion_weights(ds, inclusion_basis, &clipped);
  Eigen::VectorXd w(ds.n_rows());
  for (Eigen::Index i = 0; i < ds.n_rows(); ++i)
    w[i] = (ds.S[i] == 1.0) ? 1.0 : probs[i];
  ATEResult out = bpp_weighted_ls(ds, inclusion_basis, w);
  if (clipped) out.note += "; separation-clipped weights";
  return out;
}

}  // namespace dpie
