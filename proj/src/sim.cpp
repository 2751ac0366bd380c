#include "dpie/sim.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "dpie/rng.hpp"

namespace dpie {

std::pair<Dataset, Study1Truth> gen_study1(const Study1Spec& spec) {
  if (spec.n < 1 || spec.m < 1)
    throw std::invalid_argument("study 1 needs n >= 1 and m >= 1");
  if (spec.zero_fraction_delta < 0.0 || spec.zero_fraction_delta > 1.0)
    throw std::invalid_argument("zero fraction must lie in [0,1]");
  constexpr int d = 50;
  const Eigen::Index n_total = spec.n + spec.m;

  Study1Truth truth;
  truth.beta0.resize(d);
  for (int j = 0; j < d; ++j) truth.beta0[j] = (j + 1) / 50.0;

  const int n_zero = static_cast<int>(std::ceil(d * spec.zero_fraction_delta));
  const int n_nonzero = d - n_zero;
  truth.delta0 = Eigen::VectorXd::Zero(d);
  if (n_nonzero > 0) {
    const double pattern_sum = n_nonzero * (n_nonzero + 1) / 2.0;
    const double scale = spec.c * truth.beta0.cwiseAbs().sum() / pattern_sum;
    for (int j = 0; j < n_nonzero; ++j) truth.delta0[j] = (j + 1) * scale;
  }

  Philox rng(spec.seed);
  const double lo = 1.0 - std::sqrt(3.0);
  const double hi = 1.0 + std::sqrt(3.0);

  Dataset ds;
  ds.X.resize(n_total, d);
  ds.A = Eigen::VectorXd::Zero(n_total);  // pure regression, no treatment arm
  ds.Y.resize(n_total);
  ds.S.resize(n_total);
  ds.column_names.resize(d);
  for (int j = 0; j < d; ++j) ds.column_names[static_cast<size_t>(j)] = "x" + std::to_string(j + 1);

  for (Eigen::Index i = 0; i < n_total; ++i) {
    for (int j = 0; j < d; ++j) ds.X(i, j) = rng.uniform(lo, hi);
    ds.S[i] = (i < spec.n) ? 1.0 : 0.0;
    const double eps = rng.normal();
    ds.Y[i] = study1_mean(ds.X.row(i), truth, ds.S[i]) + eps;
  }
  return {std::move(ds), std::move(truth)};
}

double study1_mean(const Eigen::RowVectorXd& x, const Study1Truth& truth, double s) {
  return x.dot(truth.beta0) + (1.0 - s) * x.dot(truth.delta0);
}

double study2_mean(Study2Setting setting, double x1, double x2, double a, double s) {
  const double mu = (setting == Study2Setting::S1)
                        ? -1.5 * x1 * x1 - 1.5 * x2
                        : -1.5 * x1 * x1 - 1.5 * std::exp(x2);
  const double bias = 10.0 * x1 * x1 + 4.0 * x2 * x2 * x2;
  return mu + 2.0 * a + (1.0 - s) * bias;
}

std::pair<Dataset, double> gen_study2(const Study2Spec& spec) {
  if (spec.n < 1 || spec.m < 1)
    throw std::invalid_argument("study 2 needs n >= 1 and m >= 1");
  const Eigen::Index n_total = spec.n + spec.m;
  constexpr double tau = 2.0;

  Philox rng(spec.seed);
  Dataset ds;
  ds.X.resize(n_total, 2);
  ds.A.resize(n_total);
  ds.Y.resize(n_total);
  ds.S.resize(n_total);
  ds.column_names = {"x1", "x2"};

  for (Eigen::Index i = 0; i < n_total; ++i) {
    const double x1 = rng.uniform(-1.5, 1.5);
    const double x2 = rng.uniform(-1.5, 1.5);
    ds.X(i, 0) = x1;
    ds.X(i, 1) = x2;
    ds.S[i] = (i < spec.n) ? 1.0 : 0.0;
    ds.A[i] = (ds.S[i] == 1.0 && rng.bernoulli(0.5)) ? 1.0 : 0.0;
    const double eps = rng.normal();
    ds.Y[i] = study2_mean(spec.setting, x1, x2, ds.A[i], ds.S[i]) + eps;
  }
  return {std::move(ds), tau};
}

HarnessConfig default_harness_config() {
  HarnessConfig cfg;
  cfg.mu_spec = {3, BasisSpec::Scheme::total_degree, true};
  cfg.b_spec = cfg.mu_spec;
  cfg.inclusion = cfg.mu_spec;
  return cfg;
}

namespace {

constexpr double kSupportEps = 0.0;  // exact-zero support comparison

void selection_flags(const EstimatorOutput& out, const Eigen::VectorXd& beta0,
                     const Eigen::VectorXd& delta0, bool has_bias,
                     ReplicateRecord& rep) {
  // the fitted mu columns are the raw covariates in study 1, so column order
  // matches the truth vectors directly
  std::vector<bool> sel_mu(static_cast<size_t>(beta0.size()), false);
  for (size_t c = 0; c < out.mu_cols.size(); ++c) {
    const bool active = std::find(out.active_mu.begin(), out.active_mu.end(),
                                  out.mu_cols[c]) != out.active_mu.end();
    sel_mu[c] = active;
  }
  std::vector<bool> sel_b(static_cast<size_t>(delta0.size()), false);
  for (size_t c = 0; c < out.bias_cols.size(); ++c) {
    const bool active = std::find(out.active_bias.begin(), out.active_bias.end(),
                                  out.bias_cols[c]) != out.active_bias.end();
    sel_b[c] = active;
  }
  for (Eigen::Index j = 0; j < beta0.size(); ++j) {
    const bool truth_nonzero = std::fabs(beta0[j]) > kSupportEps;
    if (sel_mu[static_cast<size_t>(j)] && !truth_nonzero) rep.over_select = true;
    if (!sel_mu[static_cast<size_t>(j)] && truth_nonzero) rep.under_select = true;
  }
  if (has_bias) {
    for (Eigen::Index j = 0; j < delta0.size(); ++j) {
      const bool truth_nonzero = std::fabs(delta0[j]) > kSupportEps;
      if (sel_b[static_cast<size_t>(j)] && !truth_nonzero) rep.over_select = true;
      if (!sel_b[static_cast<size_t>(j)] && truth_nonzero) rep.under_select = true;
    }
  }
}

ReplicateRecord run_study1_once(const Study1Spec& base, Method method,
                                 uint64_t seed, const HarnessConfig& cfg) {
  Study1Spec spec = base;
  spec.seed = seed;
  const auto [ds, truth] = gen_study1(spec);

  const BasisSpec identity{1, BasisSpec::Scheme::total_degree, false};
  ReplicateRecord rep;
  EstimatorOutput out;
  switch (method) {
    case Method::DPIE:
      out = dpie_full(ds, identity, identity, cfg.plan, cfg.penalty);
      break;
    case Method::SPIE:
      out = spie_full(ds, identity, identity, cfg.plan, cfg.penalty);
      break;
    case Method::RE:
      out = re_only_full(ds, identity, cfg.plan, cfg.penalty);
      break;
    default:
      throw std::invalid_argument("study 1 compares DPIE, SPIE and RE only");
  }
  if (!out.ate.converged) return rep;

  double sq = 0.0;
  for (size_t c = 0; c < out.mu_cols.size(); ++c) {
    const double err = out.theta_refit[out.mu_cols[c]] - truth.beta0[static_cast<Eigen::Index>(c)];
    sq += err * err;
  }
  rep.mse_beta = std::sqrt(sq / static_cast<double>(out.mu_cols.size()));
  selection_flags(out, truth.beta0, truth.delta0, !out.bias_cols.empty(), rep);
  rep.ok = true;
  return rep;
}

ReplicateRecord run_study2_once(const Study2Spec& base, Method method,
                                 uint64_t seed, const HarnessConfig& cfg) {
  Study2Spec spec = base;
  spec.seed = seed;
  const auto [ds, tau] = gen_study2(spec);

  ReplicateRecord rep;
  ATEResult ate;
  switch (method) {
    case Method::DPIE:
      ate = dpie(ds, cfg.mu_spec, cfg.b_spec, cfg.plan, cfg.penalty);
      break;
    case Method::SPIE:
      ate = spie(ds, cfg.mu_spec, cfg.b_spec, cfg.plan, cfg.penalty);
      break;
    case Method::RE:
      ate = re_only(ds, cfg.mu_spec, cfg.plan, cfg.penalty);
      break;
    case Method::MBA:
      ate = mba_estimate(ds, cfg.match);
      break;
    case Method::BPP:
      ate = bpp_estimate(ds, cfg.inclusion);
      break;
  }
  if (!ate.converged) return rep;
  rep.tau_hat = ate.tau_hat;
  rep.se = ate.se;
  rep.covered = (ate.ci_lo <= tau && tau <= ate.ci_hi);
  rep.ok = true;
  return rep;
}

}  // namespace

MCMetrics aggregate_replicates(const std::vector<ReplicateRecord>& reps, double tau,
                               bool is_study1) {
  MCMetrics m;
  m.T = static_cast<int>(reps.size());
  std::vector<const ReplicateRecord*> ok;
  for (const auto& r : reps) {
    if (r.ok) ok.push_back(&r);
    else ++m.n_failed;
  }
  m.valid = m.n_failed * 10 <= m.T;  // more than 10% failures invalidates
  if (ok.empty()) {
    m.valid = false;
    return m;
  }
  const double t = static_cast<double>(ok.size());
  if (is_study1) {
    double mse = 0.0, over = 0.0, under = 0.0;
    for (const auto* r : ok) {
      mse += r->mse_beta;
      over += r->over_select ? 1.0 : 0.0;
      under += r->under_select ? 1.0 : 0.0;
    }
    m.mse_beta = mse / t;
    m.pct_over_select = over / t;
    m.pct_under_select = under / t;
    return m;
  }
  double mean = 0.0, mse = 0.0, est_var = 0.0, cov = 0.0;
  for (const auto* r : ok) {
    mean += r->tau_hat;
    mse += (r->tau_hat - tau) * (r->tau_hat - tau);
    est_var += r->se * r->se;
    cov += r->covered ? 1.0 : 0.0;
  }
  mean /= t;
  double var = 0.0;
  for (const auto* r : ok) var += (r->tau_hat - mean) * (r->tau_hat - mean);
  m.abs_bias = std::fabs(mean - tau);
  m.true_var = (ok.size() > 1) ? var / (t - 1.0) : 0.0;
  m.mse_tau = mse / t;
  m.mean_est_var = est_var / t;
  m.coverage = cov / t;
  return m;
}

std::map<Method, MCMetrics> run_monte_carlo(const StudySpec& study,
                                            const std::vector<Method>& methods,
                                            int T, uint64_t base_seed,
                                            const HarnessConfig& cfg) {
  if (T < 2) throw std::invalid_argument("Monte Carlo needs T >= 2 replicates");
  if (methods.empty()) throw std::invalid_argument("no methods requested");
  const bool is_study1 = std::holds_alternative<Study1Spec>(study);

  std::map<Method, std::vector<ReplicateRecord>> outcomes;
  for (const Method m : methods)
    outcomes[m].resize(static_cast<size_t>(T));

  const auto run_replicate = [&](int r) {
    const uint64_t seed = base_seed ^ static_cast<uint64_t>(r);
    for (const Method m : methods) {
      ReplicateRecord rep;
      try {
        rep = is_study1 ? run_study1_once(std::get<Study1Spec>(study), m, seed, cfg)
                        : run_study2_once(std::get<Study2Spec>(study), m, seed, cfg);
      } catch (const std::exception&) {
        rep.ok = false;
      }
      outcomes[m][static_cast<size_t>(r)] = rep;
    }
  };

  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    for (int r = 0; r < T; ++r) run_replicate(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < T; r = next.fetch_add(1))
          run_replicate(r);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::map<Method, MCMetrics> result;
  for (const Method m : methods)
    result[m] = aggregate_replicates(outcomes[m], 2.0, is_study1);
  return result;
}

}  // namespace dpie
