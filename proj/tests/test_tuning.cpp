#include <doctest.h>

#include <set>

#include "dpie/basis.hpp"
#include "dpie/rng.hpp"
#include "dpie/tuning.hpp"

using namespace dpie;

namespace {

Dataset strat_dataset(int n1, int n0, int m, uint64_t seed) {
  Philox rng(seed);
  Dataset ds;
  const int N = n1 + n0 + m;
  ds.X.resize(N, 2);
  ds.A.resize(N);
  ds.Y.resize(N);
  ds.S.resize(N);
  ds.column_names = {"x1", "x2"};
  for (int i = 0; i < N; ++i) {
    ds.X(i, 0) = rng.uniform(-1, 1);
    ds.X(i, 1) = rng.uniform(-1, 1);
    ds.S[i] = i < n1 + n0 ? 1.0 : 0.0;
    ds.A[i] = i < n1 ? 1.0 : 0.0;
    ds.Y[i] = 0.5 * ds.A[i] + ds.X(i, 0) + (1.0 - ds.S[i]) * ds.X(i, 1) + 0.3 * rng.normal();
  }
  return ds;
}

}  // namespace

TEST_CASE("folds divide each stratum evenly when sizes allow") {
  const Dataset ds = strat_dataset(10, 10, 10, 1);
  const FoldAssignment fa = make_folds(ds, 5, 42);
  // per fold: 2 treated, 2 control, 2 external
  for (int f = 0; f < 5; ++f) {
    int ct = 0, cc = 0, ec = 0;
    for (Eigen::Index i = 0; i < ds.n_rows(); ++i) {
      if (fa.fold[static_cast<size_t>(i)] != f) continue;
      if (ds.S[i] == 1.0 && ds.A[i] == 1.0) ++ct;
      else if (ds.S[i] == 1.0) ++cc;
      else ++ec;
    }
    CHECK(ct == 2);
    CHECK(cc == 2);
    CHECK(ec == 2);
  }
}

TEST_CASE("folds are deterministic given the seed") {
  const Dataset ds = strat_dataset(20, 20, 15, 2);
  const FoldAssignment a = make_folds(ds, 4, 7);
  const FoldAssignment b = make_folds(ds, 4, 7);
  CHECK(a.fold == b.fold);
  const FoldAssignment c = make_folds(ds, 4, 8);
  CHECK(a.fold != c.fold);
}

TEST_CASE("a stratum smaller than k raises, naming the stratum") {
  Dataset ds = strat_dataset(1, 10, 10, 3);
  CHECK_THROWS_WITH_AS(make_folds(ds, 2, 1), doctest::Contains("A=1"),
                       std::runtime_error);
}

TEST_CASE("cv: singleton grid returns that pair") {
  const Dataset ds = strat_dataset(15, 15, 15, 4);
  const BasisSpec spec{2, BasisSpec::Scheme::total_degree, true};
  const DesignMatrix D = assemble_design(ds, spec, spec);
  CVPlan plan;
  plan.folds = 3;
  plan.sc_grid = {1.0};
  plan.n_lambda = 1;
  plan.seed = 5;
  PenaltyConfig cfg;
  const CVResult cv = cv_select(D, ds.Y, ds, plan, cfg);
  REQUIRE(cv.table.size() == 1);
  CHECK(cv.best_lambda1 == cv.table[0].lambda1);
  CHECK(cv.best_lambda2 == cv.table[0].lambda2);
  CHECK(cv.best_lambda1 == cv.best_lambda2);  // sc = 1
}

TEST_CASE("cv: table is exhaustive and the winner attains the minimum") {
  const Dataset ds = strat_dataset(25, 25, 30, 6);
  const BasisSpec spec{2, BasisSpec::Scheme::total_degree, true};
  const DesignMatrix D = assemble_design(ds, spec, spec);
  CVPlan plan;
  plan.folds = 4;
  plan.sc_grid = {0.5, 1.0, 2.0};
  plan.n_lambda = 8;
  plan.seed = 11;
  PenaltyConfig cfg;
  const CVResult cv = cv_select(D, ds.Y, ds, plan, cfg);
  CHECK(cv.table.size() == 24);
  double min_err = 1e300, min_se = 0.0;
  for (const auto& cell : cv.table) {
    if (!cell.valid) continue;
    if (cell.mean_err < min_err) {
      min_err = cell.mean_err;
      min_se = cell.se;
    }
    CHECK(cell.lambda2 == doctest::Approx(cell.sc * cell.lambda1).epsilon(1e-12));
  }
  // the winner sits within the quarter-standard-error band of the minimum
  bool winner_seen = false;
  for (const auto& cell : cv.table) {
    if (cell.valid && cell.lambda1 == cv.best_lambda1 &&
        cell.lambda2 == cv.best_lambda2) {
      winner_seen = true;
      CHECK(cell.mean_err <= min_err + 0.25 * min_se + 1e-15);
    }
  }
  CHECK(winner_seen);
}

TEST_CASE("cv: deterministic given identical inputs") {
  const Dataset ds = strat_dataset(20, 20, 20, 7);
  const BasisSpec spec{2, BasisSpec::Scheme::total_degree, true};
  const DesignMatrix D = assemble_design(ds, spec, spec);
  CVPlan plan;
  plan.folds = 3;
  plan.sc_grid = {0.5, 2.0};
  plan.n_lambda = 5;
  plan.seed = 12;
  PenaltyConfig cfg;
  const CVResult a = cv_select(D, ds.Y, ds, plan, cfg);
  const CVResult b = cv_select(D, ds.Y, ds, plan, cfg);
  CHECK(a.best_lambda1 == b.best_lambda1);
  CHECK(a.best_lambda2 == b.best_lambda2);
  for (size_t i = 0; i < a.table.size(); ++i)
    CHECK(a.table[i].mean_err == b.table[i].mean_err);
}

TEST_CASE("fold assignment partitions the rows (held-out disjointness)") {
  const Dataset ds = strat_dataset(12, 12, 12, 8);
  const FoldAssignment fa = make_folds(ds, 3, 9);
  std::set<int> seen;
  for (Eigen::Index i = 0; i < ds.n_rows(); ++i) {
    CHECK(fa.fold[static_cast<size_t>(i)] >= 0);
    CHECK(fa.fold[static_cast<size_t>(i)] < 3);
    seen.insert(fa.fold[static_cast<size_t>(i)]);
  }
  CHECK(seen.size() == 3);
}
