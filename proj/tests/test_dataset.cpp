#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dpie/dataset.hpp"
#include "dpie/matching.hpp"
#include "dpie/rng.hpp"

using namespace dpie;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path =
      (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << content;
  return path;
}

Dataset random_dataset(int n, int m, int d, uint64_t seed) {
  Philox rng(seed);
  Dataset ds;
  ds.X.resize(n + m, d);
  ds.A.resize(n + m);
  ds.Y.resize(n + m);
  ds.S.resize(n + m);
  for (int j = 0; j < d; ++j) ds.column_names.push_back("x" + std::to_string(j + 1));
  for (int i = 0; i < n + m; ++i) {
    for (int j = 0; j < d; ++j) ds.X(i, j) = rng.uniform(-1, 1);
    ds.S[i] = i < n ? 1.0 : 0.0;
    ds.A[i] = (ds.S[i] == 1.0 && rng.bernoulli(0.5)) ? 1.0 : 0.0;
    ds.Y[i] = rng.normal();
  }
  return ds;
}

}  // namespace

TEST_CASE("load_csv drops constant columns and reports them") {
  const auto path = write_temp("dpie_const.csv",
                               "y,a,s,x1,x2\n"
                               "1.0,1,1,7,0.1\n"
                               "2.0,0,1,7,0.4\n"
                               "0.5,0,0,7,0.9\n"
                               "0.7,0,0,7,0.3\n");
  IngestReport report;
  const Dataset ds = load_csv(path, "y", "a", "s", &report);
  CHECK(ds.n_cols() == 1);  // x1 dropped
  CHECK(ds.column_names == std::vector<std::string>{"x2"});
  REQUIRE(report.dropped_constant.size() == 1);
  CHECK(report.dropped_constant[0] == "x1");
  CHECK(ds.n_re() == 2);
  CHECK(ds.n_ec() == 2);
}

TEST_CASE("load_csv rejects a treated external-control row, citing it") {
  const auto path = write_temp("dpie_bad.csv",
                               "y,a,s,x1\n"
                               "1,1,1,0.2\n"
                               "2,0,1,0.3\n"
                               "3,1,0,0.4\n");
  CHECK_THROWS_WITH_AS(load_csv(path, "y", "a", "s"),
                       doctest::Contains("row 3"), std::runtime_error);
}

TEST_CASE("load_csv names the missing column") {
  const auto path = write_temp("dpie_missing.csv", "y,a,s,x1\n1,1,1,2\n");
  CHECK_THROWS_WITH_AS(load_csv(path, "y", "a", "study"),
                       doctest::Contains("study"), std::runtime_error);
}

TEST_CASE("load_csv reports the offending cell on parse errors") {
  const auto path = write_temp("dpie_parse.csv",
                               "y,a,s,x1\n1,1,1,2\n1,0,1,oops\n");
  CHECK_THROWS_WITH_AS(load_csv(path, "y", "a", "s"),
                       doctest::Contains("oops"), std::runtime_error);
}

TEST_CASE("ingest -> serialize -> ingest is the identity") {
  Dataset ds = random_dataset(20, 10, 4, 99);
  const auto path =
      (std::filesystem::temp_directory_path() / "dpie_roundtrip.csv").string();
  save_csv(ds, path);
  const Dataset back = load_csv(path, "Y", "A", "S");
  CHECK(back.X == ds.X);  // exact round-trip via shortest representation
  CHECK(back.A == ds.A);
  CHECK(back.Y == ds.Y);
  CHECK(back.S == ds.S);
  CHECK(back.column_names == ds.column_names);
}

TEST_CASE("scale_unit_interval maps [min,max] to [0,1]") {
  Dataset ds = random_dataset(6, 0, 1, 5);
  ds.X.col(0) << 2, 4, 6, 2, 4, 6;
  Dataset out = scale_unit_interval(ds);
  CHECK(out.X(0, 0) == 0.0);
  CHECK(out.X(1, 0) == 0.5);
  CHECK(out.X(2, 0) == 1.0);

  // a 0/1 column is a fixed point
  ds.X.col(0) << 0, 1, 0, 1, 1, 0;
  out = scale_unit_interval(ds);
  CHECK(out.X.col(0) == ds.X.col(0));

  // hand evaluation of (x - min)/(max - min)
  Dataset ds3 = random_dataset(3, 0, 1, 6);
  ds3.X.col(0) << -1, 0, 3;
  out = scale_unit_interval(ds3);
  CHECK(out.X(0, 0) == 0.0);
  CHECK(out.X(1, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(out.X(2, 0) == 1.0);

  // constant column must have been dropped first
  ds3.X.col(0).setConstant(4.0);
  CHECK_THROWS(scale_unit_interval(ds3));
}

TEST_CASE("scaled columns hit 0 and 1 exactly") {
  Dataset ds = random_dataset(50, 20, 5, 31);
  const Dataset out = scale_unit_interval(ds);
  for (Eigen::Index j = 0; j < out.n_cols(); ++j) {
    CHECK(out.X.col(j).minCoeff() == 0.0);
    CHECK(out.X.col(j).maxCoeff() == 1.0);
  }
}

TEST_CASE("pairwise interactions: counts, squares, deduplication") {
  Dataset ds = random_dataset(10, 5, 3, 7);
  const Dataset no_sq = pairwise_interactions(ds, false);
  CHECK(no_sq.n_cols() == 6);  // 3 originals + C(3,2)

  // binary column: its square duplicates itself and is dropped
  Dataset binary = random_dataset(10, 5, 2, 8);
  for (int i = 0; i < 15; ++i) binary.X(i, 0) = (i % 2 == 0) ? 1.0 : 0.0;
  IngestReport report;
  const Dataset with_sq = pairwise_interactions(binary, true, &report);
  CHECK(((void)with_sq, !report.dropped_duplicate.empty()));

  // 8 covariates with squares: 8 + 8 + 28 = 44 candidates before drops
  Dataset eight = random_dataset(40, 10, 8, 9);
  const Dataset full = pairwise_interactions(eight, true);
  CHECK(full.n_cols() == 44);
}

TEST_CASE("pairwise interactions never emit two identical columns") {
  Dataset ds = random_dataset(12, 6, 4, 11);
  // force duplicates: x3 == x1, binary x4
  ds.X.col(2) = ds.X.col(0);
  for (int i = 0; i < 18; ++i) ds.X(i, 3) = (i % 3 == 0) ? 1.0 : 0.0;
  const Dataset out = pairwise_interactions(ds, true);
  for (Eigen::Index i = 0; i < out.n_cols(); ++i)
    for (Eigen::Index j = i + 1; j < out.n_cols(); ++j)
      CHECK(!(out.X.col(i).array() == out.X.col(j).array()).all());
}

TEST_CASE("greedy matching: zero-distance self-match") {
  Dataset cc = random_dataset(8, 0, 3, 21);
  const Dataset pool = cc;  // exact copies
  MatchSpec spec;
  spec.ratio = 1;
  spec.distance = MatchSpec::Distance::euclidean;
  const auto res = match_external_controls(cc, pool, spec);
  REQUIRE(res.report.pairs.size() == 8);
  for (const auto& p : res.report.pairs) {
    CHECK(p.cc_row == p.pool_row);  // lower-index tie-break finds the twin
    CHECK(p.distance == 0.0);
  }
  CHECK((res.ec.S.array() == 0.0).all());
}

TEST_CASE("greedy matching: pool shortfall raises with counts") {
  Dataset cc = random_dataset(3, 0, 2, 22);
  Dataset pool = random_dataset(5, 0, 2, 23);
  MatchSpec spec;
  spec.ratio = 2;
  CHECK_THROWS_WITH_AS(match_external_controls(cc, pool, spec),
                       doctest::Contains("need 6"), std::runtime_error);
}

TEST_CASE("matching without replacement never reuses a pool row") {
  Dataset cc = random_dataset(20, 0, 3, 24);
  Dataset pool = random_dataset(70, 0, 3, 25);
  MatchSpec spec;
  spec.ratio = 3;
  const auto res = match_external_controls(cc, pool, spec);
  std::vector<Eigen::Index> rows;
  for (const auto& p : res.report.pairs) rows.push_back(p.pool_row);
  std::sort(rows.begin(), rows.end());
  CHECK(std::adjacent_find(rows.begin(), rows.end()) == rows.end());
  CHECK(rows.size() == 60);
}

TEST_CASE("ratio-2 matching takes 2 rows per query in query order") {
  Dataset cc = random_dataset(260, 0, 4, 26);
  Dataset pool = random_dataset(800, 0, 4, 27);
  MatchSpec spec;
  spec.ratio = 2;
  const auto res = match_external_controls(cc, pool, spec);
  CHECK(res.ec.n_rows() == 520);
  CHECK(res.report.pairs.size() == 520);
  CHECK(res.report.pairs[0].cc_row == 0);
  CHECK(res.report.pairs[1].cc_row == 0);
  CHECK(res.report.pairs[2].cc_row == 1);
}

TEST_CASE("divide_columns rescales covariates and the outcome") {
  Dataset ds = random_dataset(5, 2, 2, 41);
  const Dataset out = divide_columns(ds, {"x1", "re78"}, 1000.0, "re78");
  CHECK(out.X.col(0) == ds.X.col(0) / 1000.0);
  CHECK(out.Y == ds.Y / 1000.0);
  CHECK_THROWS(divide_columns(ds, {"nope"}, 10.0));
}

TEST_CASE("a 1040-row two-source file ingests with the expected split") {
  std::ostringstream csv;
  csv << "y,a,s,x1,x2\n";
  Philox rng(1040);
  for (int i = 0; i < 1040; ++i) {
    const int s = i < 520 ? 1 : 0;
    const int a = (s == 1 && i % 2 == 0) ? 1 : 0;
    csv << rng.normal() << ',' << a << ',' << s << ',' << rng.uniform(0, 1)
        << ',' << rng.uniform(0, 1) << '\n';
  }
  const auto path = write_temp("dpie_1040.csv", csv.str());
  const Dataset ds = load_csv(path, "y", "a", "s");
  CHECK(ds.n_rows() == 1040);
  CHECK(ds.n_re() == 520);
  CHECK(ds.n_ec() == 520);
}
