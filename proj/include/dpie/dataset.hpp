#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace dpie {

// Combined two-source sample. Rows with S=1 come from the randomized
// experiment and carry a 0/1 treatment; rows with S=0 are external
// controls and are untreated by construction.
struct Dataset {
  Eigen::MatrixXd X;                      // N x d covariates
  Eigen::VectorXd A;                      // treatment, 0/1
  Eigen::VectorXd Y;                      // outcome
  Eigen::VectorXd S;                      // study indicator, 1 = experiment
  std::vector<std::string> column_names;  // length d

  Eigen::Index n_rows() const { return X.rows(); }
  Eigen::Index n_cols() const { return X.cols(); }
  Eigen::Index n_re() const { return static_cast<Eigen::Index>(S.sum()); }
  Eigen::Index n_ec() const { return n_rows() - n_re(); }
  bool treatment_is_constant() const;

  // throws std::runtime_error on shape mismatch, non-binary A or S,
  // or a treated external-control row; require_re additionally demands at
  // least one experiment row (pure matching pools have none)
  void validate(bool require_re = true) const;

  Dataset rows(const std::vector<Eigen::Index>& idx) const;
  Dataset re_subset() const;  // rows with S=1
};

struct ScaleInfo {
  std::string column;
  double min = 0.0;
  double max = 0.0;
};

// what preprocessing dropped or rescaled, for reporting
struct IngestReport {
  std::vector<std::string> dropped_constant;
  std::vector<std::string> dropped_duplicate;
  std::vector<ScaleInfo> scaling;
};

// Strict CSV reader: header row, '.' decimal separator. The named outcome,
// treatment and study columns are extracted; every remaining column becomes
// a covariate. Constant covariate columns are dropped and reported.
Dataset load_csv(const std::string& path, const std::string& outcome_col,
                 const std::string& treat_col, const std::string& study_col,
                 IngestReport* report = nullptr, bool require_re = true);

void save_csv(const Dataset& ds, const std::string& path,
              const std::string& outcome_col = "Y",
              const std::string& treat_col = "A",
              const std::string& study_col = "S");

// maps every covariate column by (x - min) / (max - min)
Dataset scale_unit_interval(const Dataset& ds, IngestReport* report = nullptr);

// appends x_i * x_j for i < j (and x_i^2 when requested); products that are
// constant or duplicate an existing column are dropped and reported
Dataset pairwise_interactions(const Dataset& ds, bool include_squares,
                              IngestReport* report = nullptr);

// divides the named covariate columns in place; names matching outcome_name
// divide Y instead (earnings-style unit rescale)
Dataset divide_columns(const Dataset& ds, const std::vector<std::string>& names,
                       double divisor, const std::string& outcome_name = "");

}  // namespace dpie
