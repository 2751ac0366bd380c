#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dpie/dataset.hpp"

namespace dpie {

// Power-series sieve specification. total_degree emits monomials with
// 1 <= sum(e) <= q (pure powers only when cross terms are off);
// tensor_product emits every monomial with each exponent <= q, giving
// (q+1)^d terms counting the constant.
struct BasisSpec {
  enum class Scheme { total_degree, tensor_product };
  int max_power = 3;
  Scheme scheme = Scheme::total_degree;
  bool include_cross_terms = true;
};

// exponent tuples in graded-lexicographic order (degree, then first
// variable's exponent descending); excludes the constant term
std::vector<std::vector<int>> basis_exponents(int d, const BasisSpec& spec);

// evaluates the monomial basis columns for each row of X
Eigen::MatrixXd power_basis(const Eigen::MatrixXd& X, const BasisSpec& spec);

std::vector<std::string> basis_names(const std::vector<std::string>& columns,
                                     const BasisSpec& spec);

// Linear map A_K with R = B * A_K^T satisfying (1/N) R^T R = I, from the
// Cholesky factor of the sample Gram matrix (positive diagonal, so the
// result is reproducible). Throws on rank deficiency, naming the column.
struct Orthonormalized {
  Eigen::MatrixXd R;
  Eigen::MatrixXd transform;  // A_K, k x k lower-triangular inverse factor
};
Orthonormalized orthonormalize(const Eigen::MatrixXd& B);

enum class ColumnGroup { intercept, treatment, mu_basis, bias_basis };

// Assembled regressor matrix [1 | A | p_mu(X) | (1-S) .* p_b(X)] with
// per-column group labels. Bias columns are written as exact zeros on
// experiment rows. When the treatment column is constant zero (pure
// regression data) it is left out and has_treatment is false.
struct DesignMatrix {
  Eigen::MatrixXd M;
  std::vector<ColumnGroup> groups;
  std::vector<std::string> names;
  Eigen::VectorXd study;  // S per row
  bool has_treatment = true;
  std::vector<Eigen::Index> degenerate_cols;  // all-zero bias columns (m = 0)

  Eigen::Index n_rows() const { return M.rows(); }
  Eigen::Index n_cols() const { return M.cols(); }
  Eigen::Index k1() const;  // intercept + treatment + mu columns
  Eigen::Index k2() const;  // bias columns
  Eigen::Index treatment_col() const;  // -1 when absent
  std::vector<Eigen::Index> group_cols(ColumnGroup g) const;
};

DesignMatrix assemble_design(const Dataset& ds, const BasisSpec& mu_spec,
                             const BasisSpec& b_spec);

void save_design_csv(const DesignMatrix& D, const std::string& path);

}  // namespace dpie
