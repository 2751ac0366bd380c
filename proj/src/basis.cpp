#include "dpie/basis.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace dpie {

namespace {

void gen_sum_bounded(int d, int budget, std::vector<int>& cur,
                     std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == d) {
    out.push_back(cur);
    return;
  }
  for (int e = 0; e <= budget; ++e) {
    cur.push_back(e);
    gen_sum_bounded(d, budget - e, cur, out);
    cur.pop_back();
  }
}

bool graded_lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  const int da = std::accumulate(a.begin(), a.end(), 0);
  const int db = std::accumulate(b.begin(), b.end(), 0);
  if (da != db) return da < db;
  // within a degree, higher exponent on an earlier variable comes first
  return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

std::vector<std::vector<int>> basis_exponents(int d, const BasisSpec& spec) {
  if (d < 1) throw std::invalid_argument("basis needs at least one covariate");
  if (spec.max_power < 1) throw std::invalid_argument("max_power must be >= 1");
  const int q = spec.max_power;

  std::vector<std::vector<int>> all;
  if (spec.scheme == BasisSpec::Scheme::total_degree) {
    if (spec.include_cross_terms) {
      std::vector<int> cur;
      gen_sum_bounded(d, q, cur, all);
      std::erase_if(all, [](const std::vector<int>& e) {
        return std::accumulate(e.begin(), e.end(), 0) == 0;
      });
    } else {
      for (int p = 1; p <= q; ++p) {
        for (int j = 0; j < d; ++j) {
          std::vector<int> e(static_cast<size_t>(d), 0);
          e[static_cast<size_t>(j)] = p;
          all.push_back(std::move(e));
        }
      }
    }
  } else {
    double count = 1.0;
    for (int j = 0; j < d; ++j) count *= q + 1;
    if (count > 1e6)
      throw std::invalid_argument("tensor_product basis too large: (q+1)^d = " +
                                  std::to_string(count));
    std::vector<int> e(static_cast<size_t>(d), 0);
    while (true) {
      if (std::any_of(e.begin(), e.end(), [](int v) { return v > 0; }))
        all.push_back(e);
      int j = d - 1;
      while (j >= 0 && e[static_cast<size_t>(j)] == q) {
        e[static_cast<size_t>(j)] = 0;
        --j;
      }
      if (j < 0) break;
      ++e[static_cast<size_t>(j)];
    }
  }
  std::sort(all.begin(), all.end(), graded_lex_less);
  return all;
}

Eigen::MatrixXd power_basis(const Eigen::MatrixXd& X, const BasisSpec& spec) {
  const auto expo = basis_exponents(static_cast<int>(X.cols()), spec);
  Eigen::MatrixXd B(X.rows(), static_cast<Eigen::Index>(expo.size()));
  for (size_t k = 0; k < expo.size(); ++k) {
    Eigen::VectorXd col = Eigen::VectorXd::Ones(X.rows());
    for (size_t j = 0; j < expo[k].size(); ++j) {
      for (int p = 0; p < expo[k][j]; ++p)
        col = col.cwiseProduct(X.col(static_cast<Eigen::Index>(j)));
    }
    B.col(static_cast<Eigen::Index>(k)) = col;
  }
  return B;
}

std::vector<std::string> basis_names(const std::vector<std::string>& columns,
                                     const BasisSpec& spec) {
  const auto expo = basis_exponents(static_cast<int>(columns.size()), spec);
  std::vector<std::string> names;
  names.reserve(expo.size());
  for (const auto& e : expo) {
    std::string name;
    for (size_t j = 0; j < e.size(); ++j) {
      if (e[j] == 0) continue;
      if (!name.empty()) name += "*";
      name += columns[j];
      if (e[j] > 1) name += "^" + std::to_string(e[j]);
    }
    names.push_back(name);
  }
  return names;
}

Orthonormalized orthonormalize(const Eigen::MatrixXd& B) {
  const Eigen::Index k = B.cols();
  const double n = static_cast<double>(B.rows());
  const Eigen::MatrixXd gram = B.transpose() * B / n;

  // lower Cholesky with positive diagonal; a non-positive pivot marks the
  // first column that is linearly dependent on its predecessors
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(k, k);
  const double tol = 1e-12 * std::max(1.0, gram.diagonal().maxCoeff());
  for (Eigen::Index j = 0; j < k; ++j) {
    double diag = gram(j, j);
    for (Eigen::Index p = 0; p < j; ++p) diag -= L(j, p) * L(j, p);
    if (diag <= tol)
      throw std::runtime_error("basis column " + std::to_string(j) +
                               " is linearly dependent on earlier columns");
    L(j, j) = std::sqrt(diag);
    for (Eigen::Index i = j + 1; i < k; ++i) {
      double v = gram(i, j);
      for (Eigen::Index p = 0; p < j; ++p) v -= L(i, p) * L(j, p);
      L(i, j) = v / L(j, j);
    }
  }

  Orthonormalized out;
  out.transform = L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(k, k));
  out.R = B * out.transform.transpose();
  return out;
}

Eigen::Index DesignMatrix::k1() const {
  Eigen::Index c = 0;
  for (const auto g : groups)
    if (g != ColumnGroup::bias_basis) ++c;
  return c;
}

Eigen::Index DesignMatrix::k2() const { return n_cols() - k1(); }

Eigen::Index DesignMatrix::treatment_col() const {
  for (size_t j = 0; j < groups.size(); ++j)
    if (groups[j] == ColumnGroup::treatment) return static_cast<Eigen::Index>(j);
  return -1;
}

std::vector<Eigen::Index> DesignMatrix::group_cols(ColumnGroup g) const {
  std::vector<Eigen::Index> out;
  for (size_t j = 0; j < groups.size(); ++j)
    if (groups[j] == g) out.push_back(static_cast<Eigen::Index>(j));
  return out;
}

DesignMatrix assemble_design(const Dataset& ds, const BasisSpec& mu_spec,
                             const BasisSpec& b_spec) {
  const Eigen::Index n = ds.n_rows();
  const Eigen::MatrixXd mu = power_basis(ds.X, mu_spec);
  const Eigen::MatrixXd bias = power_basis(ds.X, b_spec);
  const auto mu_names = basis_names(ds.column_names, mu_spec);
  const auto bias_names = basis_names(ds.column_names, b_spec);

  DesignMatrix D;
  D.has_treatment = !ds.treatment_is_constant();
  const Eigen::Index fixed = D.has_treatment ? 2 : 1;
  D.M.resize(n, fixed + mu.cols() + bias.cols());
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
  const Eigen::Index b0 = fixed + mu.cols();
  for (Eigen::Index j = 0; j < bias.cols(); ++j) {
    // exact zeros on experiment rows, raw basis values on external rows
    for (Eigen::Index i = 0; i < n; ++i)
      D.M(i, b0 + j) = (ds.S[i] == 1.0) ? 0.0 : bias(i, j);
    D.groups.push_back(ColumnGroup::bias_basis);
    D.names.push_back("b:" + bias_names[static_cast<size_t>(j)]);
    if ((D.M.col(b0 + j).array() == 0.0).all())
      D.degenerate_cols.push_back(b0 + j);
  }
  return D;
}

void save_design_csv(const DesignMatrix& D, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  const auto group_name = [](ColumnGroup g) {
    switch (g) {
      case ColumnGroup::intercept: return "intercept";
      case ColumnGroup::treatment: return "treatment";
      case ColumnGroup::mu_basis: return "mu_basis";
      default: return "bias_basis";
    }
  };
  for (size_t j = 0; j < D.groups.size(); ++j)
    out << (j ? "," : "") << group_name(D.groups[j]);
  out << '\n';
  for (size_t j = 0; j < D.names.size(); ++j)
    out << (j ? "," : "") << D.names[j];
  out << '\n';
  for (Eigen::Index i = 0; i < D.n_rows(); ++i) {
    for (Eigen::Index j = 0; j < D.n_cols(); ++j) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof(buf), D.M(i, j));
      out << (j ? "," : "") << std::string(buf, res.ptr);
    }
    out << '\n';
  }
}

}  // namespace dpie
