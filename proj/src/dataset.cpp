#include "dpie/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dpie {

namespace {

bool is_binary01(const Eigen::VectorXd& v) {
  return ((v.array() == 0.0) || (v.array() == 1.0)).all();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim surrounding whitespace
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_cell(const std::string& cell, size_t row, const std::string& col) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw std::runtime_error("non-numeric cell '" + cell + "' at row " +
                             std::to_string(row) + ", column " + col);
  }
  return value;
}

bool column_constant(const Eigen::VectorXd& v) {
  return v.size() == 0 || (v.array() == v[0]).all();
}

}  // namespace

bool Dataset::treatment_is_constant() const { return column_constant(A); }

void Dataset::validate(bool require_re) const {
  const Eigen::Index n = X.rows();
  if (A.size() != n || Y.size() != n || S.size() != n)
    throw std::runtime_error("dataset fields have mismatched row counts");
  if (static_cast<Eigen::Index>(column_names.size()) != X.cols())
    throw std::runtime_error("column_names length does not match X");
  if (!is_binary01(A)) throw std::runtime_error("treatment column must be 0/1");
  if (!is_binary01(S)) throw std::runtime_error("study column must be 0/1");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (S[i] == 0.0 && A[i] == 1.0)
      throw std::runtime_error("treated external-control row " + std::to_string(i + 1));
  }
  if (require_re && n_re() < 1)
    throw std::runtime_error("no experiment rows (S=1) present");
}

Dataset Dataset::rows(const std::vector<Eigen::Index>& idx) const {
  Dataset out;
  out.column_names = column_names;
  out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
  out.A.resize(static_cast<Eigen::Index>(idx.size()));
  out.Y.resize(static_cast<Eigen::Index>(idx.size()));
  out.S.resize(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    out.A[static_cast<Eigen::Index>(i)] = A[idx[i]];
    out.Y[static_cast<Eigen::Index>(i)] = Y[idx[i]];
    out.S[static_cast<Eigen::Index>(i)] = S[idx[i]];
  }
  return out;
}

Dataset Dataset::re_subset() const {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < n_rows(); ++i)
    if (S[i] == 1.0) idx.push_back(i);
  return rows(idx);
}

Dataset load_csv(const std::string& path, const std::string& outcome_col,
                 const std::string& treat_col, const std::string& study_col,
                 IngestReport* report, bool require_re) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path);
  const auto header = split_line(line);

  const auto find_col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::runtime_error("missing column '" + name + "' in " + path);
    return static_cast<size_t>(it - header.begin());
  };
  const size_t yi = find_col(outcome_col);
  const size_t ai = find_col(treat_col);
  const size_t si = find_col(study_col);

  std::vector<size_t> x_idx;
  std::vector<std::string> x_names;
  for (size_t j = 0; j < header.size(); ++j) {
    if (j == yi || j == ai || j == si) continue;
    x_idx.push_back(j);
    x_names.push_back(header[j]);
  }

  std::vector<std::vector<double>> rows;
  size_t row_no = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("row " + std::to_string(row_no) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    std::vector<double> vals(header.size());
    for (size_t j = 0; j < cells.size(); ++j)
      vals[j] = parse_cell(cells[j], row_no, header[j]);
    rows.push_back(std::move(vals));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  if (n == 0) throw std::runtime_error("no data rows in " + path);

  Dataset ds;
  ds.X.resize(n, static_cast<Eigen::Index>(x_idx.size()));
  ds.A.resize(n);
  ds.Y.resize(n);
  ds.S.resize(n);
  ds.column_names = x_names;
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.Y[i] = rows[i][yi];
    ds.A[i] = rows[i][ai];
    ds.S[i] = rows[i][si];
    for (size_t j = 0; j < x_idx.size(); ++j)
      ds.X(i, static_cast<Eigen::Index>(j)) = rows[i][x_idx[j]];
  }

  if (!is_binary01(ds.A))
    throw std::runtime_error("treatment column '" + treat_col + "' contains values outside {0,1}");
  if (!is_binary01(ds.S))
    throw std::runtime_error("study column '" + study_col + "' contains values outside {0,1}");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.S[i] == 0.0 && ds.A[i] == 1.0)
      throw std::runtime_error("row " + std::to_string(i + 1) +
                               " is an external control with A=1");
  }

  // drop constant covariate columns
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < ds.X.cols(); ++j) {
    if (column_constant(ds.X.col(j))) {
      if (report) report->dropped_constant.push_back(ds.column_names[j]);
    } else {
      keep.push_back(j);
    }
  }
  if (static_cast<Eigen::Index>(keep.size()) != ds.X.cols()) {
    Eigen::MatrixXd Xk(n, static_cast<Eigen::Index>(keep.size()));
    std::vector<std::string> names_k;
    for (size_t j = 0; j < keep.size(); ++j) {
      Xk.col(static_cast<Eigen::Index>(j)) = ds.X.col(keep[j]);
      names_k.push_back(ds.column_names[keep[j]]);
    }
    ds.X = std::move(Xk);
    ds.column_names = std::move(names_k);
  }
  ds.validate(require_re);
  return ds;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void save_csv(const Dataset& ds, const std::string& path,
              const std::string& outcome_col, const std::string& treat_col,
              const std::string& study_col) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << outcome_col << ',' << treat_col << ',' << study_col;
  for (const auto& name : ds.column_names) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.n_rows(); ++i) {
    out << format_double(ds.Y[i]) << ',' << format_double(ds.A[i]) << ','
        << format_double(ds.S[i]);
    for (Eigen::Index j = 0; j < ds.n_cols(); ++j)
      out << ',' << format_double(ds.X(i, j));
    out << '\n';
  }
}

Dataset scale_unit_interval(const Dataset& ds, IngestReport* report) {
  Dataset out = ds;
  for (Eigen::Index j = 0; j < out.X.cols(); ++j) {
    const double lo = out.X.col(j).minCoeff();
    const double hi = out.X.col(j).maxCoeff();
    if (hi == lo)
      throw std::runtime_error("column '" + out.column_names[j] +
                               "' is constant; drop it before scaling");
    out.X.col(j) = (out.X.col(j).array() - lo) / (hi - lo);
    if (report) report->scaling.push_back({out.column_names[j], lo, hi});
  }
  return out;
}

Dataset pairwise_interactions(const Dataset& ds, bool include_squares,
                              IngestReport* report) {
  const Eigen::Index d = ds.n_cols();
  if (d < 2) throw std::invalid_argument("interactions need at least 2 covariates");
  const Eigen::Index n = ds.n_rows();

  std::vector<Eigen::VectorXd> cols;
  std::vector<std::string> names;

  const auto try_add = [&](Eigen::VectorXd col, const std::string& name) {
    if (column_constant(col)) {
      if (report) report->dropped_constant.push_back(name);
      return;
    }
    for (const auto& existing : cols) {
      if ((existing.array() == col.array()).all()) {
        if (report) report->dropped_duplicate.push_back(name);
        return;
      }
    }
    cols.push_back(std::move(col));
    names.push_back(name);
  };

  for (Eigen::Index j = 0; j < d; ++j)
    try_add(ds.X.col(j), ds.column_names[j]);
  if (include_squares) {
    for (Eigen::Index j = 0; j < d; ++j)
      try_add(ds.X.col(j).cwiseProduct(ds.X.col(j)),
              ds.column_names[j] + "^2");
  }
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j)
      try_add(ds.X.col(i).cwiseProduct(ds.X.col(j)),
              ds.column_names[i] + "*" + ds.column_names[j]);

  Dataset out = ds;
  out.X.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (size_t j = 0; j < cols.size(); ++j)
    out.X.col(static_cast<Eigen::Index>(j)) = cols[j];
  out.column_names = names;
  return out;
}

Dataset divide_columns(const Dataset& ds, const std::vector<std::string>& names,
                       double divisor, const std::string& outcome_name) {
  if (divisor == 0.0) throw std::invalid_argument("divisor must be nonzero");
  Dataset out = ds;
  for (const auto& name : names) {
    if (!outcome_name.empty() && name == outcome_name) {
      out.Y /= divisor;
      continue;
    }
    const auto it = std::find(out.column_names.begin(), out.column_names.end(), name);
    if (it == out.column_names.end())
      throw std::runtime_error("divide: no column named '" + name + "'");
    out.X.col(it - out.column_names.begin()) /= divisor;
  }
  return out;
}

}  // namespace dpie
