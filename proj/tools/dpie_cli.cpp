// Command-line front end: fit estimators on a CSV, run the simulation
// studies, build matched external controls, or re-render saved reports.
// Flag precedence: command line > --config JSON > built-in defaults.
// Exit codes: 0 success, 1 computation error, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "dpie/dataset.hpp"
#include "dpie/estimators.hpp"
#include "dpie/matching.hpp"
#include "dpie/report.hpp"
#include "dpie/sim.hpp"

using nlohmann::json;
using namespace dpie;

namespace {

json load_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      std::ifstream in(argv[i + 1]);
      if (!in) throw CLI::ValidationError("--config", "cannot open config file");
      json cfg;
      in >> cfg;
      return cfg;
    }
  }
  return json::object();
}

// command line wins, then the config file, then the default
template <typename T>
T resolve(const CLI::Option* opt, const T& cli_value, const json& cfg,
          const std::string& key, const T& fallback) {
  if (opt && opt->count() > 0) return cli_value;
  if (cfg.contains(key)) return cfg.at(key).get<T>();
  return fallback;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

// either an explicit comma list or lo:hi:count, log-spaced
std::vector<double> parse_sc_grid(const std::string& text) {
  if (text.find(':') != std::string::npos) {
    std::stringstream ss(text);
    std::string lo_s, hi_s, n_s;
    std::getline(ss, lo_s, ':');
    std::getline(ss, hi_s, ':');
    std::getline(ss, n_s, ':');
    const double lo = std::stod(lo_s), hi = std::stod(hi_s);
    const int n = std::stoi(n_s);
    if (n < 1 || lo <= 0 || hi < lo)
      throw CLI::ValidationError("--sc-grid", "expected lo:hi:count with 0 < lo <= hi");
    std::vector<double> grid;
    for (int i = 0; i < n; ++i) {
      const double f = (n == 1) ? 0.0 : static_cast<double>(i) / (n - 1);
      grid.push_back(lo * std::pow(hi / lo, f));
    }
    return grid;
  }
  return parse_double_list(text);
}

uint64_t resolve_seed(const CLI::Option* opt, uint64_t cli_seed, const json& cfg) {
  if (opt && opt->count() > 0) return cli_seed;
  if (cfg.contains("seed")) return cfg.at("seed").get<uint64_t>();
  if (const char* env = std::getenv("DPIE_SEED")) return std::strtoull(env, nullptr, 10);
  return 0;
}

BasisSpec::Scheme scheme_from_name(const std::string& name) {
  if (name == "total" || name == "total_degree") return BasisSpec::Scheme::total_degree;
  if (name == "tensor" || name == "tensor_product") return BasisSpec::Scheme::tensor_product;
  throw CLI::ValidationError("--basis-scheme", "expected total or tensor");
}

std::vector<Method> parse_methods(const std::string& text) {
  std::vector<Method> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(method_from_name(item));
  }
  if (out.empty()) throw CLI::ValidationError("--methods", "no methods given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-penalty integration estimator for combining randomized "
               "experiments with external controls"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags override it)");

  json cfg;
  try {
    cfg = load_config(argc, argv);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "fit DPIE/SPIE/RE on a CSV dataset");
  struct {
    std::string input, output_dir = "dpie_out", methods = "DPIE,SPIE,RE";
    std::string outcome_col = "Y", treat_col = "A", study_col = "S";
    int basis_q = 1;
    std::string basis_scheme = "total";
    bool no_cross_terms = false;
    bool scale01 = false, interactions = false, squares = false;
    std::string divide_by;
    double reference_value = 0.0;
    std::string sc_grid = "0.01:100:13";
    int n_lambda = 50, folds = 10, jobs = 0;
    double lambda_min_ratio = 1e-3;
    uint64_t seed = 0;
  } f;
  auto* f_input = fit->add_option("--input", f.input, "input CSV path");
  auto* f_outdir = fit->add_option("--output-dir", f.output_dir, "output directory")->capture_default_str();
  auto* f_methods = fit->add_option("--method,--methods", f.methods, "comma list of DPIE,SPIE,RE")->capture_default_str();
  fit->add_option("--outcome-col", f.outcome_col, "outcome column")->capture_default_str();
  fit->add_option("--treat-col", f.treat_col, "treatment column")->capture_default_str();
  fit->add_option("--study-col", f.study_col, "study indicator column")->capture_default_str();
  auto* f_q = fit->add_option("--basis-q", f.basis_q, "sieve maximum power")->capture_default_str();
  auto* f_scheme = fit->add_option("--basis-scheme", f.basis_scheme, "total | tensor")->capture_default_str();
  fit->add_flag("--no-cross-terms", f.no_cross_terms, "pure powers only");
  fit->add_flag("--scale01", f.scale01, "scale covariates to [0,1]");
  fit->add_flag("--interactions", f.interactions, "append pairwise interactions");
  fit->add_flag("--squares", f.squares, "with --interactions, append squares");
  fit->add_option("--divide-by", f.divide_by,
                  "VALUE:col1,col2 unit rescale (outcome column allowed)");
  auto* f_ref = fit->add_option("--reference-value", f.reference_value,
                                "reference for the bias column of the summary");
  auto* f_scgrid = fit->add_option("--sc-grid", f.sc_grid, "lo:hi:count or comma list")->capture_default_str();
  auto* f_nlam = fit->add_option("--n-lambda", f.n_lambda, "path length per sc")->capture_default_str();
  auto* f_folds = fit->add_option("--folds", f.folds, "cross-validation folds")->capture_default_str();
  fit->add_option("--jobs", f.jobs, "worker threads (0 = hardware)")->capture_default_str();
  auto* f_minratio = fit->add_option("--lambda-min-ratio", f.lambda_min_ratio, "path floor ratio")->capture_default_str();
  auto* f_seed = fit->add_option("--seed", f.seed, "rng seed (env DPIE_SEED if absent)");

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo study");
  struct {
    std::string study;
    std::string setting = "S1";
    int T = 100, n = 1000, m = 1000;
    std::string c_grid, zero_counts;
    std::string methods;
    std::string formats = "csv,json";
    std::string output_dir = "dpie_out";
    std::string sc_grid = "0.01:100:13";
    int n_lambda = 50, folds = 10, jobs = 0;
    double lambda_min_ratio = 1e-3;
    uint64_t seed = 0;
  } s;
  sim->add_option("study", s.study, "study1 | study2")->required();
  auto* s_setting = sim->add_option("--setting", s.setting, "study2 outcome setting: S1 | S2")->capture_default_str();
  auto* s_T = sim->add_option("--T", s.T, "Monte Carlo replicates")->capture_default_str();
  auto* s_n = sim->add_option("--n", s.n, "experiment rows")->capture_default_str();
  auto* s_m = sim->add_option("--m", s.m, "external rows")->capture_default_str();
  sim->add_option("--c", s.c_grid, "study1 magnitude-ratio sweep, comma list");
  sim->add_option("--zero-counts", s.zero_counts,
                  "study1 sparsity sweep: zero entries of delta0, comma list");
  sim->add_option("--methods", s.methods, "comma list of estimators");
  sim->add_option("--format", s.formats, "comma list of csv,json,plotdata")->capture_default_str();
  sim->add_option("--output-dir", s.output_dir, "output directory")->capture_default_str();
  auto* s_scgrid = sim->add_option("--sc-grid", s.sc_grid, "lo:hi:count or comma list")->capture_default_str();
  auto* s_nlam = sim->add_option("--n-lambda", s.n_lambda, "path length per sc")->capture_default_str();
  auto* s_folds = sim->add_option("--folds", s.folds, "cross-validation folds")->capture_default_str();
  sim->add_option("--jobs", s.jobs, "worker threads (0 = hardware)")->capture_default_str();
  sim->add_option("--lambda-min-ratio", s.lambda_min_ratio, "path floor ratio")->capture_default_str();
  auto* s_seed = sim->add_option("--seed", s.seed, "rng seed (env DPIE_SEED if absent)");

  // ---- match ----
  auto* match = app.add_subcommand("match", "build external controls by matching");
  struct {
    std::string cc, pool;
    std::string output_dir = "dpie_out";
    int ratio = 2;
    std::string distance = "mahalanobis";
    bool with_replacement = false;
    bool scale01 = false;
    std::string outcome_col = "Y", treat_col = "A", study_col = "S";
  } mt;
  match->add_option("--cc", mt.cc, "concurrent-control CSV")->required();
  match->add_option("--pool", mt.pool, "candidate pool CSV")->required();
  match->add_option("--output-dir", mt.output_dir, "output directory")->capture_default_str();
  match->add_option("--ratio", mt.ratio, "pool rows claimed per control")->capture_default_str();
  match->add_option("--distance", mt.distance, "mahalanobis | euclidean")->capture_default_str();
  match->add_flag("--with-replacement", mt.with_replacement, "allow reuse of pool rows");
  match->add_flag("--scale01", mt.scale01, "scale covariates jointly before distances");
  match->add_option("--outcome-col", mt.outcome_col, "outcome column")->capture_default_str();
  match->add_option("--treat-col", mt.treat_col, "treatment column")->capture_default_str();
  match->add_option("--study-col", mt.study_col, "study indicator column")->capture_default_str();

  // ---- report ----
  auto* rep = app.add_subcommand("report", "re-render a saved JSON report");
  struct {
    std::string input, format = "csv";
    std::string output_dir = "dpie_out";
  } rp;
  rep->add_option("--input", rp.input, "metrics JSON path")->required();
  rep->add_option("--format", rp.format, "csv | plotdata")->capture_default_str();
  rep->add_option("--output-dir", rp.output_dir, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) {
      if (!*f_input && !cfg.contains("input")) {
        std::cerr << "fit: --input is required\n";
        return 2;
      }
      const std::string input = resolve(f_input, f.input, cfg, "input", f.input);
      const uint64_t seed = resolve_seed(f_seed, f.seed, cfg);
      f.output_dir = resolve(f_outdir, f.output_dir, cfg, "output-dir", f.output_dir);
      f.methods = resolve(f_methods, f.methods, cfg, "methods", f.methods);
      f.basis_q = resolve(f_q, f.basis_q, cfg, "basis-q", f.basis_q);
      f.basis_scheme = resolve(f_scheme, f.basis_scheme, cfg, "basis-scheme", f.basis_scheme);
      f.sc_grid = resolve(f_scgrid, f.sc_grid, cfg, "sc-grid", f.sc_grid);
      f.n_lambda = resolve(f_nlam, f.n_lambda, cfg, "n-lambda", f.n_lambda);
      f.folds = resolve(f_folds, f.folds, cfg, "folds", f.folds);
      f.lambda_min_ratio = resolve(f_minratio, f.lambda_min_ratio, cfg, "lambda-min-ratio", f.lambda_min_ratio);

      Dataset ds = load_csv(input, f.outcome_col, f.treat_col, f.study_col);
      if (!f.divide_by.empty()) {
        const auto colon = f.divide_by.find(':');
        if (colon == std::string::npos) {
          std::cerr << "fit: --divide-by expects VALUE:col1,col2\n";
          return 2;
        }
        const double divisor = std::stod(f.divide_by.substr(0, colon));
        std::vector<std::string> cols;
        std::stringstream ss(f.divide_by.substr(colon + 1));
        std::string item;
        while (std::getline(ss, item, ',')) cols.push_back(item);
        ds = divide_columns(ds, cols, divisor, f.outcome_col);
      }
      if (f.scale01) ds = scale_unit_interval(ds);
      if (f.interactions) ds = pairwise_interactions(ds, f.squares);

      BasisSpec basis;
      basis.max_power = f.basis_q;
      basis.scheme = scheme_from_name(f.basis_scheme);
      basis.include_cross_terms = !f.no_cross_terms;

      CVPlan plan;
      plan.folds = f.folds;
      plan.sc_grid = parse_sc_grid(f.sc_grid);
      plan.n_lambda = f.n_lambda;
      plan.lambda_min_ratio = f.lambda_min_ratio;
      plan.seed = seed;
      PenaltyConfig pen;

      std::filesystem::create_directories(f.output_dir);
      std::vector<ATEResult> rows;
      for (const Method m : parse_methods(f.methods)) {
        EstimatorOutput out;
        switch (m) {
          case Method::DPIE: out = dpie_full(ds, basis, basis, plan, pen); break;
          case Method::SPIE: out = spie_full(ds, basis, basis, plan, pen); break;
          case Method::RE: out = re_only_full(ds, basis, plan, pen); break;
          default:
            std::cerr << "fit supports DPIE, SPIE and RE\n";
            return 2;
        }
        rows.push_back(out.ate);
        write_file_atomic(f.output_dir + "/ate_" + method_name(m) + ".json",
                          ate_result_to_json(out.ate));
        write_cv_table_csv(out.cv, f.output_dir + "/cv_" + method_name(m) + ".csv");
      }
      const std::string table =
          format_ate_table(rows, f.reference_value, f_ref->count() > 0);
      write_file_atomic(f.output_dir + "/summary.txt", table);
      std::cout << table;
      return 0;
    }

    if (sim->parsed()) {
      const uint64_t seed = resolve_seed(s_seed, s.seed, cfg);
      s.setting = resolve(s_setting, s.setting, cfg, "setting", s.setting);
      s.T = resolve(s_T, s.T, cfg, "T", s.T);
      s.n = resolve(s_n, s.n, cfg, "n", s.n);
      s.m = resolve(s_m, s.m, cfg, "m", s.m);
      s.sc_grid = resolve(s_scgrid, s.sc_grid, cfg, "sc-grid", s.sc_grid);
      s.n_lambda = resolve(s_nlam, s.n_lambda, cfg, "n-lambda", s.n_lambda);
      s.folds = resolve(s_folds, s.folds, cfg, "folds", s.folds);
      if (s.T < 2) {
        std::cerr << "simulate: --T must be at least 2\n";
        return 2;
      }
      HarnessConfig hc = default_harness_config();
      hc.plan.folds = s.folds;
      hc.plan.sc_grid = parse_sc_grid(s.sc_grid);
      hc.plan.n_lambda = s.n_lambda;
      hc.plan.lambda_min_ratio = s.lambda_min_ratio;
      hc.plan.seed = seed;
      hc.jobs = s.jobs > 0 ? s.jobs
                           : static_cast<int>(std::thread::hardware_concurrency());

      SweepReport report;
      if (s.study == "study1") {
        report.study = "study1";
        std::vector<Method> methods =
            s.methods.empty() ? std::vector<Method>{Method::DPIE, Method::SPIE, Method::RE}
                              : parse_methods(s.methods);
        if (!s.c_grid.empty() && !s.zero_counts.empty()) {
          std::cerr << "simulate study1: give either --c or --zero-counts, not both\n";
          return 2;
        }
        if (!s.zero_counts.empty()) {
          report.x_name = "zero_fraction";
          for (const double z : parse_double_list(s.zero_counts)) {
            Study1Spec spec;
            spec.n = s.n;
            spec.m = s.m;
            spec.c = 1.0;
            spec.zero_fraction_delta = z / 50.0;
            SweepPoint pt;
            pt.x = spec.zero_fraction_delta;
            pt.metrics = run_monte_carlo(spec, methods, s.T, seed, hc);
            report.points.push_back(std::move(pt));
          }
        } else {
          report.x_name = "c";
          const std::vector<double> cs = s.c_grid.empty()
                                             ? std::vector<double>{1, 3, 5, 7, 9}
                                             : parse_double_list(s.c_grid);
          for (const double c : cs) {
            Study1Spec spec;
            spec.n = s.n;
            spec.m = s.m;
            spec.c = c;
            spec.zero_fraction_delta = 0.5;
            SweepPoint pt;
            pt.x = c;
            pt.metrics = run_monte_carlo(spec, methods, s.T, seed, hc);
            report.points.push_back(std::move(pt));
          }
        }
      } else if (s.study == "study2") {
        report.study = "study2";
        report.x_name = "setting";
        std::vector<Method> methods =
            s.methods.empty()
                ? std::vector<Method>{Method::DPIE, Method::RE, Method::BPP, Method::MBA}
                : parse_methods(s.methods);
        Study2Spec spec;
        spec.n = s.n;
        spec.m = s.m;
        if (s.setting == "S1") spec.setting = Study2Setting::S1;
        else if (s.setting == "S2") spec.setting = Study2Setting::S2;
        else {
          std::cerr << "simulate study2: --setting must be S1 or S2\n";
          return 2;
        }
        SweepPoint pt;
        pt.x = (spec.setting == Study2Setting::S1) ? 1.0 : 2.0;
        pt.metrics = run_monte_carlo(spec, methods, s.T, seed, hc);
        report.points.push_back(std::move(pt));
      } else {
        std::cerr << "simulate: study must be study1 or study2\n";
        return 2;
      }

      const std::string stem = report.study + (s.study == "study2" ? "_" + s.setting : "");
      std::stringstream fmts(s.formats);
      std::string fmt_item;
      while (std::getline(fmts, fmt_item, ',')) {
        if (fmt_item.empty()) continue;
        for (const auto& path :
             emit_report(report, report_format_from_name(fmt_item), s.output_dir, stem))
          std::cout << "wrote " << path << "\n";
      }
      return 0;
    }

    if (match->parsed()) {
      if (mt.ratio < 1) {
        std::cerr << "match: --ratio must be at least 1\n";
        return 2;
      }
      const Dataset cc_all = load_csv(mt.cc, mt.outcome_col, mt.treat_col, mt.study_col);
      const Dataset pool =
          load_csv(mt.pool, mt.outcome_col, mt.treat_col, mt.study_col,
                   nullptr, /*require_re=*/false);

      // queries are the untreated experiment rows of the --cc file
      std::vector<Eigen::Index> cc_rows;
      for (Eigen::Index i = 0; i < cc_all.n_rows(); ++i)
        if (cc_all.S[i] == 1.0 && cc_all.A[i] == 0.0) cc_rows.push_back(i);
      if (cc_rows.empty()) {
        std::cerr << "match: no untreated experiment rows in " << mt.cc << "\n";
        return 2;
      }
      Dataset cc = cc_all.rows(cc_rows);

      MatchSpec spec;
      spec.ratio = mt.ratio;
      spec.with_replacement = mt.with_replacement;
      if (mt.distance == "euclidean") spec.distance = MatchSpec::Distance::euclidean;
      else if (mt.distance != "mahalanobis") {
        std::cerr << "match: --distance must be mahalanobis or euclidean\n";
        return 2;
      }

      Dataset cc_d = cc, pool_d = pool;
      if (mt.scale01) {
        // joint scaling so distances are comparable across files
        Dataset joint = cc;
        const Eigen::Index nc = cc.n_rows();
        joint.X.conservativeResize(nc + pool.n_rows(), Eigen::NoChange);
        joint.X.bottomRows(pool.n_rows()) = pool.X;
        Eigen::MatrixXd scaled = joint.X;
        for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
          const double lo = scaled.col(j).minCoeff(), hi = scaled.col(j).maxCoeff();
          if (hi > lo) scaled.col(j) = (scaled.col(j).array() - lo) / (hi - lo);
        }
        cc_d.X = scaled.topRows(nc);
        pool_d.X = scaled.bottomRows(pool.n_rows());
      }

      const MatchResult res = greedy_match(cc_d.X, pool_d.X, spec);
      Dataset ec = pool.rows(res.claimed_rows);  // original units
      ec.S.setZero();
      ec.A.setZero();

      std::filesystem::create_directories(mt.output_dir);
      save_csv(ec, mt.output_dir + "/matched_ec.csv", mt.outcome_col, mt.treat_col,
               mt.study_col);
      save_match_report_csv(res, mt.output_dir + "/match_report.csv");
      std::cout << "matched " << ec.n_rows() << " external controls\n";
      return 0;
    }

    if (rep->parsed()) {
      const SweepReport report = parse_report_json(rp.input);
      const std::string stem =
          std::filesystem::path(rp.input).stem().string() + "_rendered";
      for (const auto& path : emit_report(report, report_format_from_name(rp.format),
                                          rp.output_dir, stem))
        std::cout << "wrote " << path << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
