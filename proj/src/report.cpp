#include "dpie/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dpie {

using nlohmann::json;

ReportFormat report_format_from_name(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  if (name == "plotdata") return ReportFormat::plotdata;
  throw std::invalid_argument("unknown report format '" + name + "'");
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out << content;
    if (!out.good()) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

namespace {

json metrics_to_json(const MCMetrics& m) {
  return json{{"abs_bias", m.abs_bias},
              {"true_var", m.true_var},
              {"mse_tau", m.mse_tau},
              {"mean_est_var", m.mean_est_var},
              {"coverage", m.coverage},
              {"mse_beta", m.mse_beta},
              {"pct_over_select", m.pct_over_select},
              {"pct_under_select", m.pct_under_select},
              {"T", m.T},
              {"n_failed", m.n_failed},
              {"valid", m.valid}};
}

MCMetrics metrics_from_json(const json& j) {
  MCMetrics m;
  m.abs_bias = j.at("abs_bias");
  m.true_var = j.at("true_var");
  m.mse_tau = j.at("mse_tau");
  m.mean_est_var = j.at("mean_est_var");
  m.coverage = j.at("coverage");
  m.mse_beta = j.at("mse_beta");
  m.pct_over_select = j.at("pct_over_select");
  m.pct_under_select = j.at("pct_under_select");
  m.T = j.at("T");
  m.n_failed = j.at("n_failed");
  m.valid = j.at("valid");
  return m;
}

const std::vector<std::pair<std::string, double MCMetrics::*>>& metric_fields() {
  static const std::vector<std::pair<std::string, double MCMetrics::*>> fields = {
      {"abs_bias", &MCMetrics::abs_bias},
      {"true_var", &MCMetrics::true_var},
      {"mse_tau", &MCMetrics::mse_tau},
      {"mean_est_var", &MCMetrics::mean_est_var},
      {"coverage", &MCMetrics::coverage},
      {"mse_beta", &MCMetrics::mse_beta},
      {"pct_over_select", &MCMetrics::pct_over_select},
      {"pct_under_select", &MCMetrics::pct_under_select},
  };
  return fields;
}

std::string fmt(double v) {
  json j = v;  // shortest exact representation
  return j.dump();
}

}  // namespace

std::vector<std::string> emit_report(const SweepReport& report, ReportFormat format,
                                     const std::string& out_dir,
                                     const std::string& stem) {
  if (report.points.empty()) throw std::invalid_argument("report has no points");
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;

  if (format == ReportFormat::csv) {
    std::ostringstream out;
    out << report.x_name << ",method";
    for (const auto& [name, ptr] : metric_fields()) out << ',' << name;
    out << ",T,n_failed,valid\n";
    for (const auto& pt : report.points) {
      for (const auto& [method, m] : pt.metrics) {
        out << fmt(pt.x) << ',' << method_name(method);
        for (const auto& [name, ptr] : metric_fields()) out << ',' << fmt(m.*ptr);
        out << ',' << m.T << ',' << m.n_failed << ',' << (m.valid ? 1 : 0) << '\n';
      }
    }
    const std::string path = out_dir + "/" + stem + ".csv";
    write_file_atomic(path, out.str());
    written.push_back(path);
  } else if (format == ReportFormat::json) {
    json points = json::array();
    for (const auto& pt : report.points) {
      json methods;
      for (const auto& [method, m] : pt.metrics)
        methods[method_name(method)] = metrics_to_json(m);
      points.push_back(json{{"x", pt.x}, {"methods", methods}});
    }
    const json doc{{"schema_version", 1},
                   {"study", report.study},
                   {"x_name", report.x_name},
                   {"points", points}};
    const std::string path = out_dir + "/" + stem + ".json";
    write_file_atomic(path, doc.dump(2) + "\n");
    written.push_back(path);
  } else {
    // one two-column series per (method, metric)
    std::map<Method, bool> seen;
    for (const auto& pt : report.points)
      for (const auto& [method, m] : pt.metrics) seen[method] = true;
    for (const auto& [method, unused] : seen) {
      for (const auto& [name, ptr] : metric_fields()) {
        std::ostringstream out;
        for (const auto& pt : report.points) {
          const auto it = pt.metrics.find(method);
          if (it == pt.metrics.end()) continue;
          out << fmt(pt.x) << ' ' << fmt(it->second.*ptr) << '\n';
        }
        const std::string path =
            out_dir + "/" + stem + "_" + method_name(method) + "_" + name + ".dat";
        write_file_atomic(path, out.str());
        written.push_back(path);
      }
    }
  }
  return written;
}

SweepReport parse_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report: " + path);
  json doc;
  in >> doc;
  if (doc.at("schema_version") != 1)
    throw std::runtime_error("unsupported report schema version");
  SweepReport report;
  report.study = doc.at("study");
  report.x_name = doc.at("x_name");
  for (const auto& pt : doc.at("points")) {
    SweepPoint p;
    p.x = pt.at("x");
    for (const auto& [name, jm] : pt.at("methods").items())
      p.metrics[method_from_name(name)] = metrics_from_json(jm);
    report.points.push_back(std::move(p));
  }
  return report;
}

std::string ate_result_to_json(const ATEResult& r) {
  json j{{"method", method_name(r.method)},
         {"tau_hat", r.tau_hat},
         {"se", r.se},
         {"ci95", {r.ci_lo, r.ci_hi}},
         {"n_selected_mu", r.n_selected_mu},
         {"n_selected_bias", r.n_selected_bias},
         {"converged", r.converged},
         {"note", r.note}};
  if (r.has_lambda) j["lambda_used"] = {r.lambda1, r.lambda2};
  return j.dump(2) + "\n";
}

std::string fit_result_to_json(const FitResult& r) {
  json j{{"theta", std::vector<double>(r.theta.begin(), r.theta.end())},
         {"active_beta", r.active_beta},
         {"active_delta", r.active_delta},
         {"objective_trace", r.objective_trace},
         {"converged", r.converged},
         {"n_sweeps", r.n_sweeps}};
  return j.dump(2) + "\n";
}

std::string variance_report_to_json(const VarianceReport& r) {
  json j{{"v_combined", r.v_combined},
         {"v_re_only", r.v_re_only},
         {"sigma2_hat", r.sigma2_hat},
         {"ec_gram_singular", r.ec_gram_singular}};
  return j.dump(2) + "\n";
}

std::string format_ate_table(const std::vector<ATEResult>& rows,
                             double reference_value, bool has_reference) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-6s %10s %8s %9s %22s %6s %6s\n", "Est",
                "value", "se", has_reference ? "bias" : "-", "95% CI", "#v_mu",
                "#v_b");
  out << line;
  for (const auto& r : rows) {
    char ci[48];
    std::snprintf(ci, sizeof(ci), "(%.3f, %.3f)", r.ci_lo, r.ci_hi);
    char bias[24];
    if (has_reference)
      std::snprintf(bias, sizeof(bias), "%.3f", std::fabs(r.tau_hat - reference_value));
    else
      std::snprintf(bias, sizeof(bias), "--");
    std::snprintf(line, sizeof(line), "%-6s %10.3f %8.3f %9s %22s %6d %6d\n",
                  method_name(r.method).c_str(), r.tau_hat, r.se, bias, ci,
                  r.n_selected_mu, r.n_selected_bias);
    out << line;
  }
  return out.str();
}

}  // namespace dpie
