#pragma once

#include <map>
#include <string>
#include <vector>

#include "dpie/estimators.hpp"
#include "dpie/sim.hpp"
#include "dpie/solver.hpp"

namespace dpie {

enum class ReportFormat { csv, json, plotdata };
ReportFormat report_format_from_name(const std::string& name);

// One sweep of Monte Carlo runs: a study label, the swept quantity
// (e.g. the magnitude ratio c or the zero fraction) and per-point metrics.
struct SweepPoint {
  double x = 0.0;
  std::map<Method, MCMetrics> metrics;
};

struct SweepReport {
  std::string study;
  std::string x_name;
  std::vector<SweepPoint> points;
};

// Writes stem.csv / stem.json / stem_<method>_<metric>.dat under out_dir.
// All writes go through a temp-file-and-rename so interrupted runs never
// leave partial reports. Returns the paths written.
std::vector<std::string> emit_report(const SweepReport& report, ReportFormat format,
                                     const std::string& out_dir,
                                     const std::string& stem);

SweepReport parse_report_json(const std::string& path);

std::string ate_result_to_json(const ATEResult& r);
std::string fit_result_to_json(const FitResult& r);
std::string variance_report_to_json(const VarianceReport& r);

// Table-2-shaped text summary (Est, se, CI, bias vs an optional reference,
// selected-variable counts) for a set of fitted methods.
std::string format_ate_table(const std::vector<ATEResult>& rows,
                             double reference_value, bool has_reference);

void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace dpie
