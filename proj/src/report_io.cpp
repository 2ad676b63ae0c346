#include "statekit/report_io.hpp"

#include <cstdio>
#include <sstream>

namespace statekit {
namespace {

using nlohmann::json;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Shortest text that reads back to the same double.
std::string exact(double v) { return json(v).dump(); }

json base(const RunHeader& h) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = h.command;
  j["config"] = h.config;
  return j;
}

std::string csv_preamble(const RunHeader& h) {
  return "# schema_version=" + std::to_string(kSchemaVersion) + "\n# command=" + h.command +
         "\n# config=" + h.config.dump() + "\n";
}

std::string table_preamble(const RunHeader& h) {
  return "schema_version: " + std::to_string(kSchemaVersion) + "\ncommand: " + h.command +
         "\nconfig: " + h.config.dump() + "\n\n";
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

OutputFormat parse_format(std::string_view name) {
  if (name == "json") return OutputFormat::Json;
  if (name == "table") return OutputFormat::Table;
  if (name == "csv") return OutputFormat::Csv;
  throw Error(ErrorCode::InvalidConfig, "unknown output format '" + std::string(name) + "'");
}

std::string_view to_string(OutputFormat format) {
  switch (format) {
    case OutputFormat::Json: return "json";
    case OutputFormat::Table: return "table";
    case OutputFormat::Csv: return "csv";
  }
  return "?";
}

std::string_view to_string(MetricKind metric) {
  return metric == MetricKind::Ratio ? "ratio" : "count";
}

std::string_view to_string(SimMode mode) { return mode == SimMode::AB ? "ab" : "aa"; }

json to_json(const AteReport& r) {
  json j{{"estimator", r.estimator_tag}, {"estimate", r.estimate},   {"std_error", r.std_error},
         {"ci_low", r.ci_low},           {"ci_high", r.ci_high},     {"p_value", r.p_value},
         {"alpha", r.alpha},             {"n_used", r.n_used}};
  if (r.transformed) {
    j["transformed"] = {{"delta_p", r.transformed->delta_p},
                        {"delta_p_std_error", r.transformed->delta_p_std_error},
                        {"scale", r.transformed->scale}};
  }
  return j;
}

json to_json(const SimulationSummary& s) {
  json rows = json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"estimator", r.tag},
                    {"empirical_coverage", r.coverage},
                    {"variance", r.variance},
                    {"var_reduction_vs_dim", r.var_reduction},
                    {"mean_estimate", r.mean_estimate},
                    {"mean_std_error", r.mean_std_error},
                    {"replications", r.replications},
                    {"failures", r.failures}});
  }
  json j{{"metric", to_string(s.metric)},
         {"mode", to_string(s.mode)},
         {"outlier_fraction", s.outlier_fraction},
         {"reps", s.reps},
         {"mean_truth", s.mean_truth},
         {"rows", rows}};
  if (!s.estimates.empty()) j["estimates"] = s.estimates;
  return j;
}

json to_json(const TRegressionFit& f) {
  return {{"a", f.a},
          {"sigma2", f.sigma2},
          {"v", f.v},
          {"iterations", f.iterations},
          {"converged", f.converged},
          {"dof_clamped", f.dof_clamped},
          {"free_energy_trace", f.free_energy_trace}};
}

std::string render_reports(const std::vector<AteReport>& reports, const RunHeader& header,
                           OutputFormat format) {
  if (format == OutputFormat::Json) {
    json j = base(header);
    j["reports"] = json::array();
    for (const auto& r : reports) j["reports"].push_back(to_json(r));
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  if (format == OutputFormat::Csv) {
    out << csv_preamble(header)
        << "estimator,estimate,std_error,ci_low,ci_high,p_value,alpha,n_used,delta_p,"
           "delta_p_std_error,scale\n";
    for (const auto& r : reports) {
      out << r.estimator_tag << ',' << exact(r.estimate) << ',' << exact(r.std_error) << ','
          << exact(r.ci_low) << ',' << exact(r.ci_high) << ',' << exact(r.p_value) << ','
          << exact(r.alpha) << ',' << r.n_used;
      if (r.transformed) {
        out << ',' << exact(r.transformed->delta_p) << ','
            << exact(r.transformed->delta_p_std_error) << ',' << exact(r.transformed->scale);
      } else {
        out << ",,,";
      }
      out << '\n';
    }
    return out.str();
  }
  out << table_preamble(header);
  out << pad_right("Method", 24) << pad("Estimate", 14) << pad("Std.Err", 14) << pad("CI low", 14)
      << pad("CI high", 14) << pad("p-value", 12) << pad("N", 10) << '\n';
  for (const auto& r : reports) {
    out << pad_right(r.estimator_tag, 24) << pad(fmt("%.6g", r.estimate), 14)
        << pad(fmt("%.6g", r.std_error), 14) << pad(fmt("%.6g", r.ci_low), 14)
        << pad(fmt("%.6g", r.ci_high), 14) << pad(fmt("%.4g", r.p_value), 12)
        << pad(std::to_string(r.n_used), 10) << '\n';
  }
  return out.str();
}

std::string render_summaries(const std::vector<SimulationSummary>& summaries,
                             const RunHeader& header, OutputFormat format) {
  if (format == OutputFormat::Json) {
    json j = base(header);
    j["summaries"] = json::array();
    for (const auto& s : summaries) j["summaries"].push_back(to_json(s));
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  if (format == OutputFormat::Csv) {
    out << csv_preamble(header)
        << "metric,mode,outlier_fraction,estimator,empirical_coverage,variance,"
           "var_reduction_vs_dim,mean_estimate,mean_std_error,replications,failures\n";
    for (const auto& s : summaries) {
      for (const auto& r : s.rows) {
        out << to_string(s.metric) << ',' << to_string(s.mode) << ',' << exact(s.outlier_fraction)
            << ',' << r.tag << ',' << exact(r.coverage) << ',' << exact(r.variance) << ','
            << exact(r.var_reduction) << ',' << exact(r.mean_estimate) << ','
            << exact(r.mean_std_error) << ',' << r.replications << ',' << r.failures << '\n';
      }
    }
    return out.str();
  }
  out << table_preamble(header);
  for (const auto& s : summaries) {
    out << "metric=" << to_string(s.metric) << " mode=" << to_string(s.mode)
        << " outliers=" << fmt("%.4g%%", 100.0 * s.outlier_fraction) << " reps=" << s.reps
        << '\n';
    out << pad_right("Methods", 24) << pad("Emp.Cov%", 10) << pad("Var.Red%", 10)
        << pad("Mean est.", 14) << pad("Mean SE", 14) << pad("Failed", 8) << '\n';
    for (const auto& r : s.rows) {
      out << pad_right(r.tag, 24) << pad(fmt("%.1f", 100.0 * r.coverage), 10)
          << pad(fmt("%.1f", 100.0 * r.var_reduction), 10) << pad(fmt("%.5g", r.mean_estimate), 14)
          << pad(fmt("%.5g", r.mean_std_error), 14) << pad(std::to_string(r.failures), 8) << '\n';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace statekit
