#include "statekit/csv_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace statekit {
namespace {

std::vector<std::string> split_record(const std::string& line, std::size_t row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError(row, "", "unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && ws(static_cast<unsigned char>(s[b]))) ++b;
  return s.substr(b);
}

double parse_number(const std::string& text, std::size_t row, const std::string& column) {
  const std::string s = trim(text);
  if (s.empty()) throw ParseError(row, column, "empty value");
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(row, column, "'" + s + "' is not a number");
  }
  return v;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const char* role) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw Error(ErrorCode::InvalidConfig,
                std::string(role) + " column '" + name + "' not found in header");
  }
  return static_cast<std::size_t>(it - header.begin());
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::string exact(double v) { return nlohmann::json(v).dump(); }

}  // namespace

ParseError::ParseError(std::size_t row, std::string column, const std::string& detail)
    : Error(ErrorCode::ParseError,
            "row " + std::to_string(row) + (column.empty() ? "" : ", column '" + column + "'") +
                ": " + detail),
      row_(row),
      column_(std::move(column)) {}

IngestResult parse_csv(std::istream& in, const MetricSpec& metric, const ColumnMap& columns) {
  metric.check();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, "", "missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = split_record(line, 0);
  for (auto& h : header) h = trim(h);

  const std::size_t t_col = column_index(header, columns.treatment, "treatment");
  const std::size_t y_col = column_index(header, metric.numerator, "numerator");
  std::optional<std::size_t> z_col;
  if (metric.kind == MetricKind::Ratio) z_col = column_index(header, *metric.denominator, "denominator");

  std::vector<std::string> names, warnings;
  std::vector<std::size_t> cov_cols;
  std::vector<bool> used(header.size(), false);
  used[t_col] = used[y_col] = true;
  if (z_col) used[*z_col] = true;
  if (columns.covariates.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (!used[j]) cov_cols.push_back(j);
    }
  } else {
    for (const auto& name : columns.covariates) cov_cols.push_back(column_index(header, name, "covariate"));
  }
  for (std::size_t j : cov_cols) {
    used[j] = true;
    names.push_back(header[j]);
  }
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (!used[j]) warnings.push_back("ignoring column '" + header[j] + "'");
  }

  std::vector<double> t, y, cov, z;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_record(line, row);
    if (fields.size() != header.size()) {
      throw ParseError(row, "", "expected " + std::to_string(header.size()) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    t.push_back(parse_number(fields[t_col], row, header[t_col]));
    y.push_back(parse_number(fields[y_col], row, header[y_col]));
    if (z_col) z.push_back(parse_number(fields[*z_col], row, header[*z_col]));
    for (std::size_t j : cov_cols) cov.push_back(parse_number(fields[j], row, header[j]));
  }
  std::optional<std::vector<double>> zopt;
  if (z_col) zopt = std::move(z);
  return {ExperimentFrame::from_columns(cov_cols.size(), std::move(cov), std::move(t),
                                        std::move(y), std::move(zopt)),
          std::move(names), std::move(warnings)};
}

IngestResult ingest_csv(const std::filesystem::path& path, const MetricSpec& metric,
                        const ColumnMap& columns) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path.string() + "'");
  return parse_csv(in, metric, columns);
}

void write_csv(std::ostream& out, const ExperimentFrame& frame, const MetricSpec& metric,
               const ColumnMap& columns, const std::vector<std::string>& covariate_names) {
  if (covariate_names.size() != frame.dim()) {
    throw Error(ErrorCode::InvalidConfig, "covariate names do not match frame dimension");
  }
  const bool ratio = metric.kind == MetricKind::Ratio;
  out << quote(columns.treatment) << ',' << quote(metric.numerator);
  if (ratio) out << ',' << quote(*metric.denominator);
  for (const auto& name : covariate_names) out << ',' << quote(name);
  out << '\n';
  for (std::size_t i = 0; i < frame.size(); ++i) {
    out << exact(frame.treatment()[i]) << ',' << exact(frame.y()[i]);
    if (ratio) out << ',' << exact(frame.z()[i]);
    for (double x : frame.covariates_of(i)) out << ',' << exact(x);
    out << '\n';
  }
}

}  // namespace statekit
