#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "statekit/data_model.hpp"

namespace statekit {

/// Parse failure at a 1-based data row (the header is row 0) and a column name.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, const std::string& detail);
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// Names of the input columns. Outcome names come from the MetricSpec.
/// An empty covariate list selects every column not otherwise mapped.
struct ColumnMap {
  std::string treatment = "treatment";
  std::vector<std::string> covariates;
};

struct IngestResult {
  ExperimentFrame frame;
  std::vector<std::string> covariate_names;
  std::vector<std::string> warnings;  // e.g. ignored columns
};

/// Comma-delimited UTF-8 with a header row; double-quoted fields allowed.
IngestResult parse_csv(std::istream& in, const MetricSpec& metric, const ColumnMap& columns);

/// Throws FileNotFound, ParseError or ValidationError.
IngestResult ingest_csv(const std::filesystem::path& path, const MetricSpec& metric,
                        const ColumnMap& columns);

/// Writes a frame back in the layout ingest_csv reads.
void write_csv(std::ostream& out, const ExperimentFrame& frame, const MetricSpec& metric,
               const ColumnMap& columns, const std::vector<std::string>& covariate_names);

}  // namespace statekit
