#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "statekit/inference.hpp"
#include "statekit/simulation.hpp"
#include "statekit/state_em.hpp"

namespace statekit {

inline constexpr int kSchemaVersion = 1;

enum class OutputFormat { Json, Table, Csv };

/// Accepts json, table, csv (case-sensitive); throws InvalidConfig otherwise.
OutputFormat parse_format(std::string_view name);
std::string_view to_string(OutputFormat format);
std::string_view to_string(MetricKind metric);
std::string_view to_string(SimMode mode);

/// Reproducibility header embedded in every artifact.
struct RunHeader {
  std::string command;
  nlohmann::json config;  // fully resolved settings, including seeds
};

nlohmann::json to_json(const AteReport& report);
nlohmann::json to_json(const SimulationSummary& summary);
nlohmann::json to_json(const TRegressionFit& fit);

std::string render_reports(const std::vector<AteReport>& reports, const RunHeader& header,
                           OutputFormat format);
std::string render_summaries(const std::vector<SimulationSummary>& summaries,
                             const RunHeader& header, OutputFormat format);

}  // namespace statekit
