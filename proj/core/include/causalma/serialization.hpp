#pragma once

#include <iosfwd>
#include <nlohmann/json.hpp>
#include <span>
#include <string>

#include "causalma/heterogeneity.hpp"
#include "causalma/prediction.hpp"
#include "causalma/simulation.hpp"
#include "causalma/transport_estimators.hpp"

namespace causalma {

using Json = nlohmann::ordered_json;

Json to_json(const TransportEstimate& estimate);
Json to_json(const PooledEstimate& estimate);
Json to_json(const HeterogeneityEstimate& estimate);
Json to_json(const PredictionInterval& interval);
Json to_json(const BootstrapDraws& draws);
Json to_json(const Scenario& scenario);
Json to_json(const CoverageReport& report);
Json to_json(const Eigen::MatrixXd& matrix);  // array of rows
Json to_json(const Eigen::VectorXd& vector);

// Provenance written at the top of every output file. Re-running the recorded
// command with the recorded config reproduces the file.
struct OutputHeader {
  std::string command;
  Json config = Json::object();
  std::uint64_t seed = 0;
};

// {"header": {...}, "<key>": payload}
Json with_header(const OutputHeader& header, const std::string& key, Json payload);
// "# " prefixed lines; the CSV reader skips them.
void write_csv_header(std::ostream& out, const OutputHeader& header);

void write_estimates_csv(std::ostream& out, std::span<const PooledEstimate> pooled);
void write_intervals_csv(std::ostream& out, std::span<const PredictionInterval> intervals);
void write_draws_csv(std::ostream& out, const BootstrapDraws& draws);
// One row per report: scenario columns, method, coverage, width, mc_se.
void write_coverage_csv(std::ostream& out, std::span<const CoverageReport> reports);
// Long format coverage series keyed by (delta law, method) with m on the
// x axis, one panel per law.
void write_plot_data_csv(std::ostream& out, std::span<const CoverageReport> reports);

}  // namespace causalma
