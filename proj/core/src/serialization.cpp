#include "causalma/serialization.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <ostream>
#include <vector>

#include "causalma/csv.hpp"
#include "causalma/version.hpp"

namespace causalma {

Json to_json(const Eigen::MatrixXd& matrix) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) row.push_back(matrix(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Eigen::VectorXd& vector) {
  Json out = Json::array();
  for (double v : vector) out.push_back(v);
  return out;
}

Json to_json(const TransportEstimate& estimate) {
  return Json{{"study", estimate.study},
              {"arm", estimate.arm},
              {"method", to_string(estimate.method)},
              {"value", estimate.value},
              {"diagnostics",
               {{"n_target", estimate.n_target},
                {"n_arm", estimate.n_arm},
                {"clipped_weights", estimate.clipped_weights}}}};
}

Json to_json(const PooledEstimate& estimate) {
  Json per_study = Json::array();
  for (const auto& e : estimate.per_study) per_study.push_back(to_json(e));
  return Json{{"arm", estimate.arm},
              {"method", to_string(estimate.method)},
              {"value", estimate.value},
              {"per_study", std::move(per_study)}};
}

Json to_json(const HeterogeneityEstimate& estimate) {
  return Json{{"gamma_tilde_sq", estimate.gamma_tilde_sq},
              {"gamma_hat_sq", estimate.gamma_hat_sq},
              {"q", estimate.q},
              {"weighted_mean", estimate.weighted_mean},
              {"denominator", estimate.denominator},
              {"c_terms", to_json(estimate.c_terms)},
              {"mu_hat", to_json(estimate.inputs.mu_hat)},
              {"weights", to_json(estimate.inputs.weights)},
              {"cov", to_json(estimate.inputs.cov)}};
}

Json to_json(const PredictionInterval& interval) {
  Json out{{"method", to_string(interval.method)}};
  if (interval.method != IntervalMethod::MoM) out["construction"] = to_string(interval.construction);
  out["level"] = interval.level;
  out["center"] = interval.center;
  out["lower"] = interval.lower;
  out["upper"] = interval.upper;
  out["width"] = interval.width();
  out["b"] = interval.b_reps;
  return out;
}

Json to_json(const BootstrapDraws& draws) {
  return Json{{"seed", draws.seed},
              {"requested", draws.requested},
              {"failures", draws.failures},
              {"values", draws.values}};
}

Json to_json(const Scenario& scenario) {
  Json law{{"name", scenario.delta_law.name()}};
  if (scenario.delta_law.kind == DeltaLawKind::Pareto) {
    law["order"] = scenario.delta_law.pareto_order == ParetoOrder::ScaleShape ? "scale-shape" : "shape-scale";
    law["centered"] = scenario.delta_law.center_pareto;
  }
  if (scenario.delta_law.kind == DeltaLawKind::Degenerate) law["value"] = scenario.delta_law.degenerate_value;
  return Json{{"m", scenario.m},
              {"delta", std::move(law)},
              {"n_per_trial", scenario.n_per_trial},
              {"n_target", scenario.n_target},
              {"beta", to_json(scenario.beta)},
              {"covariate_cov", to_json(scenario.covariate_cov)},
              {"target_mean", to_json(scenario.target_mean)},
              {"trial_mean_max", scenario.trial_mean_max},
              {"reps", scenario.reps},
              {"b", scenario.b_reps},
              {"level", scenario.level},
              {"seed", scenario.seed}};
}

Json to_json(const CoverageReport& report) {
  return Json{{"m", report.scenario.m},
              {"delta", report.scenario.delta_law.name()},
              {"method", report.method},
              {"coverage", report.coverage},
              {"mean_width", report.mean_width},
              {"mc_se", report.mc_se},
              {"successes", report.successes},
              {"failures", report.failures}};
}

namespace {

Json header_json(const OutputHeader& header) {
  return Json{{"tool", "causalma"},
              {"version", std::string(kVersion)},
              {"command", header.command},
              {"seed", header.seed},
              {"config", header.config}};
}

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

Json with_header(const OutputHeader& header, const std::string& key, Json payload) {
  return Json{{"header", header_json(header)}, {key, std::move(payload)}};
}

void write_csv_header(std::ostream& out, const OutputHeader& header) {
  out << "# causalma " << kVersion << '\n';
  out << "# command: " << header.command << '\n';
  out << "# seed: " << header.seed << '\n';
  out << "# config: " << header.config.dump() << '\n';
}

void write_estimates_csv(std::ostream& out, std::span<const PooledEstimate> pooled) {
  out << "arm,method,study,value,n_target,n_arm,clipped_weights\n";
  for (const auto& p : pooled) {
    for (const auto& e : p.per_study) {
      out << csv::escape(p.arm) << ',' << to_string(p.method) << ',' << e.study << ',' << num(e.value) << ','
          << e.n_target << ',' << e.n_arm << ',' << e.clipped_weights << '\n';
    }
    out << csv::escape(p.arm) << ',' << to_string(p.method) << ",pooled," << num(p.value) << ",,,\n";
  }
}

void write_intervals_csv(std::ostream& out, std::span<const PredictionInterval> intervals) {
  out << "method,construction,level,center,lower,upper,width,b\n";
  for (const auto& pi : intervals) {
    out << to_string(pi.method) << ',' << (pi.method == IntervalMethod::MoM ? "" : to_string(pi.construction)) << ','
        << num(pi.level) << ',' << num(pi.center) << ',' << num(pi.lower) << ',' << num(pi.upper) << ','
        << num(pi.width()) << ',' << pi.b_reps << '\n';
  }
}

void write_draws_csv(std::ostream& out, const BootstrapDraws& draws) {
  out << "replicate,value\n";
  for (std::size_t i = 0; i < draws.values.size(); ++i) out << i << ',' << num(draws.values[i]) << '\n';
}

void write_coverage_csv(std::ostream& out, std::span<const CoverageReport> reports) {
  out << "m,delta,n_per_trial,n_target,reps,b,level,method,coverage,mean_width,mc_se,successes,failures\n";
  for (const auto& r : reports) {
    const Scenario& s = r.scenario;
    out << s.m << ',' << s.delta_law.name() << ',' << s.n_per_trial << ',' << s.n_target << ',' << s.reps << ','
        << s.b_reps << ',' << num(s.level) << ',' << r.method << ',' << num(r.coverage) << ','
        << num(r.mean_width) << ',' << num(r.mc_se) << ',' << r.successes << ',' << r.failures << '\n';
  }
}

void write_plot_data_csv(std::ostream& out, std::span<const CoverageReport> reports) {
  std::vector<const CoverageReport*> sorted;
  sorted.reserve(reports.size());
  for (const auto& r : reports) sorted.push_back(&r);
  // Stable: keeps the caller's method order within each panel.
  std::stable_sort(sorted.begin(), sorted.end(), [](const CoverageReport* a, const CoverageReport* b) {
    if (a->scenario.delta_law.kind != b->scenario.delta_law.kind) {
      return a->scenario.delta_law.kind < b->scenario.delta_law.kind;
    }
    if (a->method != b->method) return a->method < b->method;
    return a->scenario.m < b->scenario.m;
  });
  out << "panel,series,m,coverage,lower,upper,nominal\n";
  for (const CoverageReport* r : sorted) {
    const double half = 1.96 * r->mc_se;
    out << r->scenario.delta_law.name() << ',' << r->method << ',' << r->scenario.m << ',' << num(r->coverage) << ','
        << num(r->coverage - half) << ',' << num(r->coverage + half) << ',' << num(r->scenario.level) << '\n';
  }
}

}  // namespace causalma
