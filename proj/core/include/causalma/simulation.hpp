#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "causalma/ipd_data.hpp"
#include "causalma/prediction.hpp"
#include "causalma/rng.hpp"

namespace causalma {

enum class DeltaLawKind { Uniform, Normal, ExponentialCentered, Pareto, Degenerate };

// Reading of "Pareto(a, b)": (scale, shape) or (shape, scale).
enum class ParetoOrder { ScaleShape, ShapeScale };

// Distribution of the trial-level shift added to every outcome of one arm in
// one trial.
struct DeltaLaw {
  DeltaLawKind kind = DeltaLawKind::Normal;
  ParetoOrder pareto_order = ParetoOrder::ScaleShape;
  bool center_pareto = false;
  double degenerate_value = 0.0;  // only for Degenerate, which exists for testing

  // "uniform", "normal", "exponential", "pareto", "degenerate"
  static DeltaLaw parse(std::string_view name);
  std::string name() const;
  double mean() const;
};

// Uniform(-2, 2), Normal(0, 1), Exponential(1) - 1, Pareto(1, 3), or the
// degenerate point mass.
double delta_sample(const DeltaLaw& law, Rng& rng);

struct Scenario {
  int m = 5;
  DeltaLaw delta_law{};
  std::size_t n_per_trial = 100;
  std::size_t n_target = 1000;
  Eigen::VectorXd beta = Eigen::VectorXd::Constant(4, 0.5);  // intercept first
  Eigen::MatrixXd covariate_cov = default_covariate_cov();
  Eigen::VectorXd target_mean = Eigen::VectorXd::Ones(3);
  double trial_mean_max = 1.5;   // trial covariate means are equally spaced on [0, max]
  double treatment_shift = 0.0;  // added to every outcome on the treated arm
  int reps = 200;
  int b_reps = 200;
  double level = 0.95;
  std::uint64_t seed = 1;

  static Eigen::MatrixXd default_covariate_cov();

  // Stable identifier of (m, law); part of every random stream key.
  std::uint64_t id() const;
  // Throws InvalidArgument.
  void validate() const;
};

inline constexpr std::string_view kTreatedArm = "treatment";
inline constexpr std::string_view kControlArm = "control";

struct SimulatedData {
  IpdDataset dataset;
  double truth = 0.0;                  // 2 + delta_0 under the default coefficients
  double new_trial_delta = 0.0;        // delta_0 for the treated arm
  std::vector<double> treated_deltas;  // delta_s for the treated arm, s = 1..m
};

// Row s-1 is the covariate mean of trial s: the s-th of m equally spaced
// values on [0, max], repeated across all d coordinates.
Eigen::MatrixXd trial_covariate_means(int m, std::size_t d, double max_value = 1.5);

SimulatedData gen_dataset(const Scenario& scenario, std::size_t rep_index);

struct MethodSpec {
  IntervalMethod method = IntervalMethod::MoM;
  Construction construction = Construction::StudentT;

  std::string label() const;  // "mom", "simple_quantile", "wild_normal", ...
  bool operator==(const MethodSpec&) const = default;
};

// mom, simple and wild with both constructions.
std::vector<MethodSpec> all_methods();
// Parses "mom,simple,wild" crossed with constructions "quantile,normal".
std::vector<MethodSpec> expand_methods(std::span<const std::string> methods,
                                       std::span<const std::string> constructions);

struct CoverageReport {
  Scenario scenario;
  std::string method;  // MethodSpec::label() or a custom builder label
  double coverage = 0.0;
  double mean_width = 0.0;
  double mc_se = 0.0;
  std::size_t successes = 0;
  std::size_t failures = 0;
};

// One replication's intervals, one slot per requested method; nullopt marks a
// failed replication for that method.
using ReplicationEvaluator =
    std::function<std::vector<std::optional<PredictionInterval>>(const SimulatedData&, std::size_t rep_index)>;

// Generates `scenario.reps` datasets, evaluates them and tallies containment
// of the truth. Replications run in parallel; results are combined in
// replication order, so reports do not depend on `workers`.
//
// Errors: FailureBudgetExceeded when more than 10% of replications fail for
// any method.
std::vector<CoverageReport> run_coverage(const Scenario& scenario, std::span<const std::string> labels,
                                         const ReplicationEvaluator& evaluate, unsigned workers = 1);

// Standard methods: pooled outcome-model estimate, then the requested
// intervals. MoM uses a joint bootstrap (b_reps) for both the covariance of
// the trial estimates and the variance of the pooled estimate.
std::vector<CoverageReport> run_scenario(const Scenario& scenario, std::span<const MethodSpec> methods,
                                         unsigned workers = 1);

// Intervals for one simulated dataset; used by run_scenario and by callers
// that need the intervals themselves.
std::vector<std::optional<PredictionInterval>> evaluate_methods(const SimulatedData& data, const Scenario& scenario,
                                                                std::span<const MethodSpec> methods,
                                                                std::size_t rep_index);

// m in {5, 10, 15, 30, 50} crossed with the four delta laws (20 scenarios),
// ordered law-major.
std::vector<Scenario> scenario_grid(const Scenario& base);

}  // namespace causalma
