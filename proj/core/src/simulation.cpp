#include "causalma/simulation.hpp"

#include <fmt/format.h>

#include <Eigen/Cholesky>
#include <algorithm>
#include <boost/random/normal_distribution.hpp>
#include <cctype>
#include <cmath>
#include <limits>

#include "causalma/error.hpp"
#include "causalma/heterogeneity.hpp"
#include "causalma/parallel.hpp"

namespace causalma {

// ---------------------------------------------------------------------------
// Delta laws

DeltaLaw DeltaLaw::parse(std::string_view name) {
  std::string t(name);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  DeltaLaw law;
  if (t == "uniform") law.kind = DeltaLawKind::Uniform;
  else if (t == "normal") law.kind = DeltaLawKind::Normal;
  else if (t == "exponential") law.kind = DeltaLawKind::ExponentialCentered;
  else if (t == "pareto") law.kind = DeltaLawKind::Pareto;
  else if (t == "degenerate") law.kind = DeltaLawKind::Degenerate;
  else {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("unknown delta law '{}' (expected uniform, normal, exponential, pareto)", name));
  }
  return law;
}

std::string DeltaLaw::name() const {
  switch (kind) {
    case DeltaLawKind::Uniform: return "uniform";
    case DeltaLawKind::Normal: return "normal";
    case DeltaLawKind::ExponentialCentered: return "exponential";
    case DeltaLawKind::Pareto: return "pareto";
    case DeltaLawKind::Degenerate: return "degenerate";
  }
  return "unknown";
}

namespace {

struct ParetoParams {
  double scale;
  double shape;
};

ParetoParams pareto_params(ParetoOrder order) {
  return order == ParetoOrder::ScaleShape ? ParetoParams{1.0, 3.0} : ParetoParams{3.0, 1.0};
}

double pareto_mean(ParetoOrder order) {
  const auto [scale, shape] = pareto_params(order);
  return shape > 1.0 ? shape * scale / (shape - 1.0) : std::numeric_limits<double>::infinity();
}

}  // namespace

double DeltaLaw::mean() const {
  switch (kind) {
    case DeltaLawKind::Uniform:
    case DeltaLawKind::Normal:
    case DeltaLawKind::ExponentialCentered:
      return 0.0;
    case DeltaLawKind::Pareto:
      return center_pareto ? 0.0 : pareto_mean(pareto_order);
    case DeltaLawKind::Degenerate:
      return degenerate_value;
  }
  return 0.0;
}

double delta_sample(const DeltaLaw& law, Rng& rng) {
  switch (law.kind) {
    case DeltaLawKind::Uniform:
      return std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    case DeltaLawKind::Normal:
      return boost::random::normal_distribution<double>(0.0, 1.0)(rng);
    case DeltaLawKind::ExponentialCentered:
      return std::exponential_distribution<double>(1.0)(rng) - 1.0;
    case DeltaLawKind::Pareto: {
      const auto [scale, shape] = pareto_params(law.pareto_order);
      // Inverse CDF on (0, 1]; 1 - U avoids U = 0.
      const double u = 1.0 - std::generate_canonical<double, 53>(rng);
      const double draw = scale * std::pow(u, -1.0 / shape);
      return law.center_pareto ? draw - pareto_mean(law.pareto_order) : draw;
    }
    case DeltaLawKind::Degenerate:
      return law.degenerate_value;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Scenario

Eigen::MatrixXd Scenario::default_covariate_cov() {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(3, 3, 0.5);
  cov.diagonal().setOnes();
  return cov;
}

std::uint64_t Scenario::id() const {
  return derive_seed(static_cast<std::uint64_t>(m),
                     {static_cast<std::uint64_t>(delta_law.kind), static_cast<std::uint64_t>(delta_law.pareto_order),
                      delta_law.center_pareto ? 1ULL : 0ULL});
}

void Scenario::validate() const {
  if (m < 2) throw Error(ErrorKind::InvalidArgument, fmt::format("m must be >= 2, got {}", m));
  if (reps < 1) throw Error(ErrorKind::InvalidArgument, "reps must be >= 1");
  if (b_reps < 2) throw Error(ErrorKind::InvalidArgument, "b_reps must be >= 2");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::InvalidArgument, "level must lie in (0, 1)");
  const auto d = covariate_cov.rows();
  if (d < 1 || covariate_cov.cols() != d || target_mean.size() != d || beta.size() != d + 1) {
    throw Error(ErrorKind::InvalidArgument, "scenario covariance, target mean and coefficients disagree on d");
  }
  if (n_per_trial < static_cast<std::size_t>(2 * (d + 2)) || n_target < 1) {
    throw Error(ErrorKind::InvalidArgument, "sample sizes too small for the outcome model");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(covariate_cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::InvalidArgument, "covariate covariance must be positive definite");
  }
  if (delta_law.kind == DeltaLawKind::Pareto && delta_law.center_pareto &&
      !std::isfinite(pareto_mean(delta_law.pareto_order))) {
    throw Error(ErrorKind::InvalidArgument, "cannot center a Pareto law with infinite mean");
  }
}

Eigen::MatrixXd trial_covariate_means(int m, std::size_t d, double max_value) {
  Eigen::MatrixXd means(m, static_cast<Eigen::Index>(d));
  for (int s = 0; s < m; ++s) {
    const double v = m == 1 ? 0.0 : max_value * static_cast<double>(s) / static_cast<double>(m - 1);
    means.row(s).setConstant(v);
  }
  return means;
}

SimulatedData gen_dataset(const Scenario& scenario, std::size_t rep_index) {
  scenario.validate();
  const int m = scenario.m;
  const auto d = static_cast<std::size_t>(scenario.covariate_cov.rows());
  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(scenario.covariate_cov).matrixL();
  const Eigen::MatrixXd means = trial_covariate_means(m, d, scenario.trial_mean_max);
  Rng rng = make_stream(scenario.seed, {scenario.id(), rep_index, 0});
  boost::random::normal_distribution<double> normal;

  // Trial-level shifts: one per (trial, arm), then the new trial's treated shift.
  std::vector<double> control_delta(static_cast<std::size_t>(m));
  std::vector<double> treated_delta(static_cast<std::size_t>(m));
  for (int s = 0; s < m; ++s) {
    control_delta[static_cast<std::size_t>(s)] = delta_sample(scenario.delta_law, rng);
    treated_delta[static_cast<std::size_t>(s)] = delta_sample(scenario.delta_law, rng);
  }
  const double new_trial_delta = delta_sample(scenario.delta_law, rng);

  const auto draw_covariates = [&](const Eigen::VectorXd& mu) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(d));
    for (auto& v : z) v = normal(rng);
    const Eigen::VectorXd x = mu + chol * z;
    return std::vector<double>(x.data(), x.data() + x.size());
  };
  const auto linear = [&](const std::vector<double>& x) {
    double y = scenario.beta[0];
    for (std::size_t j = 0; j < d; ++j) y += scenario.beta[static_cast<Eigen::Index>(j + 1)] * x[j];
    return y;
  };

  std::vector<IpdRecord> records;
  records.reserve(static_cast<std::size_t>(m) * scenario.n_per_trial + scenario.n_target);
  std::vector<char> treated(scenario.n_per_trial);
  for (int s = 1; s <= m; ++s) {
    const Eigen::VectorXd mu = means.row(s - 1).transpose();
    // Complete 1:1 randomization.
    std::fill(treated.begin(), treated.end(), 0);
    std::fill(treated.begin(), treated.begin() + static_cast<std::ptrdiff_t>(scenario.n_per_trial / 2), 1);
    std::shuffle(treated.begin(), treated.end(), rng);
    for (std::size_t i = 0; i < scenario.n_per_trial; ++i) {
      IpdRecord rec;
      rec.subject_id = fmt::format("s{}-{}", s, i + 1);
      rec.study = s;
      rec.in_trial = true;
      rec.covariates = draw_covariates(mu);
      const bool on_treatment = treated[i] != 0;
      rec.treatment = std::string(on_treatment ? kTreatedArm : kControlArm);
      const double shift = on_treatment ? treated_delta[static_cast<std::size_t>(s - 1)] + scenario.treatment_shift
                                        : control_delta[static_cast<std::size_t>(s - 1)];
      rec.outcome = linear(rec.covariates) + shift + normal(rng);
      records.push_back(std::move(rec));
    }
  }
  for (std::size_t i = 0; i < scenario.n_target; ++i) {
    IpdRecord rec;
    rec.subject_id = fmt::format("t-{}", i + 1);
    rec.covariates = draw_covariates(scenario.target_mean);
    records.push_back(std::move(rec));
  }

  Eigen::VectorXd target_design(static_cast<Eigen::Index>(d + 1));
  target_design[0] = 1.0;
  target_design.tail(static_cast<Eigen::Index>(d)) = scenario.target_mean;

  SimulatedData out{IpdDataset::from_records(records), 0.0, new_trial_delta, treated_delta};
  out.truth = scenario.beta.dot(target_design) + new_trial_delta + scenario.treatment_shift;
  return out;
}

// ---------------------------------------------------------------------------
// Methods and coverage

std::string MethodSpec::label() const {
  if (method == IntervalMethod::MoM) return "mom";
  return to_string(method) + "_" + to_string(construction);
}

std::vector<MethodSpec> all_methods() {
  return {
      {IntervalMethod::MoM, Construction::StudentT},
      {IntervalMethod::SimpleBootstrap, Construction::Quantile},
      {IntervalMethod::SimpleBootstrap, Construction::Normal},
      {IntervalMethod::WildBootstrap, Construction::Quantile},
      {IntervalMethod::WildBootstrap, Construction::Normal},
  };
}

std::vector<MethodSpec> expand_methods(std::span<const std::string> methods,
                                       std::span<const std::string> constructions) {
  std::vector<MethodSpec> out;
  for (const auto& name : methods) {
    const IntervalMethod method = parse_interval_method(name);
    if (method == IntervalMethod::MoM) {
      const MethodSpec spec{method, Construction::StudentT};
      if (std::find(out.begin(), out.end(), spec) == out.end()) out.push_back(spec);
      continue;
    }
    for (const auto& c : constructions) {
      const MethodSpec spec{method, parse_construction(c)};
      if (std::find(out.begin(), out.end(), spec) == out.end()) out.push_back(spec);
    }
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, "no interval methods requested");
  return out;
}

std::vector<CoverageReport> run_coverage(const Scenario& scenario, std::span<const std::string> labels,
                                         const ReplicationEvaluator& evaluate, unsigned workers) {
  scenario.validate();
  if (labels.empty()) throw Error(ErrorKind::InvalidArgument, "no interval methods requested");
  const auto reps = static_cast<std::size_t>(scenario.reps);
  const std::size_t k = labels.size();

  // Per (rep, method): 0 failed, 1 missed, 2 covered; width alongside.
  std::vector<signed char> status(reps * k, 0);
  std::vector<double> widths(reps * k, 0.0);

  parallel_for(reps, workers, [&](std::size_t rep) {
    const SimulatedData data = gen_dataset(scenario, rep);
    std::vector<std::optional<PredictionInterval>> intervals = evaluate(data, rep);
    if (intervals.size() != k) {
      throw Error(ErrorKind::InvalidArgument, "evaluator returned the wrong number of intervals");
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (!intervals[j]) continue;
      status[rep * k + j] = intervals[j]->contains(data.truth) ? 2 : 1;
      widths[rep * k + j] = intervals[j]->width();
    }
  });

  std::vector<CoverageReport> reports;
  reports.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    CoverageReport report;
    report.scenario = scenario;
    report.method = labels[j];
    std::size_t covered = 0;
    double width_sum = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const signed char st = status[rep * k + j];
      if (st == 0) {
        ++report.failures;
        continue;
      }
      ++report.successes;
      covered += st == 2 ? 1 : 0;
      width_sum += widths[rep * k + j];
    }
    if (static_cast<double>(report.failures) > 0.1 * static_cast<double>(reps)) {
      throw Error(ErrorKind::FailureBudgetExceeded,
                  fmt::format("method {} failed in {} of {} replications (m={}, delta={})", labels[j],
                              report.failures, reps, scenario.m, scenario.delta_law.name()));
    }
    if (report.successes > 0) {
      const double n = static_cast<double>(report.successes);
      report.coverage = static_cast<double>(covered) / n;
      report.mean_width = width_sum / n;
      report.mc_se = std::sqrt(report.coverage * (1.0 - report.coverage) / n);
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

std::vector<std::optional<PredictionInterval>> evaluate_methods(const SimulatedData& data, const Scenario& scenario,
                                                                std::span<const MethodSpec> methods,
                                                                std::size_t rep_index) {
  const IpdDataset& ds = data.dataset;
  const int arm = ds.arm_index(kTreatedArm);
  const auto wants = [&](IntervalMethod method) {
    return std::any_of(methods.begin(), methods.end(), [&](const MethodSpec& s) { return s.method == method; });
  };
  const auto stream_seed = [&](std::uint64_t purpose) {
    return derive_seed(scenario.seed, {scenario.id(), rep_index, purpose});
  };

  std::optional<PredictionInterval> mom;
  if (wants(IntervalMethod::MoM)) {
    try {
      const PooledEstimate pooled = estimate_pooled(ds, kTreatedArm, Method::OM);
      JointBootstrapOptions jb;
      jb.replicates = scenario.b_reps;
      jb.seed = stream_seed(1);
      const JointBootstrap boot = joint_bootstrap(ds, arm, Method::OM, jb);
      Eigen::VectorXd mu(ds.num_studies());
      for (int s = 0; s < ds.num_studies(); ++s) mu[s] = pooled.per_study[static_cast<std::size_t>(s)].value;
      const CorrelatedEstimates est = CorrelatedEstimates::with_equal_weights(mu, boot.covariance());
      const HeterogeneityEstimate gamma = estimate_gamma_squared(est);
      mom = mom_interval(pooled, gamma, boot.pooled_variance(est.weights), scenario.level);
      mom->b_reps = scenario.b_reps;
    } catch (const Error&) {
      mom.reset();
    }
  }

  BootstrapSettings settings;
  settings.replicates = scenario.b_reps;
  std::optional<BootstrapDraws> simple;
  if (wants(IntervalMethod::SimpleBootstrap)) {
    settings.seed = stream_seed(2);
    try {
      simple = simple_bootstrap_predict(ds, kTreatedArm, Method::OM, settings);
    } catch (const Error&) {
      simple.reset();
    }
  }
  std::optional<BootstrapDraws> wild;
  if (wants(IntervalMethod::WildBootstrap)) {
    settings.seed = stream_seed(3);
    try {
      wild = wild_bootstrap_predict(ds, kTreatedArm, settings);
    } catch (const Error&) {
      wild.reset();
    }
  }

  std::vector<std::optional<PredictionInterval>> out;
  out.reserve(methods.size());
  for (const MethodSpec& spec : methods) {
    std::optional<PredictionInterval> pi;
    const std::optional<BootstrapDraws>* draws = nullptr;
    switch (spec.method) {
      case IntervalMethod::MoM: pi = mom; break;
      case IntervalMethod::SimpleBootstrap: draws = &simple; break;
      case IntervalMethod::WildBootstrap: draws = &wild; break;
    }
    if (draws && draws->has_value()) {
      try {
        pi = interval_from_draws(**draws, spec.construction, scenario.level, spec.method);
      } catch (const Error&) {
        pi.reset();
      }
    }
    out.push_back(pi);
  }
  return out;
}

std::vector<CoverageReport> run_scenario(const Scenario& scenario, std::span<const MethodSpec> methods,
                                         unsigned workers) {
  std::vector<std::string> labels;
  labels.reserve(methods.size());
  for (const auto& spec : methods) labels.push_back(spec.label());
  const std::vector<MethodSpec> specs(methods.begin(), methods.end());
  return run_coverage(
      scenario, labels,
      [&](const SimulatedData& data, std::size_t rep) { return evaluate_methods(data, scenario, specs, rep); },
      workers);
}

std::vector<Scenario> scenario_grid(const Scenario& base) {
  static constexpr int kStudyCounts[] = {5, 10, 15, 30, 50};
  static constexpr DeltaLawKind kLaws[] = {DeltaLawKind::Uniform, DeltaLawKind::Normal,
                                           DeltaLawKind::ExponentialCentered, DeltaLawKind::Pareto};
  std::vector<Scenario> grid;
  for (DeltaLawKind law : kLaws) {
    for (int m : kStudyCounts) {
      Scenario s = base;
      s.m = m;
      s.delta_law.kind = law;
      grid.push_back(s);
    }
  }
  return grid;
}

}  // namespace causalma
