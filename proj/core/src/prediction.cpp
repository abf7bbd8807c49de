#include "causalma/prediction.hpp"

#include <fmt/format.h>

#include <Eigen/Cholesky>
#include <algorithm>
#include <boost/random/normal_distribution.hpp>
#include <cctype>
#include <cmath>
#include <limits>
#include <optional>

#include "causalma/error.hpp"
#include "causalma/parallel.hpp"
#include "causalma/stats.hpp"
#include "resample_detail.hpp"

namespace causalma {

std::string to_string(IntervalMethod method) {
  switch (method) {
    case IntervalMethod::MoM: return "mom";
    case IntervalMethod::SimpleBootstrap: return "simple";
    case IntervalMethod::WildBootstrap: return "wild";
  }
  return "unknown";
}

std::string to_string(Construction construction) {
  switch (construction) {
    case Construction::StudentT: return "t";
    case Construction::Quantile: return "quantile";
    case Construction::Normal: return "normal";
  }
  return "unknown";
}

namespace {

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("level must lie in (0, 1), got {}", level));
  }
}

}  // namespace

IntervalMethod parse_interval_method(std::string_view text) {
  const std::string t = lowercase(text);
  if (t == "mom") return IntervalMethod::MoM;
  if (t == "simple") return IntervalMethod::SimpleBootstrap;
  if (t == "wild") return IntervalMethod::WildBootstrap;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown interval method '{}' (expected mom, simple, wild)", text));
}

Construction parse_construction(std::string_view text) {
  const std::string t = lowercase(text);
  if (t == "quantile") return Construction::Quantile;
  if (t == "normal") return Construction::Normal;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown construction '{}' (expected quantile, normal)", text));
}

PredictionInterval mom_interval(double center, int num_studies, double gamma_hat_sq, double var_pooled,
                                double level) {
  check_level(level);
  if (num_studies <= 2) {
    throw Error(ErrorKind::TooFewStudies,
                fmt::format("method-of-moments interval needs m >= 3 (t with m - 2 df), got m = {}", num_studies));
  }
  if (!(var_pooled >= 0.0) || !(gamma_hat_sq >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "variance components must be nonnegative");
  }
  const double t = stats::student_t_quantile(1.0 - (1.0 - level) / 2.0, num_studies - 2);
  const double half = t * std::sqrt(gamma_hat_sq + var_pooled);
  PredictionInterval pi;
  pi.center = center;
  pi.lower = center - half;
  pi.upper = center + half;
  pi.method = IntervalMethod::MoM;
  pi.construction = Construction::StudentT;
  pi.level = level;
  return pi;
}

PredictionInterval mom_interval(const PooledEstimate& pooled, const HeterogeneityEstimate& gamma, double var_pooled,
                                double level) {
  return mom_interval(pooled.value, static_cast<int>(pooled.per_study.size()), gamma.gamma_hat_sq, var_pooled, level);
}

// ---------------------------------------------------------------------------
// Simple bootstrap

namespace {

LeaveOneOutTrace run_leave_one_out(detail::ResampleScratch& scratch, Rng& rng) {
  const int m = scratch.num_studies();
  LeaveOneOutTrace trace;
  std::uniform_int_distribution<int> pick(1, m);
  trace.left_out = pick(rng);

  scratch.resample_trial(rng, trace.left_out);
  scratch.resample_target(rng);
  trace.mu_left_out = scratch.psi(trace.left_out);

  double rest = 0.0;
  for (int s = 1; s <= m; ++s) {
    if (s != trace.left_out) scratch.resample_trial(rng, s);
  }
  scratch.resample_target(rng);
  for (int s = 1; s <= m; ++s) {
    if (s != trace.left_out) rest += scratch.psi(s);
  }
  trace.mu_rest = rest / static_cast<double>(m - 1);
  trace.delta = trace.mu_rest - trace.mu_left_out;

  double full = 0.0;
  for (int s = 1; s <= m; ++s) scratch.resample_trial(rng, s);
  scratch.resample_target(rng);
  for (int s = 1; s <= m; ++s) full += scratch.psi(s);
  trace.mu_full = full / static_cast<double>(m);
  trace.prediction = trace.mu_full - trace.delta;
  return trace;
}

void check_bootstrap_inputs(const IpdDataset& dataset, const BootstrapSettings& settings) {
  if (dataset.num_studies() < 2) {
    throw Error(ErrorKind::TooFewStudies, "leave-one-out prediction needs at least 2 studies");
  }
  if (settings.replicates < 1) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("B must be >= 1, got {}", settings.replicates));
  }
}

BootstrapDraws collect(std::vector<double>& values, std::vector<char>& ok, const BootstrapSettings& settings,
                       const char* what) {
  BootstrapDraws draws;
  draws.seed = settings.seed;
  draws.requested = values.size();
  for (std::size_t b = 0; b < values.size(); ++b) {
    if (ok[b]) draws.values.push_back(values[b]);
  }
  draws.failures = draws.requested - draws.values.size();
  if (static_cast<double>(draws.failures) > settings.max_failure_rate * static_cast<double>(draws.requested)) {
    throw Error(ErrorKind::FailureBudgetExceeded,
                fmt::format("{} of {} {} bootstrap replicates failed", draws.failures, draws.requested, what));
  }
  return draws;
}

}  // namespace

LeaveOneOutTrace simple_bootstrap_trace(const IpdDataset& dataset, std::string_view arm, Method method,
                                        std::uint64_t seed, std::size_t b, const EstimatorOptions& options) {
  if (dataset.num_studies() < 2) {
    throw Error(ErrorKind::TooFewStudies, "leave-one-out prediction needs at least 2 studies");
  }
  detail::ResampleScratch scratch(dataset, dataset.arm_index(arm), method, options);
  Rng rng = make_stream(seed, {b});
  return run_leave_one_out(scratch, rng);
}

BootstrapDraws simple_bootstrap_predict(const IpdDataset& dataset, std::string_view arm, Method method,
                                        const BootstrapSettings& settings, const EstimatorOptions& options) {
  check_bootstrap_inputs(dataset, settings);
  const int a = dataset.arm_index(arm);
  const auto total = static_cast<std::size_t>(settings.replicates);
  std::vector<double> values(total, 0.0);
  std::vector<char> ok(total, 0);

  parallel_chunks(total, settings.workers, [&](std::size_t begin, std::size_t end) {
    detail::ResampleScratch scratch(dataset, a, method, options);
    for (std::size_t b = begin; b < end; ++b) {
      Rng rng = make_stream(settings.seed, {b});
      try {
        values[b] = run_leave_one_out(scratch, rng).prediction;
        ok[b] = 1;
      } catch (const Error&) {
        ok[b] = 0;
      }
    }
  });
  return collect(values, ok, settings, "simple");
}

// ---------------------------------------------------------------------------
// Influence function and wild bootstrap

OmInfluence::OmInfluence(const IpdDataset& dataset, int arm) : dataset_(&dataset), arm_(arm) {
  dataset.arm_label(arm);
  n_ = dataset.size();
  n0_ = dataset.target_size();
  const auto& x = dataset.covariates();
  const auto y = dataset.outcome();
  const Eigen::Index p = x.cols() + 1;

  TransportEngine engine(dataset, arm, Method::OM);
  const Eigen::VectorXd target_mean = engine.target_design_mean(dataset.target_rows());

  OlsSolver solver;
  studies_.reserve(static_cast<std::size_t>(dataset.num_studies()));
  for (int s = 1; s <= dataset.num_studies(); ++s) {
    const auto rows = dataset.arm_rows(s, arm);
    const OutcomeModel model = solver.fit(x, y, rows);
    StudyTerms terms;
    terms.coefficients = model.coefficients;
    terms.psi = predict_design(model, target_mean);

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd design(p);
    design[0] = 1.0;
    for (std::size_t r : rows) {
      design.tail(p - 1) = x.row(static_cast<Eigen::Index>(r)).transpose();
      gram.selfadjointView<Eigen::Lower>().rankUpdate(design);
    }
    gram = gram.selfadjointView<Eigen::Lower>();
    // v = (D'D)^{-1} xbar0, so x_i' v = xbar0' (D'D)^{-1} x_i.
    const Eigen::VectorXd v = gram.ldlt().solve(target_mean);

    terms.arm_terms.resize(rows.size());
    const Eigen::VectorXd& resid = solver.residuals();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      design.tail(p - 1) = x.row(static_cast<Eigen::Index>(rows[k])).transpose();
      terms.arm_terms[k] = design.dot(v) * resid[static_cast<Eigen::Index>(k)];
    }
    studies_.push_back(std::move(terms));
  }
}

double OmInfluence::psi(int study) const {
  dataset_->check_trial(study);
  return studies_[static_cast<std::size_t>(study - 1)].psi;
}

std::vector<double> OmInfluence::contributions(int study) const {
  dataset_->check_trial(study);
  const StudyTerms& t = studies_[static_cast<std::size_t>(study - 1)];
  const auto& x = dataset_->covariates();
  const double n = static_cast<double>(n_);
  const double scale = n / static_cast<double>(n0_);
  std::vector<double> phi(n_, 0.0);
  for (std::size_t r : dataset_->target_rows()) {
    const double g = t.coefficients[0] + x.row(static_cast<Eigen::Index>(r)).dot(t.coefficients.tail(x.cols()));
    phi[r] = scale * (g - t.psi);
  }
  const auto rows = dataset_->arm_rows(study, arm_);
  for (std::size_t k = 0; k < rows.size(); ++k) phi[rows[k]] = n * t.arm_terms[k];
  return phi;
}

Eigen::VectorXd OmInfluence::target_sum(std::span<const double> target_multipliers) const {
  const auto rows = dataset_->target_rows();
  if (target_multipliers.size() != rows.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one multiplier per target row is required");
  }
  const auto& x = dataset_->covariates();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(x.cols() + 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    sum[0] += target_multipliers[k];
    sum.tail(x.cols()) += target_multipliers[k] * x.row(static_cast<Eigen::Index>(rows[k])).transpose();
  }
  return sum;
}

double OmInfluence::target_perturbation(int study, const Eigen::VectorXd& target_sum) const {
  const StudyTerms& t = studies_[static_cast<std::size_t>(study - 1)];
  // (1/n0) sum xi_i (g(X_i) - psi) = (1/n0) (beta' S - psi S_0)
  return (t.coefficients.dot(target_sum) - t.psi * target_sum[0]) / static_cast<double>(n0_);
}

double OmInfluence::trial_perturbation(int study, std::span<const double> arm_multipliers) const {
  const StudyTerms& t = studies_[static_cast<std::size_t>(study - 1)];
  if (arm_multipliers.size() != t.arm_terms.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one multiplier per arm row is required");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < arm_multipliers.size(); ++k) sum += arm_multipliers[k] * t.arm_terms[k];
  return sum;
}

std::vector<double> if_contributions(const IpdDataset& dataset, int study, std::string_view arm) {
  dataset.check_trial(study);
  return OmInfluence(dataset, dataset.arm_index(arm)).contributions(study);
}

namespace {

class MultiplierSource {
 public:
  explicit MultiplierSource(MultiplierLaw law) : law_(law) {}

  void fill(Rng& rng, std::vector<double>& out, std::size_t count) {
    out.resize(count);
    if (law_ == MultiplierLaw::Normal) {
      for (auto& v : out) v = normal_(rng);
    } else if (law_ == MultiplierLaw::Zero) {
      std::fill(out.begin(), out.end(), 0.0);
    } else {
      std::uint64_t bits = 0;
      int left = 0;
      for (auto& v : out) {
        if (left == 0) {
          bits = rng();
          left = 64;
        }
        v = (bits & 1U) ? 1.0 : -1.0;
        bits >>= 1U;
        --left;
      }
    }
  }

  void reset() { normal_.reset(); }

 private:
  MultiplierLaw law_;
  boost::random::normal_distribution<double> normal_;
};

}  // namespace

BootstrapDraws wild_bootstrap_predict(const IpdDataset& dataset, std::string_view arm,
                                      const BootstrapSettings& settings, MultiplierLaw law) {
  check_bootstrap_inputs(dataset, settings);
  const int a = dataset.arm_index(arm);
  const OmInfluence influence(dataset, a);
  const int m = dataset.num_studies();
  const std::size_t n0 = dataset.target_size();
  const auto total = static_cast<std::size_t>(settings.replicates);
  std::vector<double> values(total, 0.0);
  std::vector<char> ok(total, 0);

  parallel_chunks(total, settings.workers, [&](std::size_t begin, std::size_t end) {
    MultiplierSource source(law);
    std::vector<double> xi_target;
    std::vector<double> xi_arm;
    auto perturbed = [&](Rng& rng, int s) {
      source.fill(rng, xi_arm, dataset.arm_rows(s, a).size());
      return influence.trial_perturbation(s, xi_arm);
    };
    for (std::size_t b = begin; b < end; ++b) {
      Rng rng = make_stream(settings.seed, {b});
      source.reset();
      std::uniform_int_distribution<int> pick(1, m);
      const int left_out = pick(rng);

      source.fill(rng, xi_target, n0);
      Eigen::VectorXd target = influence.target_sum(xi_target);
      const double mu_left_out =
          influence.psi(left_out) + perturbed(rng, left_out) + influence.target_perturbation(left_out, target);

      double rest = 0.0;
      for (int s = 1; s <= m; ++s) {
        if (s != left_out) rest += influence.psi(s) + perturbed(rng, s);
      }
      source.fill(rng, xi_target, n0);
      target = influence.target_sum(xi_target);
      for (int s = 1; s <= m; ++s) {
        if (s != left_out) rest += influence.target_perturbation(s, target);
      }
      const double delta = rest / static_cast<double>(m - 1) - mu_left_out;

      double full = 0.0;
      for (int s = 1; s <= m; ++s) full += influence.psi(s) + perturbed(rng, s);
      source.fill(rng, xi_target, n0);
      target = influence.target_sum(xi_target);
      for (int s = 1; s <= m; ++s) full += influence.target_perturbation(s, target);

      values[b] = full / static_cast<double>(m) - delta;
      ok[b] = std::isfinite(values[b]) ? 1 : 0;
    }
  });
  return collect(values, ok, settings, "wild");
}

PredictionInterval interval_from_draws(const BootstrapDraws& draws, Construction construction, double level,
                                       IntervalMethod method) {
  check_level(level);
  if (draws.values.size() < 10) {
    throw Error(ErrorKind::TooFewDraws, fmt::format("{} successful draws; need at least 10", draws.values.size()));
  }
  PredictionInterval pi;
  pi.method = method;
  pi.construction = construction;
  pi.level = level;
  pi.b_reps = static_cast<int>(draws.requested);
  const double alpha = 1.0 - level;
  if (construction == Construction::Quantile) {
    std::vector<double> sorted = draws.values;
    std::sort(sorted.begin(), sorted.end());
    pi.lower = stats::quantile_sorted(sorted, alpha / 2.0);
    pi.upper = stats::quantile_sorted(sorted, 1.0 - alpha / 2.0);
    pi.center = stats::quantile_sorted(sorted, 0.5);
  } else if (construction == Construction::Normal) {
    const double z = stats::normal_quantile(1.0 - alpha / 2.0);
    const double mu = stats::mean(draws.values);
    const double sd = stats::stddev(draws.values);
    pi.center = mu;
    pi.lower = mu - z * sd;
    pi.upper = mu + z * sd;
  } else {
    throw Error(ErrorKind::InvalidArgument, "bootstrap draws support quantile or normal construction only");
  }
  return pi;
}

}  // namespace causalma
