#include "causalma/transport_estimators.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>

#include "causalma/error.hpp"

namespace causalma {

std::string to_string(Method method) {
  switch (method) {
    case Method::OM: return "om";
    case Method::IPW: return "ipw";
    case Method::AIPW: return "aipw";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "om") return Method::OM;
  if (lower == "ipw") return Method::IPW;
  if (lower == "aipw") return Method::AIPW;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown estimator '{}' (expected om, ipw, aipw)", text));
}

TransportEngine::TransportEngine(const IpdDataset& dataset, int arm, Method method, EstimatorOptions options)
    : dataset_(&dataset), arm_(arm), method_(method), options_(options) {
  dataset.arm_label(arm);
  original_trials_.reserve(static_cast<std::size_t>(dataset.num_studies()));
  for (int s = 1; s <= dataset.num_studies(); ++s) {
    const auto rows = dataset.trial_rows(s);
    original_trials_.emplace_back(rows.begin(), rows.end());
  }
}

RowSelection TransportEngine::original_rows() const {
  return RowSelection{original_trials_, dataset_->target_rows()};
}

Eigen::VectorXd TransportEngine::target_design_mean(std::span<const std::size_t> target_rows) const {
  if (target_rows.empty()) throw Error(ErrorKind::EmptyTarget, "no target rows selected");
  const auto& x = dataset_->covariates();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(x.cols() + 1);
  auto tail = mean.tail(x.cols());
  for (std::size_t r : target_rows) tail += x.row(static_cast<Eigen::Index>(r)).transpose();
  tail /= static_cast<double>(target_rows.size());
  mean[0] = 1.0;
  return mean;
}

const OutcomeModel& TransportEngine::fit_outcome(int study, std::span<const std::size_t> trial_rows) {
  const auto arms = dataset_->arm();
  arm_buffer_.clear();
  for (std::size_t r : trial_rows) {
    if (arms[r] == arm_) arm_buffer_.push_back(r);
  }
  outcome_ = ols_.fit(dataset_->covariates(), dataset_->outcome(), arm_buffer_);
  outcome_.study = study;
  outcome_.arm = arm_;
  return outcome_;
}

double TransportEngine::psi_om(int study, std::span<const std::size_t> trial_rows,
                               const Eigen::VectorXd& target_design_mean) {
  return predict_design(fit_outcome(study, trial_rows), target_design_mean);
}

void TransportEngine::compute_weights(int study, const RowSelection& rows, std::size_t* clipped) {
  const auto& x = dataset_->covariates();
  const auto arms = dataset_->arm();
  const auto trial_rows = rows.trials[static_cast<std::size_t>(study - 1)];

  arm_buffer_.clear();
  other_buffer_.clear();
  for (std::size_t r : trial_rows) (arms[r] == arm_ ? arm_buffer_ : other_buffer_).push_back(r);
  if (arm_buffer_.empty()) {
    throw Error(ErrorKind::EmptyClass,
                fmt::format("no rows on arm '{}' in study {}", dataset_->arm_label(arm_), study));
  }

  std::size_t clip_count = 0;
  auto clip = [&](double p) {
    bool hit = false;
    const double out = clip_probability(p, options_.clip, &hit);
    clip_count += hit ? 1 : 0;
    return out;
  };
  auto row_span = [&](std::size_t r) {
    return std::span<const double>(x.row(static_cast<Eigen::Index>(r)).data(), static_cast<std::size_t>(x.cols()));
  };

  weights_.assign(arm_buffer_.size(), 0.0);

  // Treatment probability.
  std::optional<ProbabilityModel> treatment;
  const double arm_share = static_cast<double>(arm_buffer_.size()) / static_cast<double>(trial_rows.size());
  if (options_.treatment_model == TreatmentModel::Logistic && !other_buffer_.empty()) {
    treatment = fit_probability_model(x, arm_buffer_, other_buffer_, ProbabilityKind::Treatment);
  }

  // Target-to-trial membership ratio p0(X)/ps(X).
  std::optional<ProbabilityModel> pairwise;
  std::optional<MultinomialModel> multinomial;
  if (options_.membership == MembershipModel::Pairwise) {
    pairwise = fit_probability_model(x, rows.target, trial_rows, ProbabilityKind::TargetMembership);
  } else {
    std::vector<std::vector<std::size_t>> classes;
    classes.reserve(rows.trials.size() + 1);
    classes.emplace_back(rows.target.begin(), rows.target.end());
    for (const auto& t : rows.trials) classes.push_back(t);
    multinomial = fit_multinomial_model(x, classes);
  }

  for (std::size_t k = 0; k < arm_buffer_.size(); ++k) {
    const auto xr = row_span(arm_buffer_[k]);
    const double e = treatment ? clip(treatment->probability(xr)) : arm_share;
    double ratio = 0.0;
    if (pairwise) {
      const double p = clip(pairwise->probability(xr));
      ratio = p / (1.0 - p);
    } else {
      const Eigen::VectorXd probs = multinomial->probabilities(xr);
      ratio = clip(probs[0]) / clip(probs[study]);
    }
    weights_[k] = ratio / e;
  }
  if (clipped) *clipped = clip_count;
}

double TransportEngine::psi(int study, const RowSelection& rows, std::size_t* clipped) {
  dataset_->check_trial(study);
  if (rows.trials.size() != static_cast<std::size_t>(dataset_->num_studies())) {
    throw Error(ErrorKind::DimensionMismatch, "row selection does not cover every trial");
  }
  const auto trial_rows = rows.trials[static_cast<std::size_t>(study - 1)];
  const auto n0 = static_cast<double>(rows.target.size());
  if (clipped) *clipped = 0;

  if (method_ == Method::OM) return psi_om(study, trial_rows, target_design_mean(rows.target));

  double om = 0.0;
  Eigen::VectorXd residual;
  if (method_ == Method::AIPW) {
    om = psi_om(study, trial_rows, target_design_mean(rows.target));
    residual = ols_.residuals();  // Y - g(X), in arm-row order
  }
  compute_weights(study, rows, clipped);

  const auto y = dataset_->outcome();
  double weight_sum = 0.0;
  double weighted = 0.0;
  for (std::size_t k = 0; k < arm_buffer_.size(); ++k) {
    weight_sum += weights_[k];
    const double term = method_ == Method::IPW ? y[arm_buffer_[k]] : residual[static_cast<Eigen::Index>(k)];
    weighted += weights_[k] * term;
  }
  if (!(weight_sum > 0.0)) {
    throw Error(ErrorKind::AllWeightsZero, fmt::format("all weights are zero in study {}", study));
  }
  const double denom = options_.hajek ? weight_sum : n0;
  if (method_ == Method::IPW) return weighted / denom;

  const double sign = options_.augmentation_sign == AugmentationSign::ResidualCorrection ? 1.0 : -1.0;
  return om + sign * weighted / denom;
}

namespace {

TransportEstimate make_estimate(const IpdDataset& dataset, int study, std::string_view arm, Method method,
                                const EstimatorOptions& options) {
  dataset.check_trial(study);
  const int a = dataset.arm_index(arm);
  TransportEngine engine(dataset, a, method, options);
  TransportEstimate est;
  est.study = study;
  est.arm = std::string(arm);
  est.method = method;
  est.value = engine.psi(study, engine.original_rows(), &est.clipped_weights);
  est.n_target = dataset.target_size();
  est.n_arm = dataset.arm_rows(study, a).size();
  return est;
}

}  // namespace

TransportEstimate estimate_psi_om(const IpdDataset& dataset, int study, std::string_view arm,
                                  const EstimatorOptions& options) {
  return make_estimate(dataset, study, arm, Method::OM, options);
}

TransportEstimate estimate_psi_ipw(const IpdDataset& dataset, int study, std::string_view arm,
                                   const EstimatorOptions& options) {
  return make_estimate(dataset, study, arm, Method::IPW, options);
}

TransportEstimate estimate_psi_aipw(const IpdDataset& dataset, int study, std::string_view arm,
                                    const EstimatorOptions& options) {
  return make_estimate(dataset, study, arm, Method::AIPW, options);
}

TransportEstimate estimate_psi(const IpdDataset& dataset, int study, std::string_view arm, Method method,
                               const EstimatorOptions& options) {
  return make_estimate(dataset, study, arm, method, options);
}

PooledEstimate estimate_pooled(const IpdDataset& dataset, std::string_view arm, Method method,
                               const EstimatorOptions& options) {
  PooledEstimate pooled;
  pooled.arm = std::string(arm);
  pooled.method = method;
  const int m = dataset.num_studies();
  pooled.per_study.reserve(static_cast<std::size_t>(m));
  double sum = 0.0;
  for (int s = 1; s <= m; ++s) {
    try {
      pooled.per_study.push_back(make_estimate(dataset, s, arm, method, options));
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("study {}, arm '{}': {}", s, arm, e.detail()));
    }
    sum += pooled.per_study.back().value;
  }
  pooled.value = sum / static_cast<double>(m);
  return pooled;
}

double estimate_contrast(const IpdDataset& dataset, std::string_view arm_a, std::string_view arm_b, Method method,
                         const EstimatorOptions& options) {
  dataset.arm_index(arm_a);
  dataset.arm_index(arm_b);
  if (arm_a == arm_b) return 0.0;
  return estimate_pooled(dataset, arm_a, method, options).value -
         estimate_pooled(dataset, arm_b, method, options).value;
}

}  // namespace causalma
