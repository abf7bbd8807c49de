#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "causalma/heterogeneity.hpp"
#include "causalma/ipd_data.hpp"
#include "causalma/transport_estimators.hpp"

namespace causalma {

enum class IntervalMethod { MoM, SimpleBootstrap, WildBootstrap };
enum class Construction { StudentT, Quantile, Normal };

std::string to_string(IntervalMethod method);
std::string to_string(Construction construction);
// "mom", "simple", "wild"
IntervalMethod parse_interval_method(std::string_view text);
// "quantile", "normal"
Construction parse_construction(std::string_view text);

struct PredictionInterval {
  double center = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  IntervalMethod method = IntervalMethod::MoM;
  Construction construction = Construction::StudentT;
  double level = 0.95;
  int b_reps = 0;

  double width() const noexcept { return upper - lower; }
  bool contains(double value) const noexcept { return lower <= value && value <= upper; }
};

struct BootstrapDraws {
  std::vector<double> values;  // successful replicates, in replicate order
  std::uint64_t seed = 0;
  std::size_t requested = 0;
  std::size_t failures = 0;
};

struct BootstrapSettings {
  int replicates = 1000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  double max_failure_rate = 0.1;
};

// center +/- t_{m-2} sqrt(gamma_hat^2 + var_pooled), t at the upper
// (1 - level)/2 tail.
//
// Errors: TooFewStudies (m <= 2), InvalidArgument (level outside (0,1) or
// negative variance).
PredictionInterval mom_interval(double center, int num_studies, double gamma_hat_sq, double var_pooled,
                                double level);
PredictionInterval mom_interval(const PooledEstimate& pooled, const HeterogeneityEstimate& gamma, double var_pooled,
                                double level);

// Intermediate values of one leave-one-out replicate.
struct LeaveOneOutTrace {
  int left_out = 0;           // s_b
  double mu_left_out = 0.0;   // estimate for s_b from its resample and the first target resample
  double mu_rest = 0.0;       // mean over s != s_b with the second target resample
  double delta = 0.0;         // mu_rest - mu_left_out
  double mu_full = 0.0;       // pooled estimate from a fresh resample of everything
  double prediction = 0.0;    // mu_full - delta
};

// Replicate `b` of simple_bootstrap_predict, drawn from stream (seed, b).
LeaveOneOutTrace simple_bootstrap_trace(const IpdDataset& dataset, std::string_view arm, Method method,
                                        std::uint64_t seed, std::size_t b, const EstimatorOptions& options = {});

// Leave-one-out prediction draws from the simple (row-resampling) bootstrap.
// Nuisance models are refit in every resample.
//
// Errors: TooFewStudies (m < 2), InvalidArgument (B < 1),
// FailureBudgetExceeded.
BootstrapDraws simple_bootstrap_predict(const IpdDataset& dataset, std::string_view arm, Method method,
                                        const BootstrapSettings& settings, const EstimatorOptions& options = {});

// Zero switches every perturbation off; it exists for testing.
enum class MultiplierLaw { Normal, Rademacher, Zero };

// Plug-in influence function of the outcome-model transported mean for every
// trial, and the multiplier perturbations built from it.
//
// With psi_s = mean over target of g_s(X) and g_s fitted by least squares on
// the arm rows of trial s, the contribution of row i (scaled to sample size n)
// is
//   target row:      (n / n0) (g_s(X_i) - psi_s)
//   trial s, arm a:  (n / n0) h_i (Y_i - g_s(X_i)),  h_i = n0 xbar0' (D'D)^{-1} (1, X_i')
// and zero elsewhere, where D is the trial's arm design and xbar0 the target
// design mean. h_i plays the role of the inverse-odds weight of the trial row.
class OmInfluence {
 public:
  OmInfluence(const IpdDataset& dataset, int arm);

  int num_studies() const noexcept { return static_cast<int>(studies_.size()); }
  double psi(int study) const;
  std::size_t sample_size() const noexcept { return n_; }

  // phi_i for all n rows; the estimator is linearized as psi + (1/n) sum phi_i.
  std::vector<double> contributions(int study) const;

  // (1/n) sum_i xi_i phi_i, split into its target and trial parts.
  // target_sum = sum over target rows of xi_i (1, X_i').
  double target_perturbation(int study, const Eigen::VectorXd& target_sum) const;
  // arm_multipliers are aligned with dataset.arm_rows(study, arm).
  double trial_perturbation(int study, std::span<const double> arm_multipliers) const;

  // Sum over target rows of xi_i (1, X_i').
  Eigen::VectorXd target_sum(std::span<const double> target_multipliers) const;

 private:
  struct StudyTerms {
    Eigen::VectorXd coefficients;
    double psi = 0.0;
    std::vector<double> arm_terms;  // (1/n0) h_i residual_i
  };

  const IpdDataset* dataset_;
  int arm_;
  std::size_t n_ = 0;
  std::size_t n0_ = 0;
  std::vector<StudyTerms> studies_;
};

// Influence contributions for the outcome-model estimate of one trial.
// Their sample mean is zero up to rounding.
std::vector<double> if_contributions(const IpdDataset& dataset, int study, std::string_view arm);

// Leave-one-out prediction draws where every resample-and-refit step is
// replaced by a multiplier perturbation of the outcome-model estimates.
BootstrapDraws wild_bootstrap_predict(const IpdDataset& dataset, std::string_view arm,
                                      const BootstrapSettings& settings,
                                      MultiplierLaw law = MultiplierLaw::Normal);

// Quantile construction: empirical (alpha/2, 1 - alpha/2) quantiles, centered
// at the median. Normal construction: mean +/- z sd.
//
// Errors: TooFewDraws (< 10 values), InvalidArgument (level outside (0,1)).
PredictionInterval interval_from_draws(const BootstrapDraws& draws, Construction construction, double level,
                                       IntervalMethod method);

}  // namespace causalma
