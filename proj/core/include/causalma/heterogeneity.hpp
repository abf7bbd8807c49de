#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include "causalma/ipd_data.hpp"
#include "causalma/transport_estimators.hpp"

namespace causalma {

// Per-study estimates together with the weights that pool them and the
// covariance of the estimates (diagonal: sampling variances; off-diagonal:
// covariances induced by the shared target sample).
struct CorrelatedEstimates {
  Eigen::VectorXd mu_hat;
  Eigen::VectorXd weights;
  Eigen::MatrixXd cov;

  static CorrelatedEstimates with_equal_weights(Eigen::VectorXd mu_hat, Eigen::MatrixXd cov);

  // Throws DimensionMismatch or InvalidArgument when the weights do not sum to
  // one (1e-12), cov is not symmetric or has a negative diagonal entry. With
  // require_psd, an eigenvalue of cov below -1e-8 is also rejected.
  void validate(bool require_psd = true) const;
};

struct HeterogeneityEstimate {
  double gamma_tilde_sq = 0.0;  // untruncated moment solution, may be negative
  double gamma_hat_sq = 0.0;    // max(0, gamma_tilde_sq)
  double q = 0.0;               // sum of squared deviations from the weighted mean
  double weighted_mean = 0.0;
  double denominator = 0.0;     // sum_s { m w_s^2 + 1 - 2 w_s }
  Eigen::VectorXd c_terms;
  CorrelatedEstimates inputs;
};

// C_s = -2 sum_{i!=s} w_i (1 - w_s) cov_is + sum_{i!=s} sum_{j!=i,s} w_i w_j cov_ij.
// Evaluated in O(m^2) as T - 2 r_s with T = sum_{i!=j} w_i w_j cov_ij and
// r_s = sum_{i!=s} w_i cov_is.
Eigen::VectorXd compute_c_terms(const Eigen::VectorXd& weights, const Eigen::MatrixXd& cov);

// Moment estimator of the between-study variance that accounts for
// correlation between the study estimates.
//
// The formula is algebraic in cov, so positive semidefiniteness is not
// required here; callers holding estimated covariances validate it upstream.
//
// Errors: TooFewStudies (m < 2), DegenerateDenominator, plus validation errors.
HeterogeneityEstimate estimate_gamma_squared(const CorrelatedEstimates& estimates);

struct JointBootstrapOptions {
  int replicates = 1000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  double max_failure_rate = 0.1;
};

// Replicates of (psi_1, ..., psi_m) where every replicate resamples each trial
// and the target sample with replacement and refits all nuisance models.
// Replicate b draws from the stream (seed, b).
struct JointBootstrap {
  Eigen::MatrixXd replicates;  // successful replicates x m, in replicate order
  std::size_t failures = 0;

  // Sample covariance (divisor B - 1).
  Eigen::MatrixXd covariance() const;
  // Sample variance of the weighted pooled estimate, i.e. w' cov w.
  double pooled_variance(const Eigen::VectorXd& weights) const;
};

// Errors: InvalidArgument (fewer than 2 replicates), FailureBudgetExceeded.
JointBootstrap joint_bootstrap(const IpdDataset& dataset, int arm, Method method, const JointBootstrapOptions& options,
                               const EstimatorOptions& estimator = {});

Eigen::MatrixXd estimate_cov_matrix(const IpdDataset& dataset, std::string_view arm, Method method, int b_cov,
                                    std::uint64_t seed, const EstimatorOptions& estimator = {},
                                    unsigned workers = 1);

}  // namespace causalma
