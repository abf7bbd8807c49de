#include "causalma/heterogeneity.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "causalma/error.hpp"
#include "causalma/parallel.hpp"
#include "resample_detail.hpp"

namespace causalma {

CorrelatedEstimates CorrelatedEstimates::with_equal_weights(Eigen::VectorXd mu_hat, Eigen::MatrixXd cov) {
  const auto m = mu_hat.size();
  CorrelatedEstimates out;
  out.weights = Eigen::VectorXd::Constant(m, m == 0 ? 0.0 : 1.0 / static_cast<double>(m));
  out.mu_hat = std::move(mu_hat);
  out.cov = std::move(cov);
  return out;
}

void CorrelatedEstimates::validate(bool require_psd) const {
  const auto m = mu_hat.size();
  if (weights.size() != m || cov.rows() != m || cov.cols() != m) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("mu_hat has {} entries, weights {}, cov {}x{}", m, weights.size(), cov.rows(),
                            cov.cols()));
  }
  if (!mu_hat.allFinite() || !weights.allFinite() || !cov.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "estimates, weights and covariance must be finite");
  }
  if (std::abs(weights.sum() - 1.0) >= 1e-12) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("weights sum to {:.17g}, not 1", weights.sum()));
  }
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorKind::InvalidArgument, "covariance matrix is not symmetric");
  }
  if (m > 0 && cov.diagonal().minCoeff() < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "covariance matrix has a negative variance");
  }
  if (require_psd && m > 0) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-8) {
      throw Error(ErrorKind::InvalidArgument,
                  fmt::format("covariance matrix is not positive semidefinite (eigenvalue {:.3g})",
                              eig.eigenvalues().minCoeff()));
    }
  }
}

Eigen::VectorXd compute_c_terms(const Eigen::VectorXd& weights, const Eigen::MatrixXd& cov) {
  const auto m = weights.size();
  if (cov.rows() != m || cov.cols() != m) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("{} weights but a {}x{} covariance matrix", m, cov.rows(), cov.cols()));
  }
  // r_s = sum_{i != s} w_i cov_is
  Eigen::VectorXd r = cov * weights;
  r -= cov.diagonal().cwiseProduct(weights);
  // T = sum_{i != j} w_i w_j cov_ij
  const double total = weights.dot(r);
  return (Eigen::VectorXd::Constant(m, total) - 2.0 * r).eval();
}

HeterogeneityEstimate estimate_gamma_squared(const CorrelatedEstimates& estimates) {
  const auto m = estimates.mu_hat.size();
  if (m < 2) throw Error(ErrorKind::TooFewStudies, fmt::format("need at least 2 studies, got {}", m));
  estimates.validate(false);

  const Eigen::VectorXd& w = estimates.weights;
  const double md = static_cast<double>(m);

  HeterogeneityEstimate out;
  out.inputs = estimates;
  out.weighted_mean = w.dot(estimates.mu_hat);
  out.q = (estimates.mu_hat.array() - out.weighted_mean).square().sum();
  out.c_terms = compute_c_terms(w, estimates.cov);

  // Coefficient of each sigma_s^2 and of gamma^2 in E[Q].
  const Eigen::ArrayXd coef = md * w.array().square() + (1.0 - 2.0 * w.array());
  out.denominator = coef.sum();
  if (!(std::abs(out.denominator) > 1e-12)) {
    throw Error(ErrorKind::DegenerateDenominator,
                fmt::format("moment equation denominator is {:.3g}", out.denominator));
  }
  const double within = (estimates.cov.diagonal().array() * coef).sum();
  out.gamma_tilde_sq = (out.q - within - out.c_terms.sum()) / out.denominator;
  out.gamma_hat_sq = std::max(0.0, out.gamma_tilde_sq);
  return out;
}

Eigen::MatrixXd JointBootstrap::covariance() const {
  const auto b = replicates.rows();
  if (b < 2) throw Error(ErrorKind::TooFewDraws, "covariance needs at least 2 successful replicates");
  const Eigen::RowVectorXd mean = replicates.colwise().mean();
  const Eigen::MatrixXd centered = replicates.rowwise() - mean;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(b - 1);
  // Exact symmetry for downstream validation.
  return (0.5 * (cov + cov.transpose())).eval();
}

double JointBootstrap::pooled_variance(const Eigen::VectorXd& weights) const {
  const auto b = replicates.rows();
  if (b < 2) throw Error(ErrorKind::TooFewDraws, "variance needs at least 2 successful replicates");
  const Eigen::VectorXd pooled = replicates * weights;
  const double mean = pooled.mean();
  return (pooled.array() - mean).square().sum() / static_cast<double>(b - 1);
}

JointBootstrap joint_bootstrap(const IpdDataset& dataset, int arm, Method method,
                               const JointBootstrapOptions& options, const EstimatorOptions& estimator) {
  if (options.replicates < 2) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("joint bootstrap needs at least 2 replicates, got {}", options.replicates));
  }
  const int m = dataset.num_studies();
  const auto b_total = static_cast<std::size_t>(options.replicates);
  Eigen::MatrixXd all(static_cast<Eigen::Index>(b_total), m);
  std::vector<char> ok(b_total, 0);

  parallel_chunks(b_total, options.workers, [&](std::size_t begin, std::size_t end) {
    detail::ResampleScratch scratch(dataset, arm, method, estimator);
    for (std::size_t b = begin; b < end; ++b) {
      Rng rng = make_stream(options.seed, {b});
      try {
        for (int s = 1; s <= m; ++s) scratch.resample_trial(rng, s);
        scratch.resample_target(rng);
        for (int s = 1; s <= m; ++s) all(static_cast<Eigen::Index>(b), s - 1) = scratch.psi(s);
        ok[b] = 1;
      } catch (const Error&) {
        ok[b] = 0;
      }
    }
  });

  JointBootstrap out;
  const auto good = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
  out.failures = b_total - good;
  if (static_cast<double>(out.failures) > options.max_failure_rate * static_cast<double>(b_total)) {
    throw Error(ErrorKind::FailureBudgetExceeded,
                fmt::format("{} of {} joint bootstrap replicates failed", out.failures, b_total));
  }
  out.replicates.resize(static_cast<Eigen::Index>(good), m);
  Eigen::Index row = 0;
  for (std::size_t b = 0; b < b_total; ++b) {
    if (ok[b]) out.replicates.row(row++) = all.row(static_cast<Eigen::Index>(b));
  }
  return out;
}

Eigen::MatrixXd estimate_cov_matrix(const IpdDataset& dataset, std::string_view arm, Method method, int b_cov,
                                    std::uint64_t seed, const EstimatorOptions& estimator, unsigned workers) {
  JointBootstrapOptions options;
  options.replicates = b_cov;
  options.seed = seed;
  options.workers = workers;
  return joint_bootstrap(dataset, dataset.arm_index(arm), method, options, estimator).covariance();
}

}  // namespace causalma
