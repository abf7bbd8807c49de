#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "causalma/ipd_data.hpp"

namespace causalma {

// Linear outcome regression g(x) = b0 + b'x fitted by least squares.
struct OutcomeModel {
  int study = 0;
  int arm = kNoArm;
  Eigen::VectorXd coefficients;  // intercept first, then d slopes
  double residual_variance = 0.0;
  int rank = 0;
  std::size_t n_rows = 0;

  std::size_t dimension() const noexcept {
    return coefficients.size() == 0 ? 0 : static_cast<std::size_t>(coefficients.size() - 1);
  }
};

// Throws DimensionMismatch.
double predict(const OutcomeModel& model, std::span<const double> x);

// Prediction at the design vector (1, x'). Callers guarantee the size.
inline double predict_design(const OutcomeModel& model, const Eigen::Ref<const Eigen::VectorXd>& design) {
  return model.coefficients.dot(design);
}

// Least squares by column-pivoted Householder QR. Reuses its buffers across
// calls, so one solver per thread is the intended use inside resampling loops.
//
// Errors: InsufficientRows (fewer than d + 2 rows), RankDeficient (smallest
// singular value of the design below 1e-10 times the largest).
class OlsSolver {
 public:
  static constexpr double kRankTolerance = 1e-10;

  OutcomeModel fit(const CovariateMatrix& covariates, std::span<const double> outcome,
                   std::span<const std::size_t> rows);
  OutcomeModel fit(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& outcome);

  // Residuals of the last fit, in row order.
  const Eigen::VectorXd& residuals() const noexcept { return residuals_; }

 private:
  OutcomeModel solve(std::size_t d);

  Eigen::MatrixXd design_;
  Eigen::VectorXd rhs_;
  Eigen::VectorXd residuals_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
};

OutcomeModel fit_outcome_model(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& outcome);

// Fits on rows of trial `study` receiving `arm`.
OutcomeModel fit_outcome_model(const IpdDataset& dataset, int study, int arm);

enum class ProbabilityKind { TargetMembership, StudyMembership, Treatment };
enum class Link { Logistic, Multinomial };

std::string to_string(ProbabilityKind kind);

struct ClipBounds {
  double lower = 0.01;
  double upper = 0.99;
};

// Clamps p into the bounds; sets *clipped when it had to.
double clip_probability(double p, ClipBounds bounds, bool* clipped = nullptr) noexcept;

// Logistic model for P(positive class | x).
struct ProbabilityModel {
  ProbabilityKind kind = ProbabilityKind::TargetMembership;
  Link link = Link::Logistic;
  Eigen::VectorXd parameters;  // intercept first
  int iterations = 0;
  double max_abs_score = 0.0;

  double linear_predictor(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
};

struct NewtonSettings {
  double score_tolerance = 1e-8;
  int max_iterations = 100;
  double divergence_norm = 1e4;
};

// Maximum-likelihood logistic regression of positive vs negative rows by
// damped Newton iterations.
//
// Errors: EmptyClass, Separable (no convergence within the iteration budget or
// coefficient norm beyond NewtonSettings::divergence_norm).
ProbabilityModel fit_probability_model(const CovariateMatrix& covariates,
                                       std::span<const std::size_t> positives,
                                       std::span<const std::size_t> negatives, ProbabilityKind kind,
                                       const NewtonSettings& settings = {});

ProbabilityModel fit_probability_model(const Eigen::MatrixXd& positives, const Eigen::MatrixXd& negatives,
                                       ProbabilityKind kind, const NewtonSettings& settings = {});

// Multinomial logit over classes 0..K-1 with class 0 as reference:
// log P(k|x)/P(0|x) = coefficients.row(k-1) * (1, x').
struct MultinomialModel {
  Eigen::MatrixXd coefficients;  // (K-1) x (d+1)
  int iterations = 0;
  double max_abs_score = 0.0;

  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(coefficients.rows()) + 1; }
  Eigen::VectorXd probabilities(std::span<const double> x) const;
};

// class_rows[k] lists the rows of class k. Same error contract as the
// binary fit.
MultinomialModel fit_multinomial_model(const CovariateMatrix& covariates,
                                       std::span<const std::vector<std::size_t>> class_rows,
                                       const NewtonSettings& settings = {});

}  // namespace causalma
