#include "causalma/nuisance.hpp"

#include <fmt/format.h>

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "causalma/error.hpp"

namespace causalma {

double predict(const OutcomeModel& model, std::span<const double> x) {
  if (x.size() != model.dimension()) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("model has {} covariates, got {}", model.dimension(), x.size()));
  }
  double value = model.coefficients[0];
  for (std::size_t j = 0; j < x.size(); ++j) value += model.coefficients[static_cast<Eigen::Index>(j + 1)] * x[j];
  return value;
}

OutcomeModel OlsSolver::fit(const CovariateMatrix& covariates, std::span<const double> outcome,
                            std::span<const std::size_t> rows) {
  const auto d = static_cast<std::size_t>(covariates.cols());
  const auto n = static_cast<Eigen::Index>(rows.size());
  design_.resize(n, static_cast<Eigen::Index>(d + 1));
  rhs_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t r = rows[static_cast<std::size_t>(i)];
    design_(i, 0) = 1.0;
    design_.row(i).tail(static_cast<Eigen::Index>(d)) = covariates.row(static_cast<Eigen::Index>(r));
    rhs_[i] = outcome[r];
  }
  return solve(d);
}

OutcomeModel OlsSolver::fit(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& outcome) {
  if (covariates.rows() != outcome.size()) {
    throw Error(ErrorKind::DimensionMismatch, "covariate rows and outcome length differ");
  }
  const auto d = static_cast<std::size_t>(covariates.cols());
  design_.resize(covariates.rows(), covariates.cols() + 1);
  design_.col(0).setOnes();
  design_.rightCols(covariates.cols()) = covariates;
  rhs_ = outcome;
  return solve(d);
}

OutcomeModel OlsSolver::solve(std::size_t d) {
  const auto n = static_cast<std::size_t>(design_.rows());
  const auto p = static_cast<Eigen::Index>(d + 1);
  if (n < d + 2) {
    throw Error(ErrorKind::InsufficientRows, fmt::format("{} rows for {} coefficients; need at least {}", n,
                                                         d + 1, d + 2));
  }
  qr_.compute(design_);
  // Singular values of the design equal those of R.
  const Eigen::MatrixXd r = qr_.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues();
  if (!(sv.minCoeff() >= kRankTolerance * sv.maxCoeff()) || sv.maxCoeff() == 0.0) {
    throw Error(ErrorKind::RankDeficient,
                fmt::format("design condition exceeds 1e10 (singular values {:.3g} .. {:.3g})", sv.minCoeff(),
                            sv.maxCoeff()));
  }
  OutcomeModel model;
  model.coefficients = qr_.solve(rhs_);
  residuals_ = rhs_ - design_ * model.coefficients;
  model.residual_variance = residuals_.squaredNorm() / static_cast<double>(n - d - 1);
  model.rank = static_cast<int>(p);
  model.n_rows = n;
  return model;
}

OutcomeModel fit_outcome_model(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& outcome) {
  OlsSolver solver;
  return solver.fit(covariates, outcome);
}

OutcomeModel fit_outcome_model(const IpdDataset& dataset, int study, int arm) {
  OlsSolver solver;
  OutcomeModel model = solver.fit(dataset.covariates(), dataset.outcome(), dataset.arm_rows(study, arm));
  model.study = study;
  model.arm = arm;
  return model;
}

std::string to_string(ProbabilityKind kind) {
  switch (kind) {
    case ProbabilityKind::TargetMembership: return "target_membership";
    case ProbabilityKind::StudyMembership: return "study_membership";
    case ProbabilityKind::Treatment: return "treatment";
  }
  return "unknown";
}

double clip_probability(double p, ClipBounds bounds, bool* clipped) noexcept {
  double out = p;
  if (p < bounds.lower) out = bounds.lower;
  else if (p > bounds.upper) out = bounds.upper;
  if (clipped) *clipped = out != p;
  return out;
}

double ProbabilityModel::linear_predictor(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) + 1 != parameters.size()) {
    throw Error(ErrorKind::DimensionMismatch, "covariate dimension does not match probability model");
  }
  double eta = parameters[0];
  for (std::size_t j = 0; j < x.size(); ++j) eta += parameters[static_cast<Eigen::Index>(j + 1)] * x[j];
  return eta;
}

double ProbabilityModel::probability(std::span<const double> x) const {
  return 1.0 / (1.0 + std::exp(-linear_predictor(x)));
}

namespace {

// log(1 + exp(eta)) without overflow.
double softplus(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

double logistic_loglik(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = z * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - softplus(eta[i]);
  return ll;
}

ProbabilityModel fit_logistic(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, ProbabilityKind kind,
                              const NewtonSettings& settings) {
  const Eigen::Index p = z.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  // Start the intercept at the log prevalence ratio.
  const double positives = y.sum();
  beta[0] = std::log(positives / (static_cast<double>(y.size()) - positives));
  double ll = logistic_loglik(z, y, beta);

  Eigen::VectorXd prob(z.rows());
  Eigen::MatrixXd hessian(p, p);
  for (int iter = 0; iter <= settings.max_iterations; ++iter) {
    const Eigen::VectorXd eta = z * beta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) prob[i] = 1.0 / (1.0 + std::exp(-eta[i]));
    const Eigen::VectorXd score = z.transpose() * (y - prob);
    const double max_score = score.cwiseAbs().maxCoeff();
    if (!std::isfinite(max_score)) break;
    if (max_score < settings.score_tolerance) {
      // A vanishing score with every record fitted perfectly is the signature
      // of complete separation rather than a genuine optimum.
      if (((y - prob).array().abs() < 1e-6).all()) {
        throw Error(ErrorKind::Separable,
                    fmt::format("{} model fits every record perfectly; classes look separable", to_string(kind)));
      }
      ProbabilityModel model;
      model.kind = kind;
      model.parameters = beta;
      model.iterations = iter;
      model.max_abs_score = max_score;
      return model;
    }
    if (iter == settings.max_iterations) break;

    const Eigen::ArrayXd w = prob.array() * (1.0 - prob.array());
    hessian.noalias() = z.transpose() * (z.array().colwise() * w).matrix();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    Eigen::VectorXd step = ldlt.solve(score);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) break;

    // Step halving until the log likelihood does not decrease.
    double t = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double ll_new = logistic_loglik(z, y, candidate);
    for (int h = 0; h < 30 && !(ll_new >= ll - 1e-12 * std::abs(ll)); ++h) {
      t *= 0.5;
      candidate = beta + t * step;
      ll_new = logistic_loglik(z, y, candidate);
    }
    beta = candidate;
    ll = ll_new;
    if (beta.norm() > settings.divergence_norm) {
      throw Error(ErrorKind::Separable,
                  fmt::format("{} model coefficients diverged (norm {:.3g}); classes look separable",
                              to_string(kind), beta.norm()));
    }
  }
  throw Error(ErrorKind::Separable,
              fmt::format("{} model did not converge in {} Newton iterations", to_string(kind),
                          settings.max_iterations));
}

}  // namespace

ProbabilityModel fit_probability_model(const CovariateMatrix& covariates, std::span<const std::size_t> positives,
                                       std::span<const std::size_t> negatives, ProbabilityKind kind,
                                       const NewtonSettings& settings) {
  if (positives.empty() || negatives.empty()) {
    throw Error(ErrorKind::EmptyClass, fmt::format("{} model has an empty class", to_string(kind)));
  }
  const Eigen::Index d = covariates.cols();
  const auto n = static_cast<Eigen::Index>(positives.size() + negatives.size());
  Eigen::MatrixXd z(n, d + 1);
  Eigen::VectorXd y(n);
  Eigen::Index i = 0;
  for (std::size_t r : positives) {
    z(i, 0) = 1.0;
    z.row(i).tail(d) = covariates.row(static_cast<Eigen::Index>(r));
    y[i++] = 1.0;
  }
  for (std::size_t r : negatives) {
    z(i, 0) = 1.0;
    z.row(i).tail(d) = covariates.row(static_cast<Eigen::Index>(r));
    y[i++] = 0.0;
  }
  return fit_logistic(z, y, kind, settings);
}

ProbabilityModel fit_probability_model(const Eigen::MatrixXd& positives, const Eigen::MatrixXd& negatives,
                                       ProbabilityKind kind, const NewtonSettings& settings) {
  if (positives.rows() == 0 || negatives.rows() == 0) {
    throw Error(ErrorKind::EmptyClass, fmt::format("{} model has an empty class", to_string(kind)));
  }
  if (positives.cols() != negatives.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "positive and negative covariate widths differ");
  }
  const Eigen::Index d = positives.cols();
  const Eigen::Index n = positives.rows() + negatives.rows();
  Eigen::MatrixXd z(n, d + 1);
  z.col(0).setOnes();
  z.block(0, 1, positives.rows(), d) = positives;
  z.block(positives.rows(), 1, negatives.rows(), d) = negatives;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  y.head(positives.rows()).setOnes();
  return fit_logistic(z, y, kind, settings);
}

Eigen::VectorXd MultinomialModel::probabilities(std::span<const double> x) const {
  const Eigen::Index k1 = coefficients.rows();
  if (static_cast<Eigen::Index>(x.size()) + 1 != coefficients.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "covariate dimension does not match multinomial model");
  }
  Eigen::VectorXd design(coefficients.cols());
  design[0] = 1.0;
  for (std::size_t j = 0; j < x.size(); ++j) design[static_cast<Eigen::Index>(j + 1)] = x[j];
  Eigen::VectorXd eta(k1 + 1);
  eta[0] = 0.0;
  eta.tail(k1) = coefficients * design;
  const double top = eta.maxCoeff();
  Eigen::VectorXd p = (eta.array() - top).exp().matrix();
  return p / p.sum();
}

MultinomialModel fit_multinomial_model(const CovariateMatrix& covariates,
                                       std::span<const std::vector<std::size_t>> class_rows,
                                       const NewtonSettings& settings) {
  const auto classes = static_cast<Eigen::Index>(class_rows.size());
  if (classes < 2) throw Error(ErrorKind::EmptyClass, "multinomial model needs at least two classes");
  Eigen::Index n = 0;
  for (const auto& rows : class_rows) {
    if (rows.empty()) throw Error(ErrorKind::EmptyClass, "multinomial model has an empty class");
    n += static_cast<Eigen::Index>(rows.size());
  }
  const Eigen::Index d = covariates.cols();
  const Eigen::Index p = d + 1;
  const Eigen::Index k1 = classes - 1;
  Eigen::MatrixXd z(n, p);
  std::vector<Eigen::Index> label(static_cast<std::size_t>(n));
  {
    Eigen::Index i = 0;
    for (Eigen::Index k = 0; k < classes; ++k) {
      for (std::size_t r : class_rows[static_cast<std::size_t>(k)]) {
        z(i, 0) = 1.0;
        z.row(i).tail(d) = covariates.row(static_cast<Eigen::Index>(r));
        label[static_cast<std::size_t>(i)] = k;
        ++i;
      }
    }
  }

  // Parameters stacked class-major: theta[(k-1)*p + j].
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k1 * p);
  for (Eigen::Index k = 1; k < classes; ++k) {
    theta[(k - 1) * p] = std::log(static_cast<double>(class_rows[static_cast<std::size_t>(k)].size()) /
                                  static_cast<double>(class_rows[0].size()));
  }

  Eigen::MatrixXd probs(n, classes);
  auto evaluate = [&](const Eigen::VectorXd& t) {
    const Eigen::Map<const Eigen::MatrixXd> b(t.data(), p, k1);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double top = 0.0;
      Eigen::VectorXd eta(classes);
      eta[0] = 0.0;
      for (Eigen::Index k = 1; k < classes; ++k) {
        eta[k] = z.row(i).dot(b.col(k - 1));
        top = std::max(top, eta[k]);
      }
      double denom = 0.0;
      for (Eigen::Index k = 0; k < classes; ++k) denom += std::exp(eta[k] - top);
      for (Eigen::Index k = 0; k < classes; ++k) probs(i, k) = std::exp(eta[k] - top) / denom;
      ll += eta[label[static_cast<std::size_t>(i)]] - top - std::log(denom);
    }
    return ll;
  };

  double ll = evaluate(theta);
  Eigen::VectorXd score(k1 * p);
  Eigen::MatrixXd hessian(k1 * p, k1 * p);
  for (int iter = 0; iter <= settings.max_iterations; ++iter) {
    score.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 1; k < classes; ++k) {
        const double resid = (label[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0) - probs(i, k);
        score.segment((k - 1) * p, p) += resid * z.row(i).transpose();
      }
    }
    const double max_score = score.cwiseAbs().maxCoeff();
    if (!std::isfinite(max_score)) break;
    if (max_score < settings.score_tolerance) {
      bool perfect = true;
      for (Eigen::Index i = 0; i < n && perfect; ++i) perfect = probs(i, label[static_cast<std::size_t>(i)]) > 1.0 - 1e-6;
      if (perfect) {
        throw Error(ErrorKind::Separable, "study_membership multinomial model fits every record perfectly; classes look separable");
      }
      MultinomialModel model;
      model.coefficients = Eigen::Map<const Eigen::MatrixXd>(theta.data(), p, k1).transpose();
      model.iterations = iter;
      model.max_abs_score = max_score;
      return model;
    }
    if (iter == settings.max_iterations) break;

    hessian.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::MatrixXd outer = z.row(i).transpose() * z.row(i);
      for (Eigen::Index k = 1; k < classes; ++k) {
        for (Eigen::Index l = k; l < classes; ++l) {
          const double w = probs(i, k) * ((k == l ? 1.0 : 0.0) - probs(i, l));
          hessian.block((k - 1) * p, (l - 1) * p, p, p) += w * outer;
        }
      }
    }
    for (Eigen::Index k = 1; k < classes; ++k) {
      for (Eigen::Index l = k + 1; l < classes; ++l) {
        hessian.block((l - 1) * p, (k - 1) * p, p, p) = hessian.block((k - 1) * p, (l - 1) * p, p, p).transpose();
      }
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    const Eigen::VectorXd step = ldlt.solve(score);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) break;

    double t = 1.0;
    Eigen::VectorXd candidate = theta + step;
    double ll_new = evaluate(candidate);
    for (int h = 0; h < 30 && !(ll_new >= ll - 1e-12 * std::abs(ll)); ++h) {
      t *= 0.5;
      candidate = theta + t * step;
      ll_new = evaluate(candidate);
    }
    theta = candidate;
    ll = ll_new;
    if (theta.norm() > settings.divergence_norm) {
      throw Error(ErrorKind::Separable, "study_membership multinomial coefficients diverged; classes look separable");
    }
  }
  throw Error(ErrorKind::Separable,
              fmt::format("study_membership multinomial model did not converge in {} Newton iterations",
                          settings.max_iterations));
}

}  // namespace causalma
