#include <gtest/gtest.h>

#include "causalma/error.hpp"
#include "causalma/nuisance.hpp"
#include "support.hpp"

namespace causalma {
namespace {

std::string fmt_id(int k, int i) { return std::to_string(k) + "-" + std::to_string(i); }

Eigen::MatrixXd random_covariates(testing::Gen& g, Eigen::Index n, Eigen::Index d) {
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g.normal();
  return x;
}

TEST(OutcomeModel, RecoversNoiselessCoefficients) {
  testing::Gen g(1);
  const Eigen::MatrixXd x = random_covariates(g, 40, 3);
  const Eigen::VectorXd y = (0.5 + 0.5 * x.rowwise().sum().array()).matrix();
  const OutcomeModel m = fit_outcome_model(x, y);
  ASSERT_EQ(m.coefficients.size(), 4);
  for (double c : m.coefficients) EXPECT_NEAR(c, 0.5, 1e-10);
  EXPECT_EQ(m.rank, 4);
  EXPECT_NEAR(m.residual_variance, 0.0, 1e-20);
}

TEST(OutcomeModel, DuplicateColumnIsRankDeficient) {
  testing::Gen g(2);
  Eigen::MatrixXd x = random_covariates(g, 30, 3);
  x.col(2) = x.col(0);
  const Eigen::VectorXd y = g.normal_vector(30);
  try {
    fit_outcome_model(x, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficient);
  }
}

TEST(OutcomeModel, TooFewRows) {
  testing::Gen g(3);
  const Eigen::MatrixXd x = random_covariates(g, 4, 3);
  try {
    fit_outcome_model(x, g.normal_vector(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientRows);
  }
}

TEST(OutcomeModel, MinimalRowsGiveFiniteVariance) {
  testing::Gen g(4);
  const Eigen::MatrixXd x = random_covariates(g, 5, 3);
  const OutcomeModel m = fit_outcome_model(x, g.normal_vector(5));
  EXPECT_GE(m.residual_variance, 0.0);
  EXPECT_TRUE(std::isfinite(m.residual_variance));
}

TEST(OutcomeModel, Predict) {
  OutcomeModel m;
  m.coefficients = Eigen::VectorXd::Constant(4, 0.5);
  EXPECT_DOUBLE_EQ(predict(m, std::vector<double>{1, 1, 1}), 2.0);
  m.coefficients.setZero();
  EXPECT_DOUBLE_EQ(predict(m, std::vector<double>{3, -7, 11}), 0.0);
  m.coefficients << 1.25, 0, 0, 0;
  EXPECT_DOUBLE_EQ(predict(m, std::vector<double>{3, -7, 11}), 1.25);
  try {
    predict(m, std::vector<double>{1, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(OutcomeModel, ResidualsOrthogonalToDesign) {
  testing::for_all(25, 5, [](testing::Gen& g, int) {
    const Eigen::Index n = g.integer(6, 200);
    const Eigen::Index d = g.integer(1, 4);
    const Eigen::MatrixXd x = random_covariates(g, n, d);
    const Eigen::VectorXd y = g.normal_vector(n) * g.uniform(0.1, 10.0);
    OlsSolver solver;
    solver.fit(x, y);
    const Eigen::VectorXd& r = solver.residuals();
    EXPECT_LT(std::abs(r.sum()), 1e-8 * static_cast<double>(n));
    for (Eigen::Index j = 0; j < d; ++j) EXPECT_LT(std::abs(r.dot(x.col(j))), 1e-8 * static_cast<double>(n));
  });
}

TEST(OutcomeModel, PredictIsAffine) {
  testing::for_all(25, 6, [](testing::Gen& g, int) {
    OutcomeModel m;
    m.coefficients = g.normal_vector(4);
    const Eigen::VectorXd x1 = g.normal_vector(3);
    const Eigen::VectorXd x2 = g.normal_vector(3);
    const double a = g.uniform(-2.0, 3.0);
    const Eigen::VectorXd mix = a * x1 + (1 - a) * x2;
    const auto p = [&](const Eigen::VectorXd& v) { return predict(m, std::span<const double>(v.data(), 3)); };
    EXPECT_NEAR(p(mix), a * p(x1) + (1 - a) * p(x2), 1e-12 * (1 + std::abs(p(mix))));
  });
}

TEST(OutcomeModel, SolverMatchesNormalEquations) {
  testing::for_all(10, 7, [](testing::Gen& g, int) {
    const Eigen::MatrixXd x = random_covariates(g, 50, 3);
    const Eigen::VectorXd y = g.normal_vector(50);
    Eigen::MatrixXd design(50, 4);
    design << Eigen::VectorXd::Ones(50), x;
    const Eigen::VectorXd oracle = (design.transpose() * design).ldlt().solve(design.transpose() * y);
    EXPECT_LT((fit_outcome_model(x, y).coefficients - oracle).norm(), 1e-10);
  });
}

TEST(ProbabilityModel, IdenticalClassesGiveOneHalf) {
  testing::Gen g(8);
  const Eigen::MatrixXd pos = random_covariates(g, 1000, 3);
  const Eigen::MatrixXd neg = random_covariates(g, 1000, 3);
  const ProbabilityModel m = fit_probability_model(pos, neg, ProbabilityKind::TargetMembership);
  // Points inside the unit cube keep the sampling noise of the slopes small.
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d x(g.uniform(-1, 1), g.uniform(-1, 1), g.uniform(-1, 1));
    EXPECT_LT(std::abs(m.probability(std::span<const double>(x.data(), 3)) - 0.5), 0.1);
  }
}

TEST(ProbabilityModel, MeanPredictionMatchesPrevalence) {
  testing::for_all(15, 9, [](testing::Gen& g, int) {
    const Eigen::Index np = g.integer(20, 300);
    const Eigen::Index nn = g.integer(20, 300);
    Eigen::MatrixXd pos = random_covariates(g, np, 2);
    pos.array() += g.uniform(-0.5, 0.5);
    const Eigen::MatrixXd neg = random_covariates(g, nn, 2);
    const ProbabilityModel m = fit_probability_model(pos, neg, ProbabilityKind::StudyMembership);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < np; ++i) {
      const Eigen::VectorXd x = pos.row(i).transpose();
      sum += m.probability(std::span<const double>(x.data(), 2));
    }
    for (Eigen::Index i = 0; i < nn; ++i) {
      const Eigen::VectorXd x = neg.row(i).transpose();
      sum += m.probability(std::span<const double>(x.data(), 2));
    }
    EXPECT_NEAR(sum / static_cast<double>(np + nn), static_cast<double>(np) / static_cast<double>(np + nn), 1e-6);
    EXPECT_LT(m.max_abs_score, 1e-8);
  });
}

TEST(ProbabilityModel, SeparatedClassesAreRejected) {
  testing::Gen g(10);
  Eigen::MatrixXd pos = random_covariates(g, 50, 2);
  Eigen::MatrixXd neg = random_covariates(g, 50, 2);
  pos.col(0) = pos.col(0).cwiseAbs().array() + 1.0;
  neg.col(0) = -(neg.col(0).cwiseAbs().array() + 1.0);
  try {
    fit_probability_model(pos, neg, ProbabilityKind::TargetMembership);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Separable);
  }
}

TEST(ProbabilityModel, EmptyClass) {
  testing::Gen g(11);
  const Eigen::MatrixXd pos = random_covariates(g, 10, 2);
  try {
    fit_probability_model(pos, Eigen::MatrixXd(0, 2), ProbabilityKind::Treatment);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyClass);
  }
}

TEST(ProbabilityModel, MatchesBruteForceLikelihoodMaximum) {
  // Against an independent gradient-ascent fit of the same likelihood.
  testing::Gen g(12);
  const Eigen::MatrixXd pos = random_covariates(g, 120, 1).array() + 0.7;
  const Eigen::MatrixXd neg = random_covariates(g, 80, 1);
  const ProbabilityModel m = fit_probability_model(pos, neg, ProbabilityKind::TargetMembership);
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  for (int it = 0; it < 20000; ++it) {
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    const auto add = [&](double x, double label) {
      const double p = 1.0 / (1.0 + std::exp(-(beta[0] + beta[1] * x)));
      grad[0] += label - p;
      grad[1] += (label - p) * x;
    };
    for (Eigen::Index i = 0; i < pos.rows(); ++i) add(pos(i, 0), 1.0);
    for (Eigen::Index i = 0; i < neg.rows(); ++i) add(neg(i, 0), 0.0);
    beta += 0.01 * grad;
  }
  EXPECT_NEAR(m.parameters[0], beta[0], 1e-6);
  EXPECT_NEAR(m.parameters[1], beta[1], 1e-6);
}

TEST(ProbabilityModel, ClipBounds) {
  bool clipped = false;
  EXPECT_DOUBLE_EQ(clip_probability(0.001, {}, &clipped), 0.01);
  EXPECT_TRUE(clipped);
  EXPECT_DOUBLE_EQ(clip_probability(0.9999, {}, &clipped), 0.99);
  EXPECT_TRUE(clipped);
  EXPECT_DOUBLE_EQ(clip_probability(0.3, {}, &clipped), 0.3);
  EXPECT_FALSE(clipped);
}

TEST(MultinomialModel, ProbabilitiesSumToOneAndMatchClassShares) {
  testing::Gen g(13);
  std::vector<IpdRecord> recs;
  const int counts[] = {300, 150, 200};
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < counts[k]; ++i) {
      const std::vector<double> x{g.normal() + 0.5 * k, g.normal()};
      recs.push_back(k == 0 ? testing::target_row(fmt_id(k, i), x)
                            : testing::trial_row(fmt_id(k, i), k, i % 2 ? "a" : "b", g.normal(), x));
    }
  }
  const IpdDataset ds = IpdDataset::from_records(recs);
  std::vector<std::vector<std::size_t>> classes(3);
  for (std::size_t r = 0; r < ds.size(); ++r) classes[static_cast<std::size_t>(ds.study()[r])].push_back(r);
  const MultinomialModel m = fit_multinomial_model(ds.covariates(), classes);
  ASSERT_EQ(m.num_classes(), 3u);
  Eigen::Vector3d total = Eigen::Vector3d::Zero();
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto rec = ds.record(r);
    const Eigen::VectorXd p = m.probabilities(rec.covariates);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    total += p;
  }
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(total[k], counts[k], 1e-5);
}

}  // namespace
}  // namespace causalma
