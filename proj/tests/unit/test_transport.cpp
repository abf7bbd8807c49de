#include <gtest/gtest.h>

#include "causalma/error.hpp"
#include "causalma/simulation.hpp"
#include "causalma/transport_estimators.hpp"
#include "support.hpp"

namespace causalma {
namespace {

using testing::Gen;
using testing::target_row;
using testing::trial_row;

// One-trial-per-study dataset built from outcome and covariate generators.
struct Builder {
  std::vector<IpdRecord> records;

  void trial(int study, std::size_t n, Gen& g, double mean, const std::function<double(const std::vector<double>&, Gen&)>& y,
             std::size_t d = 3) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = mean + g.normal();
      const std::string arm = i % 2 ? "b" : "a";
      const double out = y(x, g);
      records.push_back(trial_row(fmt(study, i), study, arm, out, std::move(x)));
    }
  }
  void target(std::size_t n, Gen& g, double mean, std::size_t d = 3) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = mean + g.normal();
      records.push_back(target_row(fmt(0, i), std::move(x)));
    }
  }
  IpdDataset build() const { return IpdDataset::from_records(records); }

  static std::string fmt(int s, std::size_t i) { return std::to_string(s) + "-" + std::to_string(i); }
};

double linear(const std::vector<double>& x, Gen&) {
  double y = 0.5;
  for (double v : x) y += 0.5 * v;
  return y;
}

TEST(OmEstimator, ConstantFitAveragesToConstant) {
  Gen g(1);
  Builder b;
  b.trial(1, 30, g, 0.0, [](const auto&, Gen&) { return 1.75; });
  b.target(17, g, 2.0);
  const auto e = estimate_psi_om(b.build(), 1, "a");
  EXPECT_NEAR(e.value, 1.75, 1e-12);
  EXPECT_EQ(e.n_target, 17u);
  EXPECT_EQ(e.n_arm, 15u);
}

TEST(OmEstimator, HandEvaluatedLinearPredictor) {
  Gen g(2);
  Builder b;
  b.trial(1, 40, g, 0.0, linear);
  b.records.push_back(target_row("t1", {0, 0, 0}));
  b.records.push_back(target_row("t2", {2, 2, 2}));
  EXPECT_NEAR(estimate_psi_om(b.build(), 1, "a").value, 2.0, 1e-12);
}

TEST(OmEstimator, LargeTargetAverageRecoversTruth) {
  Scenario s;
  s.delta_law.kind = DeltaLawKind::Degenerate;
  s.n_target = 100000;
  double sum = 0.0;
  const int reps = 10;
  for (int r = 0; r < reps; ++r) {
    const auto data = gen_dataset(s, static_cast<std::size_t>(r));
    sum += estimate_psi_om(data.dataset, 3, std::string(kTreatedArm)).value;
  }
  EXPECT_NEAR(sum / reps, 2.0, 0.05);
}

TEST(OmEstimator, InvariantToRowPermutations) {
  testing::for_all(10, 3, [](Gen& g, int c) {
    Scenario s;
    s.m = 3;
    s.n_per_trial = 40;
    s.n_target = 60;
    const IpdDataset ds = gen_dataset(s, static_cast<std::size_t>(c)).dataset;
    auto recs = ds.records();
    const auto perm = g.permutation(recs.size());
    std::vector<IpdRecord> shuffled;
    for (auto i : perm) shuffled.push_back(recs[i]);
    const IpdDataset other = IpdDataset::from_records(shuffled);
    for (int st = 1; st <= 3; ++st) {
      EXPECT_NEAR(estimate_psi_om(ds, st, "treatment").value, estimate_psi_om(other, st, "treatment").value, 1e-12);
    }
  });
}

TEST(OmEstimator, AffineEquivariance) {
  testing::for_all(10, 4, [](Gen& g, int c) {
    Scenario s;
    s.m = 2;
    s.n_per_trial = 40;
    s.n_target = 50;
    const IpdDataset ds = gen_dataset(s, static_cast<std::size_t>(c)).dataset;
    const double a = g.uniform(-3, 3);
    const double b = g.uniform(-5, 5);
    const IpdDataset moved = ds.with_outcomes([&](std::size_t row, double y) { return ds.study()[row] == 1 ? a * y + b : y; });
    const double before = estimate_psi_om(ds, 1, "control").value;
    EXPECT_NEAR(estimate_psi_om(moved, 1, "control").value, a * before + b, 1e-10);
    EXPECT_NEAR(estimate_psi_om(moved, 2, "control").value, estimate_psi_om(ds, 2, "control").value, 1e-12);
  });
}

TEST(IpwEstimator, ZeroOutcomesGiveZero) {
  Gen g(5);
  Builder b;
  b.trial(1, 60, g, 0.3, [](const auto&, Gen&) { return 0.0; });
  b.target(80, g, 0.8);
  EXPECT_EQ(estimate_psi_ipw(b.build(), 1, "a").value, 0.0);
}

TEST(IpwEstimator, SharedCovariateLawGivesArmMean) {
  Gen g(6);
  Builder b;
  b.trial(1, 20000, g, 0.0, [](const std::vector<double>& x, Gen& gg) { return 1.0 + x[0] + gg.normal(); });
  b.target(20000, g, 0.0);
  const IpdDataset ds = b.build();
  double arm_mean = 0.0;
  const auto rows = ds.arm_rows(1, ds.arm_index("a"));
  for (auto r : rows) arm_mean += ds.outcome()[r];
  arm_mean /= static_cast<double>(rows.size());
  // The weight of a trial row is about n0 / (n_arm share) so the estimate is
  // close to the arm mean; tolerance covers the weight noise.
  EXPECT_NEAR(estimate_psi_ipw(ds, 1, "a").value, arm_mean, 0.05);
}

TEST(IpwEstimator, HajekAffineEquivariance) {
  testing::for_all(8, 7, [](Gen& g, int c) {
    Scenario s;
    s.m = 2;
    s.n_per_trial = 60;
    s.n_target = 80;
    const IpdDataset ds = gen_dataset(s, static_cast<std::size_t>(c)).dataset;
    const double a = g.uniform(-3, 3);
    const double b = g.uniform(-5, 5);
    const IpdDataset moved = ds.with_outcomes([&](std::size_t row, double y) { return ds.study()[row] == 2 ? a * y + b : y; });
    EstimatorOptions hajek;
    hajek.hajek = true;
    const double before = estimate_psi_ipw(ds, 2, "treatment", hajek).value;
    EXPECT_NEAR(estimate_psi_ipw(moved, 2, "treatment", hajek).value, a * before + b, 1e-10);
  });
}

TEST(AipwEstimator, ZeroResidualsEqualOm) {
  Gen g(8);
  Builder b;
  b.trial(1, 80, g, 0.2, linear);
  b.target(90, g, 0.9);
  const IpdDataset ds = b.build();
  EXPECT_NEAR(estimate_psi_aipw(ds, 1, "a").value, estimate_psi_om(ds, 1, "a").value, 1e-12);
}

TEST(AipwEstimator, ZeroOutcomeFitReducesToIpw) {
  // Outcomes orthogonal to the arm design: the least-squares fit is zero and
  // only the weighted residual term remains.
  Gen g(9);
  Builder b;
  b.trial(1, 80, g, 0.2, [](const auto&, Gen& gg) { return gg.normal(); });
  b.target(90, g, 0.7);
  IpdDataset ds = b.build();
  const auto rows = ds.arm_rows(1, ds.arm_index("a"));
  Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()), 4);
  Eigen::VectorXd y(design.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    design(static_cast<Eigen::Index>(i), 0) = 1.0;
    design.row(static_cast<Eigen::Index>(i)).tail(3) = ds.covariates().row(static_cast<Eigen::Index>(rows[i]));
    y[static_cast<Eigen::Index>(i)] = ds.outcome()[rows[i]];
  }
  const Eigen::VectorXd resid = y - design * design.colPivHouseholderQr().solve(y);
  std::vector<double> replaced(ds.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) replaced[rows[i]] = resid[static_cast<Eigen::Index>(i)];
  ds = ds.with_outcomes([&](std::size_t row, double y0) {
    return std::find(rows.begin(), rows.end(), row) != rows.end() ? replaced[row] : y0;
  });
  EXPECT_NEAR(estimate_psi_om(ds, 1, "a").value, 0.0, 1e-12);
  EXPECT_NEAR(estimate_psi_aipw(ds, 1, "a").value, estimate_psi_ipw(ds, 1, "a").value, 1e-12);
}

TEST(AipwEstimator, ResidualCorrectionSignRepairsMisspecifiedOutcomeModel) {
  // Y = x^2 + noise; the linear outcome model is wrong, the membership model
  // (Gaussian covariates, equal variance) is right. Truth under the target law
  // N(1, 1) is E[x^2] = 2.
  Gen g(10);
  Builder b;
  b.trial(1, 40000, g, 0.5, [](const std::vector<double>& x, Gen& gg) { return x[0] * x[0] + gg.normal(); }, 1);
  b.target(40000, g, 1.0, 1);
  const IpdDataset ds = b.build();
  const double om = estimate_psi_om(ds, 1, "a").value;
  const double aipw = estimate_psi_aipw(ds, 1, "a").value;
  EstimatorOptions flipped;
  flipped.augmentation_sign = AugmentationSign::Flipped;
  const double wrong = estimate_psi_aipw(ds, 1, "a", flipped).value;
  EXPECT_NEAR(om, 1.75, 0.1);      // best linear predictor at x = 1
  EXPECT_NEAR(aipw, 2.0, 0.1);     // corrected
  EXPECT_NEAR(wrong, 1.5, 0.15);   // bias doubled
  EXPECT_NEAR(aipw + wrong, 2 * om, 1e-9);
}

TEST(Estimators, AgreeOnLargeCorrectlySpecifiedData) {
  Scenario s;
  s.n_per_trial = 10000;
  s.n_target = 10000;
  const auto data = gen_dataset(s, 0);
  for (int st = 1; st <= s.m; ++st) {
    const double om = estimate_psi_om(data.dataset, st, "treatment").value;
    EXPECT_NEAR(estimate_psi_aipw(data.dataset, st, "treatment").value, om, 0.05) << "study " << st;
  }
  const double om = estimate_pooled(data.dataset, "treatment", Method::OM).value;
  EXPECT_NEAR(estimate_pooled(data.dataset, "treatment", Method::IPW).value, om, 0.1);
}

TEST(Estimators, ClippedWeightsAreCounted) {
  Gen g(11);
  Builder b;
  b.trial(1, 200, g, -1.5, linear, 1);
  b.target(200, g, 1.5, 1);
  const IpdDataset ds = b.build();
  const auto e = estimate_psi_ipw(ds, 1, "a");
  EXPECT_GT(e.clipped_weights, 0u);
  EXPECT_TRUE(std::isfinite(e.value));
  EXPECT_EQ(estimate_psi_om(ds, 1, "a").clipped_weights, 0u);
}

TEST(Estimators, MultinomialMembershipMatchesPairwiseForOneTrial) {
  Gen g(12);
  Builder b;
  b.trial(1, 300, g, 0.2, linear);
  b.target(250, g, 0.6);
  const IpdDataset ds = b.build();
  EstimatorOptions multi;
  multi.membership = MembershipModel::Multinomial;
  EXPECT_NEAR(estimate_psi_ipw(ds, 1, "a", multi).value, estimate_psi_ipw(ds, 1, "a").value, 1e-8);
}

TEST(Estimators, LogisticTreatmentModelCloseToKnownRandomization) {
  Scenario s;
  s.n_per_trial = 2000;
  s.n_target = 2000;
  const auto data = gen_dataset(s, 3);
  EstimatorOptions fitted;
  fitted.treatment_model = TreatmentModel::Logistic;
  for (int st = 1; st <= s.m; ++st) {
    EXPECT_NEAR(estimate_psi_ipw(data.dataset, st, "control", fitted).value,
                estimate_psi_ipw(data.dataset, st, "control").value, 0.25);
  }
}

TEST(Pooled, ExactMeanOfPerStudy) {
  testing::for_all(10, 13, [](Gen& g, int c) {
    Scenario s;
    s.m = g.integer(2, 7);
    s.n_per_trial = 30;
    s.n_target = 40;
    const auto data = gen_dataset(s, static_cast<std::size_t>(c));
    for (Method m : {Method::OM, Method::IPW, Method::AIPW}) {
      const PooledEstimate p = estimate_pooled(data.dataset, "treatment", m);
      ASSERT_EQ(p.per_study.size(), static_cast<std::size_t>(s.m));
      double sum = 0.0;
      for (const auto& e : p.per_study) sum += e.value;
      EXPECT_EQ(p.value, sum / s.m);
    }
  });
}

TEST(Pooled, SingleTrial) {
  Gen g(14);
  Builder b;
  b.trial(1, 30, g, 0.0, linear);
  b.target(30, g, 1.0);
  const IpdDataset ds = b.build();
  EXPECT_EQ(estimate_pooled(ds, "a", Method::OM).value, estimate_psi_om(ds, 1, "a").value);
}

TEST(Pooled, ErrorsNameStudyAndArm) {
  Gen g(15);
  Builder b;
  b.trial(1, 30, g, 0.0, linear);
  b.trial(2, 30, g, 0.0, linear);
  b.target(30, g, 1.0);
  for (auto& r : b.records) {
    if (r.study == 2) r.covariates[2] = r.covariates[1];  // collinear in trial 2
  }
  try {
    estimate_pooled(b.build(), "b", Method::OM);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficient);
    EXPECT_NE(std::string(e.what()).find("study 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
}

TEST(Contrast, SameArmIsZeroAndShiftIsRecovered) {
  Scenario s;
  s.delta_law.kind = DeltaLawKind::Degenerate;
  s.treatment_shift = 1.0;
  const auto data = gen_dataset(s, 0);
  EXPECT_EQ(estimate_contrast(data.dataset, "control", "control", Method::OM), 0.0);
  double sum = 0.0;
  for (int r = 0; r < 20; ++r) {
    const auto d = gen_dataset(s, static_cast<std::size_t>(r));
    sum += estimate_contrast(d.dataset, "treatment", "control", Method::OM);
  }
  EXPECT_NEAR(sum / 20, 1.0, 0.05);
  try {
    estimate_contrast(data.dataset, "treatment", "placebo", Method::OM);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownArm);
  }
}

TEST(Contrast, ZeroUnderEqualArmLaws) {
  Scenario s;
  double sum = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    sum += estimate_contrast(gen_dataset(s, static_cast<std::size_t>(r)).dataset, "treatment", "control", Method::OM);
  }
  // Each contrast has sd about sqrt(2/5) from the delta draws.
  EXPECT_NEAR(sum / reps, 0.0, 3 * std::sqrt(0.4 / reps) + 0.02);
}

TEST(Methods, ParseAndPrint) {
  for (Method m : {Method::OM, Method::IPW, Method::AIPW}) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_EQ(parse_method("AIPW"), Method::AIPW);
  EXPECT_THROW(parse_method("tmle"), Error);
}

}  // namespace
}  // namespace causalma
