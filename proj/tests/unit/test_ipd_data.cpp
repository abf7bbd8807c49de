#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "causalma/error.hpp"
#include "causalma/ipd_data.hpp"
#include "causalma/simulation.hpp"
#include "support.hpp"

namespace causalma {
namespace {

using testing::target_row;
using testing::trial_row;

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected causalma::Error";
  return ErrorKind::InvalidArgument;
}

std::vector<IpdRecord> tiny_records() {
  return {
      trial_row("a1", 1, "t", 1.0, {0.1, 1.0}), trial_row("a2", 1, "c", 2.0, {0.2, 2.0}),
      trial_row("a3", 1, "t", 3.0, {0.3, 0.5}), trial_row("b1", 2, "c", 4.0, {0.4, 1.5}),
      trial_row("b2", 2, "t", 5.0, {0.5, 2.5}), target_row("z1", {1.0, 1.0}),
      target_row("z2", {2.0, 0.0}),
  };
}

Scenario three_trials() {
  Scenario s;
  s.m = 3;
  return s;
}

TEST(IpdData, PaperShapedFileLoads) {
  const auto data = gen_dataset(three_trials(), 0);
  const auto dir = testing::scratch_dir("ipd_shape");
  save_ipd(dir / "d.csv", data.dataset);
  const IpdDataset ds = load_ipd(dir / "d.csv");
  EXPECT_EQ(ds.num_studies(), 3);
  EXPECT_EQ(ds.size(), 1300u);
  EXPECT_EQ(ds.dimension(), 3u);
  EXPECT_EQ(ds.target_size(), 1000u);
  for (int s = 1; s <= 3; ++s) EXPECT_EQ(ds.study_size(s), 100u);
  EXPECT_EQ(ds.arms(), (std::vector<std::string>{"control", "treatment"}));
}

TEST(IpdData, TargetOnlyFileIsEmptyStudy) {
  std::istringstream in("subject_id,study,r,treatment,outcome,x1\nz,0,0,,,1.5\n");
  EXPECT_EQ(kind_of([&] { read_ipd(in); }), ErrorKind::EmptyStudy);
}

TEST(IpdData, TargetRowWithOutcomeIsRejected) {
  std::istringstream in(
      "subject_id,study,r,treatment,outcome,x1\n"
      "a,1,1,t,1,0\nb,1,1,c,2,1\nc,1,1,t,1,2\nz,0,0,,3.5,1\n");
  EXPECT_EQ(kind_of([&] { read_ipd(in); }), ErrorKind::TargetWithOutcome);
  auto recs = tiny_records();
  recs[5].treatment = "t";
  EXPECT_EQ(kind_of([&] { IpdDataset::from_records(recs); }), ErrorKind::TargetWithOutcome);
}

TEST(IpdData, MissingColumnsAreNamed) {
  std::istringstream no_outcome("subject_id,study,r,treatment,x1\na,1,1,t,0\n");
  EXPECT_EQ(kind_of([&] { read_ipd(no_outcome); }), ErrorKind::MissingColumn);
  std::istringstream gap("subject_id,study,r,treatment,outcome,x1,x3\na,1,1,t,0,1,2\n");
  try {
    read_ipd(gap);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingColumn);
    EXPECT_NE(std::string(e.what()).find("x2"), std::string::npos);
  }
}

TEST(IpdData, InconsistentDimension) {
  auto recs = tiny_records();
  recs[2].covariates.push_back(9.0);
  EXPECT_EQ(kind_of([&] { IpdDataset::from_records(recs); }), ErrorKind::InconsistentDimension);
  std::istringstream ragged("subject_id,study,r,treatment,outcome,x1\na,1,1,t,0\n");
  EXPECT_EQ(kind_of([&] { read_ipd(ragged); }), ErrorKind::InconsistentDimension);
}

TEST(IpdData, ParseErrorsNameLineAndColumn) {
  std::istringstream in(
      "subject_id,study,r,treatment,outcome,x1\n"
      "a,1,1,t,1,0\nb,1,1,c,oops,1\n");
  try {
    read_ipd(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("outcome"), std::string::npos);
  }
}

TEST(IpdData, FlagsMustAgree) {
  auto recs = tiny_records();
  recs[0].in_trial = false;
  EXPECT_EQ(kind_of([&] { IpdDataset::from_records(recs); }), ErrorKind::InvalidRecord);
  recs = tiny_records();
  recs[1].outcome.reset();
  EXPECT_EQ(kind_of([&] { IpdDataset::from_records(recs); }), ErrorKind::InvalidRecord);
}

TEST(IpdData, StudiesNeedTwoRowsAndEveryArm) {
  auto recs = tiny_records();
  recs[3] = trial_row("b1", 2, "t", 4.0, {0.4, 1.5});  // trial 2 loses its control row
  EXPECT_EQ(kind_of([&] { IpdDataset::from_records(recs); }), ErrorKind::ArmSetMismatch);
  recs = tiny_records();
  recs.erase(recs.begin() + 4);  // trial 2 keeps one row
  EXPECT_EQ(kind_of([&] { IpdDataset::from_records(recs); }), ErrorKind::EmptyStudy);
  recs = tiny_records();
  for (auto& r : recs) {
    if (r.study == 2) r.study = 3;  // label gap: no trial 2
  }
  EXPECT_EQ(kind_of([&] { IpdDataset::from_records(recs); }), ErrorKind::EmptyStudy);
  recs = tiny_records();
  recs.resize(5);
  EXPECT_EQ(kind_of([&] { IpdDataset::from_records(recs); }), ErrorKind::EmptyTarget);
}

TEST(IpdData, SplitReturnsArmAndTarget) {
  const auto data = gen_dataset(three_trials(), 1);
  const Split sp = split(data.dataset, 2, "treatment");
  EXPECT_EQ(sp.arm_rows.size(), 50u);
  EXPECT_EQ(sp.target_rows.size(), 1000u);
  EXPECT_EQ(kind_of([&] { split(data.dataset, 0, "treatment"); }), ErrorKind::UnknownStudy);
  EXPECT_EQ(kind_of([&] { split(data.dataset, 4, "treatment"); }), ErrorKind::UnknownStudy);
  EXPECT_EQ(kind_of([&] { split(data.dataset, 1, "placebo"); }), ErrorKind::UnknownArm);
}

TEST(IpdData, SplitIsDisjointAndReproducible) {
  testing::for_all(20, 11, [](testing::Gen& g, int c) {
    Scenario s;
    s.m = g.integer(2, 6);
    s.n_per_trial = static_cast<std::size_t>(2 * g.integer(5, 30));
    s.n_target = static_cast<std::size_t>(g.integer(5, 60));
    const auto data = gen_dataset(s, static_cast<std::size_t>(c));
    const int study = g.integer(1, s.m);
    const std::string arm(g.integer(0, 1) ? kTreatedArm : kControlArm);
    const Split a = split(data.dataset, study, arm);
    const Split b = split(data.dataset, study, arm);
    EXPECT_EQ(a.arm_rows, b.arm_rows);
    EXPECT_EQ(a.target_rows, b.target_rows);
    EXPECT_TRUE(std::is_sorted(a.arm_rows.begin(), a.arm_rows.end()));
    for (auto r : a.arm_rows) {
      EXPECT_EQ(data.dataset.study()[r], study);
      EXPECT_FALSE(std::binary_search(a.target_rows.begin(), a.target_rows.end(), r));
    }
    for (auto r : a.target_rows) EXPECT_EQ(data.dataset.study()[r], 0);
  });
}

TEST(IpdData, WriteReadRoundTrip) {
  testing::for_all(10, 12, [](testing::Gen& g, int c) {
    Scenario s;
    s.m = g.integer(2, 5);
    s.n_per_trial = 20;
    s.n_target = 30;
    const IpdDataset original = gen_dataset(s, static_cast<std::size_t>(c)).dataset;
    std::stringstream buffer;
    write_ipd(buffer, original);
    const IpdDataset back = read_ipd(buffer);
    EXPECT_EQ(back.records(), original.records());
  });
}

TEST(IpdData, RoundTripKeepsAwkwardLabels) {
  auto recs = tiny_records();
  for (auto& r : recs) {
    if (r.treatment == "t") r.treatment = "drug, \"high\" dose";
  }
  recs[0].subject_id = "id,with,commas";
  const IpdDataset ds = IpdDataset::from_records(recs);
  std::stringstream buffer;
  write_ipd(buffer, ds);
  EXPECT_EQ(read_ipd(buffer).records(), ds.records());
}

TEST(IpdData, SchemaSidecarRenamesColumns) {
  const auto dir = testing::scratch_dir("ipd_schema");
  {
    std::ofstream f(dir / "schema.json");
    f << R"({"subject_id": "pid", "study": "trial", "r": "in_trial", "treatment": "arm",
             "outcome": "y", "covariates": ["age", "bmi"]})";
    std::ofstream d(dir / "data.csv");
    d << "pid,trial,in_trial,arm,y,bmi,age\n"
         "a,1,1,t,1,20,30\nb,1,1,c,2,21,31\nc,1,1,t,3,22,35\nz,0,0,,,25,40\n";
  }
  const IpdDataset ds = load_ipd(dir / "data.csv", ColumnMapping::from_json_file(dir / "schema.json"));
  EXPECT_EQ(ds.dimension(), 2u);
  EXPECT_EQ(ds.record(3).covariates, (std::vector<double>{40.0, 25.0}));
  EXPECT_EQ(ds.record(0).subject_id, "a");
}

TEST(IpdData, NonFiniteValuesRejected) {
  auto recs = tiny_records();
  recs[0].outcome = std::numeric_limits<double>::infinity();
  EXPECT_EQ(kind_of([&] { IpdDataset::from_records(recs); }), ErrorKind::InvalidRecord);
}

}  // namespace
}  // namespace causalma
