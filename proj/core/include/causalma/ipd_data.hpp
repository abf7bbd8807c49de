#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace causalma {

// One participant row. study == 0 marks the target-population sample, which
// carries covariates only.
struct IpdRecord {
  std::string subject_id;
  int study = 0;
  bool in_trial = false;
  std::optional<std::string> treatment;
  std::optional<double> outcome;
  std::vector<double> covariates;

  bool operator==(const IpdRecord&) const = default;
};

using CovariateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kNoArm = -1;

// Validated, immutable individual-participant data for m trials plus the
// target sample. Storage is columnar; row indices are positions in input order.
//
// Treatment labels are registered in sorted order, so arm indices do not
// depend on row order.
class IpdDataset {
 public:
  static IpdDataset from_records(std::span<const IpdRecord> records);

  // Same as above; `source_lines` (one per record) is used in error messages.
  static IpdDataset from_records(std::span<const IpdRecord> records,
                                 std::span<const std::size_t> source_lines);

  std::size_t size() const noexcept { return study_.size(); }
  int num_studies() const noexcept { return num_studies_; }
  std::size_t dimension() const noexcept { return static_cast<std::size_t>(covariates_.cols()); }
  std::size_t num_arms() const noexcept { return arms_.size(); }

  // n_s for s in 0..m.
  std::size_t study_size(int study) const;
  std::size_t target_size() const noexcept { return target_rows_.size(); }

  const std::vector<std::string>& arms() const noexcept { return arms_; }
  const std::string& arm_label(int arm) const;
  // Throws UnknownArm.
  int arm_index(std::string_view label) const;
  bool has_arm(std::string_view label) const noexcept;

  // Throws UnknownStudy unless 1 <= study <= m.
  void check_trial(int study) const;

  IpdRecord record(std::size_t row) const;
  std::vector<IpdRecord> records() const;

  const CovariateMatrix& covariates() const noexcept { return covariates_; }
  std::span<const int> study() const noexcept { return study_; }
  std::span<const int> arm() const noexcept { return arm_; }
  // NaN for target rows.
  std::span<const double> outcome() const noexcept { return outcome_; }
  const std::string& subject_id(std::size_t row) const { return subject_ids_.at(row); }

  std::span<const std::size_t> target_rows() const noexcept { return target_rows_; }
  std::span<const std::size_t> trial_rows(int study) const;
  std::span<const std::size_t> arm_rows(int study, int arm) const;

  // Copy with every trial outcome y at row i replaced by f(i, y).
  template <class F>
  IpdDataset with_outcomes(F&& f) const {
    IpdDataset copy = *this;
    for (std::size_t i = 0; i < copy.outcome_.size(); ++i) {
      if (copy.study_[i] != 0) copy.outcome_[i] = f(i, copy.outcome_[i]);
    }
    return copy;
  }

 private:
  IpdDataset() = default;

  int num_studies_ = 0;
  std::vector<std::string> arms_;
  std::vector<std::string> subject_ids_;
  std::vector<int> study_;
  std::vector<int> arm_;
  std::vector<double> outcome_;
  CovariateMatrix covariates_;

  std::vector<std::size_t> target_rows_;
  std::vector<std::vector<std::size_t>> trial_rows_;            // [s-1]
  std::vector<std::vector<std::vector<std::size_t>>> arm_rows_;  // [s-1][arm]
};

// Rows of trial `study` on treatment `arm`, and the target rows. Both lists
// are in ascending row order.
struct Split {
  std::vector<std::size_t> arm_rows;
  std::vector<std::size_t> target_rows;
};

// Throws UnknownStudy (study outside 1..m) or UnknownArm.
Split split(const IpdDataset& dataset, int study, std::string_view arm);

// Column names in the CSV file. An empty covariate list selects every column
// named x<k> (k a positive integer), ordered by k.
struct ColumnMapping {
  std::string subject_id = "subject_id";
  std::string study = "study";
  std::string r = "r";
  std::string treatment = "treatment";
  std::string outcome = "outcome";
  std::vector<std::string> covariates;

  // Reads a JSON object whose keys override the defaults above.
  static ColumnMapping from_json_file(const std::filesystem::path& path);
};

IpdDataset read_ipd(std::istream& in, const ColumnMapping& schema = {});
IpdDataset load_ipd(const std::filesystem::path& path, const ColumnMapping& schema = {});

// Writes the canonical schema subject_id,study,r,treatment,outcome,x1..xd with
// round-trip precision.
void write_ipd(std::ostream& out, const IpdDataset& dataset);
void save_ipd(const std::filesystem::path& path, const IpdDataset& dataset);

}  // namespace causalma
