#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "causalma/ipd_data.hpp"
#include "causalma/nuisance.hpp"

namespace causalma {

enum class Method { OM, IPW, AIPW };

std::string to_string(Method method);
// Accepts "om", "ipw", "aipw" (any case). Throws InvalidArgument.
Method parse_method(std::string_view text);

enum class TreatmentModel {
  EmpiricalFraction,  // known randomization: P(A=a | S=s) = n_{s,a} / n_s
  Logistic,
};

enum class MembershipModel {
  Pairwise,     // logistic target-vs-trial-s fit on their union
  Multinomial,  // one multinomial fit over target and all trials
};

// Sign of the outcome-model residual in the AIPW augmentation term.
enum class AugmentationSign {
  ResidualCorrection,  // + w (Y - g(X))
  Flipped,             // + w (g(X) - Y)
};

struct EstimatorOptions {
  TreatmentModel treatment_model = TreatmentModel::EmpiricalFraction;
  MembershipModel membership = MembershipModel::Pairwise;
  AugmentationSign augmentation_sign = AugmentationSign::ResidualCorrection;
  bool hajek = false;  // normalize IPW weights by their sum instead of n0
  ClipBounds clip{};
};

// Transported mean potential outcome for one trial and arm.
struct TransportEstimate {
  int study = 0;
  std::string arm;
  Method method = Method::OM;
  double value = 0.0;
  std::size_t n_target = 0;
  std::size_t n_arm = 0;
  std::size_t clipped_weights = 0;
};

// Equal-weight average of the per-trial estimates.
struct PooledEstimate {
  std::string arm;
  Method method = Method::OM;
  double value = 0.0;
  std::vector<TransportEstimate> per_study;
};

// Rows that feed one evaluation: one row list per trial (index s-1) and the
// target rows. Lists may contain repeats, which is how bootstrap resamples
// are expressed without copying the dataset.
struct RowSelection {
  std::span<const std::vector<std::size_t>> trials;
  std::span<const std::size_t> target;
};

// Evaluates transported means for a fixed arm and method on arbitrary row
// selections. Holds scratch buffers, so use one engine per thread.
class TransportEngine {
 public:
  TransportEngine(const IpdDataset& dataset, int arm, Method method, EstimatorOptions options = {});

  const IpdDataset& dataset() const noexcept { return *dataset_; }
  int arm() const noexcept { return arm_; }
  Method method() const noexcept { return method_; }
  const EstimatorOptions& options() const noexcept { return options_; }

  // Mean of (1, x') over the given target rows.
  Eigen::VectorXd target_design_mean(std::span<const std::size_t> target_rows) const;

  // Outcome-model estimate for trial `study` using only trial_rows (filtered
  // to the engine's arm). The model is affine, so the mean prediction over
  // the target equals the prediction at the target design mean.
  double psi_om(int study, std::span<const std::size_t> trial_rows, const Eigen::VectorXd& target_design_mean);

  // Estimate for trial `study` with the engine's method. `clipped` receives
  // the number of probability predictions that hit the clip bounds.
  double psi(int study, const RowSelection& rows, std::size_t* clipped = nullptr);

  // The full-data row selection.
  RowSelection original_rows() const;

 private:
  const OutcomeModel& fit_outcome(int study, std::span<const std::size_t> trial_rows);
  // Per-row weight I(A=a)/e(X) * p0(X)/ps(X) over arm rows of the trial.
  void compute_weights(int study, const RowSelection& rows, std::size_t* clipped);

  const IpdDataset* dataset_;
  int arm_;
  Method method_;
  EstimatorOptions options_;

  std::vector<std::vector<std::size_t>> original_trials_;
  OlsSolver ols_;
  OutcomeModel outcome_;
  std::vector<std::size_t> arm_buffer_;
  std::vector<std::size_t> other_buffer_;
  std::vector<double> weights_;
};

TransportEstimate estimate_psi_om(const IpdDataset& dataset, int study, std::string_view arm,
                                  const EstimatorOptions& options = {});
TransportEstimate estimate_psi_ipw(const IpdDataset& dataset, int study, std::string_view arm,
                                   const EstimatorOptions& options = {});
TransportEstimate estimate_psi_aipw(const IpdDataset& dataset, int study, std::string_view arm,
                                    const EstimatorOptions& options = {});
TransportEstimate estimate_psi(const IpdDataset& dataset, int study, std::string_view arm, Method method,
                               const EstimatorOptions& options = {});

// Errors from any trial are rethrown with the trial identified.
PooledEstimate estimate_pooled(const IpdDataset& dataset, std::string_view arm, Method method,
                               const EstimatorOptions& options = {});

// pooled(arm_a) - pooled(arm_b).
double estimate_contrast(const IpdDataset& dataset, std::string_view arm_a, std::string_view arm_b, Method method,
                         const EstimatorOptions& options = {});

}  // namespace causalma
