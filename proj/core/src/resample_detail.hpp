#pragma once

#include <cstddef>
#include <vector>

#include "causalma/rng.hpp"
#include "causalma/transport_estimators.hpp"

namespace causalma::detail {

// Per-thread buffers for evaluating estimators on bootstrap resamples.
class ResampleScratch {
 public:
  ResampleScratch(const IpdDataset& dataset, int arm, Method method, const EstimatorOptions& options)
      : engine_(dataset, arm, method, options),
        trials_(static_cast<std::size_t>(dataset.num_studies())),
        original_(engine_.original_rows()) {
    for (int s = 1; s <= dataset.num_studies(); ++s) {
      const auto rows = dataset.trial_rows(s);
      trials_[static_cast<std::size_t>(s - 1)].assign(rows.begin(), rows.end());
    }
  }

  ResampleScratch(const ResampleScratch&) = delete;
  ResampleScratch& operator=(const ResampleScratch&) = delete;

  TransportEngine& engine() noexcept { return engine_; }
  int num_studies() const noexcept { return static_cast<int>(trials_.size()); }

  void resample_trial(Rng& rng, int study) {
    resample_into(rng, original_.trials[static_cast<std::size_t>(study - 1)],
                  trials_[static_cast<std::size_t>(study - 1)]);
  }
  void resample_target(Rng& rng) {
    resample_into(rng, original_.target, target_);
    target_mean_valid_ = false;
  }

  // Estimate for `study` from the current resampled trial rows and target.
  double psi(int study) {
    if (engine_.method() == Method::OM) {
      return engine_.psi_om(study, trials_[static_cast<std::size_t>(study - 1)], target_mean());
    }
    return engine_.psi(study, RowSelection{trials_, target_});
  }

 private:
  const Eigen::VectorXd& target_mean() {
    if (!target_mean_valid_) {
      target_mean_ = engine_.target_design_mean(target_);
      target_mean_valid_ = true;
    }
    return target_mean_;
  }

  TransportEngine engine_;
  std::vector<std::vector<std::size_t>> trials_;
  std::vector<std::size_t> target_;
  RowSelection original_;
  Eigen::VectorXd target_mean_;
  bool target_mean_valid_ = false;
};

}  // namespace causalma::detail
