#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "causalma/ipd_data.hpp"
#include "causalma/rng.hpp"

namespace causalma::testing {

inline IpdRecord trial_row(std::string id, int study, std::string arm, double y, std::vector<double> x) {
  IpdRecord r;
  r.subject_id = std::move(id);
  r.study = study;
  r.in_trial = true;
  r.treatment = std::move(arm);
  r.outcome = y;
  r.covariates = std::move(x);
  return r;
}

inline IpdRecord target_row(std::string id, std::vector<double> x) {
  IpdRecord r;
  r.subject_id = std::move(id);
  r.covariates = std::move(x);
  return r;
}

// Small random generator for property tests: every case gets its own stream.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  Rng& rng() { return rng_; }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (auto& x : v) x = normal();
    return v;
  }
  // Positive weights summing to one (up to rounding, then renormalized exactly
  // enough for the 1e-12 check).
  Eigen::VectorXd weights(Eigen::Index m) {
    Eigen::VectorXd w(m);
    for (auto& x : w) x = uniform(0.1, 1.0);
    return w / w.sum();
  }
  // Random symmetric positive semidefinite matrix.
  Eigen::MatrixXd psd(Eigen::Index m, double scale = 1.0) {
    Eigen::MatrixXd a(m, m);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal();
    Eigen::MatrixXd s = scale * (a * a.transpose()) / static_cast<double>(m);
    return 0.5 * (s + s.transpose());
  }
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    std::shuffle(p.begin(), p.end(), rng_);
    return p;
  }

 private:
  Rng rng_;
};

// Runs `property` on `cases` independent generators derived from `seed`.
inline void for_all(int cases, std::uint64_t seed, const std::function<void(Gen&, int)>& property) {
  for (int c = 0; c < cases; ++c) {
    Gen g(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    property(g, c);
  }
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::path(CAUSALMA_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace causalma::testing
