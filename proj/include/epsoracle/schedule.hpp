#pragma once

#include <utility>

#include <Eigen/Dense>

#include "epsoracle/rng.hpp"

namespace epsoracle {

// Discrete noise schedule: beta_t for t = 1..T, alpha_t = 1 - beta_t and the
// cumulative product alpha_bar_t. Immutable after construction; alpha_bar is
// precomputed so lookups are O(1).
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int T, double beta_start, double beta_end);
  static NoiseSchedule from_betas(Eigen::VectorXd betas);

  int T() const { return static_cast<int>(betas_.size()); }

  // 1-based timestep accessors, t in {1..T}.
  double beta(int t) const { return betas_[check(t)]; }
  double alpha(int t) const { return alphas_[check(t)]; }
  double alpha_bar(int t) const { return alpha_bars_[check(t)]; }
  // alpha_bar_0 == 1 by convention, so alpha_bar_prev(1) == 1.
  double alpha_bar_prev(int t) const {
    check(t);
    return t == 1 ? 1.0 : alpha_bars_[t - 2];
  }

  const Eigen::VectorXd& betas() const { return betas_; }
  const Eigen::VectorXd& alphas() const { return alphas_; }
  const Eigen::VectorXd& alpha_bars() const { return alpha_bars_; }

 private:
  explicit NoiseSchedule(Eigen::VectorXd betas);
  int check(int t) const;

  Eigen::VectorXd betas_;
  Eigen::VectorXd alphas_;
  Eigen::VectorXd alpha_bars_;
};

// One forward-process draw: eps ~ N(0, I), xt = sqrt(abar_t) x0 + sqrt(1-abar_t) eps.
std::pair<Eigen::VectorXd, Eigen::VectorXd> forward_sample(
    const NoiseSchedule& s, const Eigen::VectorXd& x0, int t, Rng& rng);

// Recovers the noise realization from a (x0, xt) pair:
// (xt - sqrt(abar_t) x0) / sqrt(1 - abar_t).
Eigen::VectorXd noise_from_pair(const NoiseSchedule& s, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& xt, int t);

}  // namespace epsoracle
