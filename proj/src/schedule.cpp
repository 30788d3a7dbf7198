#include "epsoracle/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace epsoracle {

NoiseSchedule::NoiseSchedule(Eigen::VectorXd betas) : betas_(std::move(betas)) {
  const Eigen::Index T = betas_.size();
  if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
  alphas_.resize(T);
  alpha_bars_.resize(T);
  // Accumulate the cumulative product in extended precision so that
  // alpha_bar_T stays accurate out to T = 1000 schedules.
  long double prod = 1.0L;
  for (Eigen::Index i = 0; i < T; ++i) {
    const double b = betas_[i];
    if (!(b > 0.0 && b < 1.0))
      throw std::invalid_argument("schedule: beta_t must lie in (0,1)");
    alphas_[i] = 1.0 - b;
    prod *= static_cast<long double>(alphas_[i]);
    alpha_bars_[i] = static_cast<double>(prod);
  }
}

int NoiseSchedule::check(int t) const {
  if (t < 1 || t > T())
    throw std::invalid_argument("schedule: timestep out of range [1, T]");
  return t - 1;
}

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");
  Eigen::VectorXd betas(T);
  if (T == 1) {
    betas[0] = beta_start;
  } else {
    const double step = (beta_end - beta_start) / static_cast<double>(T - 1);
    for (int i = 0; i < T; ++i) betas[i] = beta_start + step * i;
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(Eigen::VectorXd betas) {
  return NoiseSchedule(std::move(betas));
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> forward_sample(
    const NoiseSchedule& s, const Eigen::VectorXd& x0, int t, Rng& rng) {
  if (t < 1 || t > s.T())
    throw std::invalid_argument("forward_sample: t must lie in {1..T}");
  const double abar = s.alpha_bar(t);
  Eigen::VectorXd eps = standard_normal_vector(rng, x0.size());
  Eigen::VectorXd xt = std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
  return {std::move(xt), std::move(eps)};
}

Eigen::VectorXd noise_from_pair(const NoiseSchedule& s, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& xt, int t) {
  if (t < 1 || t > s.T())
    throw std::invalid_argument("noise_from_pair: t must lie in {1..T}");
  if (x0.size() != xt.size())
    throw std::invalid_argument("noise_from_pair: dimension mismatch");
  const double abar = s.alpha_bar(t);
  return (xt - std::sqrt(abar) * x0) / std::sqrt(1.0 - abar);
}

}  // namespace epsoracle
