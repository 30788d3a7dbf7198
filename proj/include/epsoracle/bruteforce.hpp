#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "epsoracle/distribution.hpp"
#include "epsoracle/rng.hpp"
#include "epsoracle/schedule.hpp"

namespace epsoracle {

struct EstimateWithError {
  Eigen::VectorXd value;
  Eigen::VectorXd std_error;  // Monte Carlo only
  double bound = 0.0;         // quadrature refinement difference
  std::int64_t n_evals = 0;
  bool unreliable = false;
  std::string note;
};

struct GridSpec {
  int nodes_per_axis = 2049;  // power of two + 1 so halving reuses nodes
  double pad_sigmas = 8.0;
  double coarse_tol = 1e-6;  // refinement change above this flags the grid
};

// Evaluates the posterior-noise integral by composite trapezoid on a grid
// covering the posterior mass. Mixture data only for d in {1,2}; discrete
// data reduces to an exact finite sum over atoms (bound = 0).
EstimateWithError epsilon_star_quadrature(const DataDistribution& dist,
                                          const NoiseSchedule& s, int t,
                                          const Eigen::VectorXd& xt,
                                          const GridSpec& grid = {});

// Self-normalized importance sampling with proposal x0 ~ q(x0) and weights
// q(xt|x0). Standard error by the delta method on the ratio estimator.
EstimateWithError epsilon_star_monte_carlo(const DataDistribution& dist,
                                           const NoiseSchedule& s, int t,
                                           const Eigen::VectorXd& xt,
                                           std::int64_t n, Rng& rng);

// Central difference of log q per coordinate.
Eigen::VectorXd score_finite_difference(const GaussianMixtureDensity& g,
                                        const Eigen::VectorXd& x, double h);

using PredictorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LossEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::int64_t n = 0;
};

// Monte Carlo estimate of the timestep-t denoising objective
// E_{x0} E_{eps} | eps - f(xt) |^2.
LossEstimate loss_functional(const PredictorFn& f, const DataDistribution& dist,
                             const NoiseSchedule& s, int t, std::int64_t n,
                             Rng& rng);

}  // namespace epsoracle
