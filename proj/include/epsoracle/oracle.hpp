#pragma once

#include <vector>

#include <Eigen/Dense>

#include "epsoracle/distribution.hpp"
#include "epsoracle/rng.hpp"
#include "epsoracle/schedule.hpp"

namespace epsoracle {

// Posterior q(x0 | xt): atom/component responsibilities plus the conditional
// mean of x0. For mixture data the per-component conjugate posterior moments
// are kept as well.
struct PosteriorSummary {
  Eigen::VectorXd responsibilities;
  Eigen::VectorXd conditional_mean_x0;
  std::vector<Eigen::VectorXd> component_means;  // mixture data only
  std::vector<Eigen::MatrixXd> component_covs;   // mixture data only
};

PosteriorSummary posterior(const DataDistribution& dist, const NoiseSchedule& s,
                           int t, const Eigen::VectorXd& xt);

// Exact optimal noise predictor: the posterior expectation of the
// forward-process noise given xt. Because the noise is affine in x0, this is
// (xt - sqrt(abar_t) E[x0|xt]) / sqrt(1 - abar_t) with no residual integral.
Eigen::VectorXd epsilon_star(const DataDistribution& dist, const NoiseSchedule& s,
                             int t, const Eigen::VectorXd& xt);

// Independent route to the same quantity through the marginal density:
// -sqrt(1 - abar_t) * grad log q(xt). Shares no posterior code with
// epsilon_star, so agreement between the two is evidence, not tautology.
Eigen::VectorXd epsilon_from_score(const DataDistribution& dist,
                                   const NoiseSchedule& s, int t,
                                   const Eigen::VectorXd& xt);

struct IdentityReport {
  Eigen::VectorXd probe;
  int t = 0;
  Eigen::VectorXd eps_direct;
  Eigen::VectorXd eps_score;
  double abs_err = 0.0;  // max-norm of the difference
  double rel_err = 0.0;  // abs_err / max-norm of eps_direct
  bool pass = false;
};

// Compares the two predictor routes at one probe. Pass rule is mixed:
// abs_err <= tol or rel_err <= tol, so probes near eps ~ 0 do not false-fail.
IdentityReport check_identity(const DataDistribution& dist, const NoiseSchedule& s,
                              int t, const Eigen::VectorXd& xt, double tol);

// Probe points for identity sweeps, drawn from q(x_t) itself. When far_tail
// is set, deterministic probes at mean +- 6 sigma per component and axis are
// appended to exercise log-sum-exp stability.
std::vector<Eigen::VectorXd> draw_probes(const DataDistribution& dist,
                                         const NoiseSchedule& s, int t, int n,
                                         Rng& rng, bool far_tail = false);

}  // namespace epsoracle
