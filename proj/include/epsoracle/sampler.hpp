#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "epsoracle/distribution.hpp"
#include "epsoracle/schedule.hpp"

namespace epsoracle {

enum class VarianceMode { beta, beta_tilde };
enum class PredictorSource { oracle, fitted, zero };

struct SamplerConfig {
  VarianceMode variance_mode = VarianceMode::beta;
  std::int64_t n_samples = 1;
  std::uint64_t seed = 0;
  PredictorSource source = PredictorSource::oracle;
};

using TimePredictorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, int)>;

// DDPM ancestral reverse chain driven by an arbitrary noise predictor.
// Chains are independent; each draws its generator from (seed, chain index),
// so results are reproducible and order-independent. The predictor must stay
// finite; a non-finite output aborts with the offending (t, x_t).
std::vector<Eigen::VectorXd> ancestral_sample(const TimePredictorFn& predictor,
                                              const NoiseSchedule& s, int dim,
                                              const SamplerConfig& cfg);

struct MatchReport {
  Eigen::VectorXd sample_mean;
  Eigen::VectorXd sample_variance;
  Eigen::VectorXd mean_error;      // sample mean - analytic mean
  Eigen::VectorXd variance_error;  // sample variance - analytic variance
  double w1 = std::numeric_limits<double>::quiet_NaN();  // 1D only
  Eigen::VectorXd assignment_freq;  // discrete data: nearest-atom histogram
  std::int64_t n = 0;
};

// Compares a sample set against the analytic moments of the data
// distribution; adds the sorted-sample Wasserstein-1 distance in 1D and the
// nearest-atom assignment histogram for discrete data.
MatchReport distribution_match_report(const std::vector<Eigen::VectorXd>& samples,
                                      const DataDistribution& dist);

// Quantile function of a 1D data distribution: step quantile for discrete
// data, bisection on the mixture CDF otherwise.
double analytic_quantile(const DataDistribution& dist, double p);

}  // namespace epsoracle
