#include "epsoracle/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "epsoracle/rng.hpp"

namespace epsoracle {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double mixture_cdf_1d(const MixtureData& m, double x) {
  double acc = 0.0;
  for (std::size_t k = 0; k < m.means.size(); ++k) {
    const double sd = std::sqrt(m.covs[k](0, 0));
    acc += m.weights[static_cast<Eigen::Index>(k)] * normal_cdf((x - m.means[k][0]) / sd);
  }
  return acc;
}

}  // namespace

std::vector<Eigen::VectorXd> ancestral_sample(const TimePredictorFn& predictor,
                                              const NoiseSchedule& s, int dim,
                                              const SamplerConfig& cfg) {
  if (cfg.n_samples < 1)
    throw std::invalid_argument("sampler: n_samples must be >= 1");
  if (dim < 1) throw std::invalid_argument("sampler: dim must be >= 1");

  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(cfg.n_samples));
  for (std::int64_t chain = 0; chain < cfg.n_samples; ++chain) {
    Rng rng = make_rng(cfg.seed, 0x5a3713u, static_cast<std::uint64_t>(chain));
    Eigen::VectorXd x = standard_normal_vector(rng, dim);
    for (int t = s.T(); t >= 1; --t) {
      const Eigen::VectorXd eps_hat = predictor(x, t);
      if (!eps_hat.allFinite()) {
        std::ostringstream msg;
        msg << "sampler: predictor returned non-finite values at t=" << t << ", x_t=[";
        for (int j = 0; j < dim; ++j) msg << (j ? ", " : "") << x[j];
        msg << "]";
        throw std::runtime_error(msg.str());
      }
      const double beta = s.beta(t);
      const double abar = s.alpha_bar(t);
      Eigen::VectorXd mean =
          (x - (beta / std::sqrt(1.0 - abar)) * eps_hat) / std::sqrt(s.alpha(t));
      if (t > 1) {
        const double var = cfg.variance_mode == VarianceMode::beta
                               ? beta
                               : (1.0 - s.alpha_bar_prev(t)) / (1.0 - abar) * beta;
        x = mean + std::sqrt(var) * standard_normal_vector(rng, dim);
      } else {
        x = std::move(mean);  // final step is noiseless
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

double analytic_quantile(const DataDistribution& dist, double p) {
  if (dist.dim() != 1)
    throw std::invalid_argument("analytic_quantile: 1D distributions only");
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("analytic_quantile: p must lie in (0,1)");

  if (dist.is_discrete()) {
    const auto& d = dist.as_discrete();
    std::vector<std::size_t> order(d.points.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&d](std::size_t a, std::size_t b) {
      return d.points[a][0] < d.points[b][0];
    });
    double acc = 0.0;
    for (std::size_t i : order) {
      acc += d.weights[static_cast<Eigen::Index>(i)];
      if (p <= acc + 1e-15) return d.points[i][0];
    }
    return d.points[order.back()][0];
  }

  const auto& m = dist.as_mixture();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m.means.size(); ++k) {
    const double sd = std::sqrt(m.covs[k](0, 0));
    lo = std::min(lo, m.means[k][0] - 12.0 * sd);
    hi = std::max(hi, m.means[k][0] + 12.0 * sd);
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mixture_cdf_1d(m, mid) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13 * std::max(1.0, std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

MatchReport distribution_match_report(const std::vector<Eigen::VectorXd>& samples,
                                      const DataDistribution& dist) {
  if (samples.empty())
    throw std::invalid_argument("match_report: samples must be nonempty");
  const int d = dist.dim();
  for (const auto& x : samples)
    if (x.size() != d) throw std::invalid_argument("match_report: dimension mismatch");

  MatchReport report;
  report.n = static_cast<std::int64_t>(samples.size());
  const double n = static_cast<double>(samples.size());

  report.sample_mean = Eigen::VectorXd::Zero(d);
  for (const auto& x : samples) report.sample_mean += x;
  report.sample_mean /= n;

  report.sample_variance = Eigen::VectorXd::Zero(d);
  for (const auto& x : samples)
    report.sample_variance += (x - report.sample_mean).array().square().matrix();
  report.sample_variance /= n;

  report.mean_error = report.sample_mean - dist.mean();
  report.variance_error = report.sample_variance - dist.variance_diag();

  if (d == 1) {
    std::vector<double> sorted(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) sorted[i] = samples[i][0];
    std::sort(sorted.begin(), sorted.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const double p = (static_cast<double>(i) + 0.5) / n;
      acc += std::abs(sorted[i] - analytic_quantile(dist, p));
    }
    report.w1 = acc / n;
  }

  if (dist.is_discrete()) {
    const auto& data = dist.as_discrete();
    report.assignment_freq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.points.size()));
    for (const auto& x : samples) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < data.points.size(); ++i) {
        const double dd = (x - data.points[i]).squaredNorm();
        if (dd < best_d) {
          best_d = dd;
          best = static_cast<Eigen::Index>(i);
        }
      }
      report.assignment_freq[best] += 1.0;
    }
    report.assignment_freq /= n;
  }
  return report;
}

}  // namespace epsoracle
