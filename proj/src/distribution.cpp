#include "epsoracle/distribution.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace epsoracle {

namespace {

constexpr double kWeightTol = 1e-12;

void validate_weights(const Eigen::VectorXd& w) {
  if (w.size() == 0) throw std::invalid_argument("distribution: empty weights");
  if ((w.array() < 0.0).any())
    throw std::invalid_argument("distribution: negative weight");
  if (std::abs(w.sum() - 1.0) > kWeightTol)
    throw std::invalid_argument("distribution: weights must sum to 1 within 1e-12");
}

void validate_dim(int d) {
  if (d < 1 || d > kMaxDim)
    throw std::invalid_argument("distribution: dimension must lie in [1, 8]");
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf
  return m + std::log((v.array() - m).exp().sum());
}

// Weighted categorical draw by cumulative inversion.
int pick_index(const Eigen::VectorXd& w, Rng& rng) {
  const double u = uniform01(rng) * w.sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u <= acc) return static_cast<int>(i);
  }
  return static_cast<int>(w.size() - 1);
}

}  // namespace

GaussianMixtureDensity::GaussianMixtureDensity(Eigen::VectorXd weights,
                                               std::vector<Eigen::VectorXd> means,
                                               std::vector<Eigen::MatrixXd> covs)
    : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covs)) {
  validate_weights(weights_);
  const auto K = static_cast<std::size_t>(weights_.size());
  if (means_.size() != K || covs_.size() != K)
    throw std::invalid_argument("gmm: weights/means/covs size mismatch");
  const int d = static_cast<int>(means_[0].size());
  validate_dim(d);

  log_weights_.resize(weights_.size());
  for (Eigen::Index k = 0; k < weights_.size(); ++k)
    log_weights_[k] = weights_[k] > 0.0 ? std::log(weights_[k])
                                        : -std::numeric_limits<double>::infinity();

  llts_.reserve(K);
  log_norms_.resize(weights_.size());
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (std::size_t k = 0; k < K; ++k) {
    if (means_[k].size() != d || covs_[k].rows() != d || covs_[k].cols() != d)
      throw std::invalid_argument("gmm: component dimension mismatch");
    if (!covs_[k].isApprox(covs_[k].transpose(), 1e-10))
      throw std::invalid_argument("gmm: covariance not symmetric");
    llts_.emplace_back(covs_[k]);
    if (llts_.back().info() != Eigen::Success)
      throw std::invalid_argument("gmm: covariance not positive definite");
    const Eigen::MatrixXd L = llts_.back().matrixL();
    const double log_det_half = L.diagonal().array().log().sum();
    log_norms_[static_cast<Eigen::Index>(k)] = -d * half_log_2pi - log_det_half;
  }
}

void GaussianMixtureDensity::check_dim(const Eigen::VectorXd& x) const {
  if (x.size() != dim())
    throw std::invalid_argument("gmm: query dimension mismatch");
}

double GaussianMixtureDensity::log_density(const Eigen::VectorXd& x) const {
  check_dim(x);
  Eigen::VectorXd lp(components());
  for (int k = 0; k < components(); ++k) {
    const Eigen::VectorXd u = llts_[k].matrixL().solve(x - means_[k]);
    lp[k] = log_weights_[k] + log_norms_[k] - 0.5 * u.squaredNorm();
  }
  return log_sum_exp(lp);
}

Eigen::VectorXd GaussianMixtureDensity::log_responsibilities(
    const Eigen::VectorXd& x) const {
  check_dim(x);
  Eigen::VectorXd lp(components());
  for (int k = 0; k < components(); ++k) {
    const Eigen::VectorXd u = llts_[k].matrixL().solve(x - means_[k]);
    lp[k] = log_weights_[k] + log_norms_[k] - 0.5 * u.squaredNorm();
  }
  return lp.array() - log_sum_exp(lp);
}

Eigen::VectorXd GaussianMixtureDensity::score(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd log_r = log_responsibilities(x);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
  for (int k = 0; k < components(); ++k) {
    const double r = std::exp(log_r[k]);
    if (r == 0.0) continue;
    g += r * llts_[k].solve(means_[k] - x);
  }
  return g;
}

Eigen::VectorXd GaussianMixtureDensity::sample(Rng& rng) const {
  const int k = pick_index(weights_, rng);
  const Eigen::VectorXd z = standard_normal_vector(rng, dim());
  return means_[k] + llts_[k].matrixL() * z;
}

DataDistribution DataDistribution::discrete(std::vector<Eigen::VectorXd> points,
                                            Eigen::VectorXd weights) {
  validate_weights(weights);
  if (points.size() != static_cast<std::size_t>(weights.size()))
    throw std::invalid_argument("discrete: points/weights size mismatch");
  const int d = static_cast<int>(points[0].size());
  validate_dim(d);
  for (const auto& p : points)
    if (p.size() != d) throw std::invalid_argument("discrete: point dimension mismatch");
  return DataDistribution(DiscreteData{std::move(points), std::move(weights)}, d);
}

DataDistribution DataDistribution::mixture(Eigen::VectorXd weights,
                                           std::vector<Eigen::VectorXd> means,
                                           std::vector<Eigen::MatrixXd> covs) {
  // Constructing the density validates weights, dimensions and SPD covariances.
  GaussianMixtureDensity check(weights, means, covs);
  const int d = check.dim();
  return DataDistribution(MixtureData{std::move(weights), std::move(means), std::move(covs)}, d);
}

int DataDistribution::atoms() const {
  if (is_discrete()) return static_cast<int>(as_discrete().points.size());
  return static_cast<int>(as_mixture().weights.size());
}

Eigen::VectorXd DataDistribution::sample_one(Rng& rng) const {
  if (is_discrete()) {
    const auto& d = as_discrete();
    return d.points[pick_index(d.weights, rng)];
  }
  const auto& m = as_mixture();
  const int k = pick_index(m.weights, rng);
  Eigen::LLT<Eigen::MatrixXd> llt(m.covs[k]);
  const Eigen::VectorXd z = standard_normal_vector(rng, dim_);
  return m.means[k] + llt.matrixL() * z;
}

std::vector<Eigen::VectorXd> DataDistribution::sample(Rng& rng, int n) const {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(n));
  if (is_discrete()) {
    const auto& d = as_discrete();
    for (int i = 0; i < n; ++i) out.push_back(d.points[pick_index(d.weights, rng)]);
    return out;
  }
  const auto& m = as_mixture();
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
  llts.reserve(m.covs.size());
  for (const auto& c : m.covs) llts.emplace_back(c);
  for (int i = 0; i < n; ++i) {
    const int k = pick_index(m.weights, rng);
    out.push_back(m.means[k] + llts[k].matrixL() * standard_normal_vector(rng, dim_));
  }
  return out;
}

Eigen::VectorXd DataDistribution::mean() const {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(dim_);
  if (is_discrete()) {
    const auto& d = as_discrete();
    for (std::size_t i = 0; i < d.points.size(); ++i)
      mu += d.weights[static_cast<Eigen::Index>(i)] * d.points[i];
    return mu;
  }
  const auto& m = as_mixture();
  for (std::size_t k = 0; k < m.means.size(); ++k)
    mu += m.weights[static_cast<Eigen::Index>(k)] * m.means[k];
  return mu;
}

Eigen::VectorXd DataDistribution::variance_diag() const {
  const Eigen::VectorXd mu = mean();
  Eigen::VectorXd second = Eigen::VectorXd::Zero(dim_);
  if (is_discrete()) {
    const auto& d = as_discrete();
    for (std::size_t i = 0; i < d.points.size(); ++i)
      second += d.weights[static_cast<Eigen::Index>(i)] *
                d.points[i].array().square().matrix();
  } else {
    const auto& m = as_mixture();
    for (std::size_t k = 0; k < m.means.size(); ++k)
      second += m.weights[static_cast<Eigen::Index>(k)] *
                (m.covs[k].diagonal() + m.means[k].array().square().matrix());
  }
  return second - mu.array().square().matrix();
}

GaussianMixtureDensity marginal_qt(const DataDistribution& dist,
                                   const NoiseSchedule& s, int t) {
  if (t < 1 || t > s.T())
    throw std::invalid_argument("marginal_qt: t must lie in {1..T}");
  const double abar = s.alpha_bar(t);
  const double sqrt_abar = std::sqrt(abar);
  const int d = dist.dim();
  const Eigen::MatrixXd noise_cov =
      (1.0 - abar) * Eigen::MatrixXd::Identity(d, d);

  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  Eigen::VectorXd weights;

  if (dist.is_discrete()) {
    const auto& data = dist.as_discrete();
    weights = data.weights;
    means.reserve(data.points.size());
    covs.reserve(data.points.size());
    for (const auto& p : data.points) {
      means.push_back(sqrt_abar * p);
      covs.push_back(noise_cov);
    }
  } else {
    const auto& data = dist.as_mixture();
    weights = data.weights;
    means.reserve(data.means.size());
    covs.reserve(data.covs.size());
    for (std::size_t k = 0; k < data.means.size(); ++k) {
      means.push_back(sqrt_abar * data.means[k]);
      covs.push_back(abar * data.covs[k] + noise_cov);
    }
  }
  return GaussianMixtureDensity(std::move(weights), std::move(means), std::move(covs));
}

}  // namespace epsoracle
