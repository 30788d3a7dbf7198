#pragma once

#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "epsoracle/rng.hpp"
#include "epsoracle/schedule.hpp"

namespace epsoracle {

// Ambient dimension is capped so full-covariance factorizations and grid
// quadrature stay desk-scale.
inline constexpr int kMaxDim = 8;

struct DiscreteData {
  std::vector<Eigen::VectorXd> points;
  Eigen::VectorXd weights;
};

struct MixtureData {
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
};

// Gaussian mixture with cached Cholesky factors and log-normalizers.
// Also serves as the marginal density of the forward process at any t,
// since both data variants stay Gaussian mixtures under the forward kernel.
class GaussianMixtureDensity {
 public:
  GaussianMixtureDensity(Eigen::VectorXd weights,
                         std::vector<Eigen::VectorXd> means,
                         std::vector<Eigen::MatrixXd> covs);

  int dim() const { return static_cast<int>(means_[0].size()); }
  int components() const { return static_cast<int>(weights_.size()); }

  double log_density(const Eigen::VectorXd& x) const;
  Eigen::VectorXd score(const Eigen::VectorXd& x) const;

  // log of the component posterior probabilities at x, normalized.
  Eigen::VectorXd log_responsibilities(const Eigen::VectorXd& x) const;

  Eigen::VectorXd sample(Rng& rng) const;

  double weight(int k) const { return weights_[k]; }
  const Eigen::VectorXd& mean(int k) const { return means_[k]; }
  const Eigen::MatrixXd& cov(int k) const { return covs_[k]; }
  const Eigen::LLT<Eigen::MatrixXd>& llt(int k) const { return llts_[k]; }

 private:
  void check_dim(const Eigen::VectorXd& x) const;

  Eigen::VectorXd weights_;
  Eigen::VectorXd log_weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covs_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llts_;
  Eigen::VectorXd log_norms_;  // -d/2 log(2pi) - sum_i log L_ii per component
};

// Data distribution q(x0): a weighted point set or a Gaussian mixture.
class DataDistribution {
 public:
  static DataDistribution discrete(std::vector<Eigen::VectorXd> points,
                                   Eigen::VectorXd weights);
  static DataDistribution mixture(Eigen::VectorXd weights,
                                  std::vector<Eigen::VectorXd> means,
                                  std::vector<Eigen::MatrixXd> covs);

  bool is_discrete() const { return std::holds_alternative<DiscreteData>(data_); }
  const DiscreteData& as_discrete() const { return std::get<DiscreteData>(data_); }
  const MixtureData& as_mixture() const { return std::get<MixtureData>(data_); }

  int dim() const { return dim_; }
  int atoms() const;  // number of points or components

  Eigen::VectorXd sample_one(Rng& rng) const;
  std::vector<Eigen::VectorXd> sample(Rng& rng, int n) const;

  // Analytic first and second moments, per coordinate.
  Eigen::VectorXd mean() const;
  Eigen::VectorXd variance_diag() const;

 private:
  DataDistribution(std::variant<DiscreteData, MixtureData> data, int dim)
      : data_(std::move(data)), dim_(dim) {}

  std::variant<DiscreteData, MixtureData> data_;
  int dim_ = 0;
};

// Marginal q(x_t) induced by the forward process at timestep t.
// Discrete data maps to an isotropic mixture centered at sqrt(abar) x_i;
// mixture data maps component-wise to N(sqrt(abar) mu_k, abar Sigma_k + (1-abar) I).
GaussianMixtureDensity marginal_qt(const DataDistribution& dist,
                                   const NoiseSchedule& s, int t);

}  // namespace epsoracle
