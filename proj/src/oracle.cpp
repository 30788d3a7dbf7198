#include "epsoracle/oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace epsoracle {

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - m).exp();
  return p / p.sum();
}

void check_probe(const DataDistribution& dist, const NoiseSchedule& s, int t,
                 const Eigen::VectorXd& xt) {
  if (t < 1 || t > s.T())
    throw std::invalid_argument("posterior: t must lie in {1..T}");
  if (xt.size() != dist.dim())
    throw std::invalid_argument("posterior: probe dimension mismatch");
  if (!xt.allFinite())
    throw std::invalid_argument("posterior: probe must be finite");
  if (!(s.alpha_bar(t) < 1.0))
    throw std::logic_error("posterior: degenerate abar_t = 1");
}

}  // namespace

PosteriorSummary posterior(const DataDistribution& dist, const NoiseSchedule& s,
                           int t, const Eigen::VectorXd& xt) {
  check_probe(dist, s, t, xt);
  const double abar = s.alpha_bar(t);
  const double sqrt_abar = std::sqrt(abar);
  const double noise_var = 1.0 - abar;

  PosteriorSummary out;

  if (dist.is_discrete()) {
    const auto& data = dist.as_discrete();
    const auto n = static_cast<Eigen::Index>(data.points.size());
    Eigen::VectorXd logits(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = data.weights[i];
      const double d2 = (xt - sqrt_abar * data.points[i]).squaredNorm();
      logits[i] = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) -
                  0.5 * d2 / noise_var;
    }
    out.responsibilities = softmax(logits);
    out.conditional_mean_x0 = Eigen::VectorXd::Zero(dist.dim());
    for (Eigen::Index i = 0; i < n; ++i)
      out.conditional_mean_x0 += out.responsibilities[i] * data.points[i];
    return out;
  }

  const auto& data = dist.as_mixture();
  const auto K = static_cast<Eigen::Index>(data.means.size());
  const int d = dist.dim();
  const Eigen::MatrixXd noise_cov = noise_var * Eigen::MatrixXd::Identity(d, d);

  Eigen::VectorXd logits(K);
  std::vector<Eigen::VectorXd> post_means(static_cast<std::size_t>(K));
  std::vector<Eigen::MatrixXd> post_covs(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::MatrixXd marg_cov = abar * data.covs[k] + noise_cov;
    Eigen::LLT<Eigen::MatrixXd> llt(marg_cov);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("posterior: marginal covariance factorization failed");
    const Eigen::VectorXd resid = xt - sqrt_abar * data.means[k];
    const Eigen::VectorXd u = llt.matrixL().solve(resid);
    const Eigen::MatrixXd L = llt.matrixL();
    const double log_det_half = L.diagonal().array().log().sum();
    const double w = data.weights[k];
    logits[k] = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) -
                log_det_half - 0.5 * u.squaredNorm();
    // Gaussian conjugacy: x0 | xt, component k is Gaussian with
    // mean mu_k + sqrt(abar) Sigma_k (abar Sigma_k + (1-abar) I)^-1 (xt - sqrt(abar) mu_k).
    const Eigen::MatrixXd gain = sqrt_abar * data.covs[k] * llt.solve(Eigen::MatrixXd::Identity(d, d));
    post_means[static_cast<std::size_t>(k)] = data.means[k] + gain * resid;
    post_covs[static_cast<std::size_t>(k)] =
        data.covs[k] - gain * (sqrt_abar * data.covs[k]).transpose();
  }
  out.responsibilities = softmax(logits);
  out.component_means = std::move(post_means);
  out.component_covs = std::move(post_covs);
  out.conditional_mean_x0 = Eigen::VectorXd::Zero(d);
  for (Eigen::Index k = 0; k < K; ++k)
    out.conditional_mean_x0 +=
        out.responsibilities[k] * out.component_means[static_cast<std::size_t>(k)];
  return out;
}

Eigen::VectorXd epsilon_star(const DataDistribution& dist, const NoiseSchedule& s,
                             int t, const Eigen::VectorXd& xt) {
  const PosteriorSummary p = posterior(dist, s, t, xt);
  const double abar = s.alpha_bar(t);
  return (xt - std::sqrt(abar) * p.conditional_mean_x0) / std::sqrt(1.0 - abar);
}

Eigen::VectorXd epsilon_from_score(const DataDistribution& dist,
                                   const NoiseSchedule& s, int t,
                                   const Eigen::VectorXd& xt) {
  check_probe(dist, s, t, xt);
  const GaussianMixtureDensity qt = marginal_qt(dist, s, t);
  return -std::sqrt(1.0 - s.alpha_bar(t)) * qt.score(xt);
}

IdentityReport check_identity(const DataDistribution& dist, const NoiseSchedule& s,
                              int t, const Eigen::VectorXd& xt, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("check_identity: tol must be > 0");
  IdentityReport r;
  r.probe = xt;
  r.t = t;
  r.eps_direct = epsilon_star(dist, s, t, xt);
  r.eps_score = epsilon_from_score(dist, s, t, xt);
  r.abs_err = (r.eps_direct - r.eps_score).cwiseAbs().maxCoeff();
  const double scale = r.eps_direct.cwiseAbs().maxCoeff();
  r.rel_err = scale > 0.0 ? r.abs_err / scale : r.abs_err;
  r.pass = r.abs_err <= tol || r.rel_err <= tol;
  return r;
}

std::vector<Eigen::VectorXd> draw_probes(const DataDistribution& dist,
                                         const NoiseSchedule& s, int t, int n,
                                         Rng& rng, bool far_tail) {
  if (n < 1) throw std::invalid_argument("draw_probes: n must be >= 1");
  std::vector<Eigen::VectorXd> probes;
  probes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x0 = dist.sample_one(rng);
    probes.push_back(forward_sample(s, x0, t, rng).first);
  }
  if (far_tail) {
    const GaussianMixtureDensity qt = marginal_qt(dist, s, t);
    for (int k = 0; k < qt.components(); ++k) {
      const Eigen::VectorXd sd = qt.cov(k).diagonal().array().sqrt();
      for (int j = 0; j < qt.dim(); ++j) {
        for (const double sign : {-6.0, 6.0}) {
          Eigen::VectorXd p = qt.mean(k);
          p[j] += sign * sd[j];
          probes.push_back(std::move(p));
        }
      }
    }
  }
  return probes;
}

}  // namespace epsoracle
