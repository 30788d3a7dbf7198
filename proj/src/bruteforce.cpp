#include "epsoracle/bruteforce.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace epsoracle {

namespace {

struct Axis {
  double lo = 0.0;
  double hi = 0.0;
};

// Per-axis extent of the posterior mass: union over components of the
// conjugate posterior mean +- pad_sigmas posterior standard deviations.
std::vector<Axis> posterior_extent(const MixtureData& data, double abar,
                                   const Eigen::VectorXd& xt, double pad_sigmas) {
  const int d = static_cast<int>(xt.size());
  const double sqrt_abar = std::sqrt(abar);
  const Eigen::MatrixXd noise_cov = (1.0 - abar) * Eigen::MatrixXd::Identity(d, d);
  std::vector<Axis> axes(static_cast<std::size_t>(d),
                         Axis{std::numeric_limits<double>::infinity(),
                              -std::numeric_limits<double>::infinity()});
  for (std::size_t k = 0; k < data.means.size(); ++k) {
    const Eigen::MatrixXd marg_cov = abar * data.covs[k] + noise_cov;
    Eigen::LLT<Eigen::MatrixXd> llt(marg_cov);
    const Eigen::MatrixXd gain =
        sqrt_abar * data.covs[k] * llt.solve(Eigen::MatrixXd::Identity(d, d));
    const Eigen::VectorXd m = data.means[k] + gain * (xt - sqrt_abar * data.means[k]);
    const Eigen::MatrixXd c = data.covs[k] - gain * (sqrt_abar * data.covs[k]);
    for (int j = 0; j < d; ++j) {
      const double sd = std::sqrt(std::max(c(j, j), 0.0));
      axes[static_cast<std::size_t>(j)].lo =
          std::min(axes[static_cast<std::size_t>(j)].lo, m[j] - pad_sigmas * sd);
      axes[static_cast<std::size_t>(j)].hi =
          std::max(axes[static_cast<std::size_t>(j)].hi, m[j] + pad_sigmas * sd);
    }
  }
  return axes;
}

double log_forward_kernel(const Eigen::VectorXd& xt, const Eigen::VectorXd& x0,
                          double abar) {
  // Normalization constant omitted; it cancels in the self-normalized ratio.
  return -(xt - std::sqrt(abar) * x0).squaredNorm() / (2.0 * (1.0 - abar));
}

EstimateWithError discrete_exact_sum(const DiscreteData& data,
                                     const NoiseSchedule& s, int t,
                                     const Eigen::VectorXd& xt) {
  const double abar = s.alpha_bar(t);
  const auto n = static_cast<Eigen::Index>(data.points.size());
  Eigen::VectorXd logits(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = data.weights[i];
    logits[i] = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) +
                log_forward_kernel(xt, data.points[i], abar);
  }
  const double m = logits.maxCoeff();
  const Eigen::VectorXd u = (logits.array() - m).exp();
  Eigen::VectorXd num = Eigen::VectorXd::Zero(xt.size());
  for (Eigen::Index i = 0; i < n; ++i)
    num += u[i] * (xt - std::sqrt(abar) * data.points[i]) / std::sqrt(1.0 - abar);
  EstimateWithError out;
  out.value = num / u.sum();
  out.std_error = Eigen::VectorXd::Zero(xt.size());
  out.bound = 0.0;
  out.n_evals = n;
  return out;
}

struct RatioResult {
  Eigen::VectorXd fine;
  Eigen::VectorXd coarse;
};

// Self-normalized trapezoid ratio over the tensor grid; the coarse ratio
// reuses every other node along each axis.
RatioResult tensor_ratio(const GaussianMixtureDensity& q0,
                         const Eigen::VectorXd& xt, double abar,
                         const std::vector<Axis>& axes, int nodes) {
  const int d = static_cast<int>(axes.size());
  const double sqrt_abar = std::sqrt(abar);
  const double inv_sqrt_noise = 1.0 / std::sqrt(1.0 - abar);

  std::vector<Eigen::VectorXd> grid(static_cast<std::size_t>(d));
  std::vector<double> h(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    grid[static_cast<std::size_t>(j)].resize(nodes);
    h[static_cast<std::size_t>(j)] =
        (axes[static_cast<std::size_t>(j)].hi - axes[static_cast<std::size_t>(j)].lo) /
        (nodes - 1);
    for (int i = 0; i < nodes; ++i)
      grid[static_cast<std::size_t>(j)][i] =
          axes[static_cast<std::size_t>(j)].lo + h[static_cast<std::size_t>(j)] * i;
  }

  auto trap_w = [nodes](int i) { return (i == 0 || i == nodes - 1) ? 0.5 : 1.0; };

  // First pass for the max log integrand, second for the accumulation.
  // d <= 2, so the full node sweep is cheap enough to do twice.
  double max_log = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd x0(d);
  const std::int64_t total = d == 1 ? nodes : static_cast<std::int64_t>(nodes) * nodes;
  std::vector<double> logf(static_cast<std::size_t>(total));
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int i0 = static_cast<int>(d == 1 ? idx : idx / nodes);
    const int i1 = static_cast<int>(d == 1 ? 0 : idx % nodes);
    x0[0] = grid[0][i0];
    if (d == 2) x0[1] = grid[1][i1];
    const double lf = q0.log_density(x0) + log_forward_kernel(xt, x0, abar);
    logf[static_cast<std::size_t>(idx)] = lf;
    max_log = std::max(max_log, lf);
  }

  Eigen::VectorXd num_fine = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd num_coarse = Eigen::VectorXd::Zero(d);
  double den_fine = 0.0;
  double den_coarse = 0.0;
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int i0 = static_cast<int>(d == 1 ? idx : idx / nodes);
    const int i1 = static_cast<int>(d == 1 ? 0 : idx % nodes);
    x0[0] = grid[0][i0];
    if (d == 2) x0[1] = grid[1][i1];
    const double w = std::exp(logf[static_cast<std::size_t>(idx)] - max_log);
    const Eigen::VectorXd eps = (xt - sqrt_abar * x0) * inv_sqrt_noise;
    const double cw = trap_w(i0) * (d == 2 ? trap_w(i1) : 1.0);
    num_fine += cw * w * eps;
    den_fine += cw * w;
    if (i0 % 2 == 0 && i1 % 2 == 0) {
      const int half = (nodes - 1) / 2;
      const int c0 = i0 / 2;
      const int c1 = i1 / 2;
      const double cwc = ((c0 == 0 || c0 == half) ? 0.5 : 1.0) *
                         (d == 2 ? ((c1 == 0 || c1 == half) ? 0.5 : 1.0) : 1.0);
      num_coarse += cwc * w * eps;
      den_coarse += cwc * w;
    }
  }
  return {num_fine / den_fine, num_coarse / den_coarse};
}

}  // namespace

EstimateWithError epsilon_star_quadrature(const DataDistribution& dist,
                                          const NoiseSchedule& s, int t,
                                          const Eigen::VectorXd& xt,
                                          const GridSpec& grid) {
  if (t < 1 || t > s.T())
    throw std::invalid_argument("quadrature: t must lie in {1..T}");
  if (xt.size() != dist.dim())
    throw std::invalid_argument("quadrature: probe dimension mismatch");

  if (dist.is_discrete()) return discrete_exact_sum(dist.as_discrete(), s, t, xt);

  if (dist.dim() > 2)
    throw std::invalid_argument("quadrature: grid integration supports d <= 2 only");
  if (grid.nodes_per_axis < 5 || (grid.nodes_per_axis - 1) % 2 != 0)
    throw std::invalid_argument("quadrature: nodes_per_axis must be 2^k + 1, k >= 2");
  if (!(grid.pad_sigmas > 0.0))
    throw std::invalid_argument("quadrature: pad_sigmas must be > 0");

  const auto& data = dist.as_mixture();
  const double abar = s.alpha_bar(t);
  const auto axes = posterior_extent(data, abar, xt, grid.pad_sigmas);
  const GaussianMixtureDensity q0(data.weights, data.means, data.covs);

  const RatioResult r = tensor_ratio(q0, xt, abar, axes, grid.nodes_per_axis);

  EstimateWithError out;
  out.value = r.fine;
  out.std_error = Eigen::VectorXd::Zero(dist.dim());
  out.bound = (r.fine - r.coarse).cwiseAbs().maxCoeff();
  out.n_evals = dist.dim() == 1
                    ? grid.nodes_per_axis
                    : static_cast<std::int64_t>(grid.nodes_per_axis) * grid.nodes_per_axis;
  if (out.bound > grid.coarse_tol) {
    out.unreliable = true;
    out.note = "grid refinement changed the result by more than coarse_tol";
  }
  return out;
}

EstimateWithError epsilon_star_monte_carlo(const DataDistribution& dist,
                                           const NoiseSchedule& s, int t,
                                           const Eigen::VectorXd& xt,
                                           std::int64_t n, Rng& rng) {
  if (n < 100) throw std::invalid_argument("monte_carlo: n must be >= 100");
  if (t < 1 || t > s.T())
    throw std::invalid_argument("monte_carlo: t must lie in {1..T}");
  if (xt.size() != dist.dim())
    throw std::invalid_argument("monte_carlo: probe dimension mismatch");

  const double abar = s.alpha_bar(t);
  const double sqrt_abar = std::sqrt(abar);
  const double inv_sqrt_noise = 1.0 / std::sqrt(1.0 - abar);
  const int d = dist.dim();

  std::vector<double> log_w(static_cast<std::size_t>(n));
  std::vector<Eigen::VectorXd> eps(static_cast<std::size_t>(n));
  double max_lw = -std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < n; ++i) {
    const Eigen::VectorXd x0 = dist.sample_one(rng);
    log_w[static_cast<std::size_t>(i)] = log_forward_kernel(xt, x0, abar);
    eps[static_cast<std::size_t>(i)] = (xt - sqrt_abar * x0) * inv_sqrt_noise;
    max_lw = std::max(max_lw, log_w[static_cast<std::size_t>(i)]);
  }

  double sum_w = 0.0;
  double sum_w2 = 0.0;
  Eigen::VectorXd num = Eigen::VectorXd::Zero(d);
  for (std::int64_t i = 0; i < n; ++i) {
    const double w = std::exp(log_w[static_cast<std::size_t>(i)] - max_lw);
    sum_w += w;
    sum_w2 += w * w;
    num += w * eps[static_cast<std::size_t>(i)];
  }

  EstimateWithError out;
  out.value = num / sum_w;
  out.n_evals = n;

  // Delta-method variance of the self-normalized ratio, per coordinate.
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (std::int64_t i = 0; i < n; ++i) {
    const double w = std::exp(log_w[static_cast<std::size_t>(i)] - max_lw);
    var += (w * (eps[static_cast<std::size_t>(i)] - out.value)).array().square().matrix();
  }
  out.std_error = (var / (sum_w * sum_w)).array().sqrt();

  const double ess = sum_w * sum_w / sum_w2;
  if (ess < 10.0) {
    out.unreliable = true;
    out.note = "effective sample size below 10";
  }
  return out;
}

Eigen::VectorXd score_finite_difference(const GaussianMixtureDensity& g,
                                        const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("score_finite_difference: h must be > 0");
  Eigen::VectorXd grad(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    xp[j] += h;
    xm[j] -= h;
    grad[j] = (g.log_density(xp) - g.log_density(xm)) / (2.0 * h);
  }
  return grad;
}

LossEstimate loss_functional(const PredictorFn& f, const DataDistribution& dist,
                             const NoiseSchedule& s, int t, std::int64_t n,
                             Rng& rng) {
  if (n < 1) throw std::invalid_argument("loss_functional: n must be >= 1");
  double sum = 0.0;
  double sum2 = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const Eigen::VectorXd x0 = dist.sample_one(rng);
    const auto [xt, eps] = forward_sample(s, x0, t, rng);
    const double l = (eps - f(xt)).squaredNorm();
    sum += l;
    sum2 += l * l;
  }
  LossEstimate out;
  out.n = n;
  out.value = sum / static_cast<double>(n);
  const double var =
      std::max(0.0, sum2 / static_cast<double>(n) - out.value * out.value);
  out.std_error = std::sqrt(var / static_cast<double>(n));
  return out;
}

}  // namespace epsoracle
