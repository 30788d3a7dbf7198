#include "epsoracle/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "epsoracle/oracle.hpp"

namespace epsoracle {

namespace {

// Marginal moments of q(x_t) per coordinate, used for auto grid bounds.
void marginal_moments(const DataDistribution& dist, const NoiseSchedule& s, int t,
                      Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
  const double abar = s.alpha_bar(t);
  mean = std::sqrt(abar) * dist.mean();
  sd = (abar * dist.variance_diag().array() + (1.0 - abar)).sqrt();
}

void resolve_bounds(const DataDistribution& dist, const NoiseSchedule& s, int t,
                    double pad_sigmas, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  if (lo.size() != 0 && hi.size() != 0) {
    if (lo.size() != dist.dim() || hi.size() != dist.dim())
      throw std::invalid_argument("fit: bounds dimension mismatch");
    if (((hi - lo).array() <= 0.0).any())
      throw std::invalid_argument("fit: bounds must satisfy lo < hi");
    return;
  }
  Eigen::VectorXd mean, sd;
  marginal_moments(dist, s, t, mean, sd);
  lo = mean - pad_sigmas * sd;
  hi = mean + pad_sigmas * sd;
}

int auto_cells_per_axis(std::int64_t n, int d) {
  // Nonparametric-rate resolution: finer grids as the sample budget grows.
  const double c = 2.8 * std::pow(static_cast<double>(n), 1.0 / (d + 2.0));
  return std::max(8, static_cast<int>(std::llround(c)));
}

}  // namespace

GridPredictor::GridPredictor(Eigen::VectorXd lo, Eigen::VectorXd hi,
                             std::vector<int> cells)
    : lo_(std::move(lo)), hi_(std::move(hi)), cells_(std::move(cells)) {
  if (lo_.size() != hi_.size() || static_cast<std::size_t>(lo_.size()) != cells_.size())
    throw std::invalid_argument("grid predictor: inconsistent sizes");
  total_cells_ = 1;
  for (int c : cells_) {
    if (c < 1) throw std::invalid_argument("grid predictor: cells must be >= 1");
    total_cells_ *= c;
  }
  values_.setZero(total_cells_, lo_.size());
  filled_.assign(static_cast<std::size_t>(total_cells_), 0);
}

std::int64_t GridPredictor::cell_of(const Eigen::VectorXd& x) const {
  std::int64_t idx = 0;
  for (int j = 0; j < dim(); ++j) {
    const double w = (hi_[j] - lo_[j]) / cells_[static_cast<std::size_t>(j)];
    int i = static_cast<int>(std::floor((x[j] - lo_[j]) / w));
    i = std::clamp(i, 0, cells_[static_cast<std::size_t>(j)] - 1);
    idx = idx * cells_[static_cast<std::size_t>(j)] + i;
  }
  return idx;
}

Eigen::VectorXd GridPredictor::evaluate(const Eigen::VectorXd& x) const {
  return values_.row(cell_of(x)).transpose();
}

RbfPredictor::RbfPredictor(std::vector<Eigen::VectorXd> centers, double bandwidth,
                           Eigen::MatrixXd coeffs)
    : centers_(std::move(centers)), bandwidth_(bandwidth), coeffs_(std::move(coeffs)) {
  if (centers_.empty() || coeffs_.rows() != static_cast<Eigen::Index>(centers_.size()))
    throw std::invalid_argument("rbf predictor: inconsistent sizes");
  if (!(bandwidth_ > 0.0))
    throw std::invalid_argument("rbf predictor: bandwidth must be > 0");
}

Eigen::VectorXd RbfPredictor::features(const Eigen::VectorXd& x) const {
  Eigen::VectorXd phi(n_centers());
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  for (int c = 0; c < n_centers(); ++c)
    phi[c] = std::exp(-(x - centers_[static_cast<std::size_t>(c)]).squaredNorm() * inv);
  return phi;
}

Eigen::VectorXd RbfPredictor::evaluate(const Eigen::VectorXd& x) const {
  return coeffs_.transpose() * features(x);
}

Eigen::VectorXd PredictorFunction::operator()(const Eigen::VectorXd& x) const {
  return std::visit([&](const auto& f) { return f.evaluate(x); }, fn);
}

bool PredictorFunction::in_flagged_cell(const Eigen::VectorXd& x) const {
  if (const auto* g = std::get_if<GridPredictor>(&fn)) return g->in_flagged_cell(x);
  return false;
}

namespace {

std::pair<PredictorFunction, FitReport> fit_grid(const GridFamilySpec& spec,
                                                 const DataDistribution& dist,
                                                 const NoiseSchedule& s, int t,
                                                 std::int64_t n_samples, Rng& rng) {
  const int d = dist.dim();
  Eigen::VectorXd lo = spec.lo, hi = spec.hi;
  resolve_bounds(dist, s, t, spec.pad_sigmas, lo, hi);

  std::vector<int> cells = spec.cells;
  if (cells.empty()) cells.assign(static_cast<std::size_t>(d), auto_cells_per_axis(n_samples, d));
  if (cells.size() != static_cast<std::size_t>(d))
    throw std::invalid_argument("fit: cells spec dimension mismatch");

  GridPredictor grid(lo, hi, cells);
  const std::int64_t free_params = grid.total_cells() * d;
  if (n_samples < 10 * free_params)
    throw std::invalid_argument("fit: n_samples must be >= 10 x free parameters (" +
                                std::to_string(10 * free_params) + " needed)");

  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(grid.total_cells(), d);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(grid.total_cells()), 0);
  std::int64_t dropped = 0;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const Eigen::VectorXd x0 = dist.sample_one(rng);
    const auto [xt, eps] = forward_sample(s, x0, t, rng);
    bool inside = true;
    for (int j = 0; j < d; ++j)
      if (xt[j] < lo[j] || xt[j] >= hi[j]) { inside = false; break; }
    if (!inside) {
      ++dropped;
      continue;
    }
    const std::int64_t c = grid.cell_of(xt);
    sums.row(c) += eps.transpose();
    ++counts[static_cast<std::size_t>(c)];
  }

  std::int64_t n_empty = 0;
  for (std::int64_t c = 0; c < grid.total_cells(); ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) {
      grid.values().row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      grid.filled()[static_cast<std::size_t>(c)] = 1;
    } else {
      ++n_empty;
    }
  }
  if (n_empty == grid.total_cells())
    throw std::runtime_error("fit: every grid cell is empty");

  // Fill empty cells from their nearest populated cell (multi-source BFS over
  // the cell lattice, L1 metric). Filled flags stay 0 so gates can skip them.
  if (n_empty > 0) {
    std::vector<std::int64_t> strides(static_cast<std::size_t>(d), 1);
    for (int j = d - 2; j >= 0; --j)
      strides[static_cast<std::size_t>(j)] =
          strides[static_cast<std::size_t>(j + 1)] * cells[static_cast<std::size_t>(j + 1)];
    std::deque<std::int64_t> frontier;
    std::vector<char> visited(static_cast<std::size_t>(grid.total_cells()), 0);
    for (std::int64_t c = 0; c < grid.total_cells(); ++c)
      if (grid.filled()[static_cast<std::size_t>(c)]) {
        frontier.push_back(c);
        visited[static_cast<std::size_t>(c)] = 1;
      }
    while (!frontier.empty()) {
      const std::int64_t c = frontier.front();
      frontier.pop_front();
      for (int j = 0; j < d; ++j) {
        const std::int64_t stride = strides[static_cast<std::size_t>(j)];
        const auto coord = (c / stride) % cells[static_cast<std::size_t>(j)];
        for (int dir : {-1, 1}) {
          const auto nc = coord + dir;
          if (nc < 0 || nc >= cells[static_cast<std::size_t>(j)]) continue;
          const std::int64_t nb = c + dir * stride;
          if (visited[static_cast<std::size_t>(nb)]) continue;
          visited[static_cast<std::size_t>(nb)] = 1;
          grid.values().row(nb) = grid.values().row(c);
          frontier.push_back(nb);
        }
      }
    }
  }

  PredictorFunction out{t, std::move(grid)};
  FitReport report;
  report.n_samples = n_samples;
  report.n_dropped = dropped;
  report.n_cells = out.grid().total_cells();
  report.n_empty_cells = n_empty;
  Rng loss_rng = make_rng(0x10c0ffee, static_cast<std::uint64_t>(t));
  report.final_loss = loss_functional([&out](const Eigen::VectorXd& x) { return out(x); },
                                      dist, s, t, std::min<std::int64_t>(n_samples, 50000),
                                      loss_rng);
  return {std::move(out), std::move(report)};
}

std::pair<PredictorFunction, FitReport> fit_rbf(const RbfFamilySpec& spec,
                                                const DataDistribution& dist,
                                                const NoiseSchedule& s, int t,
                                                std::int64_t n_samples, Rng& rng) {
  const int d = dist.dim();
  Eigen::VectorXd lo = spec.lo, hi = spec.hi;
  resolve_bounds(dist, s, t, spec.pad_sigmas, lo, hi);
  if (spec.centers_per_axis < 2)
    throw std::invalid_argument("fit: rbf needs at least 2 centers per axis");

  // Tensor grid of centers over the box.
  std::vector<Eigen::VectorXd> centers;
  std::int64_t m = 1;
  for (int j = 0; j < d; ++j) m *= spec.centers_per_axis;
  centers.reserve(static_cast<std::size_t>(m));
  double spacing = 0.0;
  for (int j = 0; j < d; ++j)
    spacing = std::max(spacing, (hi[j] - lo[j]) / (spec.centers_per_axis - 1));
  for (std::int64_t idx = 0; idx < m; ++idx) {
    Eigen::VectorXd c(d);
    std::int64_t rem = idx;
    for (int j = d - 1; j >= 0; --j) {
      const auto i = rem % spec.centers_per_axis;
      rem /= spec.centers_per_axis;
      c[j] = lo[j] + (hi[j] - lo[j]) * static_cast<double>(i) / (spec.centers_per_axis - 1);
    }
    centers.push_back(std::move(c));
  }
  const double bandwidth = spec.bandwidth_scale * spacing;

  if (n_samples < 10 * m * d)
    throw std::invalid_argument("fit: n_samples must be >= 10 x free parameters (" +
                                std::to_string(10 * m * d) + " needed)");

  RbfPredictor proto(centers, bandwidth, Eigen::MatrixXd::Zero(m, d));
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(m, d);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const Eigen::VectorXd x0 = dist.sample_one(rng);
    const auto [xt, eps] = forward_sample(s, x0, t, rng);
    const Eigen::VectorXd phi = proto.features(xt);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(phi);
    cross += phi * eps.transpose();
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  gram /= static_cast<double>(n_samples);
  cross /= static_cast<double>(n_samples);

  double ridge = spec.ridge;
  bool bumped = false;
  Eigen::MatrixXd coeffs;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram + ridge * Eigen::MatrixXd::Identity(m, m));
    if (ldlt.info() == Eigen::Success) {
      coeffs = ldlt.solve(cross);
      if (coeffs.allFinite()) break;
    }
    ridge *= 1000.0;
    bumped = true;
    coeffs.resize(0, 0);
  }
  if (coeffs.size() == 0)
    throw std::runtime_error("fit: rbf normal equations remained singular");

  PredictorFunction out{t, RbfPredictor(std::move(centers), bandwidth, std::move(coeffs))};
  FitReport report;
  report.n_samples = n_samples;
  report.ridge = ridge;
  report.ridge_bumped = bumped;
  Rng loss_rng = make_rng(0x10c0ffee, static_cast<std::uint64_t>(t));
  report.final_loss = loss_functional([&out](const Eigen::VectorXd& x) { return out(x); },
                                      dist, s, t, std::min<std::int64_t>(n_samples, 50000),
                                      loss_rng);
  return {std::move(out), std::move(report)};
}

}  // namespace

std::pair<PredictorFunction, FitReport> fit_least_squares(
    const FamilySpec& family, const DataDistribution& dist,
    const NoiseSchedule& s, int t, std::int64_t n_samples, Rng& rng) {
  if (const auto* g = std::get_if<GridFamilySpec>(&family))
    return fit_grid(*g, dist, s, t, n_samples, rng);
  return fit_rbf(std::get<RbfFamilySpec>(family), dist, s, t, n_samples, rng);
}

Eigen::VectorXd stationarity_residual(const PredictorFn& f,
                                      const DataDistribution& dist,
                                      const NoiseSchedule& s, int t,
                                      const Eigen::VectorXd& xt) {
  const GaussianMixtureDensity qt = marginal_qt(dist, s, t);
  const double q = std::exp(qt.log_density(xt));
  return q * (epsilon_star(dist, s, t, xt) - f(xt));
}

StationaritySummary stationarity_summary(const PredictorFn& f,
                                         const DataDistribution& dist,
                                         const NoiseSchedule& s, int t,
                                         const std::vector<Eigen::VectorXd>& probes) {
  StationaritySummary out;
  out.n_probes = static_cast<std::int64_t>(probes.size());
  double sum = 0.0;
  for (const auto& p : probes) {
    const double norm = stationarity_residual(f, dist, s, t, p).cwiseAbs().maxCoeff();
    sum += norm;
    out.max_norm = std::max(out.max_norm, norm);
  }
  out.mean_norm = probes.empty() ? 0.0 : sum / static_cast<double>(probes.size());
  return out;
}

RandomPerturbation RandomPerturbation::draw(const DataDistribution& dist,
                                            const NoiseSchedule& s, int t,
                                            int n_bumps, Rng& rng) {
  if (n_bumps < 1) throw std::invalid_argument("perturbation: n_bumps must be >= 1");
  RandomPerturbation h;
  const int d = dist.dim();
  h.centers_.reserve(static_cast<std::size_t>(n_bumps));
  for (int i = 0; i < n_bumps; ++i) {
    const Eigen::VectorXd x0 = dist.sample_one(rng);
    h.centers_.push_back(forward_sample(s, x0, t, rng).first);
  }
  h.amplitudes_.resize(n_bumps, d);
  for (int i = 0; i < n_bumps; ++i)
    h.amplitudes_.row(i) = standard_normal_vector(rng, d).transpose();
  Eigen::VectorXd mean, sd;
  marginal_moments(dist, s, t, mean, sd);
  h.bandwidth_ = 0.75 * sd.maxCoeff();
  return h;
}

Eigen::VectorXd RandomPerturbation::operator()(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  for (std::size_t i = 0; i < centers_.size(); ++i)
    out += std::exp(-(x - centers_[i]).squaredNorm() * inv) *
           amplitudes_.row(static_cast<Eigen::Index>(i)).transpose();
  return out;
}

GateauxReport gateaux_derivative_check(const PredictorFn& f,
                                       const PredictorFn& h,
                                       const DataDistribution& dist,
                                       const NoiseSchedule& s, int t,
                                       const std::vector<double>& s_values,
                                       std::int64_t n, Rng& rng) {
  if (s_values.empty())
    throw std::invalid_argument("gateaux: s_values must be nonempty");
  for (double sv : s_values) {
    const bool has_mirror = std::any_of(s_values.begin(), s_values.end(),
                                        [sv](double o) { return std::abs(o + sv) < 1e-15; });
    if (!has_mirror)
      throw std::invalid_argument("gateaux: s_values must be symmetric around 0");
  }
  if (n < 2) throw std::invalid_argument("gateaux: n must be >= 2");

  // Common random numbers: one set of forward draws reused for every s.
  double sum_b = 0.0, sum_b2 = 0.0;
  double mean_r2 = 0.0, mean_rh = 0.0, mean_h2 = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const Eigen::VectorXd x0 = dist.sample_one(rng);
    const auto [xt, eps] = forward_sample(s, x0, t, rng);
    const Eigen::VectorXd r = eps - f(xt);
    const Eigen::VectorXd hv = h(xt);
    const double rh = r.dot(hv);
    const double b = -2.0 * rh;
    sum_b += b;
    sum_b2 += b * b;
    mean_r2 += r.squaredNorm();
    mean_rh += rh;
    mean_h2 += hv.squaredNorm();
  }
  mean_r2 /= static_cast<double>(n);
  mean_rh /= static_cast<double>(n);
  mean_h2 /= static_cast<double>(n);

  GateauxReport report;
  report.n = n;
  report.s_values = s_values;
  // F_hat(s) is exactly quadratic in s under common random numbers.
  report.objective_values.reserve(s_values.size());
  for (double sv : s_values)
    report.objective_values.push_back(mean_r2 - 2.0 * sv * mean_rh + sv * sv * mean_h2);

  // Quadratic fit over the evaluated s values (3x3 normal equations).
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Vector3d atb = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < s_values.size(); ++i) {
    const Eigen::Vector3d row(1.0, s_values[i], s_values[i] * s_values[i]);
    ata += row * row.transpose();
    atb += row * report.objective_values[i];
  }
  const Eigen::Vector3d beta = ata.ldlt().solve(atb);
  report.linear_coeff = beta[1];
  report.quad_coeff = beta[2];

  const double mean_b = sum_b / static_cast<double>(n);
  const double var_b =
      std::max(0.0, sum_b2 / static_cast<double>(n) - mean_b * mean_b);
  report.linear_std_error = std::sqrt(var_b / static_cast<double>(n));
  report.linear_zero = std::abs(report.linear_coeff) <= 3.0 * report.linear_std_error;
  return report;
}

OracleComparison compare_to_oracle(
    const PredictorFn& f, const DataDistribution& dist, const NoiseSchedule& s,
    int t, std::int64_t n_eval, Rng& rng,
    const std::function<bool(const Eigen::VectorXd&)>& exclude) {
  if (n_eval < 1000) throw std::invalid_argument("compare_to_oracle: n_eval must be >= 1000");
  const GaussianMixtureDensity qt = marginal_qt(dist, s, t);

  struct Row {
    double sq_err;
    double density;
  };
  std::vector<Row> rows;
  rows.reserve(static_cast<std::size_t>(n_eval));
  OracleComparison out;
  out.n_eval = n_eval;
  for (std::int64_t i = 0; i < n_eval; ++i) {
    const Eigen::VectorXd x0 = dist.sample_one(rng);
    const Eigen::VectorXd xt = forward_sample(s, x0, t, rng).first;
    if (exclude && exclude(xt)) {
      ++out.n_excluded;
      continue;
    }
    const double e2 = (f(xt) - epsilon_star(dist, s, t, xt)).squaredNorm();
    rows.push_back({e2, std::exp(qt.log_density(xt))});
  }
  if (rows.empty()) throw std::runtime_error("compare_to_oracle: all probes excluded");

  double total = 0.0;
  double max_density = 0.0;
  for (const Row& r : rows) {
    total += r.sq_err;
    max_density = std::max(max_density, r.density);
  }
  out.rmse_overall = std::sqrt(total / static_cast<double>(rows.size()));

  out.region_density_floor = 0.01 * max_density;
  double region_total = 0.0;
  for (const Row& r : rows)
    if (r.density >= out.region_density_floor) {
      region_total += r.sq_err;
      ++out.n_region;
    }
  out.rmse_region =
      out.n_region > 0 ? std::sqrt(region_total / static_cast<double>(out.n_region)) : 0.0;

  // Decile split by density rank; decile 9 holds the densest probes.
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&rows](std::size_t a, std::size_t b) {
    return rows[a].density < rows[b].density;
  });
  for (int dec = 0; dec < 10; ++dec) {
    const std::size_t begin = rows.size() * static_cast<std::size_t>(dec) / 10;
    const std::size_t end = rows.size() * static_cast<std::size_t>(dec + 1) / 10;
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += rows[order[i]].sq_err;
    out.rmse_by_decile[static_cast<std::size_t>(dec)] =
        end > begin ? std::sqrt(acc / static_cast<double>(end - begin)) : 0.0;
  }
  return out;
}

}  // namespace epsoracle
