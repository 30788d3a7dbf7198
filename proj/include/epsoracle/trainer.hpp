#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "epsoracle/bruteforce.hpp"
#include "epsoracle/distribution.hpp"
#include "epsoracle/rng.hpp"
#include "epsoracle/schedule.hpp"

namespace epsoracle {

// Piecewise-constant predictor on a regular box grid. Evaluation clamps the
// query into the box, so the function is total on R^d.
class GridPredictor {
 public:
  GridPredictor(Eigen::VectorXd lo, Eigen::VectorXd hi, std::vector<int> cells);

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;
  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return evaluate(x); }

  // Cell index after clamping into the box.
  std::int64_t cell_of(const Eigen::VectorXd& x) const;
  // True when the query lands in a cell that had no training samples.
  bool in_flagged_cell(const Eigen::VectorXd& x) const { return !filled_[static_cast<std::size_t>(cell_of(x))]; }

  int dim() const { return static_cast<int>(lo_.size()); }
  std::int64_t total_cells() const { return total_cells_; }
  const std::vector<int>& cells() const { return cells_; }
  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }
  Eigen::MatrixXd& values() { return values_; }
  const Eigen::MatrixXd& values() const { return values_; }
  std::vector<char>& filled() { return filled_; }
  const std::vector<char>& filled() const { return filled_; }

 private:
  Eigen::VectorXd lo_, hi_;
  std::vector<int> cells_;
  std::int64_t total_cells_ = 0;
  Eigen::MatrixXd values_;    // total_cells x d
  std::vector<char> filled_;  // per cell, 1 if any training sample landed there
};

// Gaussian radial basis expansion with fixed centers and shared bandwidth.
class RbfPredictor {
 public:
  RbfPredictor(std::vector<Eigen::VectorXd> centers, double bandwidth,
               Eigen::MatrixXd coeffs);

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;
  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return evaluate(x); }

  Eigen::VectorXd features(const Eigen::VectorXd& x) const;
  int n_centers() const { return static_cast<int>(centers_.size()); }
  const std::vector<Eigen::VectorXd>& centers() const { return centers_; }
  double bandwidth() const { return bandwidth_; }
  const Eigen::MatrixXd& coeffs() const { return coeffs_; }

 private:
  std::vector<Eigen::VectorXd> centers_;
  double bandwidth_ = 1.0;
  Eigen::MatrixXd coeffs_;  // n_centers x d
};

// One fitted predictor serves exactly one timestep.
struct PredictorFunction {
  int t = 0;
  std::variant<GridPredictor, RbfPredictor> fn;

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
  bool in_flagged_cell(const Eigen::VectorXd& x) const;
  bool is_grid() const { return std::holds_alternative<GridPredictor>(fn); }
  const GridPredictor& grid() const { return std::get<GridPredictor>(fn); }
  const RbfPredictor& rbf() const { return std::get<RbfPredictor>(fn); }
};

struct GridFamilySpec {
  Eigen::VectorXd lo, hi;   // empty => derived from the marginal at t
  std::vector<int> cells;   // empty => resolution from the sample budget
  double pad_sigmas = 4.5;  // half-width of auto bounds in marginal sigmas
};

struct RbfFamilySpec {
  int centers_per_axis = 24;     // tensor grid of centers over the box
  double bandwidth_scale = 1.5;  // times the center spacing
  double ridge = 1e-8;
  Eigen::VectorXd lo, hi;  // empty => derived from the marginal at t
  double pad_sigmas = 4.5;
};

using FamilySpec = std::variant<GridFamilySpec, RbfFamilySpec>;

struct OracleComparison {
  double rmse_overall = 0.0;
  double rmse_region = 0.0;          // restricted to q(x_t) >= 1% of observed max
  double region_density_floor = 0.0;
  std::array<double, 10> rmse_by_decile{};  // decile 9 = highest density
  std::int64_t n_eval = 0;
  std::int64_t n_region = 0;
  std::int64_t n_excluded = 0;  // probes landing in flagged cells
};

struct StationaritySummary {
  double mean_norm = 0.0;
  double max_norm = 0.0;
  std::int64_t n_probes = 0;
};

struct FitReport {
  LossEstimate final_loss;
  std::int64_t n_samples = 0;
  std::int64_t n_dropped = 0;  // training draws outside the grid box
  std::int64_t n_cells = 0;
  std::int64_t n_empty_cells = 0;
  double ridge = 0.0;
  bool ridge_bumped = false;
  OracleComparison comparison;
  StationaritySummary stationarity;
  bool has_comparison = false;
  bool has_stationarity = false;
};

// Least-squares fit of the family on n_samples forward draws at timestep t.
// The grid family minimizer is closed form (per-cell mean of the observed
// noise); the RBF family solves ridge-regularized normal equations.
std::pair<PredictorFunction, FitReport> fit_least_squares(
    const FamilySpec& family, const DataDistribution& dist,
    const NoiseSchedule& s, int t, std::int64_t n_samples, Rng& rng);

// g(xt) = q(xt) (eps*(xt) - f(xt)): the pointwise first-variation residual of
// the denoising objective. Identically zero iff f is the optimal predictor.
Eigen::VectorXd stationarity_residual(const PredictorFn& f,
                                      const DataDistribution& dist,
                                      const NoiseSchedule& s, int t,
                                      const Eigen::VectorXd& xt);

StationaritySummary stationarity_summary(const PredictorFn& f,
                                         const DataDistribution& dist,
                                         const NoiseSchedule& s, int t,
                                         const std::vector<Eigen::VectorXd>& probes);

// Smooth random direction for perturbing a predictor: a handful of Gaussian
// bumps centered at draws from q(x_t).
class RandomPerturbation {
 public:
  static RandomPerturbation draw(const DataDistribution& dist,
                                 const NoiseSchedule& s, int t, int n_bumps,
                                 Rng& rng);

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;

 private:
  std::vector<Eigen::VectorXd> centers_;
  Eigen::MatrixXd amplitudes_;  // n_bumps x d
  double bandwidth_ = 1.0;
};

struct GateauxReport {
  double linear_coeff = 0.0;      // fitted dF/ds at s = 0
  double linear_std_error = 0.0;  // from per-sample contributions
  double quad_coeff = 0.0;
  std::vector<double> s_values;
  std::vector<double> objective_values;
  std::int64_t n = 0;
  bool linear_zero = false;  // |linear_coeff| <= 3 std errors
};

// Estimates F_h(s) = E | eps - (f + s h)(xt) |^2 over a symmetric set of s
// with common random numbers, fits a quadratic in s, and reports the linear
// coefficient with its standard error.
GateauxReport gateaux_derivative_check(const PredictorFn& f,
                                       const PredictorFn& h,
                                       const DataDistribution& dist,
                                       const NoiseSchedule& s, int t,
                                       const std::vector<double>& s_values,
                                       std::int64_t n, Rng& rng);

// Density-weighted RMSE between f and the exact predictor on draws from
// q(x_t), split by density decile. Probes for which exclude() is true (e.g.
// flagged grid cells) are dropped from every aggregate.
OracleComparison compare_to_oracle(
    const PredictorFn& f, const DataDistribution& dist, const NoiseSchedule& s,
    int t, std::int64_t n_eval, Rng& rng,
    const std::function<bool(const Eigen::VectorXd&)>& exclude = nullptr);

}  // namespace epsoracle
