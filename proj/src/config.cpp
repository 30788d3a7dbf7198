#include "epsoracle/config.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace epsoracle {
namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error("config: " + msg);
}

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) fail(std::string("missing required field '") + key + "'");
  return *it;
}

// Scalars and 1-element arrays both denote points on the line.
Eigen::VectorXd parse_vector(const json& j, const char* what) {
  if (j.is_number()) {
    Eigen::VectorXd v(1);
    v[0] = j.get<double>();
    return v;
  }
  if (!j.is_array() || j.empty()) fail(std::string(what) + " must be a number or nonempty array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(std::string(what) + " has a non-numeric entry");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd parse_matrix(const json& j, const char* what) {
  if (j.is_number()) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = j.get<double>();
    return m;
  }
  if (!j.is_array() || j.empty()) fail(std::string(what) + " must be a matrix");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::VectorXd row = parse_vector(j[static_cast<std::size_t>(r)], what);
    if (r == 0) m.resize(rows, row.size());
    if (row.size() != m.cols()) fail(std::string(what) + " has ragged rows");
    m.row(r) = row;
  }
  return m;
}

}  // namespace

NoiseSchedule ScheduleSpec::build() const {
  if (type == "linear") return NoiseSchedule::linear(T, beta_start, beta_end);
  if (type == "explicit") {
    Eigen::VectorXd b(static_cast<Eigen::Index>(betas.size()));
    for (std::size_t i = 0; i < betas.size(); ++i) b[static_cast<Eigen::Index>(i)] = betas[i];
    return NoiseSchedule::from_betas(b);
  }
  fail("schedule type must be 'linear' or 'explicit', got '" + type + "'");
}

ScheduleSpec schedule_spec_from_json(const json& j) {
  if (!j.is_object()) fail("schedule must be an object");
  ScheduleSpec spec;
  spec.type = require(j, "type").get<std::string>();
  if (spec.type == "linear") {
    spec.T = require(j, "T").get<int>();
    spec.beta_start = require(j, "beta_start").get<double>();
    spec.beta_end = require(j, "beta_end").get<double>();
  } else if (spec.type == "explicit") {
    const json& betas = require(j, "betas");
    if (!betas.is_array() || betas.empty()) fail("explicit schedule needs a nonempty 'betas' array");
    spec.betas = betas.get<std::vector<double>>();
    spec.T = static_cast<int>(spec.betas.size());
  } else {
    fail("schedule type must be 'linear' or 'explicit', got '" + spec.type + "'");
  }
  return spec;
}

json schedule_spec_to_json(const ScheduleSpec& spec) {
  json j;
  j["type"] = spec.type;
  if (spec.type == "linear") {
    j["T"] = spec.T;
    j["beta_start"] = spec.beta_start;
    j["beta_end"] = spec.beta_end;
  } else {
    j["betas"] = spec.betas;
  }
  return j;
}

DataDistribution distribution_from_json(const json& j) {
  if (!j.is_object()) fail("distribution must be an object");
  const std::string type = require(j, "type").get<std::string>();
  if (type == "discrete") {
    const json& points_json = require(j, "points");
    if (!points_json.is_array() || points_json.empty()) fail("discrete points must be a nonempty array");
    std::vector<Eigen::VectorXd> points;
    for (const json& p : points_json) points.push_back(parse_vector(p, "points"));
    Eigen::VectorXd weights = parse_vector(require(j, "weights"), "weights");
    return DataDistribution::discrete(std::move(points), std::move(weights));
  }
  if (type == "gmm") {
    Eigen::VectorXd weights = parse_vector(require(j, "weights"), "weights");
    const json& means_json = require(j, "means");
    const json& covs_json = require(j, "covs");
    if (!means_json.is_array() || !covs_json.is_array()) fail("gmm means/covs must be arrays");
    if (means_json.size() != covs_json.size() ||
        means_json.size() != static_cast<std::size_t>(weights.size()))
      fail("gmm weights, means and covs disagree on the component count");
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
    for (std::size_t k = 0; k < means_json.size(); ++k) {
      means.push_back(parse_vector(means_json[k], "means"));
      covs.push_back(parse_matrix(covs_json[k], "covs"));
    }
    return DataDistribution::mixture(std::move(weights), std::move(means), std::move(covs));
  }
  fail("distribution type must be 'discrete' or 'gmm', got '" + type + "'");
}

json distribution_to_json(const DataDistribution& dist) {
  json j;
  if (dist.is_discrete()) {
    const DiscreteData& d = dist.as_discrete();
    j["type"] = "discrete";
    json points = json::array();
    for (const Eigen::VectorXd& p : d.points) {
      json row = json::array();
      for (Eigen::Index c = 0; c < p.size(); ++c) row.push_back(p[c]);
      points.push_back(std::move(row));
    }
    j["points"] = std::move(points);
    j["weights"] = std::vector<double>(d.weights.data(), d.weights.data() + d.weights.size());
  } else {
    const MixtureData& m = dist.as_mixture();
    j["type"] = "gmm";
    j["weights"] = std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size());
    json means = json::array();
    json covs = json::array();
    for (std::size_t k = 0; k < m.means.size(); ++k) {
      json mean = json::array();
      for (Eigen::Index c = 0; c < m.means[k].size(); ++c) mean.push_back(m.means[k][c]);
      means.push_back(std::move(mean));
      json cov = json::array();
      for (Eigen::Index r = 0; r < m.covs[k].rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.covs[k].cols(); ++c) row.push_back(m.covs[k](r, c));
        cov.push_back(std::move(row));
      }
      covs.push_back(std::move(cov));
    }
    j["means"] = std::move(means);
    j["covs"] = std::move(covs);
  }
  return j;
}

json predictor_to_json(const PredictorFunction& f) {
  json j;
  j["t"] = f.t;
  if (f.is_grid()) {
    const GridPredictor& g = f.grid();
    j["family"] = "grid";
    j["lo"] = std::vector<double>(g.lo().data(), g.lo().data() + g.lo().size());
    j["hi"] = std::vector<double>(g.hi().data(), g.hi().data() + g.hi().size());
    j["cells"] = g.cells();
    json values = json::array();
    for (Eigen::Index r = 0; r < g.values().rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < g.values().cols(); ++c) row.push_back(g.values()(r, c));
      values.push_back(std::move(row));
    }
    j["values"] = std::move(values);
    std::vector<int> filled(g.filled().size());
    for (std::size_t i = 0; i < filled.size(); ++i) filled[i] = g.filled()[i] ? 1 : 0;
    j["filled"] = std::move(filled);
  } else {
    const RbfPredictor& r = f.rbf();
    j["family"] = "rbf";
    json centers = json::array();
    for (const Eigen::VectorXd& c : r.centers()) {
      json row = json::array();
      for (Eigen::Index i = 0; i < c.size(); ++i) row.push_back(c[i]);
      centers.push_back(std::move(row));
    }
    j["centers"] = std::move(centers);
    j["bandwidth"] = r.bandwidth();
    json coeffs = json::array();
    for (Eigen::Index rr = 0; rr < r.coeffs().rows(); ++rr) {
      json row = json::array();
      for (Eigen::Index c = 0; c < r.coeffs().cols(); ++c) row.push_back(r.coeffs()(rr, c));
      coeffs.push_back(std::move(row));
    }
    j["coeffs"] = std::move(coeffs);
  }
  return j;
}

PredictorFunction predictor_from_json(const json& j) {
  if (!j.is_object()) fail("predictor must be an object");
  const int t = require(j, "t").get<int>();
  const std::string family = require(j, "family").get<std::string>();
  if (family == "grid") {
    const Eigen::VectorXd lo = parse_vector(require(j, "lo"), "lo");
    const Eigen::VectorXd hi = parse_vector(require(j, "hi"), "hi");
    const std::vector<int> cells = require(j, "cells").get<std::vector<int>>();
    GridPredictor g(lo, hi, cells);
    const Eigen::MatrixXd values = parse_matrix(require(j, "values"), "values");
    if (values.rows() != g.total_cells() || values.cols() != g.dim())
      fail("predictor values shape does not match the grid");
    g.values() = values;
    const std::vector<int> filled = require(j, "filled").get<std::vector<int>>();
    if (filled.size() != g.filled().size()) fail("predictor filled flags have the wrong length");
    for (std::size_t i = 0; i < filled.size(); ++i) g.filled()[i] = filled[i] ? 1 : 0;
    return PredictorFunction{t, std::move(g)};
  }
  if (family == "rbf") {
    const json& centers_json = require(j, "centers");
    if (!centers_json.is_array() || centers_json.empty()) fail("rbf predictor needs centers");
    std::vector<Eigen::VectorXd> centers;
    for (const json& c : centers_json) centers.push_back(parse_vector(c, "centers"));
    const double bandwidth = require(j, "bandwidth").get<double>();
    const Eigen::MatrixXd coeffs = parse_matrix(require(j, "coeffs"), "coeffs");
    return PredictorFunction{t, RbfPredictor(std::move(centers), bandwidth, coeffs)};
  }
  fail("predictor family must be 'grid' or 'rbf', got '" + family + "'");
}

FamilySpec family_spec_from_json(const std::string& family, const json& options,
                                 int dim) {
  const json opts = options.is_null() ? json::object() : options;
  if (family == "grid") {
    GridFamilySpec spec;
    if (opts.contains("lo")) spec.lo = parse_vector(opts["lo"], "family lo");
    if (opts.contains("hi")) spec.hi = parse_vector(opts["hi"], "family hi");
    if (opts.contains("cells")) {
      if (opts["cells"].is_number_integer()) {
        spec.cells.assign(static_cast<std::size_t>(dim), opts["cells"].get<int>());
      } else {
        spec.cells = opts["cells"].get<std::vector<int>>();
      }
    }
    if (opts.contains("pad_sigmas")) spec.pad_sigmas = opts["pad_sigmas"].get<double>();
    return spec;
  }
  if (family == "rbf") {
    RbfFamilySpec spec;
    if (opts.contains("centers_per_axis")) spec.centers_per_axis = opts["centers_per_axis"].get<int>();
    if (opts.contains("bandwidth_scale")) spec.bandwidth_scale = opts["bandwidth_scale"].get<double>();
    if (opts.contains("ridge")) spec.ridge = opts["ridge"].get<double>();
    if (opts.contains("lo")) spec.lo = parse_vector(opts["lo"], "family lo");
    if (opts.contains("hi")) spec.hi = parse_vector(opts["hi"], "family hi");
    if (opts.contains("pad_sigmas")) spec.pad_sigmas = opts["pad_sigmas"].get<double>();
    return spec;
  }
  fail("train family must be 'grid', 'rbf' or 'oracle', got '" + family + "'");
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) fail("top-level config must be an object");
  ExperimentConfig cfg;
  cfg.raw = j;
  cfg.name = j.value("name", std::string("unnamed"));

  if (!j.contains("seed")) fail("'seed' is required; runs are never wall-clock seeded");
  if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
    fail("'seed' must be a nonnegative integer");
  const std::int64_t seed = j["seed"].get<std::int64_t>();
  if (seed < 0) fail("'seed' must be nonnegative");
  cfg.seed = static_cast<std::uint64_t>(seed);

  cfg.schedule = schedule_spec_from_json(require(j, "schedule"));
  cfg.distribution = distribution_from_json(require(j, "distribution"));

  const int T = cfg.schedule.T;
  if (j.contains("timesteps")) {
    cfg.timesteps = j["timesteps"].get<std::vector<int>>();
    if (cfg.timesteps.empty()) fail("'timesteps' must be nonempty when given");
  } else {
    cfg.timesteps = {1, std::max(1, T / 4), std::max(1, T / 2), std::max(1, 3 * T / 4), T};
    std::sort(cfg.timesteps.begin(), cfg.timesteps.end());
    cfg.timesteps.erase(std::unique(cfg.timesteps.begin(), cfg.timesteps.end()),
                        cfg.timesteps.end());
  }
  for (int t : cfg.timesteps)
    if (t < 1 || t > T) fail("timestep " + std::to_string(t) + " is outside [1, T]");

  cfg.probes = j.value("probes", 100);
  if (cfg.probes < 1) fail("'probes' must be >= 1");
  cfg.tol = j.value("tol", 1e-8);
  if (cfg.tol < 0) fail("'tol' must be >= 0");
  cfg.out_dir = j.value("out_dir", std::string());
  cfg.far_tail_probes = j.value("far_tail_probes", false);
  if (j.contains("debug") && j["debug"].is_object())
    cfg.corrupt_scale = j["debug"].value("corrupt_scale", 1.0);

  if (j.contains("theorem")) {
    const json& t = j["theorem"];
    cfg.theorem.probes = t.value("probes", cfg.theorem.probes);
    cfg.theorem.quad_nodes = t.value("quad_nodes", cfg.theorem.quad_nodes);
    cfg.theorem.quad_pad_sigmas = t.value("quad_pad_sigmas", cfg.theorem.quad_pad_sigmas);
    cfg.theorem.quad_tol = t.value("quad_tol", cfg.theorem.quad_tol);
    cfg.theorem.mc_n = t.value("mc_n", cfg.theorem.mc_n);
    cfg.theorem.mc_sigma_gate = t.value("mc_sigma_gate", cfg.theorem.mc_sigma_gate);
    cfg.theorem.mc_pass_fraction = t.value("mc_pass_fraction", cfg.theorem.mc_pass_fraction);
    if (cfg.theorem.probes < 1) fail("theorem.probes must be >= 1");
    if (cfg.theorem.mc_n != 0 && cfg.theorem.mc_n < 100)
      fail("theorem.mc_n must be 0 (skip) or >= 100");
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    cfg.train.family = t.value("family", cfg.train.family);
    if (t.contains("family_options")) cfg.train.family_options = t["family_options"];
    if (t.contains("timesteps")) {
      cfg.train.timesteps = t["timesteps"].get<std::vector<int>>();
      for (int ts : cfg.train.timesteps)
        if (ts < 1 || ts > T) fail("train timestep " + std::to_string(ts) + " is outside [1, T]");
    }
    cfg.train.n_samples = t.value("n_samples", cfg.train.n_samples);
    cfg.train.n_eval = t.value("n_eval", cfg.train.n_eval);
    cfg.train.rmse_gate = t.value("rmse_gate", cfg.train.rmse_gate);
    cfg.train.gateaux_directions = t.value("gateaux_directions", cfg.train.gateaux_directions);
    if (t.contains("gateaux_s_values"))
      cfg.train.gateaux_s_values = t["gateaux_s_values"].get<std::vector<double>>();
    cfg.train.gateaux_n = t.value("gateaux_n", cfg.train.gateaux_n);
    cfg.train.gateaux_bumps = t.value("gateaux_bumps", cfg.train.gateaux_bumps);
    cfg.train.stationarity_gate = t.value("stationarity_gate", cfg.train.stationarity_gate);
    cfg.train.stationarity_probes = t.value("stationarity_probes", cfg.train.stationarity_probes);
    cfg.train.save_predictors = t.value("save_predictors", cfg.train.save_predictors);
    if (cfg.train.family != "grid" && cfg.train.family != "rbf" && cfg.train.family != "oracle")
      fail("train.family must be 'grid', 'rbf' or 'oracle'");
    if (cfg.train.n_samples < 1) fail("train.n_samples must be >= 1");
    if (cfg.train.gateaux_directions < 1) fail("train.gateaux_directions must be >= 1");
  }

  if (j.contains("sample")) {
    const json& t = j["sample"];
    cfg.sample.n_samples = t.value("n_samples", cfg.sample.n_samples);
    cfg.sample.variance_mode = t.value("variance_mode", cfg.sample.variance_mode);
    cfg.sample.predictor = t.value("predictor", cfg.sample.predictor);
    cfg.sample.predictor_dir = t.value("predictor_dir", cfg.sample.predictor_dir);
    cfg.sample.fit_n_per_t = t.value("fit_n_per_t", cfg.sample.fit_n_per_t);
    cfg.sample.mean_gate = t.value("mean_gate", cfg.sample.mean_gate);
    if (t.contains("w1_gate")) cfg.sample.w1_gate = t["w1_gate"].get<double>();
    if (t.contains("variance_band")) {
      const auto band = t["variance_band"].get<std::vector<double>>();
      if (band.size() != 2 || band[0] > band[1]) fail("sample.variance_band must be [lo, hi]");
      cfg.sample.variance_band = {band[0], band[1]};
    }
    cfg.sample.assignment_gate = t.value("assignment_gate", cfg.sample.assignment_gate);
    cfg.sample.assignment_tol = t.value("assignment_tol", cfg.sample.assignment_tol);
    if (cfg.sample.n_samples < 1) fail("sample.n_samples must be >= 1");
    if (cfg.sample.variance_mode != "beta" && cfg.sample.variance_mode != "beta_tilde")
      fail("sample.variance_mode must be 'beta' or 'beta_tilde'");
    if (cfg.sample.predictor != "oracle" && cfg.sample.predictor != "fitted" &&
        cfg.sample.predictor != "zero")
      fail("sample.predictor must be 'oracle', 'fitted' or 'zero'");
  }

  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail("'" + path + "' is not valid JSON: " + e.what());
  }
  ExperimentConfig cfg = config_from_json(j);
  if (cfg.name == "unnamed") {
    // Fall back to the file stem so reports stay tellable apart.
    std::string stem = path;
    if (auto slash = stem.find_last_of("/\\"); slash != std::string::npos)
      stem = stem.substr(slash + 1);
    if (auto dot = stem.find_last_of('.'); dot != std::string::npos) stem = stem.substr(0, dot);
    if (!stem.empty()) {
      cfg.name = stem;
      cfg.raw["name"] = stem;
    }
  }
  return cfg;
}

std::string config_hash(const json& j) {
  const std::string dump = j.dump();
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64-bit offset basis
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace epsoracle
