#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "epsoracle/distribution.hpp"
#include "epsoracle/schedule.hpp"
#include "epsoracle/trainer.hpp"

namespace epsoracle {

using json = nlohmann::json;

struct ScheduleSpec {
  std::string type = "linear";  // "linear" | "explicit"
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::vector<double> betas;  // explicit schedules only

  NoiseSchedule build() const;
};

ScheduleSpec schedule_spec_from_json(const json& j);
json schedule_spec_to_json(const ScheduleSpec& spec);

DataDistribution distribution_from_json(const json& j);
json distribution_to_json(const DataDistribution& dist);

json predictor_to_json(const PredictorFunction& f);
PredictorFunction predictor_from_json(const json& j);

struct TheoremSettings {
  int probes = 20;
  int quad_nodes = 2049;
  double quad_pad_sigmas = 8.0;
  double quad_tol = 1e-6;  // gate on min(abs, rel) error vs closed form
  std::int64_t mc_n = 100000;
  double mc_sigma_gate = 4.0;
  double mc_pass_fraction = 0.99;
};

struct TrainSettings {
  std::string family = "grid";  // "grid" | "rbf" | "oracle"
  json family_options;          // forwarded to the family spec
  std::vector<int> timesteps;   // empty: use the global timestep list
  std::int64_t n_samples = 200000;
  std::int64_t n_eval = 20000;
  double rmse_gate = 0.05;
  int gateaux_directions = 10;
  std::vector<double> gateaux_s_values = {-0.2, -0.1, -0.05, 0.05, 0.1, 0.2};
  std::int64_t gateaux_n = 200000;
  int gateaux_bumps = 3;
  double stationarity_gate = 1e-12;  // applies when family == "oracle"
  int stationarity_probes = 50;
  bool save_predictors = false;
};

struct SampleSettings {
  std::int64_t n_samples = 10000;
  std::string variance_mode = "beta";  // "beta" | "beta_tilde"
  std::string predictor = "oracle";    // "oracle" | "fitted" | "zero"
  std::string predictor_dir;           // optional pre-fitted grid predictors
  std::int64_t fit_n_per_t = 20000;    // on-the-fly fits when predictor == "fitted"
  double mean_gate = 0.02;
  std::optional<double> w1_gate;                        // 1D only
  std::optional<std::pair<double, double>> variance_band;  // ratio vs analytic
  bool assignment_gate = false;  // discrete data: nearest-atom frequencies
  double assignment_tol = 0.02;
};

struct ExperimentConfig {
  json raw;  // effective config after CLI overrides; hashed into every row
  std::string name;
  ScheduleSpec schedule;
  std::optional<DataDistribution> distribution;
  std::vector<int> timesteps;
  int probes = 100;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  std::string out_dir;  // empty => EPSORACLE_OUT env => "."
  bool far_tail_probes = false;
  double corrupt_scale = 1.0;  // debug: != 1 corrupts the score path
  TheoremSettings theorem;
  TrainSettings train;
  SampleSettings sample;

  const DataDistribution& dist() const { return *distribution; }
};

ExperimentConfig config_from_json(const json& j);
ExperimentConfig load_config(const std::string& path);

// FNV-1a over the canonical dump of the effective config.
std::string config_hash(const json& j);

FamilySpec family_spec_from_json(const std::string& family, const json& options,
                                 int dim);

}  // namespace epsoracle
