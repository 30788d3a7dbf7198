#pragma once

#include <string>

#include "epsoracle/config.hpp"

namespace epsoracle {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitGateFailure = 2;

struct RunOptions {
  std::string out_dir;  // already resolved; must exist
  int jobs = 1;
};

// --out flag beats the config, which beats $EPSORACLE_OUT, which beats ".".
// Creates the directory.
std::string resolve_out_dir(const ExperimentConfig& cfg, const std::string& cli_out);

int run_verify_identity(const ExperimentConfig& cfg, const RunOptions& opt);
int run_verify_theorem(const ExperimentConfig& cfg, const RunOptions& opt);
int run_train(const ExperimentConfig& cfg, const RunOptions& opt);
int run_sample(const ExperimentConfig& cfg, const RunOptions& opt);
int run_report(const std::string& dir);

}  // namespace epsoracle
