#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "epsoracle/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"exact DDPM noise predictor: closed-form oracle, cross-checks, sampling"};
  app.require_subcommand(1);

  std::string config_path, out_dir, report_dir;
  long long seed_flag = -1;  // negative means "keep the config seed"
  double tol_flag = std::numeric_limits<double>::quiet_NaN();
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir,
                    "output directory (default: config out_dir, then $EPSORACLE_OUT, then '.')");
    sub->add_option("--seed", seed_flag, "override the config seed");
    sub->add_option("--tol", tol_flag, "override the config tolerance");
    sub->add_option("--jobs", jobs, "worker threads for probe sweeps");
  };

  CLI::App* c_theorem =
      app.add_subcommand("verify-theorem", "closed form vs quadrature and Monte Carlo");
  add_common(c_theorem);
  CLI::App* c_identity =
      app.add_subcommand("verify-identity", "posterior-mean route vs score route");
  add_common(c_identity);
  CLI::App* c_train =
      app.add_subcommand("train", "least-squares fit with stationarity and derivative checks");
  add_common(c_train);
  CLI::App* c_sample = app.add_subcommand("sample", "ancestral reverse-process sampling");
  add_common(c_sample);
  CLI::App* c_report = app.add_subcommand("report", "aggregate the outputs in a directory");
  c_report->add_option("--out", report_dir, "directory holding suite outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return epsoracle::kExitConfigError;
  }

  try {
    if (*c_report) {
      std::string dir = report_dir;
      if (dir.empty()) {
        const char* env = std::getenv("EPSORACLE_OUT");
        dir = (env && *env) ? env : ".";
      }
      return epsoracle::run_report(dir);
    }

    epsoracle::ExperimentConfig cfg = epsoracle::load_config(config_path);
    if (seed_flag >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed_flag);
      cfg.raw["seed"] = cfg.seed;
    }
    if (!std::isnan(tol_flag)) {
      if (tol_flag < 0) throw std::runtime_error("--tol must be >= 0");
      cfg.tol = tol_flag;
      cfg.raw["tol"] = tol_flag;
    }
    if (jobs < 1) throw std::runtime_error("--jobs must be >= 1");

    epsoracle::RunOptions opt;
    opt.out_dir = epsoracle::resolve_out_dir(cfg, out_dir);
    opt.jobs = jobs;

    if (*c_theorem) return epsoracle::run_verify_theorem(cfg, opt);
    if (*c_identity) return epsoracle::run_verify_identity(cfg, opt);
    if (*c_train) return epsoracle::run_train(cfg, opt);
    if (*c_sample) return epsoracle::run_sample(cfg, opt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return epsoracle::kExitConfigError;
  }
  return epsoracle::kExitConfigError;
}
