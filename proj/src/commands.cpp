#include "epsoracle/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "epsoracle/bruteforce.hpp"
#include "epsoracle/oracle.hpp"
#include "epsoracle/reporting.hpp"
#include "epsoracle/sampler.hpp"
#include "epsoracle/trainer.hpp"

namespace epsoracle {
namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

json base_row(const ExperimentConfig& cfg, const char* method) {
  json row;
  row["config"] = cfg.name;
  row["config_hash"] = config_hash(cfg.raw);
  row["seed"] = cfg.seed;
  row["method"] = method;
  return row;
}

// Index-slot parallelism: slot i is written only by the worker that owns i,
// so results are identical to the serial order regardless of thread count.
void parallel_for(std::int64_t n, int jobs, const std::function<void(std::int64_t)>& body) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  const int n_threads = static_cast<int>(std::min<std::int64_t>(jobs, n));
  std::vector<std::thread> workers;
  std::mutex err_mu;
  std::exception_ptr first_error;
  for (int k = 0; k < n_threads; ++k) {
    workers.emplace_back([&, k] {
      try {
        for (std::int64_t i = k; i < n; i += n_threads) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

constexpr double kDenomFloor = 1e-300;

}  // namespace

std::string resolve_out_dir(const ExperimentConfig& cfg, const std::string& cli_out) {
  std::string dir = cli_out;
  if (dir.empty()) dir = cfg.out_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("EPSORACLE_OUT"); env && *env) dir = env;
  }
  if (dir.empty()) dir = ".";
  ensure_directory(dir);
  return dir;
}

int run_verify_identity(const ExperimentConfig& cfg, const RunOptions& opt) {
  Timer timer;
  const NoiseSchedule s = cfg.schedule.build();
  const DataDistribution& dist = cfg.dist();

  JsonlWriter rows(opt.out_dir + "/identity_rows.jsonl");
  CsvWriter csv(opt.out_dir + "/identity_summary.csv",
                {"t", "n_probes", "max_abs_err", "max_rel_err", "pass_rate"});

  struct ProbeResult {
    Eigen::VectorXd probe, eps_direct, eps_score;
    double abs_err = 0.0, rel_err = 0.0;
    bool pass = false;
  };

  bool all_pass = true;
  double worst_abs = 0.0, worst_rel = 0.0;
  std::int64_t total_probes = 0;

  for (int t : cfg.timesteps) {
    Rng rng = make_rng(cfg.seed, 0x1d, static_cast<std::uint64_t>(t));
    const std::vector<Eigen::VectorXd> probes =
        draw_probes(dist, s, t, cfg.probes, rng, cfg.far_tail_probes);
    std::vector<ProbeResult> results(probes.size());

    parallel_for(static_cast<std::int64_t>(probes.size()), opt.jobs, [&](std::int64_t i) {
      ProbeResult r;
      r.probe = probes[static_cast<std::size_t>(i)];
      r.eps_direct = epsilon_star(dist, s, t, r.probe);
      r.eps_score = epsilon_from_score(dist, s, t, r.probe);
      if (cfg.corrupt_scale != 1.0) r.eps_score *= cfg.corrupt_scale;
      r.abs_err = inf_norm(r.eps_direct - r.eps_score);
      r.rel_err = r.abs_err / std::max(inf_norm(r.eps_direct), kDenomFloor);
      r.pass = r.abs_err <= cfg.tol || r.rel_err <= cfg.tol;
      results[static_cast<std::size_t>(i)] = std::move(r);
    });

    double max_abs = 0.0, max_rel = 0.0;
    std::int64_t n_pass = 0;
    for (const ProbeResult& r : results) {
      max_abs = std::max(max_abs, r.abs_err);
      max_rel = std::max(max_rel, r.rel_err);
      n_pass += r.pass ? 1 : 0;
      json row = base_row(cfg, "closed_form_vs_score");
      row["t"] = t;
      row["probe"] = vector_to_json(r.probe);
      row["eps_direct"] = vector_to_json(r.eps_direct);
      row["eps_score"] = vector_to_json(r.eps_score);
      row["abs_err"] = r.abs_err;
      row["rel_err"] = r.rel_err;
      row["pass"] = r.pass;
      rows.write(row);
    }
    const double pass_rate =
        results.empty() ? 0.0 : static_cast<double>(n_pass) / static_cast<double>(results.size());
    csv.write_row({std::to_string(t), std::to_string(results.size()), format_double(max_abs),
                   format_double(max_rel), format_double(pass_rate)});
    worst_abs = std::max(worst_abs, max_abs);
    worst_rel = std::max(worst_rel, max_rel);
    total_probes += static_cast<std::int64_t>(results.size());
    if (n_pass != static_cast<std::int64_t>(results.size())) all_pass = false;
    std::printf("verify-identity %-12s t=%-4d probes=%-4zu max_abs=%.3e max_rel=%.3e %s\n",
                cfg.name.c_str(), t, results.size(), max_abs, max_rel,
                n_pass == static_cast<std::int64_t>(results.size()) ? "ok" : "FAIL");
  }

  json summary;
  summary["command"] = "verify-identity";
  summary["config"] = cfg.name;
  summary["config_hash"] = config_hash(cfg.raw);
  summary["seed"] = cfg.seed;
  summary["tol"] = cfg.tol;
  summary["timesteps"] = cfg.timesteps;
  summary["total_probes"] = total_probes;
  summary["worst_abs_err"] = worst_abs;
  summary["worst_rel_err"] = worst_rel;
  summary["pass"] = all_pass;
  summary["runtime_seconds"] = timer.seconds();
  summary["generated_at"] = timestamp_utc();
  write_json_file(opt.out_dir + "/identity_summary.json", summary);

  std::printf("verify-identity: %s (worst abs %.3e, worst rel %.3e, %.2fs)\n",
              all_pass ? "PASS" : "FAIL", worst_abs, worst_rel, timer.seconds());
  return all_pass ? kExitOk : kExitGateFailure;
}

int run_verify_theorem(const ExperimentConfig& cfg, const RunOptions& opt) {
  Timer timer;
  const NoiseSchedule s = cfg.schedule.build();
  const DataDistribution& dist = cfg.dist();
  GridSpec grid;
  grid.nodes_per_axis = cfg.theorem.quad_nodes;
  grid.pad_sigmas = cfg.theorem.quad_pad_sigmas;
  grid.coarse_tol = cfg.theorem.quad_tol;

  JsonlWriter rows(opt.out_dir + "/theorem_rows.jsonl");
  CsvWriter csv(opt.out_dir + "/theorem_summary.csv",
                {"method", "t", "n_probes", "max_err", "pass_rate"});

  struct ProbeResult {
    Eigen::VectorXd probe, ref;
    EstimateWithError quad, mc;
    double quad_err = 0.0;  // min(abs, rel) vs closed form
    double quad_abs = 0.0, quad_rel = 0.0;
    double mc_max_abs = 0.0;
    bool quad_pass = false, mc_pass = false;
  };

  bool quad_all_pass = true;
  double quad_worst = 0.0;
  std::int64_t mc_pass_count = 0, mc_total = 0;

  for (int t : cfg.timesteps) {
    Rng rng = make_rng(cfg.seed, 0x7e, static_cast<std::uint64_t>(t));
    const std::vector<Eigen::VectorXd> probes =
        draw_probes(dist, s, t, cfg.theorem.probes, rng, false);
    std::vector<ProbeResult> results(probes.size());

    parallel_for(static_cast<std::int64_t>(probes.size()), opt.jobs, [&](std::int64_t i) {
      ProbeResult r;
      r.probe = probes[static_cast<std::size_t>(i)];
      r.ref = epsilon_star(dist, s, t, r.probe);
      r.quad = epsilon_star_quadrature(dist, s, t, r.probe, grid);
      r.quad_abs = inf_norm(r.quad.value - r.ref);
      r.quad_rel = r.quad_abs / std::max(inf_norm(r.ref), kDenomFloor);
      r.quad_err = std::min(r.quad_abs, r.quad_rel);
      r.quad_pass = r.quad_err <= cfg.theorem.quad_tol && !r.quad.unreliable;

      if (cfg.theorem.mc_n > 0) {
        Rng mc_rng = make_rng(cfg.seed, 0x3c0000u + static_cast<std::uint64_t>(t),
                              static_cast<std::uint64_t>(i));
        r.mc = epsilon_star_monte_carlo(dist, s, t, r.probe, cfg.theorem.mc_n, mc_rng);
        bool within = !r.mc.unreliable;
        double max_abs = 0.0;
        for (Eigen::Index j = 0; j < r.ref.size(); ++j) {
          const double diff = std::abs(r.mc.value[j] - r.ref[j]);
          max_abs = std::max(max_abs, diff);
          // Degenerate-posterior slack: when every draw carries the same noise
          // value (single effective atom) the standard error is exactly 0 and
          // the n-term accumulation leaves ~n*ulp of roundoff, so the 4-sigma
          // band needs a floor well above that but far below any genuine se.
          const double slack = 1e-9 * (1.0 + std::abs(r.ref[j]));
          if (diff > cfg.theorem.mc_sigma_gate * r.mc.std_error[j] + slack) within = false;
        }
        r.mc_max_abs = max_abs;
        r.mc_pass = within;
      }
      results[static_cast<std::size_t>(i)] = std::move(r);
    });

    double t_quad_max = 0.0, t_mc_max = 0.0;
    std::int64_t t_quad_pass = 0, t_mc_pass = 0;
    for (const ProbeResult& r : results) {
      t_quad_max = std::max(t_quad_max, r.quad_err);
      t_mc_max = std::max(t_mc_max, r.mc_max_abs);
      t_quad_pass += r.quad_pass ? 1 : 0;
      t_mc_pass += r.mc_pass ? 1 : 0;

      json ref_row = base_row(cfg, "closed_form");
      ref_row["t"] = t;
      ref_row["probe"] = vector_to_json(r.probe);
      ref_row["value"] = vector_to_json(r.ref);
      rows.write(ref_row);

      json quad_row = base_row(cfg, "quadrature");
      quad_row["t"] = t;
      quad_row["probe"] = vector_to_json(r.probe);
      quad_row["value"] = vector_to_json(r.quad.value);
      quad_row["bound"] = r.quad.bound;
      quad_row["n_evals"] = r.quad.n_evals;
      quad_row["abs_err"] = r.quad_abs;
      quad_row["rel_err"] = r.quad_rel;
      quad_row["unreliable"] = r.quad.unreliable;
      if (!r.quad.note.empty()) quad_row["note"] = r.quad.note;
      quad_row["pass"] = r.quad_pass;
      rows.write(quad_row);

      if (cfg.theorem.mc_n > 0) {
        json mc_row = base_row(cfg, "monte_carlo");
        mc_row["t"] = t;
        mc_row["probe"] = vector_to_json(r.probe);
        mc_row["value"] = vector_to_json(r.mc.value);
        mc_row["std_error"] = vector_to_json(r.mc.std_error);
        mc_row["n_evals"] = r.mc.n_evals;
        mc_row["max_abs_err"] = r.mc_max_abs;
        mc_row["unreliable"] = r.mc.unreliable;
        if (!r.mc.note.empty()) mc_row["note"] = r.mc.note;
        mc_row["pass"] = r.mc_pass;
        rows.write(mc_row);
      }
    }
    const auto n = static_cast<double>(results.size());
    csv.write_row({"quadrature", std::to_string(t), std::to_string(results.size()),
                   format_double(t_quad_max),
                   format_double(results.empty() ? 0.0 : t_quad_pass / n)});
    if (cfg.theorem.mc_n > 0) {
      csv.write_row({"monte_carlo", std::to_string(t), std::to_string(results.size()),
                     format_double(t_mc_max),
                     format_double(results.empty() ? 0.0 : t_mc_pass / n)});
      mc_pass_count += t_mc_pass;
      mc_total += static_cast<std::int64_t>(results.size());
    }
    quad_worst = std::max(quad_worst, t_quad_max);
    if (t_quad_pass != static_cast<std::int64_t>(results.size())) quad_all_pass = false;
    std::printf(
        "verify-theorem %-12s t=%-4d probes=%-3zu quad_max_err=%.3e mc_within=%lld/%zu\n",
        cfg.name.c_str(), t, results.size(), t_quad_max,
        static_cast<long long>(t_mc_pass), results.size());
  }

  const bool mc_skipped = cfg.theorem.mc_n == 0;
  const double mc_rate =
      mc_total ? static_cast<double>(mc_pass_count) / static_cast<double>(mc_total) : 0.0;
  const bool mc_ok = mc_skipped || mc_rate >= cfg.theorem.mc_pass_fraction;
  const bool pass = quad_all_pass && mc_ok;

  json summary;
  summary["command"] = "verify-theorem";
  summary["config"] = cfg.name;
  summary["config_hash"] = config_hash(cfg.raw);
  summary["seed"] = cfg.seed;
  summary["timesteps"] = cfg.timesteps;
  summary["quad_tol"] = cfg.theorem.quad_tol;
  summary["quad_worst_err"] = quad_worst;
  summary["quad_pass"] = quad_all_pass;
  summary["mc_n"] = cfg.theorem.mc_n;
  summary["mc_sigma_gate"] = cfg.theorem.mc_sigma_gate;
  summary["mc_skipped"] = mc_skipped;
  summary["mc_pass_rate"] = mc_rate;
  summary["mc_pass"] = mc_ok;
  summary["pass"] = pass;
  summary["runtime_seconds"] = timer.seconds();
  summary["generated_at"] = timestamp_utc();
  write_json_file(opt.out_dir + "/theorem_summary.json", summary);

  std::printf("verify-theorem: %s (quad worst %.3e, mc rate %.4f, %.2fs)\n",
              pass ? "PASS" : "FAIL", quad_worst, mc_rate, timer.seconds());
  return pass ? kExitOk : kExitGateFailure;
}

int run_train(const ExperimentConfig& cfg, const RunOptions& opt) {
  Timer timer;
  const NoiseSchedule s = cfg.schedule.build();
  const DataDistribution& dist = cfg.dist();
  const bool oracle_family = cfg.train.family == "oracle";

  JsonlWriter rows(opt.out_dir + "/train_rows.jsonl");
  if (cfg.train.save_predictors) ensure_directory(opt.out_dir + "/predictors");

  bool all_pass = true;
  json per_t = json::array();

  const std::vector<int>& train_ts =
      cfg.train.timesteps.empty() ? cfg.timesteps : cfg.train.timesteps;
  for (int t : train_ts) {
    json row = base_row(cfg, "train");
    row["t"] = t;
    row["family"] = cfg.train.family;

    PredictorFn f;
    std::function<bool(const Eigen::VectorXd&)> exclude;  // flagged-cell probes
    if (oracle_family) {
      f = [&dist, &s, t](const Eigen::VectorXd& x) { return epsilon_star(dist, s, t, x); };
    } else {
      const FamilySpec family =
          family_spec_from_json(cfg.train.family, cfg.train.family_options, dist.dim());
      Rng fit_rng = make_rng(cfg.seed, 0xf1, static_cast<std::uint64_t>(t));
      auto [pf, fit] = fit_least_squares(family, dist, s, t, cfg.train.n_samples, fit_rng);
      row["final_loss"] = fit.final_loss.value;
      row["final_loss_std_error"] = fit.final_loss.std_error;
      row["n_samples"] = fit.n_samples;
      row["n_dropped"] = fit.n_dropped;
      row["n_cells"] = fit.n_cells;
      row["n_empty_cells"] = fit.n_empty_cells;
      row["ridge"] = fit.ridge;
      row["ridge_bumped"] = fit.ridge_bumped;
      if (cfg.train.save_predictors) {
        write_json_file(opt.out_dir + "/predictors/predictor_t" + std::to_string(t) + ".json",
                        predictor_to_json(pf));
      }
      PredictorFunction owned = std::move(pf);
      exclude = [owned](const Eigen::VectorXd& x) { return owned.in_flagged_cell(x); };
      f = [owned](const Eigen::VectorXd& x) { return owned(x); };
    }

    Rng eval_rng = make_rng(cfg.seed, 0xe7, static_cast<std::uint64_t>(t));
    const OracleComparison cmp =
        compare_to_oracle(f, dist, s, t, cfg.train.n_eval, eval_rng, exclude);
    row["rmse_overall"] = cmp.rmse_overall;
    row["rmse_region"] = cmp.rmse_region;
    row["region_density_floor"] = cmp.region_density_floor;
    row["rmse_by_decile"] = cmp.rmse_by_decile;
    row["n_eval"] = cmp.n_eval;
    row["n_region"] = cmp.n_region;
    row["n_excluded"] = cmp.n_excluded;

    Rng stat_rng = make_rng(cfg.seed, 0x57, static_cast<std::uint64_t>(t));
    const std::vector<Eigen::VectorXd> stat_probes =
        draw_probes(dist, s, t, cfg.train.stationarity_probes, stat_rng, false);
    const StationaritySummary stat = stationarity_summary(f, dist, s, t, stat_probes);
    row["stationarity_mean"] = stat.mean_norm;
    row["stationarity_max"] = stat.max_norm;

    json directions = json::array();
    int gateaux_passes = 0;
    for (int d = 0; d < cfg.train.gateaux_directions; ++d) {
      Rng dir_rng = make_rng(cfg.seed, 0x6a,
                             static_cast<std::uint64_t>(t) * 1000u + static_cast<std::uint64_t>(d));
      const RandomPerturbation h =
          RandomPerturbation::draw(dist, s, t, cfg.train.gateaux_bumps, dir_rng);
      Rng crn_rng = make_rng(cfg.seed, 0x6b,
                             static_cast<std::uint64_t>(t) * 1000u + static_cast<std::uint64_t>(d));
      const GateauxReport rep = gateaux_derivative_check(
          f, [h](const Eigen::VectorXd& x) { return h(x); }, dist, s, t,
          cfg.train.gateaux_s_values, cfg.train.gateaux_n, crn_rng);
      gateaux_passes += rep.linear_zero ? 1 : 0;
      json dj;
      dj["direction"] = d;
      dj["linear_coeff"] = rep.linear_coeff;
      dj["linear_std_error"] = rep.linear_std_error;
      dj["quad_coeff"] = rep.quad_coeff;
      dj["linear_zero"] = rep.linear_zero;
      dj["n"] = rep.n;
      directions.push_back(std::move(dj));
    }
    row["gateaux"] = directions;
    row["gateaux_passes"] = gateaux_passes;

    const int need = (9 * cfg.train.gateaux_directions + 9) / 10;  // ceil(0.9 D)
    bool t_pass;
    if (oracle_family) {
      t_pass = stat.max_norm <= cfg.train.stationarity_gate && gateaux_passes >= need;
    } else {
      t_pass = cmp.rmse_region <= cfg.train.rmse_gate;
    }
    row["pass"] = t_pass;
    all_pass = all_pass && t_pass;
    rows.write(row);
    per_t.push_back(row);

    std::printf(
        "train %-12s t=%-4d family=%-6s rmse_region=%.4f stat_max=%.3e gateaux=%d/%d %s\n",
        cfg.name.c_str(), t, cfg.train.family.c_str(), cmp.rmse_region, stat.max_norm,
        gateaux_passes, cfg.train.gateaux_directions, t_pass ? "ok" : "FAIL");
  }

  json summary;
  summary["command"] = "train";
  summary["config"] = cfg.name;
  summary["config_hash"] = config_hash(cfg.raw);
  summary["seed"] = cfg.seed;
  summary["family"] = cfg.train.family;
  summary["per_timestep"] = per_t;
  summary["pass"] = all_pass;
  summary["runtime_seconds"] = timer.seconds();
  summary["generated_at"] = timestamp_utc();
  write_json_file(opt.out_dir + "/train_summary.json", summary);

  std::printf("train: %s (%.2fs)\n", all_pass ? "PASS" : "FAIL", timer.seconds());
  return all_pass ? kExitOk : kExitGateFailure;
}

int run_sample(const ExperimentConfig& cfg, const RunOptions& opt) {
  Timer timer;
  const NoiseSchedule s = cfg.schedule.build();
  const DataDistribution& dist = cfg.dist();
  const int dim = dist.dim();

  SamplerConfig scfg;
  scfg.n_samples = cfg.sample.n_samples;
  scfg.seed = cfg.seed;
  scfg.variance_mode =
      cfg.sample.variance_mode == "beta" ? VarianceMode::beta : VarianceMode::beta_tilde;

  TimePredictorFn predictor;
  if (cfg.sample.predictor == "oracle") {
    scfg.source = PredictorSource::oracle;
    predictor = [&dist, &s](const Eigen::VectorXd& x, int t) {
      return epsilon_star(dist, s, t, x);
    };
  } else if (cfg.sample.predictor == "zero") {
    scfg.source = PredictorSource::zero;
    predictor = [dim](const Eigen::VectorXd&, int) { return Eigen::VectorXd::Zero(dim).eval(); };
  } else {
    scfg.source = PredictorSource::fitted;
    auto fitted = std::make_shared<std::vector<PredictorFunction>>();
    fitted->reserve(static_cast<std::size_t>(s.T()));
    if (!cfg.sample.predictor_dir.empty()) {
      for (int t = 1; t <= s.T(); ++t) {
        const std::string path =
            cfg.sample.predictor_dir + "/predictor_t" + std::to_string(t) + ".json";
        PredictorFunction pf = predictor_from_json(read_json_file(path));
        if (pf.t != t)
          throw std::runtime_error("predictor in '" + path + "' was fitted for t=" +
                                   std::to_string(pf.t));
        fitted->push_back(std::move(pf));
      }
    } else {
      std::printf("sample %-12s fitting grid predictors for t=1..%d (n=%lld per t)\n",
                  cfg.name.c_str(), s.T(), static_cast<long long>(cfg.sample.fit_n_per_t));
      for (int t = 1; t <= s.T(); ++t) {
        Rng fit_rng = make_rng(cfg.seed, 0xf17, static_cast<std::uint64_t>(t));
        auto [pf, fit] = fit_least_squares(GridFamilySpec{}, dist, s, t,
                                           cfg.sample.fit_n_per_t, fit_rng);
        (void)fit;
        fitted->push_back(std::move(pf));
      }
    }
    predictor = [fitted](const Eigen::VectorXd& x, int t) {
      return (*fitted)[static_cast<std::size_t>(t - 1)](x);
    };
  }

  const std::vector<Eigen::VectorXd> samples = ancestral_sample(predictor, s, dim, scfg);
  const MatchReport report = distribution_match_report(samples, dist);

  {
    std::vector<std::string> header;
    for (int j = 0; j < dim; ++j) header.push_back("x" + std::to_string(j));
    CsvWriter csv(opt.out_dir + "/samples.csv", header);
    std::vector<std::string> fields(static_cast<std::size_t>(dim));
    for (const Eigen::VectorXd& x : samples) {
      for (int j = 0; j < dim; ++j) fields[static_cast<std::size_t>(j)] = format_double(x[j]);
      csv.write_row(fields);
    }
  }

  const Eigen::VectorXd analytic_var = dist.variance_diag();
  bool mean_ok = true;
  for (int j = 0; j < dim; ++j) {
    const double se = std::sqrt(std::max(report.sample_variance[j], 0.0) /
                                static_cast<double>(report.n));
    if (std::abs(report.mean_error[j]) > std::max(cfg.sample.mean_gate, 4.0 * se))
      mean_ok = false;
  }

  bool w1_ok = true;
  bool w1_checked = false;
  if (cfg.sample.w1_gate && dim == 1) {
    w1_checked = true;
    w1_ok = std::isfinite(report.w1) && report.w1 <= *cfg.sample.w1_gate;
  }

  bool var_ok = true;
  bool var_checked = false;
  if (cfg.sample.variance_band) {
    for (int j = 0; j < dim; ++j) {
      if (analytic_var[j] <= 0) continue;  // point mass: ratio is undefined
      var_checked = true;
      const double ratio = report.sample_variance[j] / analytic_var[j];
      if (ratio < cfg.sample.variance_band->first || ratio > cfg.sample.variance_band->second)
        var_ok = false;
    }
  }

  bool assign_ok = true;
  bool assign_checked = false;
  json assignment = json::array();
  if (cfg.sample.assignment_gate && dist.is_discrete()) {
    assign_checked = true;
    const Eigen::VectorXd& w = dist.as_discrete().weights;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double se = std::sqrt(w[i] * (1.0 - w[i]) / static_cast<double>(report.n));
      const double tol = std::max(cfg.sample.assignment_tol, 4.0 * se);
      const double err = std::abs(report.assignment_freq[i] - w[i]);
      if (err > tol) assign_ok = false;
      json a;
      a["atom"] = i;
      a["weight"] = w[i];
      a["freq"] = report.assignment_freq[i];
      a["err"] = err;
      a["tol"] = tol;
      assignment.push_back(std::move(a));
    }
  }

  const bool pass = mean_ok && w1_ok && var_ok && assign_ok;

  json metrics = base_row(cfg, "ancestral_sampler");
  metrics["n_samples"] = report.n;
  metrics["variance_mode"] = cfg.sample.variance_mode;
  metrics["predictor"] = cfg.sample.predictor;
  metrics["sample_mean"] = vector_to_json(report.sample_mean);
  metrics["sample_variance"] = vector_to_json(report.sample_variance);
  metrics["mean_error"] = vector_to_json(report.mean_error);
  metrics["variance_error"] = vector_to_json(report.variance_error);
  metrics["w1"] = std::isfinite(report.w1) ? json(report.w1) : json(nullptr);
  if (assign_checked) metrics["assignment"] = assignment;
  metrics["mean_ok"] = mean_ok;
  if (w1_checked) metrics["w1_ok"] = w1_ok;
  if (var_checked) metrics["variance_ok"] = var_ok;
  if (assign_checked) metrics["assignment_ok"] = assign_ok;
  metrics["pass"] = pass;
  JsonlWriter rows(opt.out_dir + "/sample_rows.jsonl");
  rows.write(metrics);

  json summary = metrics;
  summary["command"] = "sample";
  summary["runtime_seconds"] = timer.seconds();
  summary["generated_at"] = timestamp_utc();
  write_json_file(opt.out_dir + "/sample_summary.json", summary);

  std::printf("sample %-12s n=%lld predictor=%-6s mean_err=%.4f w1=%.4f %s\n",
              cfg.name.c_str(), static_cast<long long>(report.n),
              cfg.sample.predictor.c_str(), inf_norm(report.mean_error),
              report.w1, pass ? "PASS" : "FAIL");
  return pass ? kExitOk : kExitGateFailure;
}

int run_report(const std::string& dir) {
  struct Suite {
    const char* file;
    const char* label;
  };
  const Suite suites[] = {{"identity_summary.json", "verify-identity"},
                          {"theorem_summary.json", "verify-theorem"},
                          {"train_summary.json", "train"},
                          {"sample_summary.json", "sample"}};

  json report;
  report["dir"] = dir;
  int found = 0;
  std::printf("%-16s %-6s %-44s %s\n", "suite", "status", "headline", "runtime");
  for (const Suite& suite : suites) {
    const std::string path = dir + "/" + std::string(suite.file);
    if (!std::filesystem::exists(path)) {
      std::printf("%-16s %-6s %-44s %s\n", suite.label, "-", "(no output found)", "-");
      continue;
    }
    const json doc = read_json_file(path);
    ++found;
    const bool pass = doc.value("pass", false);
    char headline[64] = {0};
    if (doc.contains("worst_abs_err")) {
      std::snprintf(headline, sizeof(headline), "worst abs %.3e rel %.3e",
                    doc["worst_abs_err"].get<double>(), doc["worst_rel_err"].get<double>());
    } else if (doc.contains("quad_worst_err")) {
      std::snprintf(headline, sizeof(headline), "quad worst %.3e, mc rate %.4f",
                    doc["quad_worst_err"].get<double>(), doc["mc_pass_rate"].get<double>());
    } else if (doc.contains("per_timestep")) {
      double worst = 0.0;
      for (const json& row : doc["per_timestep"])
        worst = std::max(worst, row.value("rmse_region", 0.0));
      std::snprintf(headline, sizeof(headline), "worst region rmse %.4f", worst);
    } else if (doc.contains("w1")) {
      std::snprintf(headline, sizeof(headline), "w1 %s",
                    doc["w1"].is_null() ? "n/a" : format_double(doc["w1"].get<double>()).c_str());
    }
    const double rt = doc.value("runtime_seconds", 0.0);
    std::printf("%-16s %-6s %-44s %.2fs\n", suite.label, pass ? "PASS" : "FAIL", headline, rt);
    report["suites"][suite.label] = doc;
  }
  if (!found) {
    std::fprintf(stderr, "report: no recognizable outputs in '%s'\n", dir.c_str());
    return kExitConfigError;
  }
  report["generated_at"] = timestamp_utc();
  write_json_file(dir + "/report.json", report);
  return kExitOk;
}

}  // namespace epsoracle
