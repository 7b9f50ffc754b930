#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsp/baselines.hpp"
#include "bsp/driver.hpp"

namespace bsp {

enum class InitRegime { Limited, Large };

std::string regime_name(InitRegime r);
InitRegime regime_from_name(const std::string& name);

// One experiment = (problem, method, variant, regime) swept over seeds.
// Negative numeric fields mean "use the per-problem default".
struct ExperimentConfig {
  std::string problem = "quadratic";  // decaying | highdim | quadratic | arima-mpc
  std::string method = "bsp";         // bsp | random | gda-fd
  Variant variant = Variant::EfficientExplore;
  InitRegime regime = InitRegime::Limited;
  int seeds = 20;
  int workers = 1;
  std::uint64_t master_seed = 101;
  std::string out_dir = ".";

  // Overrides of the per-problem defaults.
  double beta = -1.0;
  double eps = -1.0;
  double lambda_reg = -1.0;
  double c2 = -1.0;
  double noise_variance = -1.0;
  double fd_step = -1.0;
  double convergence_std_ratio = -1.0;
  int init_samples = -1;
  int max_evals = -1;
  int refit_interval = -1;
  int newton_max_steps = -1;
  int reinit_limit = -1;
  int baseline_budget = -1;

  void validate() const;
};

// Concrete per-run settings after applying problem/regime defaults. The
// objective is built per run because the ARIMA-MPC innovation path is part
// of the seed.
struct ResolvedExperiment {
  BspConfig bsp;
  BaselineConfig baseline;
  std::function<Objective(std::uint64_t run_seed)> make_objective;
  std::string file_stem;
};

ResolvedExperiment resolve_experiment(const ExperimentConfig& cfg);

// Seed index -> independent run seed stream.
std::uint64_t derive_run_seed(std::uint64_t master_seed, int seed_index);

struct SeedOutcome {
  int seed_index = 0;
  std::uint64_t run_seed = 0;
  RunRecord record;
};

struct SummaryReport {
  std::string problem, method, variant, regime;
  int seeds = 0;
  std::uint64_t master_seed = 0;
  int converged_count = 0;
  int success_count = 0;
  double success_rate_pct = 0.0;
  long long newton_steps_total = 0;
  std::vector<int> newton_steps_per_seed;
  std::vector<int> reinit_per_seed;
  std::vector<Eigen::VectorXd> final_points;
  // Ground-truth merit quartiles by evaluation index; shorter seed logs are
  // padded with their last value so every index aggregates all seeds.
  std::vector<double> merit_q25, merit_median, merit_q75;
};

// Runs all seeds (workers in parallel; outputs do not depend on the worker
// count), writes one CSV per seed plus a summary JSON into out_dir, and
// returns the summary. Per-seed records are exposed through records_out.
SummaryReport run_experiment(const ExperimentConfig& cfg,
                             std::vector<SeedOutcome>* records_out = nullptr);

// Serialization helpers (exposed for tests; every writer routes through
// these so reruns stay byte-identical).
std::string format_double(double v);  // %.17g, NaN spelled "nan"
std::string eval_log_csv(const RunRecord& rec, int nx, int ny, int init_samples);
std::string summary_json_text(const SummaryReport& rep);
void write_file_atomic(const std::string& path, const std::string& content);

// JSON config file support for the CLI; unknown keys are a ConfigError.
ExperimentConfig experiment_config_from_json(const std::string& json_text);

struct VarianceTraceRow {
  int eval = 0;
  double step_distance = 0.0;  // distance from the previous logged point
  double std_at_sample = 0.0;
};

// One BSP run on the quadratic saddle logging, per evaluation, how far the
// sampler moved and the posterior std at the sampled point; also written to
// <stem>_variance.csv.
std::vector<VarianceTraceRow> variance_trace(const ExperimentConfig& cfg);

struct RobustMpcReport {
  double nominal_a = 0.0, nominal_b = 0.0;
  double bsp_a = 0.0, bsp_b = 0.0;
  double nominal_in_cost = 0.0, bsp_in_cost = 0.0;    // mean over in-dist series
  double nominal_ood_cost = 0.0, bsp_ood_cost = 0.0;  // mean over OoD series
  double ood_improvement_pct = 0.0;  // 100 (nominal - bsp) / nominal on OoD
  double in_dist_gap_pct = 0.0;      // 100 (bsp - nominal) / nominal in-dist
};

// Optimal box-constrained tracking cost of the model (a, b) on one realized
// series; equal to mpc_track_cost with those dynamics, with a direct solve
// shortcut when no control bound is active.
double tracking_cost(double a, double b, const MpcParams& base,
                     const Eigen::VectorXd& series);

// Compares a candidate MPC model (a, b) against the nominal model fit by
// grid search (41x41 over [-1,1]^2 plus two local refinement rounds) to
// minimize the mean tracking cost over in-distribution ARIMA series; both
// are then scored on held-out out-of-distribution series. Writes
// robust_mpc.json into out_dir.
RobustMpcReport robust_mpc_eval(double a, double b, const ExperimentConfig& cfg);

std::string robust_mpc_json_text(const RobustMpcReport& rep);

}  // namespace bsp
