#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsp/game.hpp"
#include "bsp/gp.hpp"
#include "bsp/newton.hpp"
#include "bsp/objectives.hpp"

namespace bsp {

// The four method variants: Efficient runs the root-finder to convergence on
// the confidence-bound system between samples; Expensive samples after every
// single Newton step. Explore/Exploit pick which bound each player optimizes.
enum class Variant {
  EfficientExplore,
  EfficientExploit,
  ExpensiveExplore,
  ExpensiveExploit,
};

bool variant_is_efficient(Variant v);
BoundMode variant_mode(Variant v);
std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct BspConfig {
  Variant variant = Variant::EfficientExplore;
  double eps = 1e-4;     // convergence tolerance on the posterior-mean merit
  int max_evals = 150;   // total objective queries, counting initialization
  NewtonConfig newton;   // inner root-finder settings; carries the domain box
  BoundConfig bound;     // confidence-bound width
  int refit_interval = 1;  // hyperparameter refit cadence, in samples
  int reinit_limit = 3;
  int init_samples = 50;
  std::uint64_t seed = 0;
  int newton_budget = 3000;     // total Newton steps per run
  int hyperparam_restarts = 5;  // random restarts for the initial fit
  // Optional absolute bounds on the fitted kernel length scale (0 = off);
  // see HyperparamSearch. Useful when init_samples is small relative to the
  // domain volume, where unconstrained likelihood fits can degenerate.
  double min_length_scale = 0.0;
  double max_length_scale = 0.0;
  // Floor on the fitted signal variance as a fraction of the centered
  // observation variance (0 = off). Guards against "everything is noise"
  // fits when the objective range is comparable to the noise level.
  double min_signal_variance_ratio = 0.0;
  // The surrogate merit is only a meaningful convergence signal where the
  // posterior is data-backed: right after sampling an isolated point its
  // gradient is smoothed toward zero, so the merit test alone fires at
  // barely-observed points. When > 0 (and the objective is noisy), declaring
  // convergence additionally requires the posterior std at the point to be
  // at most this fraction of the observation noise std, i.e. the point must
  // have been resolved by repeated local sampling.
  double convergence_std_ratio = 0.0;

  void validate() const {
    newton.validate();
    bound.validate();
    if (!(eps > 0.0)) throw InputError("BspConfig: eps must be > 0");
    if (init_samples < 1) throw InputError("BspConfig: init_samples must be >= 1");
    if (max_evals < init_samples)
      throw InputError("BspConfig: max_evals must be >= init_samples");
    if (reinit_limit < 0) throw InputError("BspConfig: reinit_limit must be >= 0");
    if (refit_interval < 1) throw InputError("BspConfig: refit_interval must be >= 1");
    if (newton_budget < 1) throw InputError("BspConfig: newton_budget must be >= 1");
    if (min_signal_variance_ratio < 0.0)
      throw InputError("BspConfig: min_signal_variance_ratio must be >= 0");
    if (convergence_std_ratio < 0.0)
      throw InputError("BspConfig: convergence_std_ratio must be >= 0");
  }
};

// One objective query. merit_mu and std_at_point are evaluated under the
// surrogate state right after this observation was appended (initial samples
// share the state after the initial hyperparameter fit); merit_f is NaN when
// no ground-truth oracle exists.
struct EvalRow {
  int eval_index = 0;
  Eigen::VectorXd point;
  double observation = 0.0;
  double merit_mu = 0.0;
  double merit_f = 0.0;
  double std_at_point = 0.0;
};

struct RunRecord {
  std::vector<EvalRow> eval_log;
  int newton_steps_total = 0;
  bool converged = false;          // last loop exit was merit(Mu) < eps
  bool second_order_pass = false;  // surrogate curvature check at the final point
  bool success = false;  // ground-truth curvature check at the FIRST converged point
  int reinit_count = 0;
  Eigen::VectorXd final_point;
  bool aborted = false;
  std::string abort_reason;
};

// Argmin of the posterior-mean merit over the dataset's points; ties break to
// the lowest index. The exclusion overload skips points within radius
// `exclusion_radius` of any excluded point (unless that empties the
// candidate set, in which case the exclusions are ignored).
Eigen::VectorXd select_initial_point(const GpSurrogate& s, const Dataset& data);
Eigen::VectorXd select_initial_point(const GpSurrogate& s, const Dataset& data,
                                     const std::vector<Eigen::VectorXd>& excluded,
                                     double exclusion_radius);

// Strict local saddle test: positive definite protagonist block and negative
// definite antagonist block of the Hessian.
bool verify_second_order(const Eigen::VectorXd& p, const GpSurrogate& s);
bool verify_second_order(const Eigen::VectorXd& p, const FieldOracle& oracle, int nx,
                         int ny);

// Runs the full surrogate saddle-search loop on one objective with one seed.
// The objective's domain box must match cfg.newton.domain_box.
RunRecord run_bsp(const Objective& obj, const BspConfig& cfg);

}  // namespace bsp
