#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "bsp/box.hpp"
#include "bsp/errors.hpp"
#include "bsp/game.hpp"
#include "bsp/rng.hpp"

namespace bsp {

// A black-box benchmark problem: a noisy zeroth-order sampler over a domain
// box plus (for evaluation only) a ground-truth derivative oracle.
struct Objective {
  std::string id;
  int nx = 0;
  int ny = 0;
  Box domain_box;
  double noise_variance = 0.0;
  std::function<double(const Eigen::VectorXd&)> value;  // noiseless truth
  FieldOracle true_eval;                                // value/grad/hess
  // When set, the surrogate models log(observation) instead of the raw
  // value. For strictly positive costs whose range spans several decades a
  // stationary kernel cannot represent both the basin and the blowup
  // regions; the log compresses the range while preserving root locations
  // (grad log f = grad f / f) and the sign structure of the Hessian blocks
  // at those roots. Requires observations to stay positive.
  bool log_model = false;
};

// exp(-0.01(x^2+y^2)) * ((0.3x^2+y)^2 + (0.5y^2+x)^2): multiple saddles, a
// spurious first-order point at the origin, and gradients that decay to zero
// far from the origin.
FieldEval decaying_poly(const Eigen::VectorXd& p);

// 16-term sixth-order two-player polynomial on [-0.95,3.2] x [-0.45,4.4].
FieldEval bertsimas_poly(const Eigen::VectorXd& p);

// Sum of bertsimas_poly over coordinate pairs (x_i, y_i); p is laid out as
// (x_1..x_n, y_1..y_n) so the Hessian is block-structured with zero
// cross-pair blocks.
FieldEval highdim_poly(const Eigen::VectorXd& p);

// a x^2 + b x y - c y^2 with a,b,c > 0: unique saddle at the origin with
// constant Hessian [[2a, b], [b, -2c]].
FieldEval quadratic_saddle(double a, double b, double c, const Eigen::VectorXd& p);

struct ArimaParams {
  double alpha = 0.0;
  double beta = 0.0;
  double mean = 0.0;
  // Unit-variance innovations put the tracking cost at O(1..10), which keeps
  // the fixed observation noise a small fraction of the objective's range.
  double innovation_sd = 1.0;
  double s0 = 0.0;
  int horizon = 20;  // F

  void validate() const {
    if (horizon < 1) throw InputError("ArimaParams: horizon must be >= 1");
    if (!(innovation_sd >= 0.0)) throw InputError("ArimaParams: innovation_sd must be >= 0");
  }
};

struct MpcParams {
  double A = 0.0;
  double B = 0.0;
  double Q = 1.0;
  double R = 0.1;
  double u_min = -2.0;
  double u_max = 2.0;
  double s0_hat = 0.0;

  void validate() const {
    if (!(u_min <= u_max)) throw InputError("MpcParams: u_min must be <= u_max");
    if (!(Q > 0.0) || !(R > 0.0)) throw InputError("MpcParams: Q and R must be > 0");
  }
};

// s_{t+1} = mean + alpha s_t + beta w_{t-1} + w_t with w_{-1} = 0 and
// w_t ~ N(0, innovation_sd^2) drawn from the seed; returns (s_1, ..., s_F).
// The innovation draws do not depend on (alpha, beta), so one seed yields a
// common innovation path across parameter queries.
Eigen::VectorXd arima_generate(const ArimaParams& params, std::uint64_t seed);

struct MpcSolution {
  double cost = 0.0;
  Eigen::VectorXd controls;
  int iterations = 0;
};

// Tracking cost min_u sum_t Q (shat_t - s_t)^2 + R u_t^2 subject to
// shat_t = A shat_{t-1} + B u_{t-1} and box bounds on u. After eliminating
// the states by rollout this is a box-constrained convex quadratic in u,
// solved by accelerated projected gradient with best-iterate tracking
// (monotone in the iteration budget). Converged when the projected-gradient
// residual |clamp(u - grad J) - u|_inf < 1e-8, capped at max_iters.
MpcSolution mpc_track_cost(const MpcParams& mpc, const Eigen::VectorXd& series,
                           int max_iters = 10000);

struct ArimaMpcConfig {
  ArimaParams arima;  // alpha/beta overwritten per query
  MpcParams mpc;      // A/B overwritten per query
};

// f(x=(A,B), y=(alpha,beta)): the protagonist picks MPC dynamics to track
// whatever series the antagonist's ARIMA parameters generate. Deterministic
// given the frozen innovation seed. All four parameters must lie in [-1,1].
double arima_mpc_eval(std::pair<double, double> protagonist,
                      std::pair<double, double> antagonist, const ArimaMpcConfig& cfg,
                      std::uint64_t innovation_seed);

// True value plus an N(0, noise_variance) draw; p must lie inside the box.
double noisy_sample(const Objective& obj, const Eigen::VectorXd& p, Rng& rng);

struct FdResult {
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  bool one_sided = false;  // a stencil had to be folded inward at the box edge
};

// Central finite differences with per-coordinate step h*(1+|p_i|); falls back
// to one-sided stencils (and sets the flag) where p is within a step of the
// box boundary.
FdResult fd_oracle(const std::function<double(const Eigen::VectorXd&)>& f,
                   const Eigen::VectorXd& p, double h, const Box& box);

// Factories for the experiment problems, addressable by id:
// "decaying", "highdim", "quadratic", "arima-mpc".
Objective make_decaying();
Objective make_highdim(int pairs = 5);
Objective make_quadratic(double a = 1.0, double b = 1.0, double c = 1.0);
Objective make_arima_mpc(const ArimaMpcConfig& cfg, std::uint64_t innovation_seed);

}  // namespace bsp
