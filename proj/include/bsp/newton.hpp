#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "bsp/box.hpp"
#include "bsp/errors.hpp"
#include "bsp/game.hpp"

namespace bsp {

struct NewtonConfig {
  double lambda_reg = 0.01;  // diagonal Jacobian regularization
  double c1 = 0.01;          // Wolfe sufficient-decrease
  double c2 = 0.7;           // Wolfe curvature
  double eps = 1e-4;         // merit tolerance; loop exits below this
  int max_steps = 50;
  int max_linesearch = 25;
  Box domain_box;

  void validate() const {
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0))
      throw InputError("NewtonConfig: require 0 < c1 < c2 < 1");
    if (!(eps > 0.0)) throw InputError("NewtonConfig: eps must be > 0");
    if (!(lambda_reg >= 0.0)) throw InputError("NewtonConfig: lambda_reg must be >= 0");
    if (max_steps < 0 || max_linesearch < 1) throw InputError("NewtonConfig: bad counts");
  }
};

enum class Termination { Converged, MaxSteps, StalledLinesearch };

struct NewtonTrace {
  std::vector<Eigen::VectorXd> iterates;  // includes the start point
  std::vector<double> merits;             // one per iterate
  int steps_taken = 0;
  int fallback_steps = 0;  // steps that used a descent fallback direction
  Termination terminated_by = Termination::MaxSteps;
};

struct NewtonStep {
  Eigen::VectorXd p;
  bool fallback = false;     // regularization exhausted; p is -g
  double lambda_used = 0.0;  // regularization that produced the returned step
};

// Solves (j + lambda I) p = -g. On solve failure (non-finite solution or a
// large residual) escalates lambda x10 up to 1000x the input, then falls back
// to steepest descent p = -g. Never throws for singular systems.
NewtonStep regularized_newton_step(const Eigen::VectorXd& g, const Eigen::MatrixXd& j,
                                   double lambda_reg);

// (merit, directional derivative) of the merit along the current direction,
// as a function of the step length.
using MeritLine = std::function<std::pair<double, double>(double)>;

// Strong-Wolfe bracketing/zoom search. Initial trial 1; throws InputError if
// the direction is not a descent direction at 0; returns the last trial if
// the evaluation budget runs out before both conditions hold.
double wolfe_linesearch(const MeritLine& phi, const NewtonConfig& cfg);

// One callable evaluating the full residual system at a point.
using ResidualSystem = std::function<GameResidual(const Eigen::VectorXd&)>;

// Damped-Newton root finding on the residual system: iterates
// p_{k+1} = clamp(p_k + alpha_k step_k) until merit < eps, steps run out, or
// the linesearch stalls. Merits along accepted steps decrease strictly.
std::pair<Eigen::VectorXd, NewtonTrace> ll_game(const Eigen::VectorXd& p0,
                                                const ResidualSystem& system,
                                                const NewtonConfig& cfg);

// Convenience overload evaluating a TargetSystem against a surrogate.
std::pair<Eigen::VectorXd, NewtonTrace> ll_game(const Eigen::VectorXd& p0,
                                                const TargetSystem& target,
                                                const GpSurrogate* s,
                                                const NewtonConfig& cfg);

}  // namespace bsp
