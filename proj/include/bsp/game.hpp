#pragma once

#include <functional>
#include <utility>

#include <Eigen/Dense>

#include "bsp/errors.hpp"
#include "bsp/gp.hpp"

namespace bsp {

// Value/gradient/Hessian of a scalar field at one joint point; used both for
// confidence bounds built from the surrogate and for true-objective oracles.
struct FieldEval {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

using FieldOracle = std::function<FieldEval(const Eigen::VectorXd&)>;

enum class BoundMode { Explore, Exploit };

struct BoundConfig {
  double beta = 2.0;  // confidence-bound width multiplier on the posterior std
  BoundMode mode = BoundMode::Explore;

  void validate() const {
    if (!(beta >= 0.0)) throw InputError("BoundConfig: beta must be >= 0");
  }
};

// lcb = mean - beta*std, ucb = mean + beta*std, with derivatives combined
// from one posterior evaluation.
std::pair<FieldEval, FieldEval> bounds_eval(const GpSurrogate& s, const BoundConfig& cfg,
                                            const Eigen::VectorXd& p);

// Which stacked-gradient system the root-finder operates on. CB plays LCB
// against UCB (which player gets which depends on the mode), Mu plays the
// posterior mean against itself, TrueF plays a supplied derivative oracle.
struct TargetSystem {
  enum class Kind { CB, Mu, TrueF };

  Kind kind = Kind::Mu;
  BoundConfig bound;   // used when kind == CB
  FieldOracle oracle;  // required when kind == TrueF
  int nx = 0;
  int ny = 0;

  static TargetSystem cb(BoundConfig cfg, int nx, int ny) {
    cfg.validate();
    return TargetSystem{Kind::CB, cfg, nullptr, nx, ny};
  }
  static TargetSystem mu(int nx, int ny) { return TargetSystem{Kind::Mu, {}, nullptr, nx, ny}; }
  static TargetSystem true_f(FieldOracle oracle, int nx, int ny) {
    if (!oracle) throw InputError("TargetSystem::true_f: oracle required");
    return TargetSystem{Kind::TrueF, {}, std::move(oracle), nx, ny};
  }
};

// Stacked player gradients g = [grad_x A; -grad_y B], the block Jacobian
// [[Axx, Axy], [-Byx, -Byy]], and the merit 1/2 |g|^2.
struct GameResidual {
  Eigen::VectorXd g;
  Eigen::MatrixXd j;
  double merit = 0.0;
};

// Evaluates g, j, and merit together (one posterior evaluation for the
// surrogate-backed targets). The surrogate is ignored for TrueF.
GameResidual eval_system(const TargetSystem& target, const GpSurrogate* s,
                         const Eigen::VectorXd& p);

Eigen::VectorXd residual(const TargetSystem& target, const GpSurrogate* s,
                         const Eigen::VectorXd& p);
Eigen::MatrixXd jacobian(const TargetSystem& target, const GpSurrogate* s,
                         const Eigen::VectorXd& p);
double merit(const TargetSystem& target, const GpSurrogate* s, const Eigen::VectorXd& p);

}  // namespace bsp
