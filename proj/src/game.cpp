#include "bsp/game.hpp"

namespace bsp {
namespace {

FieldEval combine(const PosteriorEval& e, double sign_beta) {
  FieldEval out;
  out.value = e.mean + sign_beta * e.std;
  out.grad = e.mean_grad + sign_beta * e.std_grad;
  out.hess = e.mean_hess + sign_beta * e.std_hess;
  return out;
}

// Assemble g and J from the two player fields: the minimizer descends A over
// x, the maximizer ascends B over y, so roots of [grad_x A; -grad_y B] are
// the first-order equilibria.
GameResidual assemble(const FieldEval& a, const FieldEval& b, int nx, int ny) {
  GameResidual out;
  const int d = nx + ny;
  out.g.resize(d);
  out.g.head(nx) = a.grad.head(nx);
  out.g.tail(ny) = -b.grad.tail(ny);
  out.j.resize(d, d);
  out.j.topRows(nx) = a.hess.topRows(nx);
  out.j.bottomRows(ny) = -b.hess.bottomRows(ny);
  out.merit = 0.5 * out.g.squaredNorm();
  return out;
}

}  // namespace

std::pair<FieldEval, FieldEval> bounds_eval(const GpSurrogate& s, const BoundConfig& cfg,
                                            const Eigen::VectorXd& p) {
  cfg.validate();
  const PosteriorEval e = s.posterior_eval(p);
  return {combine(e, -cfg.beta), combine(e, cfg.beta)};
}

GameResidual eval_system(const TargetSystem& target, const GpSurrogate* s,
                         const Eigen::VectorXd& p) {
  const int nx = target.nx, ny = target.ny;
  if (p.size() != nx + ny) throw InputError("eval_system: dimension mismatch");

  switch (target.kind) {
    case TargetSystem::Kind::TrueF: {
      const FieldEval f = target.oracle(p);
      return assemble(f, f, nx, ny);
    }
    case TargetSystem::Kind::Mu: {
      if (s == nullptr) throw InputError("eval_system: Mu target requires a surrogate");
      const PosteriorEval e = s->posterior_eval(p);
      const FieldEval mu = combine(e, 0.0);
      return assemble(mu, mu, nx, ny);
    }
    case TargetSystem::Kind::CB: {
      if (s == nullptr) throw InputError("eval_system: CB target requires a surrogate");
      const auto [lcb, ucb] = bounds_eval(*s, target.bound, p);
      // Explore: minimizer optimizes its optimistic bound (LCB), maximizer
      // optimizes UCB. Exploit swaps the bounds.
      if (target.bound.mode == BoundMode::Explore) return assemble(lcb, ucb, nx, ny);
      return assemble(ucb, lcb, nx, ny);
    }
  }
  throw InputError("eval_system: unknown target kind");
}

Eigen::VectorXd residual(const TargetSystem& target, const GpSurrogate* s,
                         const Eigen::VectorXd& p) {
  return eval_system(target, s, p).g;
}

Eigen::MatrixXd jacobian(const TargetSystem& target, const GpSurrogate* s,
                         const Eigen::VectorXd& p) {
  return eval_system(target, s, p).j;
}

double merit(const TargetSystem& target, const GpSurrogate* s, const Eigen::VectorXd& p) {
  return eval_system(target, s, p).merit;
}

}  // namespace bsp
