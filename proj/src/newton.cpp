#include "bsp/newton.hpp"

#include <cmath>
#include <limits>

namespace bsp {

NewtonStep regularized_newton_step(const Eigen::VectorXd& g, const Eigen::MatrixXd& j,
                                   double lambda_reg) {
  const auto d = g.size();
  if (j.rows() != d || j.cols() != d)
    throw InputError("regularized_newton_step: dimension mismatch");
  if (!(lambda_reg >= 0.0)) throw InputError("regularized_newton_step: lambda < 0");

  double lambda = lambda_reg;
  for (;;) {
    Eigen::MatrixXd m = j;
    m.diagonal().array() += lambda;
    const Eigen::VectorXd p = m.partialPivLu().solve(-g);
    const bool ok = p.allFinite() &&
                    (m * p + g).norm() <= 1e-6 * std::max(1.0, g.norm());
    if (ok) return NewtonStep{p, false, lambda};
    if (lambda_reg > 0.0 && lambda < 1e3 * lambda_reg) {
      lambda *= 10.0;
      continue;
    }
    return NewtonStep{-g, true, lambda};
  }
}

double wolfe_linesearch(const MeritLine& phi, const NewtonConfig& cfg) {
  cfg.validate();
  const auto [phi0, d0] = phi(0.0);
  if (!(d0 < 0.0)) throw InputError("wolfe_linesearch: not a descent direction");

  int evals_left = cfg.max_linesearch;
  double last_trial = 1.0;

  const auto sufficient = [&](double a, double v) { return v <= phi0 + cfg.c1 * a * d0; };
  const auto curvature = [&](double da) { return std::abs(da) <= -cfg.c2 * d0; };

  // Zoom phase (Nocedal-Wright Alg. 3.6, bisection variant) on a bracket
  // [lo, hi] where lo satisfies sufficient decrease and the minimizer lies
  // between them.
  const auto zoom = [&](double lo, double phi_lo, double hi) {
    while (evals_left-- > 0) {
      const double a = 0.5 * (lo + hi);
      last_trial = a;
      const auto [v, da] = phi(a);
      if (!sufficient(a, v) || v >= phi_lo) {
        hi = a;
      } else {
        if (curvature(da)) return a;
        if (da * (hi - lo) >= 0.0) hi = lo;
        lo = a;
        phi_lo = v;
      }
      if (std::abs(hi - lo) < 1e-16) return last_trial;
    }
    return last_trial;
  };

  // Bracketing phase (Alg. 3.5): expand from the unit trial until the merit
  // turns up or the curvature condition holds.
  double a_prev = 0.0, phi_prev = phi0;
  double a = 1.0;
  bool first = true;
  while (evals_left-- > 0) {
    last_trial = a;
    const auto [v, da] = phi(a);
    if (!sufficient(a, v) || (!first && v >= phi_prev)) return zoom(a_prev, phi_prev, a);
    if (curvature(da)) return a;
    if (da >= 0.0) return zoom(a, v, a_prev);
    a_prev = a;
    phi_prev = v;
    a = std::min(2.0 * a, 1e8);
    first = false;
  }
  return last_trial;
}

std::pair<Eigen::VectorXd, NewtonTrace> ll_game(const Eigen::VectorXd& p0,
                                                const ResidualSystem& system,
                                                const NewtonConfig& cfg) {
  cfg.validate();
  if (!cfg.domain_box.contains(p0)) throw InputError("ll_game: start outside domain box");

  NewtonTrace trace;
  Eigen::VectorXd p = p0;
  GameResidual r = system(p);
  trace.iterates.push_back(p);
  trace.merits.push_back(r.merit);
  trace.terminated_by = Termination::MaxSteps;

  for (int step = 0; step < cfg.max_steps; ++step) {
    if (r.merit < cfg.eps) {
      trace.terminated_by = Termination::Converged;
      return {p, trace};
    }

    const Eigen::VectorXd grad_merit = r.j.transpose() * r.g;  // gradient of 1/2|g|^2

    // Candidate directions, most to least informed: damped Newton, steepest
    // descent on the residual surrogate (-g), steepest descent on the merit.
    const NewtonStep ns = regularized_newton_step(r.g, r.j, cfg.lambda_reg);
    std::vector<std::pair<Eigen::VectorXd, bool>> candidates;
    candidates.emplace_back(ns.p, ns.fallback);
    if (!ns.fallback) candidates.emplace_back(-r.g, true);
    candidates.emplace_back(-grad_merit, true);

    bool accepted = false;
    for (const auto& [dir, is_fallback] : candidates) {
      const double d0 = grad_merit.dot(dir);
      if (!(d0 < 0.0)) continue;

      // Merit along the projected ray; clamped coordinates contribute zero
      // to the directional derivative.
      const auto line = [&](double alpha) -> std::pair<double, double> {
        if (alpha == 0.0) return {r.merit, d0};
        const Eigen::VectorXd q = cfg.domain_box.clamp(p + alpha * dir);
        const GameResidual rq = system(q);
        const Eigen::VectorXd gm = rq.j.transpose() * rq.g;
        double slope = 0.0;
        for (Eigen::Index i = 0; i < q.size(); ++i) {
          const bool clamped = (q[i] == cfg.domain_box.lo[i] && dir[i] < 0.0) ||
                               (q[i] == cfg.domain_box.hi[i] && dir[i] > 0.0);
          if (!clamped) slope += gm[i] * dir[i];
        }
        return {rq.merit, slope};
      };

      const double alpha = wolfe_linesearch(line, cfg);
      if (!(alpha > 1e-12)) continue;
      const Eigen::VectorXd q = cfg.domain_box.clamp(p + alpha * dir);
      const GameResidual rq = system(q);
      if (!(rq.merit < r.merit)) continue;  // linesearch exhausted without decrease

      p = q;
      r = rq;
      trace.iterates.push_back(p);
      trace.merits.push_back(r.merit);
      ++trace.steps_taken;
      if (is_fallback) ++trace.fallback_steps;
      accepted = true;
      break;
    }

    if (!accepted) {
      trace.terminated_by = Termination::StalledLinesearch;
      return {p, trace};
    }
  }

  trace.terminated_by =
      r.merit < cfg.eps ? Termination::Converged : Termination::MaxSteps;
  return {p, trace};
}

std::pair<Eigen::VectorXd, NewtonTrace> ll_game(const Eigen::VectorXd& p0,
                                                const TargetSystem& target,
                                                const GpSurrogate* s,
                                                const NewtonConfig& cfg) {
  return ll_game(
      p0, [&](const Eigen::VectorXd& q) { return eval_system(target, s, q); }, cfg);
}

}  // namespace bsp
