#include "bsp/baselines.hpp"

#include <cmath>
#include <limits>

#include "bsp/rng.hpp"

namespace bsp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double true_merit_at(const Objective& obj, const Eigen::VectorXd& p) {
  if (!obj.true_eval) return kNaN;
  return eval_system(TargetSystem::true_f(obj.true_eval, obj.nx, obj.ny), nullptr, p)
      .merit;
}

// Thrown internally when the query budget is spent mid-gradient.
struct BudgetSpent {};

}  // namespace

RunRecord random_search(const Objective& obj, const BaselineConfig& cfg) {
  cfg.validate();
  Rng rng_pts = Rng::substream(cfg.seed, 0);
  Rng rng_noise = Rng::substream(cfg.seed, 1);
  const Box& box = obj.domain_box;

  RunRecord rec;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cfg.budget; ++i) {
    Eigen::VectorXd p(box.dim());
    for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = rng_pts.uniform(box.lo[k], box.hi[k]);
    const double r = noisy_sample(obj, p, rng_noise);
    const double m = true_merit_at(obj, p);
    if (!(m >= best)) {  // NaN keeps the incumbent
      best = m;
      rec.final_point = p;
    }
    EvalRow row;
    row.eval_index = i;
    row.point = p;
    row.observation = r;
    row.merit_mu = kNaN;
    row.merit_f = best;
    row.std_at_point = kNaN;
    rec.eval_log.push_back(row);
  }
  if (rec.final_point.size() == 0 && !rec.eval_log.empty())
    rec.final_point = rec.eval_log.front().point;
  return rec;
}

RunRecord gda_fd(const Objective& obj, const Eigen::VectorXd& start,
                 const BaselineConfig& cfg) {
  cfg.validate();
  const Box& box = obj.domain_box;
  if (!box.contains(start)) throw InputError("gda_fd: start outside the domain box");
  const int nx = obj.nx, d = obj.nx + obj.ny;

  Rng rng_noise = Rng::substream(cfg.seed, 1);
  RunRecord rec;
  Eigen::VectorXd z = start;
  double merit_f_here = true_merit_at(obj, z);

  // Budget-charged noisy query; one eval row per call.
  const auto query = [&](const Eigen::VectorXd& p) -> double {
    if (static_cast<int>(rec.eval_log.size()) >= cfg.budget) throw BudgetSpent{};
    const double r = noisy_sample(obj, p, rng_noise);
    EvalRow row;
    row.eval_index = static_cast<int>(rec.eval_log.size());
    row.point = p;
    row.observation = r;
    row.merit_mu = kNaN;
    row.merit_f = merit_f_here;
    row.std_at_point = kNaN;
    rec.eval_log.push_back(row);
    return r;
  };

  // Central-difference gradient, 2d queries; at a box edge the probe pair is
  // clamped, which degrades gracefully to a one-sided difference.
  const auto fd_gradient = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd grad(d);
    for (int i = 0; i < d; ++i) {
      const double h = cfg.fd_step * (1.0 + std::abs(p[i]));
      Eigen::VectorXd hi = p, lo = p;
      hi[i] = std::min(p[i] + h, box.hi[i]);
      lo[i] = std::max(p[i] - h, box.lo[i]);
      const double width = hi[i] - lo[i];
      grad[i] = width > 0.0 ? (query(hi) - query(lo)) / width : 0.0;
    }
    return grad;
  };

  // Finite-differenced residual merit 1/2 |[grad_x f; -grad_y f]|^2 (the sign
  // split leaves the squared norm equal to |grad f|^2 / 2).
  const auto fd_merit = [&](const Eigen::VectorXd& p) {
    return 0.5 * fd_gradient(p).squaredNorm();
  };

  try {
    for (;;) {
      const Eigen::VectorXd grad = fd_gradient(z);
      Eigen::VectorXd dir(d);
      dir.head(nx) = -grad.head(nx);
      dir.tail(d - nx) = grad.tail(d - nx);

      const double m0 = 0.5 * grad.squaredNorm();
      if (m0 < cfg.newton.eps) {
        rec.converged = true;
        break;
      }

      const double delta = 1e-3;
      const auto line = [&](double alpha) -> std::pair<double, double> {
        const double mid = fd_merit(box.clamp(z + alpha * dir));
        const double fwd = fd_merit(box.clamp(z + (alpha + delta) * dir));
        const double bwd = fd_merit(box.clamp(z + (alpha - delta) * dir));
        return {mid, (fwd - bwd) / (2.0 * delta)};
      };

      double alpha;
      try {
        alpha = wolfe_linesearch(line, cfg.newton);
      } catch (const InputError&) {
        alpha = 1e-3;  // noisy slope estimate said "uphill"; creep instead
      }
      z = box.clamp(z + alpha * dir);
      merit_f_here = true_merit_at(obj, z);
    }
  } catch (const BudgetSpent&) {
    // Ran out of queries mid-step; fall through with the iterate as-is.
  }
  rec.final_point = z;
  if (rec.converged && obj.true_eval)
    rec.success = verify_second_order(z, obj.true_eval, obj.nx, obj.ny);
  return rec;
}

}  // namespace bsp
