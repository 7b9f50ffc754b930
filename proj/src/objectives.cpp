#include "bsp/objectives.hpp"

#include <cmath>

#include <fmt/format.h>

namespace bsp {

FieldEval decaying_poly(const Eigen::VectorXd& p) {
  if (p.size() != 2) throw InputError("decaying_poly: expects a 2-D point");
  const double x = p[0], y = p[1];
  const double u = 0.3 * x * x + y;
  const double v = 0.5 * y * y + x;
  const double q = u * u + v * v;
  const double e = std::exp(-0.01 * (x * x + y * y));

  Eigen::Vector2d q_grad(1.2 * u * x + 2.0 * v, 2.0 * u + 2.0 * v * y);
  Eigen::Matrix2d q_hess;
  q_hess << 0.72 * x * x + 1.2 * u + 2.0, 1.2 * x + 2.0 * y,  //
      1.2 * x + 2.0 * y, 2.0 + 2.0 * y * y + 2.0 * v;
  const Eigen::Vector2d e_grad = -0.02 * e * p;
  const Eigen::Matrix2d e_hess =
      e * (0.0004 * p * p.transpose() - 0.02 * Eigen::Matrix2d::Identity());

  FieldEval out;
  out.value = e * q;
  out.grad = e * q_grad + q * e_grad;
  out.hess = e * q_hess + e_grad * q_grad.transpose() + q_grad * e_grad.transpose() +
             q * e_hess;
  return out;
}

FieldEval bertsimas_poly(const Eigen::VectorXd& p) {
  if (p.size() != 2) throw InputError("bertsimas_poly: expects a 2-D point");
  const double x = p[0], y = p[1];
  const double x2 = x * x, x3 = x2 * x, x4 = x3 * x, x5 = x4 * x, x6 = x5 * x;
  const double y2 = y * y, y3 = y2 * y, y4 = y3 * y, y5 = y4 * y, y6 = y5 * y;

  FieldEval out;
  out.value = -2.0 * x6 + 12.2 * x5 - 21.2 * x4 - 6.2 * x + 6.4 * x3 + 4.7 * x2 - y6 +
              11.0 * y5 - 43.3 * y4 + 10.0 * y + 74.8 * y3 - 56.9 * y2 + 4.1 * x * y +
              0.1 * y2 * x2 - 0.4 * y2 * x - 0.4 * x2 * y;
  out.grad.resize(2);
  out.grad[0] = -12.0 * x5 + 61.0 * x4 - 84.8 * x3 - 6.2 + 19.2 * x2 + 9.4 * x + 4.1 * y +
                0.2 * y2 * x - 0.4 * y2 - 0.8 * x * y;
  out.grad[1] = -6.0 * y5 + 55.0 * y4 - 173.2 * y3 + 10.0 + 224.4 * y2 - 113.8 * y +
                4.1 * x + 0.2 * y * x2 - 0.8 * y * x - 0.4 * x2;
  out.hess.resize(2, 2);
  out.hess(0, 0) =
      -60.0 * x4 + 244.0 * x3 - 254.4 * x2 + 38.4 * x + 9.4 + 0.2 * y2 - 0.8 * y;
  out.hess(1, 1) =
      -30.0 * y4 + 220.0 * y3 - 519.6 * y2 + 448.8 * y - 113.8 + 0.2 * x2 - 0.8 * x;
  out.hess(0, 1) = 4.1 + 0.4 * x * y - 0.8 * y - 0.8 * x;
  out.hess(1, 0) = out.hess(0, 1);
  return out;
}

FieldEval highdim_poly(const Eigen::VectorXd& p) {
  if (p.size() % 2 != 0 || p.size() == 0)
    throw InputError("highdim_poly: expects an even-dimensional point");
  const int n = static_cast<int>(p.size()) / 2;
  FieldEval out;
  out.value = 0.0;
  out.grad = Eigen::VectorXd::Zero(2 * n);
  out.hess = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector2d pair(p[i], p[n + i]);
    const FieldEval e = bertsimas_poly(pair);
    out.value += e.value;
    out.grad[i] += e.grad[0];
    out.grad[n + i] += e.grad[1];
    out.hess(i, i) = e.hess(0, 0);
    out.hess(n + i, n + i) = e.hess(1, 1);
    out.hess(i, n + i) = e.hess(0, 1);
    out.hess(n + i, i) = e.hess(1, 0);
  }
  return out;
}

FieldEval quadratic_saddle(double a, double b, double c, const Eigen::VectorXd& p) {
  if (!(a > 0.0 && b >= 0.0 && c > 0.0))
    throw InputError("quadratic_saddle: a, c must be > 0 and b >= 0");
  if (p.size() != 2) throw InputError("quadratic_saddle: expects a 2-D point");
  const double x = p[0], y = p[1];
  FieldEval out;
  out.value = a * x * x + b * x * y - c * y * y;
  out.grad.resize(2);
  out.grad << 2.0 * a * x + b * y, b * x - 2.0 * c * y;
  out.hess.resize(2, 2);
  out.hess << 2.0 * a, b, b, -2.0 * c;
  return out;
}

Eigen::VectorXd arima_generate(const ArimaParams& params, std::uint64_t seed) {
  params.validate();
  const int f = params.horizon;
  Rng rng(seed);
  Eigen::VectorXd w(f);
  for (int t = 0; t < f; ++t) w[t] = params.innovation_sd * rng.normal();

  Eigen::VectorXd series(f);
  double s_prev = params.s0;
  double w_prev = 0.0;  // w_{-1}
  for (int t = 0; t < f; ++t) {
    const double s_next = params.mean + params.alpha * s_prev + params.beta * w_prev + w[t];
    series[t] = s_next;
    s_prev = s_next;
    w_prev = w[t];
  }
  return series;
}

MpcSolution mpc_track_cost(const MpcParams& mpc, const Eigen::VectorXd& series,
                           int max_iters) {
  mpc.validate();
  const int f = static_cast<int>(series.size());
  if (f < 1) throw InputError("mpc_track_cost: empty series");

  // Eliminate states by rollout: shat = c + G u, with c_t = A^t s0_hat and
  // G(t, j) = A^(t-1-j) B for j < t. Rows are t = 1..F, columns u_0..u_{F-1}.
  Eigen::VectorXd c(f);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(f, f);
  {
    double prev = mpc.s0_hat;
    for (int t = 0; t < f; ++t) {
      c[t] = mpc.A * prev;
      prev = c[t];
    }
    for (int j = 0; j < f; ++j) {
      double coef = mpc.B;
      for (int t = j; t < f; ++t) {
        g(t, j) = coef;
        coef *= mpc.A;
      }
    }
  }
  const Eigen::VectorXd target = series - c;

  // J(u) = Q |G u - target|^2 + R |u|^2: strongly convex with Lipschitz
  // gradient constant 2(Q lammax(G^T G) + R).
  const Eigen::MatrixXd gtg = g.transpose() * g;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gtg, Eigen::EigenvaluesOnly);
  const double lip = 2.0 * (mpc.Q * std::max(es.eigenvalues().maxCoeff(), 0.0) + mpc.R);
  const double step = 1.0 / lip;

  const auto clamp_u = [&](Eigen::VectorXd u) {
    return u.cwiseMax(mpc.u_min).cwiseMin(mpc.u_max);
  };
  const auto cost_of = [&](const Eigen::VectorXd& u) {
    return mpc.Q * (g * u - target).squaredNorm() + mpc.R * u.squaredNorm();
  };
  const auto grad_of = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return 2.0 * mpc.Q * (g.transpose() * (g * u - target)) + 2.0 * mpc.R * u;
  };

  // FISTA with gradient restart; best iterate retained so the returned cost
  // is nonincreasing in the iteration budget.
  Eigen::VectorXd u = clamp_u(Eigen::VectorXd::Zero(f));
  Eigen::VectorXd z = u;
  double momentum = 1.0;
  MpcSolution best{cost_of(u), u, 0};

  for (int it = 1; it <= max_iters; ++it) {
    const Eigen::VectorXd grad_z = grad_of(z);
    const Eigen::VectorXd u_next = clamp_u(z - step * grad_z);

    const double residual = (clamp_u(u - grad_of(u)) - u).lpNorm<Eigen::Infinity>();
    if (residual < 1e-8) {
      best.iterations = it - 1;
      const double cu = cost_of(u);
      if (cu < best.cost) {
        best.cost = cu;
        best.controls = u;
      }
      return best;
    }

    const double momentum_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    Eigen::VectorXd z_next =
        u_next + ((momentum - 1.0) / momentum_next) * (u_next - u);
    // Restart the momentum when it points against the direction of progress.
    if (grad_z.dot(u_next - u) > 0.0) {
      z_next = u_next;
      momentum = 1.0;
    } else {
      momentum = momentum_next;
    }

    u = u_next;
    z = z_next;
    const double cu = cost_of(u);
    if (cu < best.cost) {
      best.cost = cu;
      best.controls = u;
    }
    best.iterations = it;
  }
  return best;
}

double arima_mpc_eval(std::pair<double, double> protagonist,
                      std::pair<double, double> antagonist, const ArimaMpcConfig& cfg,
                      std::uint64_t innovation_seed) {
  const auto in_range = [](double v) { return v >= -1.0 && v <= 1.0; };
  if (!in_range(protagonist.first) || !in_range(protagonist.second) ||
      !in_range(antagonist.first) || !in_range(antagonist.second))
    throw InputError("arima_mpc_eval: parameters must lie in [-1, 1]");

  ArimaParams arima = cfg.arima;
  arima.alpha = antagonist.first;
  arima.beta = antagonist.second;
  MpcParams mpc = cfg.mpc;
  mpc.A = protagonist.first;
  mpc.B = protagonist.second;
  return mpc_track_cost(mpc, arima_generate(arima, innovation_seed)).cost;
}

double noisy_sample(const Objective& obj, const Eigen::VectorXd& p, Rng& rng) {
  if (!obj.domain_box.contains(p))
    throw InputError(fmt::format("noisy_sample({}): point outside the domain box", obj.id));
  const double noise = obj.noise_variance > 0.0
                           ? std::sqrt(obj.noise_variance) * rng.normal()
                           : 0.0;
  return obj.value(p) + noise;
}

FdResult fd_oracle(const std::function<double(const Eigen::VectorXd&)>& f,
                   const Eigen::VectorXd& p, double h, const Box& box) {
  if (!box.contains(p)) throw InputError("fd_oracle: point outside the domain box");
  const int d = static_cast<int>(p.size());

  // Per-coordinate offset: 0 central, +1 forward-only, -1 backward-only.
  Eigen::VectorXd steps(d);
  std::vector<int> side(d, 0);
  bool any_one_sided = false;
  for (int i = 0; i < d; ++i) {
    steps[i] = h * (1.0 + std::abs(p[i]));
    const bool up_ok = p[i] + 2.0 * steps[i] <= box.hi[i];
    const bool down_ok = p[i] - 2.0 * steps[i] >= box.lo[i];
    if (p[i] + steps[i] <= box.hi[i] && p[i] - steps[i] >= box.lo[i]) {
      side[i] = 0;
    } else if (up_ok) {
      side[i] = 1;
      any_one_sided = true;
    } else if (down_ok) {
      side[i] = -1;
      any_one_sided = true;
    } else {
      throw InputError("fd_oracle: box narrower than the stencil");
    }
  }

  const auto at = [&](int i, double ti, int j = -1, double tj = 0.0) {
    Eigen::VectorXd q = p;
    q[i] += ti;
    if (j >= 0) q[j] += tj;
    return f(q);
  };

  FdResult out;
  out.one_sided = any_one_sided;
  out.grad.resize(d);
  out.hess.resize(d, d);
  const double f0 = f(p);

  for (int i = 0; i < d; ++i) {
    const double hi = steps[i];
    if (side[i] == 0) {
      out.grad[i] = (at(i, hi) - at(i, -hi)) / (2.0 * hi);
      out.hess(i, i) = (at(i, hi) - 2.0 * f0 + at(i, -hi)) / (hi * hi);
    } else {
      const double s = side[i];
      const double f1 = at(i, s * hi), f2 = at(i, 2.0 * s * hi);
      out.grad[i] = s * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * hi);
      out.hess(i, i) = (f0 - 2.0 * f1 + f2) / (hi * hi);
    }
  }

  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      const double hi = steps[i], hj = steps[j];
      double v;
      if (side[i] == 0 && side[j] == 0) {
        v = (at(i, hi, j, hj) - at(i, hi, j, -hj) - at(i, -hi, j, hj) +
             at(i, -hi, j, -hj)) /
            (4.0 * hi * hj);
      } else {
        // One-sided quadrant difference on the feasible side of each axis.
        const double si = side[i] == 0 ? 1.0 : side[i];
        const double sj = side[j] == 0 ? 1.0 : side[j];
        v = (at(i, si * hi, j, sj * hj) - at(i, si * hi) - at(j, sj * hj) + f0) /
            (si * hi * sj * hj);
      }
      out.hess(i, j) = v;
      out.hess(j, i) = v;
    }
  }
  return out;
}

namespace {

Box pair_box(int pairs) {
  Eigen::VectorXd lo(2 * pairs), hi(2 * pairs);
  for (int i = 0; i < pairs; ++i) {
    lo[i] = -0.95;
    hi[i] = 3.2;
    lo[pairs + i] = -0.45;
    hi[pairs + i] = 4.4;
  }
  return Box(lo, hi);
}

}  // namespace

Objective make_decaying() {
  Objective obj;
  obj.id = "decaying";
  obj.nx = 1;
  obj.ny = 1;
  obj.domain_box = Box::cube(2, -20.0, 20.0);
  obj.noise_variance = 1.0;
  obj.value = [](const Eigen::VectorXd& p) { return decaying_poly(p).value; };
  obj.true_eval = [](const Eigen::VectorXd& p) { return decaying_poly(p); };
  return obj;
}

Objective make_highdim(int pairs) {
  if (pairs < 1) throw InputError("make_highdim: pairs must be >= 1");
  Objective obj;
  obj.id = "highdim";
  obj.nx = pairs;
  obj.ny = pairs;
  obj.domain_box = pair_box(pairs);
  obj.noise_variance = 0.003;
  obj.value = [](const Eigen::VectorXd& p) { return highdim_poly(p).value; };
  obj.true_eval = [](const Eigen::VectorXd& p) { return highdim_poly(p); };
  return obj;
}

Objective make_quadratic(double a, double b, double c) {
  Objective obj;
  obj.id = "quadratic";
  obj.nx = 1;
  obj.ny = 1;
  obj.domain_box = Box::cube(2, -2.0, 2.0);
  obj.noise_variance = 0.01;
  obj.value = [a, b, c](const Eigen::VectorXd& p) { return quadratic_saddle(a, b, c, p).value; };
  obj.true_eval = [a, b, c](const Eigen::VectorXd& p) { return quadratic_saddle(a, b, c, p); };
  return obj;
}

Objective make_arima_mpc(const ArimaMpcConfig& cfg, std::uint64_t innovation_seed) {
  cfg.arima.validate();
  cfg.mpc.validate();
  Objective obj;
  obj.id = "arima-mpc";
  obj.nx = 2;
  obj.ny = 2;
  obj.domain_box = Box::cube(4, -1.0, 1.0);
  obj.noise_variance = 0.01;
  obj.value = [cfg, innovation_seed](const Eigen::VectorXd& p) {
    if (p.size() != 4) throw InputError("arima-mpc: expects a 4-D point");
    return arima_mpc_eval({p[0], p[1]}, {p[2], p[3]}, cfg, innovation_seed);
  };
  // No analytic derivatives exist for the solver-in-the-loop objective; the
  // evaluation oracle differentiates the noiseless value numerically.
  const Box box = obj.domain_box;
  const auto value = obj.value;
  obj.true_eval = [value, box](const Eigen::VectorXd& p) {
    const FdResult fd = fd_oracle(value, p, 1e-4, box);
    return FieldEval{value(p), fd.grad, fd.hess};
  };
  // Tracking costs are positive and explode as |alpha| -> 1 (the series
  // amplitude grows with the AR gain), spanning several decades across the
  // box; model the log so one stationary kernel fits both regimes. Roots are
  // preserved (grad log f = grad f / f) and so are Hessian block signs at
  // those roots.
  obj.log_model = true;
  return obj;
}

}  // namespace bsp
