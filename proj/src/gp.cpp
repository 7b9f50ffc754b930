#include "bsp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace bsp {
namespace {

constexpr double kStdFloor = 1e-8;    // below this, sigma-derivatives are reported as zero
constexpr double kJitterRel0 = 1e-10; // initial jitter, relative to sigma_f^2
constexpr double kJitterRelMax = 1e-4;

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& pts, const Hyperparams& hp) {
  const int n = static_cast<int>(pts.rows());
  Eigen::MatrixXd k(n, n);
  const double inv2l2 = 1.0 / (2.0 * hp.length_scale * hp.length_scale);
  for (int i = 0; i < n; ++i) {
    k(i, i) = hp.signal_variance;
    for (int j = 0; j < i; ++j) {
      const double d2 = (pts.row(i) - pts.row(j)).squaredNorm();
      const double v = hp.signal_variance * std::exp(-d2 * inv2l2);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// Factorize gram + (noise + jitter) I, escalating jitter on failure.
// Returns the achieved jitter; throws NumericalError at the cap.
double robust_llt(const Eigen::MatrixXd& gram, const Hyperparams& hp,
                  Eigen::LLT<Eigen::MatrixXd>* llt) {
  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += hp.noise_variance + jitter;
    llt->compute(a);
    if (llt->info() == Eigen::Success) return jitter;
    if (jitter == 0.0) {
      jitter = kJitterRel0 * hp.signal_variance;
    } else if (jitter < kJitterRelMax * hp.signal_variance) {
      jitter *= 10.0;
    } else {
      // Report an eigenvalue-based condition estimate; this path is cold.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
      const double lo = es.eigenvalues().minCoeff() + hp.noise_variance + jitter;
      const double hi = es.eigenvalues().maxCoeff() + hp.noise_variance + jitter;
      throw NumericalError(
          fmt::format("GP factorization failed at max jitter {:.3e}; eigenvalue range "
                      "[{:.3e}, {:.3e}], condition ~{:.3e}",
                      jitter, lo, hi, hi / std::max(lo, 1e-300)));
    }
  }
}

}  // namespace

KernelEval kernel_with_derivs(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj,
                              const Hyperparams& hp) {
  if (xi.size() != xj.size()) throw InputError("kernel_with_derivs: dimension mismatch");
  hp.validate();
  const double l2 = hp.length_scale * hp.length_scale;
  const Eigen::VectorXd diff = xi - xj;
  KernelEval out;
  out.value = hp.signal_variance * std::exp(-diff.squaredNorm() / (2.0 * l2));
  out.grad = -(out.value / l2) * diff;
  out.hess = (out.value / (l2 * l2)) * (diff * diff.transpose());
  out.hess.diagonal().array() -= out.value / l2;
  return out;
}

GpSurrogate GpSurrogate::prior(int nx, int ny, const Hyperparams& hp) {
  hp.validate();
  GpSurrogate s;
  s.data_ = Dataset::empty(nx, ny);
  s.hp_ = hp;
  s.chol_lower_.resize(0, 0);
  s.weights_.resize(0);
  return s;
}

GpSurrogate GpSurrogate::fit(Dataset data, const Hyperparams& hp) {
  hp.validate();
  if (data.size() == 0) throw InputError("GpSurrogate::fit: dataset is empty");
  if (data.observations.size() != data.size())
    throw InputError("GpSurrogate::fit: points/observations length mismatch");

  Eigen::LLT<Eigen::MatrixXd> llt;
  const double jitter = robust_llt(gram_matrix(data.points, hp), hp, &llt);

  GpSurrogate s;
  s.hp_ = hp;
  s.jitter_ = jitter;
  s.chol_lower_ = llt.matrixL();
  s.weights_ = llt.solve(data.observations);
  s.data_ = std::move(data);
  return s;
}

GpSurrogate GpSurrogate::append_observation(const Eigen::VectorXd& p, double r) const {
  if (p.size() != data_.dim()) throw InputError("append_observation: dimension mismatch");
  const int n = data_.size();
  if (n == 0) {
    Dataset d = data_;
    d.append(p, r);
    return fit(std::move(d), hp_);
  }

  // Row append: solve L l21 = k(X, p); the new pivot is the Schur complement
  // of the extended Gram matrix. Keep the jitter already in use.
  Eigen::VectorXd k_new(n);
  const double inv2l2 = 1.0 / (2.0 * hp_.length_scale * hp_.length_scale);
  for (int i = 0; i < n; ++i) {
    const double d2 = (data_.points.row(i).transpose() - p).squaredNorm();
    k_new[i] = hp_.signal_variance * std::exp(-d2 * inv2l2);
  }
  const double diag_new = hp_.signal_variance + hp_.noise_variance + jitter_;
  const Eigen::VectorXd l21 =
      chol_lower_.triangularView<Eigen::Lower>().solve(k_new);
  const double pivot2 = diag_new - l21.squaredNorm();

  Dataset d = data_;
  d.append(p, r);

  // The appended pivot must stay safely positive or the factor is unusable;
  // fall back to a full refit, which can escalate jitter.
  if (!(pivot2 > 1e-12 * diag_new) || !std::isfinite(pivot2)) return fit(std::move(d), hp_);

  GpSurrogate s;
  s.hp_ = hp_;
  s.jitter_ = jitter_;
  s.data_ = std::move(d);
  s.chol_lower_.setZero(n + 1, n + 1);
  s.chol_lower_.topLeftCorner(n, n) = chol_lower_;
  s.chol_lower_.row(n).head(n) = l21.transpose();
  s.chol_lower_(n, n) = std::sqrt(pivot2);
  const Eigen::VectorXd tmp =
      s.chol_lower_.triangularView<Eigen::Lower>().solve(s.data_.observations);
  s.weights_ = s.chol_lower_.transpose().triangularView<Eigen::Upper>().solve(tmp);
  return s;
}

PosteriorEval GpSurrogate::posterior_eval(const Eigen::VectorXd& p) const {
  if (p.size() != data_.dim()) throw InputError("posterior_eval: dimension mismatch");
  const int n = data_.size();
  const int d = data_.dim();

  PosteriorEval out;
  out.mean_grad = Eigen::VectorXd::Zero(d);
  out.mean_hess = Eigen::MatrixXd::Zero(d, d);
  out.std_grad = Eigen::VectorXd::Zero(d);
  out.std_hess = Eigen::MatrixXd::Zero(d, d);

  if (n == 0) {
    out.mean = 0.0;
    out.std = std::sqrt(hp_.signal_variance);
    return out;
  }

  // Cross-kernel vector, its Jacobian (n x d) and per-point Hessians, all
  // with respect to the test point.
  const double l2 = hp_.length_scale * hp_.length_scale;
  Eigen::VectorXd k_star(n);
  Eigen::MatrixXd k_jac(n, d);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd diff = p - data_.points.row(i).transpose();
    const double v = hp_.signal_variance * std::exp(-diff.squaredNorm() / (2.0 * l2));
    k_star[i] = v;
    k_jac.row(i) = -(v / l2) * diff.transpose();
  }

  out.mean = k_star.dot(weights_);
  out.mean_grad = k_jac.transpose() * weights_;

  const auto solve_a = [&](const Eigen::MatrixXd& rhs) -> Eigen::MatrixXd {
    const Eigen::MatrixXd tmp = chol_lower_.triangularView<Eigen::Lower>().solve(rhs);
    return chol_lower_.transpose().triangularView<Eigen::Upper>().solve(tmp);
  };
  const Eigen::VectorXd u = solve_a(k_star);  // A^{-1} k*

  // Cancellation in sigma_f^2 - k*^T A^{-1} k* leaves O(eps * cond(A)) noise
  // at interpolated points; anything below 1e-10 * sigma_f^2 is round-off,
  // far beneath the sigma_z^2/m floor any experiment here can reach.
  double var = hp_.signal_variance - k_star.dot(u);
  if (var < 1e-10 * hp_.signal_variance) var = 0.0;

  Eigen::VectorXd var_grad = -2.0 * (k_jac.transpose() * u);

  // Accumulate the kernel-Hessian sums weighted by alpha (mean) and by u
  // (variance) in one pass: hess_i = k_i (diff diff^T / l^4 - I / l^2).
  Eigen::MatrixXd mean_hess = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd u_hess = Eigen::MatrixXd::Zero(d, d);
  double mean_diag = 0.0, u_diag = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd diff = p - data_.points.row(i).transpose();
    const double scale = k_star[i] / (l2 * l2);
    mean_hess.noalias() += (weights_[i] * scale) * (diff * diff.transpose());
    u_hess.noalias() += (u[i] * scale) * (diff * diff.transpose());
    mean_diag += weights_[i] * k_star[i] / l2;
    u_diag += u[i] * k_star[i] / l2;
  }
  mean_hess.diagonal().array() -= mean_diag;
  u_hess.diagonal().array() -= u_diag;
  out.mean_hess = mean_hess;

  const Eigen::MatrixXd w = solve_a(k_jac);  // A^{-1} Jk
  Eigen::MatrixXd var_hess = -2.0 * u_hess - 2.0 * (k_jac.transpose() * w);

  out.std = std::sqrt(var);
  if (out.std >= kStdFloor) {
    out.std_grad = var_grad / (2.0 * out.std);
    out.std_hess = var_hess / (2.0 * out.std) -
                   (var_grad * var_grad.transpose()) / (4.0 * out.std * out.std * out.std);
  }
  return out;
}

double log_marginal_likelihood(const Dataset& data, const Hyperparams& hp) {
  hp.validate();
  const int n = data.size();
  if (n == 0) throw InputError("log_marginal_likelihood: dataset is empty");

  Eigen::LLT<Eigen::MatrixXd> llt;
  robust_llt(gram_matrix(data.points, hp), hp, &llt);
  const Eigen::VectorXd alpha = llt.solve(data.observations);
  const double log_det = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  return -0.5 * data.observations.dot(alpha) - 0.5 * log_det -
         0.5 * n * std::log(2.0 * M_PI);
}

namespace {

// log-ML and its gradient in theta = (log sigma_f^2, log sigma_l). Uses one
// Cholesky plus one triangular inversion per call; the O(n^3) trace terms are
// what make hyperparameter refits the dominant cost of a run.
struct LogMlEval {
  double value;
  Eigen::Vector2d grad;
};

LogMlEval log_ml_with_grad(const Eigen::MatrixXd& pts, const Eigen::VectorXd& obs,
                           const Eigen::MatrixXd& sqdist, double sf2, double sl,
                           double noise) {
  const int n = static_cast<int>(pts.rows());
  Hyperparams hp{sf2, sl, noise};
  Eigen::MatrixXd sigma = (sqdist / (-2.0 * sl * sl)).array().exp().matrix() * sf2;

  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd a = sigma;
    a.diagonal().array() += noise + jitter;
    llt.compute(a);
    if (llt.info() == Eigen::Success) break;
    jitter = (jitter == 0.0) ? kJitterRel0 * sf2 : jitter * 10.0;
    if (jitter > kJitterRelMax * sf2) throw NumericalError("log_ml_with_grad: factorization failed");
  }

  const Eigen::VectorXd alpha = llt.solve(obs);
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double value =
      -0.5 * obs.dot(alpha) - 0.5 * log_det - 0.5 * n * std::log(2.0 * M_PI);

  // d log-ML / d theta = 1/2 alpha^T (dA/dtheta) alpha - 1/2 tr(A^{-1} dA/dtheta).
  // dA/dsf2 = Sigma / sf2; dA/dsl = Sigma .* sqdist / sl^3.
  const double eff_noise = noise + jitter;
  const Eigen::MatrixXd linv =
      l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
  const double tr_ainv = linv.squaredNorm();
  const double quad_sf2 = (obs.dot(alpha) - eff_noise * alpha.squaredNorm()) / sf2;
  const double tr_sf2 = (n - eff_noise * tr_ainv) / sf2;

  const Eigen::MatrixXd m = sigma.cwiseProduct(sqdist);
  // tr(A^{-1} M) = sum over entries of (L^{-1} M L^{-T}) diag = <L^{-1}M, L^{-1}>_F.
  const double tr_sl = ((linv * m).cwiseProduct(linv)).sum() / (sl * sl * sl);
  const double quad_sl = alpha.dot(m * alpha) / (sl * sl * sl);

  LogMlEval out;
  out.value = value;
  const double d_sf2 = 0.5 * quad_sf2 - 0.5 * tr_sf2;
  const double d_sl = 0.5 * quad_sl - 0.5 * tr_sl;
  out.grad << d_sf2 * sf2, d_sl * sl;  // chain rule into log space
  return out;
}

}  // namespace

HyperparamFit optimize_hyperparameters(const Dataset& data, const Hyperparams& init,
                                       const HyperparamSearch& search, Rng& rng) {
  init.validate();
  if (data.size() == 0) throw InputError("optimize_hyperparameters: dataset is empty");
  if (search.restarts < 0) throw InputError("optimize_hyperparameters: restarts < 0");

  const int n = data.size();
  Eigen::MatrixXd sqdist(n, n);
  for (int i = 0; i < n; ++i) {
    sqdist(i, i) = 0.0;
    for (int j = 0; j < i; ++j) {
      const double d2 = (data.points.row(i) - data.points.row(j)).squaredNorm();
      sqdist(i, j) = d2;
      sqdist(j, i) = d2;
    }
  }

  const double obs_mean = data.observations.mean();
  double obs_var = (data.observations.array() - obs_mean).square().sum() / std::max(n, 1);
  obs_var = std::max(obs_var, 1e-12);
  const double diam = std::max(search.domain_diameter, 1e-12);

  // Box on theta keeps the ascent away from regions where the Gram matrix is
  // numerically rank-1 (huge length scale) or diagonal (tiny signal); the
  // caller may tighten the length-scale range further.
  const double sl_lo =
      search.min_length_scale > 0.0 ? search.min_length_scale : 1e-3 * diam;
  const double sl_hi =
      search.max_length_scale > 0.0 ? search.max_length_scale : 1e2 * diam;
  if (!(sl_lo <= sl_hi))
    throw InputError("optimize_hyperparameters: empty length-scale range");
  const double sf2_lo = std::max(search.min_signal_variance, 1e-6 * obs_var);
  if (!(sf2_lo <= 1e6 * obs_var))
    throw InputError("optimize_hyperparameters: empty signal-variance range");
  const Eigen::Vector2d theta_lo(std::log(sf2_lo), std::log(sl_lo));
  const Eigen::Vector2d theta_hi(std::log(1e6 * obs_var), std::log(sl_hi));
  const auto clamp_theta = [&](Eigen::Vector2d t) {
    return t.cwiseMax(theta_lo).cwiseMin(theta_hi);
  };

  const auto eval = [&](const Eigen::Vector2d& theta) {
    return log_ml_with_grad(data.points, data.observations, sqdist,
                            std::exp(theta[0]), std::exp(theta[1]), init.noise_variance);
  };

  // BFGS ascent (minimizing -logML) with Armijo backtracking from one start.
  // Returns false if even the initial evaluation failed.
  const auto ascend = [&](Eigen::Vector2d theta, Eigen::Vector2d* best_theta,
                          double* best_val) -> bool {
    LogMlEval cur;
    try {
      cur = eval(theta);
    } catch (const NumericalError&) {
      return false;
    }
    Eigen::Matrix2d h_inv = Eigen::Matrix2d::Identity();
    for (int it = 0; it < search.max_ascent_iters; ++it) {
      if (cur.grad.norm() < search.grad_tol * std::max(1.0, std::abs(cur.value))) break;
      Eigen::Vector2d dir = h_inv * cur.grad;  // ascent direction
      if (dir.dot(cur.grad) <= 0.0 || !dir.allFinite()) {
        h_inv.setIdentity();
        dir = cur.grad;
      }
      double step = 1.0;
      bool accepted = false;
      LogMlEval next;
      Eigen::Vector2d theta_next;
      for (int ls = 0; ls < 20; ++ls) {
        theta_next = clamp_theta(theta + step * dir);
        try {
          next = eval(theta_next);
        } catch (const NumericalError&) {
          step *= 0.5;
          continue;
        }
        if (next.value > cur.value + 1e-4 * (theta_next - theta).dot(cur.grad)) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      const Eigen::Vector2d s = theta_next - theta;
      const Eigen::Vector2d yv = -(next.grad - cur.grad);  // gradient of -logML
      const double sy = s.dot(yv);
      if (sy > 1e-12) {
        const Eigen::Matrix2d i2 = Eigen::Matrix2d::Identity();
        const Eigen::Matrix2d v = i2 - (s * yv.transpose()) / sy;
        h_inv = v * h_inv * v.transpose() + (s * s.transpose()) / sy;
      } else {
        h_inv.setIdentity();
      }
      theta = theta_next;
      cur = next;
      if (s.norm() < 1e-10) break;
    }
    *best_theta = theta;
    *best_val = cur.value;
    return true;
  };

  Eigen::Vector2d init_theta = clamp_theta(
      Eigen::Vector2d(std::log(init.signal_variance), std::log(init.length_scale)));

  HyperparamFit fit;
  fit.hp = init;
  fit.log_ml = -std::numeric_limits<double>::infinity();
  bool any_ok = false;

  // Score the untouched init first so the result can never regress below it.
  try {
    fit.log_ml = eval(init_theta).value;
    any_ok = true;
  } catch (const NumericalError&) {
  }

  std::vector<Eigen::Vector2d> starts;
  starts.push_back(init_theta);
  const double draw_lo = std::min(std::max(0.05 * diam, sl_lo), sl_hi);
  const double draw_hi = std::max(std::min(2.0 * diam, sl_hi), draw_lo);
  const double sf2_draw_lo = std::max(1e-2 * obs_var, sf2_lo);
  const double sf2_draw_hi = std::max(1e2 * obs_var, sf2_draw_lo);
  for (int rIdx = 0; rIdx < search.restarts; ++rIdx) {
    starts.emplace_back(std::log(rng.log_uniform(sf2_draw_lo, sf2_draw_hi)),
                        std::log(rng.log_uniform(draw_lo, draw_hi)));
  }

  for (const auto& start : starts) {
    Eigen::Vector2d theta;
    double val;
    if (!ascend(clamp_theta(start), &theta, &val)) continue;
    any_ok = true;
    if (val > fit.log_ml) {
      fit.log_ml = val;
      fit.hp = Hyperparams{std::exp(theta[0]), std::exp(theta[1]), init.noise_variance};
    }
  }

  fit.ascent_failed = !any_ok;
  return fit;
}

}  // namespace bsp
