#pragma once

#include <Eigen/Dense>

#include "bsp/errors.hpp"
#include "bsp/rng.hpp"

namespace bsp {

// Squared-exponential kernel hyperparameters. Noise variance is the known
// observation-noise level injected by the experiment; it is never learned.
struct Hyperparams {
  double signal_variance = 1.0;  // sigma_f^2, output units squared
  double length_scale = 1.0;     // sigma_l, input units
  double noise_variance = 0.0;   // sigma_z^2, output units squared

  void validate() const {
    if (!(signal_variance > 0.0)) throw InputError("Hyperparams: signal_variance must be > 0");
    if (!(length_scale > 0.0)) throw InputError("Hyperparams: length_scale must be > 0");
    if (!(noise_variance >= 0.0)) throw InputError("Hyperparams: noise_variance must be >= 0");
  }
};

// Joint-space sample set. Points are rows of an n x d matrix with the first
// nx coordinates belonging to the minimizing player and the last ny to the
// maximizing player.
struct Dataset {
  Eigen::MatrixXd points;        // n x (nx + ny)
  Eigen::VectorXd observations;  // n
  int nx = 0;
  int ny = 0;

  static Dataset empty(int nx, int ny) {
    Dataset d;
    d.nx = nx;
    d.ny = ny;
    d.points.resize(0, nx + ny);
    d.observations.resize(0);
    return d;
  }

  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return nx + ny; }

  void append(const Eigen::VectorXd& p, double r) {
    if (p.size() != dim()) throw InputError("Dataset::append: dimension mismatch");
    points.conservativeResize(points.rows() + 1, Eigen::NoChange);
    points.row(points.rows() - 1) = p.transpose();
    observations.conservativeResize(observations.size() + 1);
    observations[observations.size() - 1] = r;
  }
};

struct KernelEval {
  double value = 0.0;
  Eigen::VectorXd grad;  // d/dxi
  Eigen::MatrixXd hess;  // d^2/dxi^2
};

// k(xi,xj) = sigma_f^2 exp(-|xi-xj|^2 / (2 sigma_l^2)) and its derivatives
// with respect to the first argument.
KernelEval kernel_with_derivs(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj,
                              const Hyperparams& hp);

// Posterior mean/std and their analytic first and second derivatives at one
// test point. std derivatives are zeroed below std = 1e-8 where the chain
// rule 1/(2 std) blows up.
struct PosteriorEval {
  double mean = 0.0;
  Eigen::VectorXd mean_grad;
  Eigen::MatrixXd mean_hess;
  double std = 0.0;
  Eigen::VectorXd std_grad;
  Eigen::MatrixXd std_hess;
};

// GP posterior over a fixed dataset, immutable once fitted; share freely
// across threads. Holds the Cholesky factor of (K + sigma_z^2 I + jitter I)
// and the weight vector alpha solving that system against the observations.
class GpSurrogate {
 public:
  // Zero-mean prior with no data (mean 0, std = sigma_f everywhere).
  static GpSurrogate prior(int nx, int ny, const Hyperparams& hp);

  // Factorizes the Gram matrix, escalating diagonal jitter from
  // 1e-10*sigma_f^2 by x10 up to 1e-4*sigma_f^2 if the factorization fails.
  static GpSurrogate fit(Dataset data, const Hyperparams& hp);

  // New surrogate over dataset + {(p, r)} via an O(n^2) Cholesky row append;
  // falls back to a full refit if the appended pivot is not safely positive.
  GpSurrogate append_observation(const Eigen::VectorXd& p, double r) const;

  PosteriorEval posterior_eval(const Eigen::VectorXd& p) const;

  const Dataset& dataset() const { return data_; }
  const Hyperparams& hyperparams() const { return hp_; }
  double jitter() const { return jitter_; }
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  GpSurrogate() = default;

  Dataset data_;
  Hyperparams hp_;
  Eigen::MatrixXd chol_lower_;  // L with L L^T = K + (sigma_z^2 + jitter) I
  Eigen::VectorXd weights_;     // alpha
  double jitter_ = 0.0;
};

// -1/2 r^T A^{-1} r - 1/2 log det A - n/2 log 2pi with A = K + sigma_z^2 I
// (same jitter escalation as fit).
double log_marginal_likelihood(const Dataset& data, const Hyperparams& hp);

struct HyperparamSearch {
  int restarts = 5;              // random log-uniform initializations besides init
  double domain_diameter = 1.0;  // scales the length_scale search range
  int max_ascent_iters = 40;
  double grad_tol = 1e-5;        // on the log-space gradient
  // Optional absolute bounds on the fitted length scale (0 = keep the wide
  // numerical default). A floor keeps sparse datasets mutually informative;
  // a cap prevents the "everything is noise" flat-posterior fit.
  double min_length_scale = 0.0;
  double max_length_scale = 0.0;
  // Absolute floor on the fitted signal variance (0 = loose default). On
  // near-noise-level data the likelihood is happy to explain everything as
  // noise; a collapsed signal variance yields a flat, overconfident posterior.
  double min_signal_variance = 0.0;
};

struct HyperparamFit {
  Hyperparams hp;
  double log_ml = 0.0;
  bool ascent_failed = false;  // every ascent aborted; hp is the init passed in
};

// Maximum-likelihood fit of (signal_variance, length_scale) by quasi-Newton
// ascent in log space; noise variance is held at init.noise_variance. The
// result never has lower log-ML than init. Restart draws come from `rng`
// (signal variance in [1e-2,1e2]*var(r), length scale in
// [0.05,2]*domain_diameter, both log-uniform).
HyperparamFit optimize_hyperparameters(const Dataset& data, const Hyperparams& init,
                                       const HyperparamSearch& search, Rng& rng);

}  // namespace bsp
