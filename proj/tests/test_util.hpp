#pragma once

// Test-only oracles, deliberately independent of the library's linear-algebra
// paths: the dense GP oracle uses an eigendecomposition instead of Cholesky,
// and all derivative checks use central finite differences of plain value
// evaluations.

#include <cmath>
#include <functional>

#include <Eigen/Dense>

namespace testutil {

// Mixed absolute/relative error: |a-b| scaled by max(1, |b|).
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::abs(b));
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

struct DenseGpOracle {
  Eigen::MatrixXd points;  // n x d
  Eigen::VectorXd obs;
  double sf2, sl, noise;

  Eigen::MatrixXd gram() const {
    const int n = static_cast<int>(points.rows());
    Eigen::MatrixXd k(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        k(i, j) = sf2 * std::exp(-(points.row(i) - points.row(j)).squaredNorm() /
                                 (2.0 * sl * sl));
    return k;
  }

  Eigen::MatrixXd a_inverse() const {
    Eigen::MatrixXd a = gram();
    a.diagonal().array() += noise;
    return Eigen::FullPivLU<Eigen::MatrixXd>(a).inverse();
  }

  Eigen::VectorXd k_star(const Eigen::VectorXd& p) const {
    const int n = static_cast<int>(points.rows());
    Eigen::VectorXd k(n);
    for (int i = 0; i < n; ++i)
      k[i] = sf2 *
             std::exp(-(points.row(i).transpose() - p).squaredNorm() / (2.0 * sl * sl));
    return k;
  }

  Eigen::VectorXd weights() const { return a_inverse() * obs; }

  double mean(const Eigen::VectorXd& p) const { return k_star(p).dot(weights()); }

  double variance(const Eigen::VectorXd& p) const {
    const Eigen::VectorXd k = k_star(p);
    return sf2 - k.dot(a_inverse() * k);
  }

  double log_ml() const {
    Eigen::MatrixXd a = gram();
    a.diagonal().array() += noise;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    const double log_det = es.eigenvalues().array().log().sum();
    const double quad = obs.dot(a_inverse() * obs);
    return -0.5 * quad - 0.5 * log_det -
           0.5 * static_cast<double>(points.rows()) * std::log(2.0 * M_PI);
  }
};

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

inline Eigen::VectorXd fd_grad(const ScalarFn& f, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_hess(const ScalarFn& f, const Eigen::VectorXd& x, double h) {
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd hess(d, d);
  const double f0 = f(x);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    hess(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (h * h);
    for (int j = 0; j < i; ++j) {
      Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[i] += h;
      xpp[j] += h;
      xpm[i] += h;
      xpm[j] -= h;
      xmp[i] -= h;
      xmp[j] += h;
      xmm[i] -= h;
      xmm[j] -= h;
      const double v = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h * h);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

}  // namespace testutil
