#include "bsp/objectives.hpp"

#include <cmath>

#include <doctest.h>

#include "bsp/rng.hpp"
#include "test_util.hpp"

using bsp::ArimaParams;
using bsp::Box;
using bsp::MpcParams;
using bsp::Rng;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec2(double x, double y) {
  VectorXd v(2);
  v << x, y;
  return v;
}

// Independent term-by-term Bertsimas sum used as an oracle.
double bertsimas_terms(double x, double y) {
  return -2 * std::pow(x, 6) + 12.2 * std::pow(x, 5) - 21.2 * std::pow(x, 4) - 6.2 * x +
         6.4 * std::pow(x, 3) + 4.7 * std::pow(x, 2) - std::pow(y, 6) +
         11 * std::pow(y, 5) - 43.3 * std::pow(y, 4) + 10 * y + 74.8 * std::pow(y, 3) -
         56.9 * std::pow(y, 2) + 4.1 * x * y + 0.1 * y * y * x * x - 0.4 * y * y * x -
         0.4 * x * x * y;
}

}  // namespace

TEST_CASE("decaying polynomial: origin, decay, and derivatives") {
  auto e0 = bsp::decaying_poly(VectorXd::Zero(2));
  CHECK(e0.value == 0.0);
  CHECK(e0.grad.norm() == 0.0);

  CHECK(bsp::decaying_poly(vec2(50.0, 50.0)).value < 1e-6);
  CHECK(bsp::decaying_poly(vec2(-60.0, 40.0)).value < 1e-6);

  Rng rng(3);
  const Box box = Box::cube(2, -20, 20);
  for (int t = 0; t < 30; ++t) {
    const VectorXd p = vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));
    const auto e = bsp::decaying_poly(p);
    auto value = [](const VectorXd& q) { return bsp::decaying_poly(q).value; };
    // Second differences need a larger step than first differences before
    // round-off in f/h^2 dominates truncation.
    CHECK(testutil::rel_err(e.grad, bsp::fd_oracle(value, p, 1e-5, box).grad) < 1e-6);
    CHECK(testutil::rel_err(e.hess, bsp::fd_oracle(value, p, 1e-4, box).hess) < 1e-6);
  }
}

TEST_CASE("Bertsimas polynomial: origin values and the term-sum oracle") {
  auto e0 = bsp::bertsimas_poly(VectorXd::Zero(2));
  CHECK(e0.value == 0.0);
  CHECK(e0.grad[0] == doctest::Approx(-6.2));
  CHECK(e0.grad[1] == doctest::Approx(10.0));

  CHECK(bsp::bertsimas_poly(vec2(1.0, 1.0)).value ==
        doctest::Approx(bertsimas_terms(1.0, 1.0)).epsilon(1e-12));

  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const double x = rng.uniform(-0.95, 3.2), y = rng.uniform(-0.45, 4.4);
    CHECK(bsp::bertsimas_poly(vec2(x, y)).value ==
          doctest::Approx(bertsimas_terms(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("Bertsimas derivatives match finite differences") {
  Rng rng(7);
  const Box box = Box(vec2(-0.95, -0.45), vec2(3.2, 4.4));
  for (int t = 0; t < 30; ++t) {
    const VectorXd p = vec2(rng.uniform(-0.9, 3.1), rng.uniform(-0.4, 4.3));
    const auto e = bsp::bertsimas_poly(p);
    auto value = [](const VectorXd& q) { return bsp::bertsimas_poly(q).value; };
    CHECK(testutil::rel_err(e.grad, bsp::fd_oracle(value, p, 1e-5, box).grad) < 1e-5);
    CHECK(testutil::rel_err(e.hess, bsp::fd_oracle(value, p, 1e-4, box).hess) < 1e-5);
  }
}

TEST_CASE("high-dimension polynomial: separability") {
  const int n = 5;
  auto e0 = bsp::highdim_poly(VectorXd::Zero(2 * n));
  CHECK(e0.value == 0.0);
  for (int i = 0; i < n; ++i) {
    CHECK(e0.grad[i] == doctest::Approx(-6.2));
    CHECK(e0.grad[n + i] == doctest::Approx(10.0));
  }

  Rng rng(11);
  VectorXd p(2 * n);
  for (int i = 0; i < n; ++i) {
    p[i] = rng.uniform(-0.9, 3.1);
    p[n + i] = rng.uniform(-0.4, 4.3);
  }
  const auto e = bsp::highdim_poly(p);

  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto pair = bsp::bertsimas_poly(vec2(p[i], p[n + i]));
    sum += pair.value;
    CHECK(e.grad[i] == doctest::Approx(pair.grad[0]));
    CHECK(e.grad[n + i] == doctest::Approx(pair.grad[1]));
    CHECK(e.hess(i, i) == doctest::Approx(pair.hess(0, 0)));
    CHECK(e.hess(n + i, n + i) == doctest::Approx(pair.hess(1, 1)));
    CHECK(e.hess(i, n + i) == doctest::Approx(pair.hess(0, 1)));
  }
  CHECK(e.value == doctest::Approx(sum));

  // Cross-pair blocks vanish.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        CHECK(e.hess(i, n + j) == 0.0);
        CHECK(e.hess(i, j) == (i == j ? e.hess(i, j) : 0.0));
      }
}

TEST_CASE("a replicated per-pair saddle is a saddle of the high-dimension sum") {
  // Hunt for a Bertsimas point satisfying the scalar second-order conditions
  // (hxx > 0, hyy < 0) with a small gradient, then check the stacked blocks.
  VectorXd best;
  double best_norm = 1e9;
  for (double x = -0.9; x <= 3.2; x += 0.005) {
    for (double y = -0.4; y <= 4.4; y += 0.005) {
      const auto e = bsp::bertsimas_poly(vec2(x, y));
      if (e.hess(0, 0) > 0 && e.hess(1, 1) < 0 && e.grad.norm() < best_norm) {
        best_norm = e.grad.norm();
        best = vec2(x, y);
      }
    }
  }
  REQUIRE(best.size() == 2);
  CHECK(best_norm < 1.0);  // grid-resolution near-saddle is enough for the block test

  const int n = 5;
  VectorXd p(2 * n);
  for (int i = 0; i < n; ++i) {
    p[i] = best[0];
    p[n + i] = best[1];
  }
  const auto e = bsp::highdim_poly(p);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es_xx(e.hess.topLeftCorner(n, n));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es_yy(e.hess.bottomRightCorner(n, n));
  CHECK(es_xx.eigenvalues().minCoeff() > 0.0);
  CHECK(es_yy.eigenvalues().maxCoeff() < 0.0);
}

TEST_CASE("quadratic saddle family") {
  auto e0 = bsp::quadratic_saddle(1.0, 1.0, 1.0, VectorXd::Zero(2));
  CHECK(e0.grad.norm() == 0.0);
  CHECK(e0.hess(0, 0) > 0.0);
  CHECK(e0.hess(1, 1) < 0.0);

  auto e1 = bsp::quadratic_saddle(1.0, 0.0, 1.0, vec2(1.0, 0.0));
  CHECK(e1.value == doctest::Approx(1.0));
  CHECK(e1.grad[0] == doctest::Approx(2.0));
  CHECK(e1.grad[1] == doctest::Approx(0.0));

  Rng rng(13);
  const Box box = Box::cube(2, -2, 2);
  for (int t = 0; t < 20; ++t) {
    const VectorXd p = vec2(rng.uniform(-2, 2), rng.uniform(-2, 2));
    const auto e = bsp::quadratic_saddle(0.7, 1.3, 2.1, p);
    auto value = [](const VectorXd& q) { return bsp::quadratic_saddle(0.7, 1.3, 2.1, q).value; };
    const auto fd = bsp::fd_oracle(value, p, 1e-5, box);
    CHECK(testutil::rel_err(e.grad, fd.grad) < 1e-6);
    CHECK(testutil::rel_err(e.hess, fd.hess) < 1e-6);
  }
}

TEST_CASE("ARIMA generation: collapse, geometric decay, determinism") {
  ArimaParams zero;
  zero.innovation_sd = 0.0;
  zero.horizon = 10;
  CHECK(bsp::arima_generate(zero, 42).norm() == 0.0);

  ArimaParams geo;
  geo.innovation_sd = 0.0;
  geo.alpha = 0.5;
  geo.s0 = 1.0;
  geo.horizon = 4;
  const VectorXd s = bsp::arima_generate(geo, 1);
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.25));
  CHECK(s[2] == doctest::Approx(0.125));

  ArimaParams noisy;
  noisy.alpha = 0.3;
  noisy.beta = -0.8;
  CHECK(bsp::arima_generate(noisy, 77) == bsp::arima_generate(noisy, 77));
  CHECK(bsp::arima_generate(noisy, 77) != bsp::arima_generate(noisy, 78));

  // Innovations don't depend on (alpha, beta): same seed, different params,
  // same underlying noise path. With alpha=0, beta=0 the series IS the noise.
  ArimaParams probe = noisy;
  probe.alpha = 0.0;
  probe.beta = 0.0;
  const VectorXd w = bsp::arima_generate(probe, 77);
  ArimaParams alpha_only = probe;
  alpha_only.alpha = 0.5;
  const VectorXd sa = bsp::arima_generate(alpha_only, 77);
  // s_1 = alpha*w_0 + w_1 must hold with the same w draw.
  CHECK(sa[1] == doctest::Approx(0.5 * w[0] + w[1]));
}

TEST_CASE("MPC tracking: trivial, pinned, and interior-solution cases") {
  MpcParams mpc;
  mpc.A = 0.5;
  mpc.B = 0.8;

  // Zero target from zero state: zero effort, zero cost.
  auto sol = bsp::mpc_track_cost(mpc, VectorXd::Zero(8));
  CHECK(sol.cost == doctest::Approx(0.0));
  CHECK(sol.controls.norm() == 0.0);

  // Pinned controls u_min = u_max = 0: pure-rollout tracking error.
  MpcParams pinned = mpc;
  pinned.u_min = pinned.u_max = 0.0;
  pinned.s0_hat = 1.0;
  VectorXd series = VectorXd::Constant(5, 0.3);
  double rollout_cost = 0.0;
  double s_hat = pinned.s0_hat;
  for (int t = 0; t < 5; ++t) {
    s_hat = pinned.A * s_hat;
    rollout_cost += pinned.Q * (s_hat - series[t]) * (s_hat - series[t]);
  }
  CHECK(bsp::mpc_track_cost(pinned, series).cost == doctest::Approx(rollout_cost));

  // Interior solution matches the closed-form unconstrained optimum.
  Rng rng(17);
  VectorXd target(10);
  for (int i = 0; i < 10; ++i) target[i] = 0.2 * rng.normal();
  const auto sol2 = bsp::mpc_track_cost(mpc, target);
  REQUIRE(sol2.controls.cwiseAbs().maxCoeff() < mpc.u_max - 1e-6);

  // Oracle: u* = (Q G^T G + R I)^{-1} Q G^T target (s0_hat = 0 so c = 0).
  const int f = 10;
  MatrixXd g = MatrixXd::Zero(f, f);
  for (int j = 0; j < f; ++j) {
    double coef = mpc.B;
    for (int t = j; t < f; ++t) {
      g(t, j) = coef;
      coef *= mpc.A;
    }
  }
  const MatrixXd h = mpc.Q * g.transpose() * g + mpc.R * MatrixXd::Identity(f, f);
  const VectorXd u_star = h.ldlt().solve(mpc.Q * g.transpose() * target);
  const double oracle_cost =
      mpc.Q * (g * u_star - target).squaredNorm() + mpc.R * u_star.squaredNorm();
  CHECK(testutil::rel_err(sol2.cost, oracle_cost) < 1e-6);

  // R -> 0 approaches the unconstrained least-squares optimum.
  MpcParams loose = mpc;
  loose.R = 1e-6;
  const VectorXd u_ls = (g.transpose() * g).ldlt().solve(g.transpose() * target);
  if (u_ls.cwiseAbs().maxCoeff() < loose.u_max) {
    const double ls_cost = (g * u_ls - target).squaredNorm();
    CHECK(bsp::mpc_track_cost(loose, target).cost ==
          doctest::Approx(ls_cost).epsilon(1e-3));
  }
}

TEST_CASE("MPC cost is nonincreasing in the iteration budget") {
  MpcParams mpc;
  mpc.A = 1.0;
  mpc.B = 1.0;
  Rng rng(23);
  VectorXd series(20);
  for (int i = 0; i < 20; ++i) series[i] = 3.0 * rng.normal();  // saturates the box
  double prev = std::numeric_limits<double>::infinity();
  for (int iters : {1, 3, 10, 30, 100, 300, 1000, 10000}) {
    const double cost = bsp::mpc_track_cost(mpc, series, iters).cost;
    CHECK(cost <= prev + 1e-12);
    prev = cost;
  }
}

TEST_CASE("uncontrollable system (B = 0) returns the rollout cost") {
  MpcParams mpc;
  mpc.A = 0.9;
  mpc.B = 0.0;
  mpc.s0_hat = 2.0;
  VectorXd series = VectorXd::Constant(6, 1.0);
  double expect = 0.0, s_hat = mpc.s0_hat;
  for (int t = 0; t < 6; ++t) {
    s_hat = mpc.A * s_hat;
    expect += mpc.Q * (s_hat - series[t]) * (s_hat - series[t]);
  }
  CHECK(bsp::mpc_track_cost(mpc, series).cost == doctest::Approx(expect));
}

TEST_CASE("ARIMA-MPC game value") {
  bsp::ArimaMpcConfig cfg;

  // Degenerate: no innovations, zero start -> zero series -> zero cost.
  bsp::ArimaMpcConfig quiet = cfg;
  quiet.arima.innovation_sd = 0.0;
  CHECK(bsp::arima_mpc_eval({0.5, 0.3}, {0.0, 0.0}, quiet, 9) == doctest::Approx(0.0));
  // ... and then the value is protagonist-invariant when B = 0.
  CHECK(bsp::arima_mpc_eval({0.9, 0.0}, {0.0, 0.0}, quiet, 9) ==
        doctest::Approx(bsp::arima_mpc_eval({-0.7, 0.0}, {0.0, 0.0}, quiet, 9)));

  CHECK_THROWS_AS(bsp::arima_mpc_eval({1.5, 0.0}, {0.0, 0.0}, cfg, 9), bsp::InputError);

  // Determinism given the innovation seed.
  CHECK(bsp::arima_mpc_eval({0.2, 0.5}, {0.4, -0.6}, cfg, 123) ==
        bsp::arima_mpc_eval({0.2, 0.5}, {0.4, -0.6}, cfg, 123));

  // Smoothness probe: finite-difference gradient at h=1e-4 is well-defined
  // (finite, and stable to halving the step).
  auto obj = bsp::make_arima_mpc(cfg, 123);
  VectorXd p(4);
  p << 0.2, 0.5, 0.4, -0.6;
  const auto fd1 = bsp::fd_oracle(obj.value, p, 1e-4, obj.domain_box);
  const auto fd2 = bsp::fd_oracle(obj.value, p, 5e-5, obj.domain_box);
  CHECK(fd1.grad.allFinite());
  CHECK((fd1.grad - fd2.grad).norm() < 1e-2 * (1.0 + fd1.grad.norm()));
}

TEST_CASE("noisy sampling") {
  auto obj = bsp::make_quadratic(1.0, 1.0, 1.0);
  VectorXd p = vec2(0.5, -0.5);

  // Zero-noise objective returns the true value.
  bsp::Objective exact = obj;
  exact.noise_variance = 0.0;
  Rng rng(1);
  CHECK(bsp::noisy_sample(exact, p, rng) == obj.value(p));

  // Empirical variance of the injected noise within 5%.
  Rng rng2(2);
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = bsp::noisy_sample(obj, p, rng2) - obj.value(p);
    sum += v;
    sq += v * v;
  }
  const double var = sq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(0.01).epsilon(0.05));

  // Reproducibility and box enforcement.
  Rng a(3), b(3);
  CHECK(bsp::noisy_sample(obj, p, a) == bsp::noisy_sample(obj, p, b));
  CHECK_THROWS_AS(bsp::noisy_sample(obj, vec2(5.0, 0.0), a), bsp::InputError);
}

TEST_CASE("fd_oracle: affine exactness, quadratic case, boundary fallback") {
  const Box box = Box::cube(2, -2, 2);
  auto affine = [](const VectorXd& p) { return 3.0 * p[0] - 7.0 * p[1] + 2.0; };
  const auto fd = bsp::fd_oracle(affine, vec2(0.3, -0.4), 1e-5, box);
  CHECK(fd.grad[0] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(fd.grad[1] == doctest::Approx(-7.0).epsilon(1e-9));
  CHECK(fd.hess.cwiseAbs().maxCoeff() < 1e-5);
  CHECK_FALSE(fd.one_sided);

  auto saddle = [](const VectorXd& p) { return p[0] * p[0] - p[1] * p[1]; };
  const auto fd2 = bsp::fd_oracle(saddle, vec2(1.0, 1.0), 1e-5, box);
  CHECK(fd2.grad[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(fd2.grad[1] == doctest::Approx(-2.0).epsilon(1e-6));

  // At the box edge the stencil folds inward and the flag is set.
  const auto fd3 = bsp::fd_oracle(saddle, vec2(2.0, 0.0), 1e-4, box);
  CHECK(fd3.one_sided);
  CHECK(fd3.grad[0] == doctest::Approx(4.0).epsilon(1e-4));
  const auto fd4 = bsp::fd_oracle(saddle, vec2(-2.0, 2.0), 1e-4, box);
  CHECK(fd4.one_sided);
  CHECK(fd4.grad[0] == doctest::Approx(-4.0).epsilon(1e-4));
  CHECK(fd4.grad[1] == doctest::Approx(-4.0).epsilon(1e-4));
}

TEST_CASE("objective factories carry consistent metadata") {
  auto hd = bsp::make_highdim();
  CHECK(hd.nx == 5);
  CHECK(hd.ny == 5);
  CHECK(hd.domain_box.lo[0] == doctest::Approx(-0.95));
  CHECK(hd.domain_box.hi[7] == doctest::Approx(4.4));
  CHECK(hd.noise_variance == doctest::Approx(0.003));

  auto dec = bsp::make_decaying();
  CHECK(dec.noise_variance == doctest::Approx(1.0));
  const auto e = dec.true_eval(vec2(1.0, 1.0));
  CHECK(e.value == doctest::Approx(dec.value(vec2(1.0, 1.0))));
}
