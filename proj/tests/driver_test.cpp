#include <doctest.h>

#include <cmath>

#include "bsp/driver.hpp"
#include "bsp/rng.hpp"
#include "test_util.hpp"

using namespace bsp;

namespace {

BspConfig quadratic_cfg(const Objective& obj, Variant v, std::uint64_t seed) {
  BspConfig cfg;
  cfg.variant = v;
  cfg.newton.domain_box = obj.domain_box;
  cfg.init_samples = 50;
  cfg.max_evals = 150;
  cfg.seed = seed;
  return cfg;
}

void check_record_invariants(const RunRecord& rec, const Objective& obj,
                             const BspConfig& cfg) {
  REQUIRE(!rec.aborted);
  CHECK(rec.eval_log.size() <= static_cast<size_t>(cfg.max_evals));
  for (size_t i = 0; i < rec.eval_log.size(); ++i) {
    const auto& row = rec.eval_log[i];
    CHECK(row.eval_index == static_cast<int>(i));
    CHECK(obj.domain_box.contains(row.point));
    CHECK(std::isfinite(row.observation));
  }
  CHECK(rec.newton_steps_total <= cfg.newton_budget);
}

}  // namespace

TEST_CASE("select_initial_point: singleton dataset returns its point") {
  Dataset d = Dataset::empty(1, 1);
  Eigen::VectorXd p(2);
  p << 0.3, -0.7;
  d.append(p, 1.0);
  const auto s = GpSurrogate::fit(d, Hyperparams{1.0, 1.0, 0.01});
  CHECK((select_initial_point(s, d) - p).norm() == 0.0);
}

TEST_CASE("select_initial_point: matches brute-force merit argmin") {
  const auto obj = make_quadratic(1.0, 1.0, 1.0);
  Rng rng(31u);
  Dataset d = Dataset::empty(1, 1);
  for (int i = 0; i < 40; ++i) {
    Eigen::VectorXd p(2);
    p << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    d.append(p, obj.value(p));
  }
  const auto s = GpSurrogate::fit(d, Hyperparams{4.0, 1.0, 1e-6});
  const auto target = TargetSystem::mu(1, 1);
  int best = 0;
  double best_m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < d.size(); ++i) {
    const double m = eval_system(target, &s, Eigen::VectorXd(d.points.row(i))).merit;
    if (m < best_m) {
      best_m = m;
      best = i;
    }
  }
  CHECK((select_initial_point(s, d) - d.points.row(best).transpose()).norm() == 0.0);
}

TEST_CASE("select_initial_point: equal merits break ties to the lowest index") {
  // Under a prior surrogate every point has zero mean-gradient, so all merits
  // tie at zero.
  Dataset d = Dataset::empty(1, 1);
  Eigen::VectorXd a(2), b(2);
  a << 1.0, 1.0;
  b << -1.0, -1.0;
  d.append(a, 0.0);
  d.append(b, 0.0);
  const auto s = GpSurrogate::prior(1, 1, Hyperparams{1.0, 1.0, 0.1});
  CHECK((select_initial_point(s, d) - a).norm() == 0.0);
}

TEST_CASE("select_initial_point: exclusions steer the restart elsewhere") {
  Dataset d = Dataset::empty(1, 1);
  Eigen::VectorXd a(2), b(2);
  a << 0.0, 0.0;
  b << 1.0, 1.0;
  d.append(a, 0.0);
  d.append(b, 0.0);
  const auto s = GpSurrogate::prior(1, 1, Hyperparams{1.0, 1.0, 0.1});
  CHECK((select_initial_point(s, d, {a}, 0.5) - b).norm() == 0.0);
  // Excluding everything falls back to the unconstrained argmin.
  CHECK((select_initial_point(s, d, {a, b}, 10.0) - a).norm() == 0.0);
}

TEST_CASE("verify_second_order: saddle orientation decides the flag") {
  FieldOracle saddle = [](const Eigen::VectorXd& p) {
    FieldEval e;
    e.value = p[0] * p[0] - p[1] * p[1];
    e.grad.resize(2);
    e.grad << 2.0 * p[0], -2.0 * p[1];
    e.hess = Eigen::MatrixXd::Zero(2, 2);
    e.hess(0, 0) = 2.0;
    e.hess(1, 1) = -2.0;
    return e;
  };
  FieldOracle antisaddle = [&](const Eigen::VectorXd& p) {
    FieldEval e = saddle(p);
    e.value = -e.value;
    e.grad = -e.grad;
    e.hess = -e.hess;
    return e;
  };
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(2);
  CHECK(verify_second_order(origin, saddle, 1, 1));
  CHECK(!verify_second_order(origin, antisaddle, 1, 1));
}

TEST_CASE("verify_second_order: rejects the decaying polynomial's origin") {
  const auto obj = make_decaying();
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(2);
  CHECK(!verify_second_order(origin, obj.true_eval, 1, 1));

  // Independent confirmation through a finite-difference Hessian.
  FieldOracle fd = [&](const Eigen::VectorXd& p) {
    const auto r = fd_oracle([&](const Eigen::VectorXd& q) { return obj.value(q); }, p,
                             1e-4, obj.domain_box);
    FieldEval e;
    e.value = obj.value(p);
    e.grad = r.grad;
    e.hess = r.hess;
    return e;
  };
  CHECK(!verify_second_order(origin, fd, 1, 1));
}

TEST_CASE("verify_second_order: surrogate Hessian near an interpolated saddle") {
  Rng rng(11u);
  Dataset d = Dataset::empty(1, 1);
  for (int i = 0; i < 40; ++i) {
    Eigen::VectorXd p(2);
    p << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    d.append(p, p[0] * p[0] - p[1] * p[1]);
  }
  const auto s = GpSurrogate::fit(d, Hyperparams{4.0, 1.0, 1e-8});
  CHECK(verify_second_order(Eigen::VectorXd::Zero(2), s));
}

TEST_CASE("run_bsp: every variant pins the quadratic saddle") {
  const auto obj = make_quadratic(1.0, 1.0, 1.0);
  for (const Variant v : {Variant::EfficientExplore, Variant::EfficientExploit,
                          Variant::ExpensiveExplore, Variant::ExpensiveExploit}) {
    CAPTURE(variant_name(v));
    const auto cfg = quadratic_cfg(obj, v, 2024u);
    const auto rec = run_bsp(obj, cfg);
    check_record_invariants(rec, obj, cfg);
    CHECK(rec.converged);
    CHECK(rec.success);
    REQUIRE(rec.final_point.size() == 2);
    const auto final_true =
        eval_system(TargetSystem::true_f(obj.true_eval, 1, 1), nullptr, rec.final_point);
    CHECK(final_true.merit < 1e-3);
    if (!variant_is_efficient(v)) {
      const int post_init = static_cast<int>(rec.eval_log.size()) - cfg.init_samples;
      CHECK(rec.newton_steps_total <= post_init);
      CHECK(rec.newton_steps_total >= 1);
    }
  }
}

TEST_CASE("run_bsp: zero bound width and zero noise track exact Newton") {
  // With beta = 0 the confidence-bound system collapses onto the posterior
  // mean; on an interpolated quadratic one damped Newton step from anywhere
  // lands next to the origin.
  auto obj = make_quadratic(1.0, 1.0, 1.0);
  obj.noise_variance = 0.0;
  auto cfg = quadratic_cfg(obj, Variant::ExpensiveExploit, 7u);
  cfg.bound.beta = 0.0;
  const auto rec = run_bsp(obj, cfg);
  check_record_invariants(rec, obj, cfg);
  REQUIRE(rec.eval_log.size() > static_cast<size_t>(cfg.init_samples));
  CHECK(rec.eval_log[cfg.init_samples].point.norm() < 0.3);
  CHECK(rec.converged);
  const auto final_true =
      eval_system(TargetSystem::true_f(obj.true_eval, 1, 1), nullptr, rec.final_point);
  CHECK(final_true.merit < 1e-3);
}

TEST_CASE("run_bsp: identical seed and config reproduce the record") {
  const auto obj = make_quadratic(1.5, 0.8, 1.2);
  const auto cfg = quadratic_cfg(obj, Variant::EfficientExplore, 99u);
  const auto a = run_bsp(obj, cfg);
  const auto b = run_bsp(obj, cfg);
  REQUIRE(a.eval_log.size() == b.eval_log.size());
  for (size_t i = 0; i < a.eval_log.size(); ++i) {
    CHECK((a.eval_log[i].point - b.eval_log[i].point).norm() == 0.0);
    CHECK(a.eval_log[i].observation == b.eval_log[i].observation);
    CHECK(a.eval_log[i].merit_mu == b.eval_log[i].merit_mu);
  }
  CHECK(a.newton_steps_total == b.newton_steps_total);
  CHECK(a.converged == b.converged);
  CHECK(a.success == b.success);
  CHECK((a.final_point - b.final_point).norm() == 0.0);
}

TEST_CASE("run_bsp: sampler failure aborts with an error record") {
  auto obj = make_quadratic(1.0, 1.0, 1.0);
  int calls = 0;
  obj.value = [&calls](const Eigen::VectorXd& p) -> double {
    if (++calls > 50) throw std::runtime_error("sampler offline");  // init fills 50
    return p[0] * p[0] + p[0] * p[1] - p[1] * p[1];
  };
  const auto cfg = quadratic_cfg(obj, Variant::ExpensiveExplore, 3u);
  const auto rec = run_bsp(obj, cfg);
  CHECK(rec.aborted);
  CHECK(rec.abort_reason == "sampler offline");
  CHECK(rec.eval_log.size() >= 50);
  CHECK(!rec.converged);
}

TEST_CASE("run_bsp: domain box mismatch is an input error") {
  const auto obj = make_quadratic(1.0, 1.0, 1.0);
  auto cfg = quadratic_cfg(obj, Variant::EfficientExplore, 1u);
  cfg.newton.domain_box = Box::cube(2, -5.0, 5.0);
  CHECK_THROWS_AS(run_bsp(obj, cfg), InputError);
}

TEST_CASE("variant names round-trip") {
  for (const Variant v : {Variant::EfficientExplore, Variant::EfficientExploit,
                          Variant::ExpensiveExplore, Variant::ExpensiveExploit}) {
    CHECK(variant_from_name(variant_name(v)) == v);
    CHECK(variant_is_efficient(v) ==
          (variant_name(v).rfind("ef-", 0) == 0));
  }
  CHECK_THROWS_AS(variant_from_name("bogus"), ConfigError);
}
