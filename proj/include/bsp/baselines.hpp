#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "bsp/driver.hpp"
#include "bsp/newton.hpp"
#include "bsp/objectives.hpp"

namespace bsp {

enum class BaselineMethod { Random, GdaFd };

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::Random;
  int budget = 1000;      // max objective queries
  double fd_step = 1e-3;  // per-coordinate step h_i = fd_step * (1 + |z_i|)
  NewtonConfig newton;    // Wolfe parameters, merit tolerance, domain box
  std::uint64_t seed = 0;

  void validate() const {
    newton.validate();
    if (budget < 1) throw InputError("BaselineConfig: budget must be >= 1");
    if (!(fd_step > 0.0)) throw InputError("BaselineConfig: fd_step must be > 0");
  }
};

// Uniform sampling over the domain box. Each row's merit_f column carries the
// running minimum of the ground-truth merit so far; the record never reports
// convergence and final_point is the incumbent best.
RunRecord random_search(const Objective& obj, const BaselineConfig& cfg);

// Simultaneous gradient descent (protagonist) / ascent (antagonist) with
// central-difference gradients estimated from noisy samples and a
// strong-Wolfe linesearch on the finite-differenced merit. Every objective
// query, including linesearch and derivative probes, counts against the
// budget; the run stops mid-computation when it is spent. Rows log one
// objective query each, with merit_f evaluated at the iterate current when
// the query was issued.
RunRecord gda_fd(const Objective& obj, const Eigen::VectorXd& start,
                 const BaselineConfig& cfg);

}  // namespace bsp
