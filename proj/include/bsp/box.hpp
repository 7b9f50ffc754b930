#pragma once

#include <Eigen/Core>

#include "bsp/errors.hpp"

namespace bsp {

// Axis-aligned box constraint. All iterates and sample points live inside one
// of these; optimization steps are projected back onto it.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Box() = default;
  Box(Eigen::VectorXd lo_in, Eigen::VectorXd hi_in) : lo(std::move(lo_in)), hi(std::move(hi_in)) {
    if (lo.size() != hi.size()) throw InputError("Box: lo/hi dimension mismatch");
    if ((lo.array() > hi.array()).any()) throw InputError("Box: lo > hi");
  }

  // Uniform bounds [l, h] in every coordinate.
  static Box cube(int dim, double l, double h) {
    return Box(Eigen::VectorXd::Constant(dim, l), Eigen::VectorXd::Constant(dim, h));
  }

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Eigen::VectorXd& p) const {
    return p.size() == lo.size() && (p.array() >= lo.array()).all() &&
           (p.array() <= hi.array()).all();
  }

  Eigen::VectorXd clamp(const Eigen::VectorXd& p) const {
    return p.cwiseMax(lo).cwiseMin(hi);
  }

  // Euclidean length of the main diagonal; the natural length scale of the
  // domain (used for hyperparameter search ranges and exclusion radii).
  double diameter() const { return (hi - lo).norm(); }
};

}  // namespace bsp
