#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace qlpv {

// Compensated accumulator for order-stable reductions over datasets and pools.
class KahanSum {
 public:
  void add(double v) {
    const double y = v - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Axis-aligned box constraint set.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static Box unit(int dim) {
    Box b;
    b.lo = Eigen::VectorXd::Constant(dim, -1.0);
    b.hi = Eigen::VectorXd::Constant(dim, 1.0);
    return b;
  }

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& v, double tol = 0.0) const {
    if (v.size() != lo.size()) throw std::invalid_argument("Box::contains: dimension mismatch");
    return (v.array() >= lo.array() - tol).all() && (v.array() <= hi.array() + tol).all();
  }

  Eigen::VectorXd clip(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    if (v.size() != lo.size()) throw std::invalid_argument("Box::clip: dimension mismatch");
    return v.cwiseMax(lo).cwiseMin(hi);
  }

  // Cartesian power: the per-step box repeated over a horizon.
  Box replicate(int times) const {
    Box b;
    b.lo = lo.replicate(times, 1);
    b.hi = hi.replicate(times, 1);
    return b;
  }
};

// Raised when a rollout produces non-finite values; carries the first offending
// time step and, for path-length evaluations, the grid knot.
class InstabilityError : public std::runtime_error {
 public:
  InstabilityError(const std::string& msg, int time_index, int knot_index = -1)
      : std::runtime_error(msg), time_index_(time_index), knot_index_(knot_index) {}
  int time_index() const { return time_index_; }
  int knot_index() const { return knot_index_; }

 private:
  int time_index_;
  int knot_index_;
};

}  // namespace qlpv
