#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace qlpv {

// Objective functor: returns the value and, when grad is non-null, fills the
// gradient. Implementations must return something finite (large penalty
// values stand in for diverged rollouts) or +inf when truly undefined.
using ObjectiveFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct OptStep {
  int iter = 0;
  std::string phase;
  double objective = 0.0;
  double grad_norm = 0.0;
  double t_wall = 0.0;  // seconds since phase start
};

using StepSink = std::function<void(const OptStep&)>;

struct AdamOptions {
  int iters = 1000;
  double step = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct BfgsOptions {
  int max_iters = 1000;
  double grad_tol = 1e-6;     // infinity norm of the gradient
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;
};

struct MinimizeResult {
  Eigen::VectorXd x;  // best iterate seen
  double f = 0.0;
  int iters = 0;
  bool converged = false;
  bool ever_finite = false;
};

// Full-batch Adam with bias-corrected moments. If a step lands on a diverged
// objective the step is rolled back and the learning rate halved, keeping the
// run deterministic. Returns the best iterate seen.
MinimizeResult adam_minimize(const ObjectiveFn& fn, Eigen::VectorXd x0, const AdamOptions& opts,
                             const StepSink& sink = {});

// Dense inverse-Hessian BFGS with Armijo backtracking line search. Returns the
// best iterate seen.
MinimizeResult bfgs_minimize(const ObjectiveFn& fn, Eigen::VectorXd x0, const BfgsOptions& opts,
                             const StepSink& sink = {});

}  // namespace qlpv
