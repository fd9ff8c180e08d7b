#include "qlpv/optimize.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace qlpv {

namespace {

constexpr double kDivergedThreshold = 1e11;  // objective values above this are treated as penalties

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

MinimizeResult adam_minimize(const ObjectiveFn& fn, Eigen::VectorXd x0, const AdamOptions& opts,
                             const StepSink& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index n = x0.size();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad(n);

  MinimizeResult res;
  res.x = x0;
  res.f = std::numeric_limits<double>::infinity();

  Eigen::VectorXd x = std::move(x0);
  double step = opts.step;
  double f = fn(x, &grad);
  bool grad_ok = std::isfinite(f) && grad.allFinite() && f < kDivergedThreshold;
  if (std::isfinite(f)) {
    res.ever_finite = true;
    res.f = f;
    res.x = x;
  }

  Eigen::VectorXd x_prev = x;
  for (int it = 1; it <= opts.iters; ++it) {
    if (!grad_ok) break;  // diverged start or exhausted retreats
    m = opts.beta1 * m + (1.0 - opts.beta1) * grad;
    v = opts.beta2 * v + (1.0 - opts.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(opts.beta1, it);
    const double bc2 = 1.0 - std::pow(opts.beta2, it);
    const Eigen::VectorXd denom =
        (v / bc2).cwiseSqrt() + Eigen::VectorXd::Constant(n, opts.eps);
    x_prev = x;
    x -= (step / bc1) * m.cwiseQuotient(denom);

    f = fn(x, &grad);
    grad_ok = std::isfinite(f) && grad.allFinite() && f < kDivergedThreshold;
    while (!grad_ok && step > 1e-12) {
      // Diverged rollout: retreat and shrink the step.
      step *= 0.5;
      x = x_prev + (x - x_prev) * 0.5;
      f = fn(x, &grad);
      grad_ok = std::isfinite(f) && grad.allFinite() && f < kDivergedThreshold;
      if (!grad_ok && step <= 1e-12) {
        x = x_prev;
        f = fn(x, &grad);
        grad_ok = std::isfinite(f) && grad.allFinite() && f < kDivergedThreshold;
      }
    }
    if (std::isfinite(f)) res.ever_finite = true;
    if (std::isfinite(f) && f < res.f) {
      res.f = f;
      res.x = x;
    }
    res.iters = it;
    if (sink) sink({it, "adam", f, grad.allFinite() ? grad.norm() : -1.0, seconds_since(t0)});
  }
  return res;
}

MinimizeResult bfgs_minimize(const ObjectiveFn& fn, Eigen::VectorXd x0, const BfgsOptions& opts,
                             const StepSink& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index n = x0.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd grad(n), grad_new(n);

  MinimizeResult res;
  Eigen::VectorXd x = std::move(x0);
  double f = fn(x, &grad);
  res.ever_finite = std::isfinite(f);
  res.x = x;
  res.f = f;
  if (!std::isfinite(f) || !grad.allFinite()) return res;

  bool first_update = true;
  for (int it = 1; it <= opts.max_iters; ++it) {
    if (grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd d = -(H * grad);
    double gTd = grad.dot(d);
    if (!(gTd < 0.0)) {  // not a descent direction; reset
      H.setIdentity();
      d = -grad;
      gTd = grad.dot(d);
      if (!(gTd < 0.0)) break;
    }

    // Armijo backtracking.
    double alpha = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      x_new = x + alpha * d;
      f_new = fn(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + opts.armijo_c * alpha * gTd) {
        accepted = true;
        break;
      }
      alpha *= opts.backtrack;
    }
    if (!accepted) {
      if ((H - Eigen::MatrixXd::Identity(n, n)).norm() > 0) {
        H.setIdentity();  // retry once from steepest descent
        continue;
      }
      break;
    }

    f_new = fn(x_new, &grad_new);
    if (!std::isfinite(f_new) || !grad_new.allFinite()) break;

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (first_update) {
        H *= sy / y.squaredNorm();
        first_update = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      H -= rho * (s * Hy.transpose() + Hy * s.transpose());
      H += rho * rho * (y.dot(Hy)) * (s * s.transpose());
      H += rho * (s * s.transpose());
    }

    x = std::move(x_new);
    f = f_new;
    grad = grad_new;
    res.iters = it;
    res.ever_finite = true;
    if (f < res.f || !std::isfinite(res.f)) {
      res.f = f;
      res.x = x;
    }
    if (sink) sink({it, "bfgs", f, grad.norm(), seconds_since(t0)});
  }
  if (std::isfinite(f) && f < res.f) {
    res.f = f;
    res.x = x;
  }
  return res;
}

}  // namespace qlpv
