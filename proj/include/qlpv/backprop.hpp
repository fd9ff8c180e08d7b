#pragma once

#include <Eigen/Dense>

#include "qlpv/simulate.hpp"

namespace qlpv {

// Adjoint seeds for reverse-mode differentiation through the rollout. Empty
// members are treated as zero. dY is the stacked output adjoint (T*n_y), dP
// seeds the scheduling sequence (n_p x T), dX seeds individual states
// (n_x x T; used by the multiple-shooting regularizer's anchor states).
struct AdjointSeeds {
  Eigen::VectorXd dY;
  Eigen::MatrixXd dP;
  Eigen::MatrixXd dX;
};

struct BackpropResult {
  Eigen::VectorXd dtheta;  // flat layout matching QlpvModel::flatten()
  Eigen::VectorXd dx0;
};

// Backpropagation through time over a recorded rollout. `sim` must be the
// stable forward pass of (U, x0) under `model`.
BackpropResult backprop(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                        const Eigen::Ref<const Eigen::VectorXd>& x0, const SimulationResult& sim,
                        const AdjointSeeds& seeds);

// Parameter Jacobian of the origin-initialized output map: row (t*n_y + c)
// holds the gradient of y_t[c] wrt theta. One reverse pass per output entry.
Eigen::MatrixXd output_param_jacobian(const QlpvModel& model,
                                      const Eigen::Ref<const Eigen::VectorXd>& U);

// Value of ||dP/dU||_F^2 for one origin-initialized trajectory and, when
// `dtheta` is non-null, its exact parameter gradient (reverse pass through the
// forward-sensitivity recursion; needs second derivatives of the net).
double scheduling_jacobian_norm2(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                                 Eigen::VectorXd* dtheta);

}  // namespace qlpv
