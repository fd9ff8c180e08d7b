#pragma once

#include <Eigen/Dense>

#include "qlpv/simulate.hpp"

namespace qlpv {

enum class SensitivityMethod { Forward, FiniteDifference };

// Lambda(U|theta): full Jacobian of the origin-initialized map U -> Y,
// (T*n_y) x (T*n_u). Forward sensitivity propagation by default; central
// finite differences retained as a fallback and oracle.
Eigen::MatrixXd output_sensitivity(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                                   SensitivityMethod method = SensitivityMethod::Forward,
                                   double fd_step = 1e-6);

// Jacobian of the stacked scheduling sequence wrt U, (T*n_p) x (T*n_u).
Eigen::MatrixXd scheduling_input_jacobian(const QlpvModel& model,
                                          const Eigen::Ref<const Eigen::VectorXd>& U);

}  // namespace qlpv
