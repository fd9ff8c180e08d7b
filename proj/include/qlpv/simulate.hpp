#pragma once

#include <Eigen/Dense>

#include "qlpv/model.hpp"

namespace qlpv {

// Scheduling sequence: one simplex vector per column (n_p x T).
using SchedulingSequence = Eigen::MatrixXd;

bool is_simplex_sequence(const SchedulingSequence& P, double tol = 1e-9);

// Column-major stacking between the (n_p x T) matrix form and the flat
// (p_0, ..., p_{T-1}) vector form.
Eigen::VectorXd stack_columns(const Eigen::MatrixXd& m);
Eigen::MatrixXd unstack_columns(const Eigen::Ref<const Eigen::VectorXd>& v, int rows);

struct SimulationResult {
  Eigen::VectorXd Y;     // stacked outputs, T*n_y
  Eigen::MatrixXd X;     // states x_0..x_{T-1}, n_x x T
  SchedulingSequence P;  // n_p x T
  bool stable = true;
  int blowup_index = -1;  // first time step with non-finite values
};

// p(x, u) = softmax(0, h_2(x,u), ..., h_{n_p}(x,u)).
Eigen::VectorXd scheduling_eval(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                const Eigen::Ref<const Eigen::VectorXd>& u);

// Nonlinear rollout of the qLPV recursion from x0 (origin when omitted).
// Does not throw on divergence: `stable`/`blowup_index` report it instead.
SimulationResult simulate(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U);
SimulationResult simulate(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                          const Eigen::Ref<const Eigen::VectorXd>& x0);

// Rollout of the frozen-schedule LTV system: the action of G(P) on U plus the
// free response from x0. The scheduling net is not evaluated.
SimulationResult ltv_simulate(const QlpvModel& model, const SchedulingSequence& P,
                              const Eigen::Ref<const Eigen::VectorXd>& U);
SimulationResult ltv_simulate(const QlpvModel& model, const SchedulingSequence& P,
                              const Eigen::Ref<const Eigen::VectorXd>& U,
                              const Eigen::Ref<const Eigen::VectorXd>& x0);

// Dense block lower-triangular matrix of the LTV map, (T*n_y) x (T*n_u).
// Test utility; cost grows with T^2.
Eigen::MatrixXd assemble_G(const QlpvModel& model, const SchedulingSequence& P);

// Output-only rollouts for path-length sweeps: no trajectory recording, no
// schedule validation, Y written in place (resized if needed). Both use the
// same step arithmetic as the recording rollouts. Returns the first
// non-finite time step, or -1 when stable.
int nonlinear_output(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                     Eigen::VectorXd& Y);
int ltv_output(const QlpvModel& model, const SchedulingSequence& P,
               const Eigen::Ref<const Eigen::VectorXd>& U, Eigen::VectorXd& Y);

}  // namespace qlpv
