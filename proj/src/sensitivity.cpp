#include "qlpv/sensitivity.hpp"

#include <stdexcept>

#include "qlpv/util.hpp"

namespace qlpv {

namespace {

// Joint propagation of the state and its input sensitivity S_t = dx_t/dU.
// Fills Lambda rows (C S_t) and/or the scheduling rows D_t = dp_t/dU.
void forward_pass(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                  Eigen::MatrixXd* Lambda, Eigen::MatrixXd* Jp) {
  const int n_u = model.dims.n_u, n_y = model.dims.n_y, n_x = model.dims.n_x, n_p = model.dims.n_p;
  if (U.size() == 0 || U.size() % n_u != 0)
    throw std::invalid_argument("output_sensitivity: U length must be a multiple of n_u");
  const int T = static_cast<int>(U.size()) / n_u;
  const int m = T * n_u;

  if (Lambda) *Lambda = Eigen::MatrixXd::Zero(T * n_y, m);
  if (Jp) *Jp = Eigen::MatrixXd::Zero(T * n_p, m);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n_x);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n_x, m);
  Eigen::MatrixXd Hx, Hu;

  for (int t = 0; t < T; ++t) {
    const auto u = U.segment(t * n_u, n_u);
    const Eigen::VectorXd p = scheduling_eval(model, x, u);
    scheduling_logit_jacobians(model, x, u, &Hx, &Hu);
    const Eigen::MatrixXd Jsm = softmax_jacobian(p);

    // dp_t/dU through the state and through u_t itself.
    Eigen::MatrixXd K = Hx * S;
    K.block(0, t * n_u, n_p, n_u) += Hu;
    const Eigen::MatrixXd D = Jsm * K;

    if (!x.allFinite() || !p.allFinite() || !D.allFinite())
      throw InstabilityError("output_sensitivity: non-finite values at time step " + std::to_string(t), t);

    if (Lambda) Lambda->block(t * n_y, 0, n_y, m).noalias() = model.C * S;
    if (Jp) Jp->block(t * n_p, 0, n_p, m) = D;

    if (t + 1 < T) {
      Eigen::MatrixXd A_p = Eigen::MatrixXd::Zero(n_x, n_x);
      Eigen::MatrixXd B_p = Eigen::MatrixXd::Zero(n_x, n_u);
      Eigen::MatrixXd V(n_x, n_p);  // columns A_i x + B_i u
      for (int i = 0; i < n_p; ++i) {
        A_p += p[i] * model.A[i];
        B_p += p[i] * model.B[i];
        V.col(i) = model.A[i] * x + model.B[i] * u;
      }
      Eigen::MatrixXd S_next = A_p * S;
      S_next.noalias() += V * D;
      S_next.block(0, t * n_u, n_x, n_u) += B_p;
      S = std::move(S_next);
      x = V * p;
    }
  }
}

Eigen::MatrixXd output_sensitivity_fd(const QlpvModel& model,
                                      const Eigen::Ref<const Eigen::VectorXd>& U, double step) {
  const int n_y = model.dims.n_y, n_u = model.dims.n_u;
  const int T = static_cast<int>(U.size()) / n_u;
  Eigen::MatrixXd Lambda(T * n_y, U.size());
  Eigen::VectorXd Up = U, Um = U;
  for (Eigen::Index j = 0; j < U.size(); ++j) {
    Up[j] += step;
    Um[j] -= step;
    const SimulationResult sp = simulate(model, Up);
    const SimulationResult sm = simulate(model, Um);
    if (!sp.stable || !sm.stable)
      throw InstabilityError("output_sensitivity: unstable finite-difference probe",
                             sp.stable ? sm.blowup_index : sp.blowup_index);
    Lambda.col(j) = (sp.Y - sm.Y) / (2.0 * step);
    Up[j] = U[j];
    Um[j] = U[j];
  }
  return Lambda;
}

}  // namespace

Eigen::MatrixXd output_sensitivity(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                                   SensitivityMethod method, double fd_step) {
  if (method == SensitivityMethod::FiniteDifference) return output_sensitivity_fd(model, U, fd_step);
  Eigen::MatrixXd Lambda;
  forward_pass(model, U, &Lambda, nullptr);
  return Lambda;
}

Eigen::MatrixXd scheduling_input_jacobian(const QlpvModel& model,
                                          const Eigen::Ref<const Eigen::VectorXd>& U) {
  Eigen::MatrixXd Jp;
  forward_pass(model, U, nullptr, &Jp);
  return Jp;
}

}  // namespace qlpv
