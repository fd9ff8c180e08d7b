#include "qlpv/simulate.hpp"

#include <stdexcept>

namespace qlpv {

bool is_simplex_sequence(const SchedulingSequence& P, double tol) {
  for (Eigen::Index t = 0; t < P.cols(); ++t) {
    if ((P.col(t).array() < -tol).any()) return false;
    if (std::abs(P.col(t).sum() - 1.0) > tol) return false;
  }
  return true;
}

Eigen::VectorXd stack_columns(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

Eigen::MatrixXd unstack_columns(const Eigen::Ref<const Eigen::VectorXd>& v, int rows) {
  if (rows <= 0 || v.size() % rows != 0)
    throw std::invalid_argument("unstack_columns: length not divisible by rows");
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, v.size() / rows);
}

Eigen::VectorXd scheduling_eval(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                const Eigen::Ref<const Eigen::VectorXd>& u) {
  return softmax(scheduling_logits(model, x, u));
}

namespace {

int horizon_of(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U) {
  if (U.size() == 0 || U.size() % model.dims.n_u != 0)
    throw std::invalid_argument("simulate: U length must be a positive multiple of n_u");
  return static_cast<int>(U.size()) / model.dims.n_u;
}

Eigen::VectorXd check_x0(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& x0) {
  if (x0.size() == 0) return Eigen::VectorXd::Zero(model.dims.n_x);
  if (x0.size() != model.dims.n_x) throw std::invalid_argument("simulate: x0 must have length n_x");
  return x0;
}

// Shared step kernel so that nonlinear and frozen-schedule rollouts perform
// bit-identical arithmetic when fed identical schedules.
inline Eigen::VectorXd step_state(const QlpvModel& m, const Eigen::Ref<const Eigen::VectorXd>& p,
                                  const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& u) {
  Eigen::VectorXd xn = Eigen::VectorXd::Zero(m.dims.n_x);
  for (int i = 0; i < m.dims.n_p; ++i) xn.noalias() += p[i] * (m.A[i] * x + m.B[i] * u);
  return xn;
}

SimulationResult rollout(const QlpvModel& model, const SchedulingSequence* frozen,
                         const Eigen::Ref<const Eigen::VectorXd>& U,
                         const Eigen::Ref<const Eigen::VectorXd>& x0_in) {
  const int n_u = model.dims.n_u, n_y = model.dims.n_y, n_x = model.dims.n_x, n_p = model.dims.n_p;
  const int T = horizon_of(model, U);
  Eigen::VectorXd x = check_x0(model, x0_in);

  SimulationResult res;
  res.Y = Eigen::VectorXd::Zero(T * n_y);
  res.X = Eigen::MatrixXd::Zero(n_x, T);
  res.P = Eigen::MatrixXd::Zero(n_p, T);

  for (int t = 0; t < T; ++t) {
    const auto u = U.segment(t * n_u, n_u);
    Eigen::VectorXd p = frozen ? Eigen::VectorXd(frozen->col(t)) : scheduling_eval(model, x, u);
    res.X.col(t) = x;
    res.P.col(t) = p;
    res.Y.segment(t * n_y, n_y).noalias() = model.C * x;
    if (!x.allFinite() || !p.allFinite() || !res.Y.segment(t * n_y, n_y).allFinite()) {
      res.stable = false;
      res.blowup_index = t;
      return res;
    }
    if (t + 1 < T) x = step_state(model, p, x, u);
  }
  return res;
}

}  // namespace

SimulationResult simulate(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U) {
  return rollout(model, nullptr, U, Eigen::VectorXd());
}

SimulationResult simulate(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                          const Eigen::Ref<const Eigen::VectorXd>& x0) {
  return rollout(model, nullptr, U, x0);
}

SimulationResult ltv_simulate(const QlpvModel& model, const SchedulingSequence& P,
                              const Eigen::Ref<const Eigen::VectorXd>& U) {
  return ltv_simulate(model, P, U, Eigen::VectorXd());
}

SimulationResult ltv_simulate(const QlpvModel& model, const SchedulingSequence& P,
                              const Eigen::Ref<const Eigen::VectorXd>& U,
                              const Eigen::Ref<const Eigen::VectorXd>& x0) {
  const int T = horizon_of(model, U);
  if (P.rows() != model.dims.n_p || P.cols() != T)
    throw std::invalid_argument("ltv_simulate: P must be n_p x T");
  if (!is_simplex_sequence(P))
    throw std::invalid_argument("ltv_simulate: P is not a sequence of simplex vectors");
  return rollout(model, &P, U, x0);
}

namespace {

// Preallocated buffers for the allocation-free rollouts below. All arithmetic
// mirrors the recording rollout expression for expression, so values agree
// bitwise with simulate/ltv_simulate.
struct LeanScratch {
  Eigen::VectorXd x, xn, tmp, p, logits, z, xi;
};

thread_local LeanScratch lean_scratch;

inline void lean_scheduling(const QlpvModel& m, LeanScratch& s,
                            const Eigen::Ref<const Eigen::VectorXd>& u) {
  const int n_p = m.dims.n_p;
  s.logits.setZero(n_p);
  if (m.net.channels() > 0) {
    s.z.resize(m.dims.n_x + m.dims.n_u);
    s.z << s.x, u;
    for (int c = 0; c < m.net.channels(); ++c) {
      s.xi.noalias() = m.net.W1[c] * s.z;
      s.xi += m.net.b1[c];
      double acc = m.net.b2[c];
      for (int k = 0; k < m.net.width; ++k)
        acc += m.net.w2[c][k] * act_eval(m.net.activation, s.xi[k]);
      s.logits[c + 1] = acc;
    }
  }
  const double mx = s.logits.maxCoeff();
  s.p.resize(n_p);
  s.p = (s.logits.array() - mx).exp();
  s.p /= s.p.sum();
}

// Shared by the output-only rollouts; the frozen path skips the net entirely.
inline int output_rollout(const QlpvModel& model, const SchedulingSequence* frozen,
                          const Eigen::Ref<const Eigen::VectorXd>& U, Eigen::VectorXd& Y) {
  const int n_u = model.dims.n_u, n_y = model.dims.n_y, n_x = model.dims.n_x;
  const int n_p = model.dims.n_p;
  const int T = horizon_of(model, U);
  Y.resize(T * n_y);
  LeanScratch& s = lean_scratch;
  s.x.setZero(n_x);
  for (int t = 0; t < T; ++t) {
    const auto u = U.segment(t * n_u, n_u);
    if (!frozen) lean_scheduling(model, s, u);
    auto y = Y.segment(t * n_y, n_y);
    y.noalias() = model.C * s.x;
    if (!s.x.allFinite() || !y.allFinite() || (!frozen && !s.p.allFinite())) return t;
    if (t + 1 < T) {
      const Eigen::Ref<const Eigen::VectorXd> p =
          frozen ? Eigen::Ref<const Eigen::VectorXd>(frozen->col(t))
                 : Eigen::Ref<const Eigen::VectorXd>(s.p);
      s.xn.setZero(n_x);
      for (int i = 0; i < n_p; ++i) {
        s.tmp.noalias() = model.A[i] * s.x;
        s.tmp.noalias() += model.B[i] * u;
        s.xn += p[i] * s.tmp;
      }
      std::swap(s.x, s.xn);
    }
  }
  return -1;
}

}  // namespace

int nonlinear_output(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                     Eigen::VectorXd& Y) {
  return output_rollout(model, nullptr, U, Y);
}

int ltv_output(const QlpvModel& model, const SchedulingSequence& P,
               const Eigen::Ref<const Eigen::VectorXd>& U, Eigen::VectorXd& Y) {
  return output_rollout(model, &P, U, Y);
}

Eigen::MatrixXd assemble_G(const QlpvModel& model, const SchedulingSequence& P) {
  const int n_u = model.dims.n_u, n_y = model.dims.n_y, n_x = model.dims.n_x, n_p = model.dims.n_p;
  const int T = static_cast<int>(P.cols());
  if (P.rows() != n_p) throw std::invalid_argument("assemble_G: P must have n_p rows");

  auto A_of = [&](int t) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n_x, n_x);
    for (int i = 0; i < n_p; ++i) M += P(i, t) * model.A[i];
    return M;
  };
  auto B_of = [&](int t) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n_x, n_u);
    for (int i = 0; i < n_p; ++i) M += P(i, t) * model.B[i];
    return M;
  };

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(T * n_y, T * n_u);
  // Column block s: propagate B(p_s) forward through A(p_t), t > s.
  for (int s = 0; s < T; ++s) {
    Eigen::MatrixXd acc = B_of(s);  // dx_{s+1}/du_s
    for (int t = s + 1; t < T; ++t) {
      G.block(t * n_y, s * n_u, n_y, n_u).noalias() = model.C * acc;
      if (t + 1 < T) acc = A_of(t) * acc;
    }
  }
  return G;
}

}  // namespace qlpv
