#include "qlpv/backprop.hpp"

#include <stdexcept>
#include <vector>

#include "qlpv/util.hpp"

namespace qlpv {

namespace {

// Gradient accumulator in model shapes, flattened on demand.
struct ParamGrad {
  std::vector<Eigen::MatrixXd> A, B;
  Eigen::MatrixXd C;
  std::vector<Eigen::MatrixXd> W1;
  std::vector<Eigen::VectorXd> b1, w2;
  std::vector<double> b2;

  explicit ParamGrad(const QlpvModel& m) {
    A.assign(m.dims.n_p, Eigen::MatrixXd::Zero(m.dims.n_x, m.dims.n_x));
    B.assign(m.dims.n_p, Eigen::MatrixXd::Zero(m.dims.n_x, m.dims.n_u));
    C = Eigen::MatrixXd::Zero(m.dims.n_y, m.dims.n_x);
    const int n_z = m.dims.n_x + m.dims.n_u;
    W1.assign(m.net.channels(), Eigen::MatrixXd::Zero(m.net.width, n_z));
    b1.assign(m.net.channels(), Eigen::VectorXd::Zero(m.net.width));
    w2.assign(m.net.channels(), Eigen::VectorXd::Zero(m.net.width));
    b2.assign(m.net.channels(), 0.0);
  }

  Eigen::VectorXd flatten(const QlpvModel& m) const {
    Eigen::VectorXd g(m.num_params());
    int pos = 0;
    auto put = [&](const Eigen::MatrixXd& mat) {
      for (Eigen::Index r = 0; r < mat.rows(); ++r)
        for (Eigen::Index c = 0; c < mat.cols(); ++c) g[pos++] = mat(r, c);
    };
    for (const auto& Ai : A) put(Ai);
    for (const auto& Bi : B) put(Bi);
    put(C);
    for (int c = 0; c < m.net.channels(); ++c) {
      put(W1[c]);
      for (int k = 0; k < m.net.width; ++k) g[pos++] = b1[c][k];
      for (int k = 0; k < m.net.width; ++k) g[pos++] = w2[c][k];
      g[pos++] = b2[c];
    }
    return g;
  }
};

}  // namespace

BackpropResult backprop(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                        const Eigen::Ref<const Eigen::VectorXd>& x0, const SimulationResult& sim,
                        const AdjointSeeds& seeds) {
  const int n_u = model.dims.n_u, n_y = model.dims.n_y, n_x = model.dims.n_x, n_p = model.dims.n_p;
  const int T = static_cast<int>(sim.P.cols());
  if (!sim.stable) throw std::invalid_argument("backprop: forward pass was unstable");
  if (static_cast<int>(U.size()) != T * n_u) throw std::invalid_argument("backprop: U horizon mismatch");
  if (seeds.dY.size() != 0 && seeds.dY.size() != static_cast<Eigen::Index>(T) * n_y)
    throw std::invalid_argument("backprop: dY seed has wrong length");
  if (seeds.dP.size() != 0 && (seeds.dP.rows() != n_p || seeds.dP.cols() != T))
    throw std::invalid_argument("backprop: dP seed has wrong shape");
  if (seeds.dX.size() != 0 && (seeds.dX.rows() != n_x || seeds.dX.cols() != T))
    throw std::invalid_argument("backprop: dX seed has wrong shape");
  (void)x0;

  ParamGrad g(model);
  Eigen::VectorXd xbar = Eigen::VectorXd::Zero(n_x);  // adjoint of x_{t+1}
  Eigen::VectorXd z(n_x + n_u);

  for (int t = T - 1; t >= 0; --t) {
    const auto u = U.segment(t * n_u, n_u);
    const Eigen::VectorXd x = sim.X.col(t);
    const Eigen::VectorXd p = sim.P.col(t);

    Eigen::VectorXd pbar = Eigen::VectorXd::Zero(n_p);
    Eigen::VectorXd new_xbar = Eigen::VectorXd::Zero(n_x);

    if (t + 1 < T) {
      // x_{t+1} = sum_i p_i (A_i x_t + B_i u_t)
      for (int i = 0; i < n_p; ++i) {
        pbar[i] += xbar.dot(model.A[i] * x + model.B[i] * u);
        g.A[i].noalias() += p[i] * xbar * x.transpose();
        g.B[i].noalias() += p[i] * xbar * u.transpose();
        new_xbar.noalias() += p[i] * (model.A[i].transpose() * xbar);
      }
    }

    if (seeds.dP.size() != 0) pbar += seeds.dP.col(t);
    if (seeds.dY.size() != 0) {
      const auto dy = seeds.dY.segment(t * n_y, n_y);
      g.C.noalias() += dy * x.transpose();
      new_xbar.noalias() += model.C.transpose() * dy;
    }
    if (seeds.dX.size() != 0) new_xbar += seeds.dX.col(t);

    // p = softmax(l): lbar = (diag(p) - p p^T) pbar
    const Eigen::VectorXd lbar = p.cwiseProduct(pbar) - p.dot(pbar) * p;

    if (model.net.channels() > 0) {
      z << x, u;
      for (int c = 0; c < model.net.channels(); ++c) {
        const double hbar = lbar[c + 1];
        if (hbar == 0.0) continue;
        const Eigen::VectorXd xi = model.net.W1[c] * z + model.net.b1[c];
        Eigen::VectorXd a(model.net.width), ap(model.net.width);
        for (int k = 0; k < model.net.width; ++k) {
          a[k] = act_eval(model.net.activation, xi[k]);
          ap[k] = act_deriv(model.net.activation, xi[k]);
        }
        g.w2[c] += hbar * a;
        g.b2[c] += hbar;
        const Eigen::VectorXd xibar = hbar * model.net.w2[c].cwiseProduct(ap);
        g.W1[c].noalias() += xibar * z.transpose();
        g.b1[c] += xibar;
        const Eigen::VectorXd zbar = model.net.W1[c].transpose() * xibar;
        new_xbar += zbar.head(n_x);
      }
    }

    xbar = std::move(new_xbar);
  }

  BackpropResult res;
  res.dtheta = g.flatten(model);
  res.dx0 = xbar;
  return res;
}

Eigen::MatrixXd output_param_jacobian(const QlpvModel& model,
                                      const Eigen::Ref<const Eigen::VectorXd>& U) {
  const int n_y = model.dims.n_y;
  const int T = static_cast<int>(U.size()) / model.dims.n_u;
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(model.dims.n_x);
  const SimulationResult sim = simulate(model, U, x0);
  if (!sim.stable)
    throw InstabilityError("output_param_jacobian: rollout unstable at step " +
                               std::to_string(sim.blowup_index),
                           sim.blowup_index);
  Eigen::MatrixXd J(T * n_y, model.num_params());
  AdjointSeeds seeds;
  seeds.dY = Eigen::VectorXd::Zero(T * n_y);
  for (int r = 0; r < T * n_y; ++r) {
    seeds.dY[r] = 1.0;
    J.row(r) = backprop(model, U, x0, sim, seeds).dtheta.transpose();
    seeds.dY[r] = 0.0;
  }
  return J;
}

double scheduling_jacobian_norm2(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U,
                                 Eigen::VectorXd* dtheta) {
  const int n_u = model.dims.n_u, n_x = model.dims.n_x, n_p = model.dims.n_p;
  if (U.size() == 0 || U.size() % n_u != 0)
    throw std::invalid_argument("scheduling_jacobian_norm2: bad U length");
  const int T = static_cast<int>(U.size()) / n_u;
  const int m = T * n_u;
  const int width = model.net.width;
  const int n_ch = model.net.channels();

  // Forward pass storing everything the reverse sweep needs.
  std::vector<Eigen::VectorXd> xs(T), ps(T);
  std::vector<Eigen::MatrixXd> Ss(T), Ks(T), Ds(T), Hxs(T), Hus(T), Jsms(T), Vs(T);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n_x);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n_x, m);
  double value = 0.0;

  for (int t = 0; t < T; ++t) {
    const auto u = U.segment(t * n_u, n_u);
    const Eigen::VectorXd p = scheduling_eval(model, x, u);
    Eigen::MatrixXd Hx, Hu;
    scheduling_logit_jacobians(model, x, u, &Hx, &Hu);
    const Eigen::MatrixXd Jsm = softmax_jacobian(p);
    Eigen::MatrixXd K = Hx * S;
    K.block(0, t * n_u, n_p, n_u) += Hu;
    Eigen::MatrixXd D = Jsm * K;
    if (!x.allFinite() || !D.allFinite())
      throw InstabilityError("scheduling_jacobian_norm2: rollout unstable at step " + std::to_string(t),
                             t);
    value += D.squaredNorm();

    Eigen::MatrixXd V(n_x, n_p);
    for (int i = 0; i < n_p; ++i) V.col(i) = model.A[i] * x + model.B[i] * u;

    xs[t] = x;
    ps[t] = p;
    Ss[t] = S;
    Ks[t] = std::move(K);
    Hxs[t] = std::move(Hx);
    Hus[t] = std::move(Hu);
    Jsms[t] = Jsm;
    Vs[t] = V;

    if (t + 1 < T) {
      Eigen::MatrixXd A_p = Eigen::MatrixXd::Zero(n_x, n_x);
      Eigen::MatrixXd B_p = Eigen::MatrixXd::Zero(n_x, n_u);
      for (int i = 0; i < n_p; ++i) {
        A_p += ps[t][i] * model.A[i];
        B_p += ps[t][i] * model.B[i];
      }
      Eigen::MatrixXd S_next = A_p * S;
      S_next.noalias() += V * D;
      S_next.block(0, t * n_u, n_x, n_u) += B_p;
      S = std::move(S_next);
      x = V * ps[t];
    }
    Ds[t] = std::move(D);
  }

  if (!dtheta) return value;

  // Reverse sweep through the joint (x_t, S_t) recursion.
  ParamGrad g(model);
  Eigen::MatrixXd Sbar = Eigen::MatrixXd::Zero(n_x, m);  // adjoint of S_{t+1}
  Eigen::VectorXd xbar = Eigen::VectorXd::Zero(n_x);     // adjoint of x_{t+1}
  Eigen::VectorXd z(n_x + n_u);

  for (int t = T - 1; t >= 0; --t) {
    const auto u = U.segment(t * n_u, n_u);
    const Eigen::VectorXd& xt = xs[t];
    const Eigen::VectorXd& p = ps[t];

    Eigen::MatrixXd Dbar = 2.0 * Ds[t];
    Eigen::VectorXd pbar = Eigen::VectorXd::Zero(n_p);
    Eigen::MatrixXd newSbar = Eigen::MatrixXd::Zero(n_x, m);
    Eigen::VectorXd new_xbar = Eigen::VectorXd::Zero(n_x);

    if (t + 1 < T) {
      // S_{t+1} = A(p) S_t + V_t D_t + B(p) E_t ; x_{t+1} = V_t p_t
      Dbar.noalias() += Vs[t].transpose() * Sbar;
      Eigen::MatrixXd Vbar = Sbar * Ds[t].transpose();
      Vbar.noalias() += xbar * p.transpose();
      pbar.noalias() += Vs[t].transpose() * xbar;
      const auto Sbar_t = Sbar.block(0, t * n_u, n_x, n_u);
      for (int i = 0; i < n_p; ++i) {
        pbar[i] += (model.A[i] * Ss[t]).cwiseProduct(Sbar).sum();
        pbar[i] += model.B[i].cwiseProduct(Sbar_t).sum();
        g.A[i].noalias() += p[i] * Sbar * Ss[t].transpose();
        g.B[i].noalias() += p[i] * Sbar_t;
        g.A[i].noalias() += Vbar.col(i) * xt.transpose();
        g.B[i].noalias() += Vbar.col(i) * u.transpose();
        new_xbar.noalias() += model.A[i].transpose() * Vbar.col(i);
        newSbar.noalias() += p[i] * (model.A[i].transpose() * Sbar);
      }
    }

    // D_t = Jsm_t K_t
    const Eigen::MatrixXd Kbar = Jsms[t] * Dbar;  // Jsm symmetric
    const Eigen::MatrixXd Jsmbar = Dbar * Ks[t].transpose();
    pbar += Jsmbar.diagonal();
    pbar.noalias() -= Jsmbar * p;
    pbar.noalias() -= Jsmbar.transpose() * p;

    // K_t = Hx_t S_t + Hu_t E_t
    newSbar.noalias() += Hxs[t].transpose() * Kbar;
    const Eigen::MatrixXd Hxbar = Kbar * Ss[t].transpose();
    const Eigen::MatrixXd Hubar = Kbar.block(0, t * n_u, n_p, n_u);

    // p = softmax(l)
    const Eigen::VectorXd lbar = p.cwiseProduct(pbar) - p.dot(pbar) * p;

    z << xt, u;
    for (int c = 0; c < n_ch; ++c) {
      const Eigen::VectorXd xi = model.net.W1[c] * z + model.net.b1[c];
      Eigen::VectorXd a(width), ap(width), app(width);
      for (int k = 0; k < width; ++k) {
        a[k] = act_eval(model.net.activation, xi[k]);
        ap[k] = act_deriv(model.net.activation, xi[k]);
        app[k] = act_deriv2(model.net.activation, xi[k]);
      }
      // Value path h_c = w2.a(xi) + b2.
      const double hbar = lbar[c + 1];
      g.w2[c] += hbar * a;
      g.b2[c] += hbar;
      Eigen::VectorXd xibar = hbar * model.net.w2[c].cwiseProduct(ap);

      // Jacobian-row path: adjoint r on the row dh_c/dz = W1^T (w2 . a'(xi)).
      Eigen::VectorXd r(n_x + n_u);
      r << Hxbar.row(c + 1).transpose(), Hubar.row(c + 1).transpose();
      const Eigen::VectorXd cvec = model.net.W1[c] * r;
      g.w2[c] += ap.cwiseProduct(cvec);
      const Eigen::VectorXd wac = model.net.w2[c].cwiseProduct(app).cwiseProduct(cvec);
      g.W1[c].noalias() += wac * z.transpose();
      g.W1[c].noalias() += model.net.w2[c].cwiseProduct(ap) * r.transpose();
      g.b1[c] += wac;
      Eigen::VectorXd zbar = model.net.W1[c].transpose() * wac;

      // Shared first-order tail of the value path.
      g.W1[c].noalias() += xibar * z.transpose();
      g.b1[c] += xibar;
      zbar.noalias() += model.net.W1[c].transpose() * xibar;
      new_xbar += zbar.head(n_x);
    }

    Sbar = std::move(newSbar);
    xbar = std::move(new_xbar);
  }

  *dtheta = g.flatten(model);
  return value;
}

}  // namespace qlpv
