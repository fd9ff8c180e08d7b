#include "qlpv/path.hpp"

#include <cmath>
#include <stdexcept>

#include "qlpv/sensitivity.hpp"
#include "qlpv/util.hpp"

namespace qlpv {

PathGrid PathGrid::uniform(int M) {
  if (M < 1) throw std::invalid_argument("PathGrid: M must be >= 1");
  PathGrid g;
  g.knots.resize(M + 1);
  for (int k = 0; k <= M; ++k) g.knots[k] = static_cast<double>(k) / M;
  g.knots.front() = 0.0;
  g.knots.back() = 1.0;
  return g;
}

void PathGrid::validate() const {
  if (knots.size() < 2) throw std::invalid_argument("PathGrid: need at least two knots");
  if (knots.front() != 0.0 || knots.back() != 1.0)
    throw std::invalid_argument("PathGrid: endpoints must be exactly 0 and 1");
  for (size_t k = 0; k + 1 < knots.size(); ++k)
    if (!(knots[k] < knots[k + 1])) throw std::invalid_argument("PathGrid: knots must increase");
}

MetricWeight MetricWeight::general(Eigen::MatrixXd W) {
  MetricWeight m;
  m.W = std::move(W);
  return m;
}

void MetricWeight::validate(int n_du, int n_dy) const {
  if (w_u < 0 || w_y < 0) throw std::invalid_argument("MetricWeight: block weights must be >= 0");
  if (!W) return;
  const int n = n_du + n_dy;
  if (W->rows() != n || W->cols() != n)
    throw std::invalid_argument("MetricWeight: W must be (T n_u + T n_y) square");
  if ((*W - W->transpose()).lpNorm<Eigen::Infinity>() > 1e-10)
    throw std::invalid_argument("MetricWeight: W must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(*W + 1e-12 * Eigen::MatrixXd::Identity(n, n));
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("MetricWeight: W must be positive semidefinite");
}

double MetricWeight::norm(const Eigen::Ref<const Eigen::VectorXd>& du,
                          const Eigen::Ref<const Eigen::VectorXd>& dy) const {
  if (!W) return std::sqrt(w_u * du.squaredNorm() + w_y * dy.squaredNorm());
  Eigen::VectorXd v(du.size() + dy.size());
  v << du, dy;
  return std::sqrt(std::max(0.0, v.dot(*W * v)));
}

GraphPoint GraphPoint::from_model(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U) {
  const SimulationResult sim = simulate(model, U);
  if (!sim.stable)
    throw InstabilityError("GraphPoint: model rollout unstable at step " +
                               std::to_string(sim.blowup_index),
                           sim.blowup_index);
  return {U, sim.Y};
}

SchedulingSequence linear_scheduling_curve(const SchedulingSequence& P_start,
                                           const SchedulingSequence& P_end, double tau) {
  if (P_start.rows() != P_end.rows() || P_start.cols() != P_end.cols())
    throw std::invalid_argument("linear_scheduling_curve: endpoint shapes differ");
  if (!is_simplex_sequence(P_start) || !is_simplex_sequence(P_end))
    throw std::invalid_argument("linear_scheduling_curve: endpoints must be simplex sequences");
  if (tau == 0.0) return P_start;
  if (tau == 1.0) return P_end;
  return P_start + tau * (P_end - P_start);
}

namespace {

void check_endpoints(const QlpvModel& model, const Eigen::VectorXd& U1, const Eigen::VectorXd& U2) {
  if (U1.size() != U2.size()) throw std::invalid_argument("path length: endpoint lengths differ");
  if (U1.size() == 0 || U1.size() % model.dims.n_u != 0)
    throw std::invalid_argument("path length: U length must be a multiple of n_u");
}

Eigen::VectorXd knot_input(const Eigen::VectorXd& U1, const Eigen::VectorXd& U2, double tau) {
  return U1 + tau * (U2 - U1);
}

double chord_sum(const std::vector<Eigen::VectorXd>& Us, const std::vector<Eigen::VectorXd>& Ys,
                 const MetricWeight& W) {
  KahanSum acc;
  for (size_t k = 0; k + 1 < Us.size(); ++k)
    acc.add(W.norm(Us[k + 1] - Us[k], Ys[k + 1] - Ys[k]));
  return acc.value();
}

}  // namespace

double qlpv_path_length(const QlpvModel& model, const GraphPoint& p1, const GraphPoint& p2,
                        const PathGrid& grid, const MetricWeight& W, PathMode mode) {
  grid.validate();
  check_endpoints(model, p1.U, p2.U);
  const int n_knots = static_cast<int>(grid.knots.size());

  std::vector<Eigen::VectorXd> Us(n_knots), Ys(n_knots);
  for (int k = 0; k < n_knots; ++k) Us[k] = knot_input(p1.U, p2.U, grid.knots[k]);

  if (mode == PathMode::Literal) {
    // Eq.-literal increments Lambda(U(tau)) U(tau); needs a sensitivity
    // propagation per knot.
    for (int k = 0; k < n_knots; ++k) {
      try {
        const Eigen::MatrixXd Lambda = output_sensitivity(model, Us[k]);
        Ys[k] = Lambda * Us[k];
      } catch (const InstabilityError& e) {
        throw InstabilityError("qlpv_path_length: unstable at knot " + std::to_string(k),
                               e.time_index(), k);
      }
    }
    return chord_sum(Us, Ys, W);
  }

  Ys.front() = p1.Y;
  Ys.back() = p2.Y;
  for (int k = 1; k + 1 < n_knots; ++k) {
    const int blowup = nonlinear_output(model, Us[k], Ys[k]);
    if (blowup >= 0)
      throw InstabilityError("qlpv_path_length: unstable at knot " + std::to_string(k), blowup, k);
  }
  return chord_sum(Us, Ys, W);
}

double qlpv_path_length(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U1,
                        const Eigen::Ref<const Eigen::VectorXd>& U2, const PathGrid& grid,
                        const MetricWeight& W, PathMode mode) {
  if (mode == PathMode::Literal) {
    GraphPoint p1{U1, Eigen::VectorXd()};
    GraphPoint p2{U2, Eigen::VectorXd()};
    return qlpv_path_length(model, p1, p2, grid, W, mode);
  }
  return qlpv_path_length(model, GraphPoint::from_model(model, U1), GraphPoint::from_model(model, U2),
                          grid, W, mode);
}

double ltv_path_length(const QlpvModel& model, const GraphPoint& p1, const GraphPoint& p2,
                       const PathGrid& grid, const MetricWeight& W) {
  grid.validate();
  check_endpoints(model, p1.U, p2.U);
  const int n_knots = static_cast<int>(grid.knots.size());

  std::vector<Eigen::VectorXd> Us(n_knots), Ys(n_knots);
  for (int k = 0; k < n_knots; ++k) Us[k] = knot_input(p1.U, p2.U, grid.knots[k]);
  Ys.front() = p1.Y;
  Ys.back() = p2.Y;

  if (n_knots > 2) {
    // Two nonlinear simulations for the endpoint schedules; interior knots are LTV.
    const SimulationResult s1 = simulate(model, p1.U);
    if (!s1.stable)
      throw InstabilityError("ltv_path_length: unstable endpoint schedule", s1.blowup_index, 0);
    const SimulationResult s2 = simulate(model, p2.U);
    if (!s2.stable)
      throw InstabilityError("ltv_path_length: unstable endpoint schedule", s2.blowup_index,
                             n_knots - 1);
    const SchedulingSequence dP = s2.P - s1.P;
    SchedulingSequence P(s1.P.rows(), s1.P.cols());
    for (int k = 1; k + 1 < n_knots; ++k) {
      P = s1.P + grid.knots[k] * dP;
      const int blowup = ltv_output(model, P, Us[k], Ys[k]);
      if (blowup >= 0)
        throw InstabilityError("ltv_path_length: unstable at knot " + std::to_string(k), blowup, k);
    }
  }
  return chord_sum(Us, Ys, W);
}

std::vector<PathKnot> dump_path_knots(const QlpvModel& model, const GraphPoint& p1,
                                      const GraphPoint& p2, const PathGrid& grid, bool ltv) {
  grid.validate();
  check_endpoints(model, p1.U, p2.U);
  const SimulationResult s1 = simulate(model, p1.U);
  const SimulationResult s2 = simulate(model, p2.U);
  std::vector<PathKnot> knots;
  for (double tau : grid.knots) {
    PathKnot k;
    k.tau = tau;
    k.U = knot_input(p1.U, p2.U, tau);
    if (ltv && s1.stable && s2.stable) {
      k.P = linear_scheduling_curve(s1.P, s2.P, tau);
      const SimulationResult sim = ltv_simulate(model, k.P, k.U);
      k.Y = sim.Y;
    } else {
      const SimulationResult sim = simulate(model, k.U);
      k.P = sim.P;
      k.Y = sim.Y;
    }
    knots.push_back(std::move(k));
  }
  return knots;
}

}  // namespace qlpv
