#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "qlpv/simulate.hpp"

namespace qlpv {

// Discretization grid tau_0 = 0 < ... < tau_M = 1 of the path parameter.
struct PathGrid {
  std::vector<double> knots;

  static PathGrid uniform(int M);
  int segments() const { return static_cast<int>(knots.size()) - 1; }
  void validate() const;
};

// ||v||_W on stacked [dU; dY] increments. Either the compact scaled-identity
// block form {w_u, w_y} or a general symmetric PSD matrix.
struct MetricWeight {
  double w_u = 1.0;
  double w_y = 1.0;
  std::optional<Eigen::MatrixXd> W;

  static MetricWeight identity() { return {}; }
  static MetricWeight blocks(double wu, double wy) { return {wu, wy, std::nullopt}; }
  static MetricWeight general(Eigen::MatrixXd W);

  void validate(int n_du, int n_dy) const;
  double norm(const Eigen::Ref<const Eigen::VectorXd>& du,
              const Eigen::Ref<const Eigen::VectorXd>& dy) const;
};

// A point (U, Y) on the model graph S. Model-constructed points satisfy
// Y = F(U|theta); data-constructed points carry the measured output, from
// which path lengths are started.
struct GraphPoint {
  Eigen::VectorXd U;
  Eigen::VectorXd Y;

  static GraphPoint from_model(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U);
  static GraphPoint from_data(Eigen::VectorXd U, Eigen::VectorXd Y) { return {std::move(U), std::move(Y)}; }
};

// Convex combination of two scheduling sequences; stays in the simplex.
SchedulingSequence linear_scheduling_curve(const SchedulingSequence& P_start,
                                           const SchedulingSequence& P_end, double tau);

enum class PathMode {
  Chord,    // sum of ||[dU; F(tau_{k+1}) - F(tau_k)]||_W with full qLPV simulation per knot
  Literal,  // the Lambda(U(tau)) U(tau) increments, via forward sensitivities per knot
};

// Discretized path length on the graph of the qLPV model along the straight
// input segment between U1 and U2.
double qlpv_path_length(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& U1,
                        const Eigen::Ref<const Eigen::VectorXd>& U2, const PathGrid& grid,
                        const MetricWeight& W, PathMode mode = PathMode::Chord);

// Endpoint-anchored variant: chord mode starts/ends at the given point outputs
// (measured anchors for dataset points). Literal mode ignores the anchors.
double qlpv_path_length(const QlpvModel& model, const GraphPoint& p1, const GraphPoint& p2,
                        const PathGrid& grid, const MetricWeight& W, PathMode mode = PathMode::Chord);

// LTV approximation: interior knots are simulated with the frozen linearly
// interpolated scheduling curve; only the two endpoint schedules require
// nonlinear simulation.
double ltv_path_length(const QlpvModel& model, const GraphPoint& p1, const GraphPoint& p2,
                       const PathGrid& grid, const MetricWeight& W);

// Per-knot dump record for plotting path curves.
struct PathKnot {
  double tau = 0.0;
  Eigen::VectorXd U;
  Eigen::VectorXd Y;
  SchedulingSequence P;
};

std::vector<PathKnot> dump_path_knots(const QlpvModel& model, const GraphPoint& p1,
                                      const GraphPoint& p2, const PathGrid& grid, bool ltv);

}  // namespace qlpv
