#include <doctest.h>

#include <cmath>

#include "qlpv/path.hpp"
#include "qlpv/sensitivity.hpp"
#include "qlpv/util.hpp"
#include "test_helpers.hpp"

using namespace qlpv;
using qlpv::test::make_random_model;
using qlpv::test::random_vector;

TEST_CASE("PathGrid: uniform construction and validation") {
  const PathGrid g = PathGrid::uniform(4);
  CHECK(g.segments() == 4);
  CHECK(g.knots.front() == 0.0);
  CHECK(g.knots.back() == 1.0);
  CHECK_NOTHROW(g.validate());

  PathGrid bad;
  bad.knots = {0.0, 0.7, 0.5, 1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(PathGrid::uniform(0), std::invalid_argument);
}

TEST_CASE("MetricWeight: block form matches the general identity, PSD is enforced") {
  Rng rng(41);
  const Eigen::VectorXd du = random_vector(4, rng);
  const Eigen::VectorXd dy = random_vector(3, rng);
  const MetricWeight blocks = MetricWeight::blocks(2.0, 0.5);
  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(7, 7);
  W.topLeftCorner(4, 4) *= 2.0;
  W.bottomRightCorner(3, 3) *= 0.5;
  const MetricWeight general = MetricWeight::general(W);
  general.validate(4, 3);
  CHECK(blocks.norm(du, dy) == doctest::Approx(general.norm(du, dy)).epsilon(1e-14));

  Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(7, 7);
  CHECK_THROWS_AS(MetricWeight::general(bad).validate(4, 3), std::invalid_argument);
}

TEST_CASE("linear_scheduling_curve: endpoints and midpoint") {
  Eigen::MatrixXd P0(2, 3), P1(2, 3);
  P0 << 1, 1, 1, 0, 0, 0;
  P1 << 0, 0, 0, 1, 1, 1;
  CHECK((linear_scheduling_curve(P0, P1, 0.0) - P0).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((linear_scheduling_curve(P0, P1, 1.0) - P1).lpNorm<Eigen::Infinity>() == 0.0);
  const SchedulingSequence mid = linear_scheduling_curve(P0, P1, 0.5);
  CHECK((mid.array() - 0.5).abs().maxCoeff() == 0.0);
  CHECK(is_simplex_sequence(mid, 1e-15));

  Eigen::MatrixXd off = P0;
  off(0, 0) = 2.0;
  CHECK_THROWS_AS(linear_scheduling_curve(off, P1, 0.5), std::invalid_argument);
}

TEST_CASE("qlpv_path_length: degenerate path has zero length") {
  Rng rng(42);
  QlpvModel m = make_random_model(3, 2, 2, 3, 6, 420);
  const Eigen::VectorXd U = random_vector(12, rng);
  const double d = qlpv_path_length(m, U, U, PathGrid::uniform(5), MetricWeight::identity());
  CHECK(d == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("qlpv_path_length: closed-form LTI value at M = 1") {
  Rng rng(43);
  QlpvModel m = make_random_model(2, 1, 1, 1, 5, 430);
  const Eigen::VectorXd U1 = random_vector(5, rng);
  const Eigen::VectorXd U2 = random_vector(5, rng);
  const double d = qlpv_path_length(m, U1, U2, PathGrid::uniform(1), MetricWeight::identity());
  const Eigen::MatrixXd G = assemble_G(m, simulate(m, U1).P);
  const Eigen::VectorXd dU = U2 - U1;
  const double expected = std::sqrt(dU.squaredNorm() + (G * dU).squaredNorm());
  CHECK(d == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("path lengths are symmetric for model-evaluated endpoints") {
  Rng rng(44);
  QlpvModel m = make_random_model(3, 2, 2, 3, 6, 440);
  const Eigen::VectorXd U1 = random_vector(12, rng);
  const Eigen::VectorXd U2 = random_vector(12, rng);
  const PathGrid grid = PathGrid::uniform(8);
  const MetricWeight W = MetricWeight::identity();
  CHECK(std::abs(qlpv_path_length(m, U1, U2, grid, W) - qlpv_path_length(m, U2, U1, grid, W)) <
        1e-10);
  const GraphPoint p1 = GraphPoint::from_model(m, U1);
  const GraphPoint p2 = GraphPoint::from_model(m, U2);
  CHECK(std::abs(ltv_path_length(m, p1, p2, grid, W) - ltv_path_length(m, p2, p1, grid, W)) < 1e-10);
}

TEST_CASE("chord-mode length dominates the straight-line distance and refines smoothly") {
  Rng rng(45);
  QlpvModel m = make_random_model(3, 2, 2, 3, 6, 450);
  const Eigen::VectorXd U1 = random_vector(12, rng);
  const Eigen::VectorXd U2 = random_vector(12, rng);
  const MetricWeight W = MetricWeight::identity();

  const GraphPoint p1 = GraphPoint::from_model(m, U1);
  const GraphPoint p2 = GraphPoint::from_model(m, U2);
  const double straight = W.norm(p2.U - p1.U, p2.Y - p1.Y);

  double prev = -1.0;
  double prev_gap = 1e300;
  for (int M : {8, 16, 32, 64}) {
    const double d = qlpv_path_length(m, U1, U2, PathGrid::uniform(M), W);
    CHECK(d >= straight - 1e-12);
    if (prev >= 0.0) {
      const double gap = std::abs(d - prev);
      CHECK(gap <= prev_gap + 1e-12);  // Cauchy-style refinement
      prev_gap = gap;
    }
    prev = d;
  }
}

TEST_CASE("literal mode agrees with chord mode for LTI models") {
  Rng rng(46);
  QlpvModel m = make_random_model(2, 1, 1, 1, 5, 460);
  const Eigen::VectorXd U1 = random_vector(5, rng);
  const Eigen::VectorXd U2 = random_vector(5, rng);
  const PathGrid grid = PathGrid::uniform(6);
  const MetricWeight W = MetricWeight::identity();
  const double chord = qlpv_path_length(m, U1, U2, grid, W, PathMode::Chord);
  const double literal = qlpv_path_length(m, U1, U2, grid, W, PathMode::Literal);
  CHECK(std::abs(chord - literal) < 1e-10);
}

TEST_CASE("ltv_path_length: LTI collapse and the single-segment equivalence") {
  Rng rng(47);
  QlpvModel lti = make_random_model(3, 2, 2, 1, 6, 470);
  const Eigen::VectorXd U1 = random_vector(12, rng);
  const Eigen::VectorXd U2 = random_vector(12, rng);
  const MetricWeight W = MetricWeight::identity();
  const GraphPoint p1 = GraphPoint::from_model(lti, U1);
  const GraphPoint p2 = GraphPoint::from_model(lti, U2);
  for (int M : {1, 4, 10}) {
    const PathGrid grid = PathGrid::uniform(M);
    const double dq = qlpv_path_length(lti, p1, p2, grid, W);
    const double dl = ltv_path_length(lti, p1, p2, grid, W);
    CHECK(std::abs(dq - dl) < 1e-12);
  }

  QlpvModel m = make_random_model(3, 2, 2, 3, 6, 471);
  const GraphPoint q1 = GraphPoint::from_model(m, U1);
  const GraphPoint q2 = GraphPoint::from_model(m, U2);
  const double d1 = ltv_path_length(m, q1, q2, PathGrid::uniform(1), W);
  CHECK(std::abs(d1 - W.norm(q2.U - q1.U, q2.Y - q1.Y)) < 1e-12);
}

TEST_CASE("ltv_path_length: grid refinement converges within 1% between M = 64 and 128") {
  Rng rng(48);
  QlpvModel m = make_random_model(3, 2, 2, 3, 6, 480);
  // Mild scheduling variation, as after regularized training.
  for (int c = 0; c < m.net.channels(); ++c) {
    m.net.W1[c] *= 0.3;
    m.net.w2[c] *= 0.3;
  }
  const Eigen::VectorXd U1 = random_vector(12, rng);
  const Eigen::VectorXd U2 = random_vector(12, rng);
  const MetricWeight W = MetricWeight::identity();
  const GraphPoint p1 = GraphPoint::from_model(m, U1);
  const GraphPoint p2 = GraphPoint::from_model(m, U2);
  const double d64 = ltv_path_length(m, p1, p2, PathGrid::uniform(64), W);
  const double d128 = ltv_path_length(m, p1, p2, PathGrid::uniform(128), W);
  CHECK(std::abs(d64 - d128) / d128 < 0.01);
}

TEST_CASE("scalar illustration: exact length exceeds the frozen-schedule approximation") {
  // Hand-built 1-D example with visible scheduling curvature.
  QlpvModel m = QlpvModel::zeros({1, 1, 1, 3, 8}, 2);
  m.A[0] << 0.9;
  m.A[1] << 0.2;
  m.A[2] << -0.6;
  m.B[0] << 1.0;
  m.B[1] << 0.3;
  m.B[2] << -0.8;
  m.C << 1.0;
  Rng rng(4242);
  for (int c = 0; c < 2; ++c) {
    for (int k = 0; k < 2; ++k) {
      m.net.W1[c](k, 0) = rng.uniform(-2.0, 2.0);
      m.net.W1[c](k, 1) = rng.uniform(-2.0, 2.0);
      m.net.b1[c][k] = rng.uniform(-1.0, 1.0);
      m.net.w2[c][k] = rng.uniform(-2.0, 2.0);
    }
    m.net.b2[c] = rng.uniform(-1.0, 1.0);
  }
  const Eigen::VectorXd U1 = random_vector(8, rng);
  const Eigen::VectorXd U2 = random_vector(8, rng);
  const PathGrid grid = PathGrid::uniform(10);
  const MetricWeight W = MetricWeight::identity();
  const GraphPoint p1 = GraphPoint::from_model(m, U1);
  const GraphPoint p2 = GraphPoint::from_model(m, U2);
  const double ds = qlpv_path_length(m, p1, p2, grid, W);
  const double ds_tilde = ltv_path_length(m, p1, p2, grid, W);
  CHECK(ds > ds_tilde);              // the fixture reproduces the illustration ordering
  CHECK(ds_tilde > 0.9 * ds);        // and the two stay close
}

TEST_CASE("dump_path_knots emits one record per knot with exact endpoints") {
  Rng rng(49);
  QlpvModel m = make_random_model(2, 1, 1, 2, 5, 490);
  const Eigen::VectorXd U1 = random_vector(5, rng);
  const Eigen::VectorXd U2 = random_vector(5, rng);
  const GraphPoint p1 = GraphPoint::from_model(m, U1);
  const GraphPoint p2 = GraphPoint::from_model(m, U2);
  const auto knots = dump_path_knots(m, p1, p2, PathGrid::uniform(6), true);
  REQUIRE(knots.size() == 7);
  CHECK((knots.front().U - U1).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((knots.back().U - U2).lpNorm<Eigen::Infinity>() == 0.0);
  for (const auto& k : knots) CHECK(is_simplex_sequence(k.P, 1e-9));
}

TEST_CASE("unstable endpoints surface as instability errors") {
  QlpvModel m = QlpvModel::zeros({1, 1, 1, 1, 6}, 1);
  m.A[0] << 1e160;
  m.B[0] << 1.0;
  m.C << 1.0;
  CHECK_THROWS_AS(GraphPoint::from_model(m, Eigen::VectorXd::Ones(6)), InstabilityError);
}
