#include <doctest.h>

#include "qlpv/simulate.hpp"
#include "test_helpers.hpp"

using namespace qlpv;
using qlpv::test::make_random_model;
using qlpv::test::random_vector;

TEST_CASE("simulate: zero input from the origin stays at zero") {
  QlpvModel m = make_random_model(3, 2, 2, 2, 6, 1);
  const SimulationResult sim = simulate(m, Eigen::VectorXd::Zero(12));
  CHECK(sim.stable);
  CHECK(sim.Y.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(sim.X.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("simulate: n_p = 1 impulse response matches C A^(t-1) B") {
  QlpvModel m = QlpvModel::zeros({2, 1, 1, 1, 6}, 2);
  m.A[0] << 0.5, 0.2, -0.1, 0.7;
  m.B[0] << 1.0, -0.5;
  m.C << 0.3, 0.9;
  const int T = 6;
  Eigen::VectorXd U = Eigen::VectorXd::Zero(T);
  U[0] = 1.0;
  const SimulationResult sim = simulate(m, U);
  CHECK(sim.Y[0] == 0.0);
  Eigen::MatrixXd Apow = Eigen::MatrixXd::Identity(2, 2);
  for (int t = 1; t < T; ++t) {
    const double expected = (m.C * Apow * m.B[0])(0, 0);
    CHECK(sim.Y[t] == doctest::Approx(expected).epsilon(1e-14));
    Apow = m.A[0] * Apow;
  }
}

TEST_CASE("simulate: matches an independent step-by-step propagation") {
  Rng rng(77);
  QlpvModel m = make_random_model(3, 2, 2, 3, 7, 5);
  const Eigen::VectorXd U = random_vector(14, rng);
  const SimulationResult sim = simulate(m, U);
  REQUIRE(sim.stable);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  for (int t = 0; t < 7; ++t) {
    const Eigen::VectorXd u = U.segment(2 * t, 2);
    const Eigen::VectorXd p = softmax(scheduling_logits(m, x, u));
    CHECK((sim.P.col(t) - p).lpNorm<Eigen::Infinity>() < 1e-14);
    CHECK((sim.Y.segment(2 * t, 2) - m.C * x).lpNorm<Eigen::Infinity>() < 1e-14);
    Eigen::MatrixXd Ap = Eigen::MatrixXd::Zero(3, 3);
    Eigen::MatrixXd Bp = Eigen::MatrixXd::Zero(3, 2);
    for (int i = 0; i < 3; ++i) {
      Ap += p[i] * m.A[i];
      Bp += p[i] * m.B[i];
    }
    x = Ap * x + Bp * u;
  }
}

TEST_CASE("simulate: every scheduling column lies on the simplex") {
  Rng rng(123);
  for (int rep = 0; rep < 20; ++rep) {
    QlpvModel m = make_random_model(2 + rep % 3, 1 + rep % 2, 1, 1 + rep % 4, 8, 1000 + rep);
    const Eigen::VectorXd U = random_vector(8 * m.dims.n_u, rng);
    const SimulationResult sim = simulate(m, U);
    REQUIRE(sim.stable);
    REQUIRE(is_simplex_sequence(sim.P, 1e-12));
  }
}

TEST_CASE("factorization identity: the frozen-schedule rollout reproduces the output") {
  Rng rng(321);
  for (int rep = 0; rep < 10; ++rep) {
    QlpvModel m = make_random_model(3, 2, 2, 3, 9, 400 + rep);
    const Eigen::VectorXd U = random_vector(18, rng);
    const SimulationResult sim = simulate(m, U);
    REQUIRE(sim.stable);
    const SimulationResult ltv = ltv_simulate(m, sim.P, U);
    CHECK((ltv.Y - sim.Y).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("ltv_simulate: constant vertex schedule degenerates to one LTI mode") {
  QlpvModel m = make_random_model(2, 1, 1, 2, 5, 9);
  Rng rng(4);
  Eigen::VectorXd U = random_vector(5, rng);
  SchedulingSequence P = Eigen::MatrixXd::Zero(2, 5);
  P.row(0).setOnes();
  const SimulationResult ltv = ltv_simulate(m, P, U);

  QlpvModel lti = QlpvModel::zeros({2, 1, 1, 1, 5}, 2);
  lti.A[0] = m.A[0];
  lti.B[0] = m.B[0];
  lti.C = m.C;
  const SimulationResult ref = simulate(lti, U);
  CHECK((ltv.Y - ref.Y).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("ltv_simulate rejects schedules off the simplex") {
  QlpvModel m = make_random_model(2, 1, 1, 2, 4, 10);
  Eigen::MatrixXd P = Eigen::MatrixXd::Constant(2, 4, 0.6);  // sums to 1.2
  CHECK_THROWS_AS(ltv_simulate(m, P, Eigen::VectorXd::Zero(4)), std::invalid_argument);
}

TEST_CASE("assemble_G: first block row is zero and T = 1 gives the zero block") {
  QlpvModel m = make_random_model(2, 2, 2, 2, 1, 13);
  const Eigen::MatrixXd G1 = assemble_G(m, Eigen::MatrixXd::Constant(2, 1, 0.5));
  CHECK(G1.rows() == 2);
  CHECK(G1.cols() == 2);
  CHECK(G1.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("assemble_G: LTI case is lower-triangular Toeplitz in the impulse response") {
  QlpvModel m = QlpvModel::zeros({2, 1, 1, 1, 3}, 2);
  m.A[0] << 0.4, 0.1, 0.0, 0.6;
  m.B[0] << 1.0, 0.5;
  m.C << 1.0, -1.0;
  const Eigen::MatrixXd G = assemble_G(m, Eigen::MatrixXd::Ones(1, 3));
  const double h1 = (m.C * m.B[0])(0, 0);
  const double h2 = (m.C * m.A[0] * m.B[0])(0, 0);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 3);
  expected(1, 0) = h1;
  expected(2, 0) = h2;
  expected(2, 1) = h1;
  CHECK((G - expected).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("assemble_G: dense action agrees with ltv_simulate, including mid-curve schedules") {
  Rng rng(31);
  QlpvModel m = make_random_model(3, 2, 2, 3, 4, 500);
  const Eigen::VectorXd U1 = random_vector(8, rng);
  const Eigen::VectorXd U2 = random_vector(8, rng);
  const SchedulingSequence P1 = simulate(m, U1).P;
  const SchedulingSequence P2 = simulate(m, U2).P;
  const SchedulingSequence Pmid = P1 + 0.5 * (P2 - P1);

  for (const auto* P : {&P1, &Pmid}) {
    const Eigen::MatrixXd G = assemble_G(m, *P);
    const Eigen::VectorXd U = random_vector(8, rng);
    const SimulationResult ltv = ltv_simulate(m, *P, U);
    CHECK((G * U - ltv.Y).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("LTI degeneracy: simulate, ltv_simulate and assemble_G coincide for n_p = 1") {
  Rng rng(77);
  QlpvModel m = make_random_model(3, 2, 2, 1, 6, 600);
  const Eigen::VectorXd U = random_vector(12, rng);
  const SimulationResult nl = simulate(m, U);
  const SimulationResult ltv = ltv_simulate(m, nl.P, U);
  const Eigen::MatrixXd G = assemble_G(m, nl.P);
  CHECK((nl.Y - ltv.Y).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((G * U - nl.Y).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("unstable rollouts report the first offending time step") {
  QlpvModel m = QlpvModel::zeros({1, 1, 1, 1, 8}, 1);
  m.A[0] << 1e160;
  m.B[0] << 1.0;
  m.C << 1.0;
  Eigen::VectorXd U = Eigen::VectorXd::Ones(8);
  const SimulationResult sim = simulate(m, U);
  CHECK_FALSE(sim.stable);
  CHECK(sim.blowup_index >= 0);
  CHECK(sim.blowup_index < 8);
}
