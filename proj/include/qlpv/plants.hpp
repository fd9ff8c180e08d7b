#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "qlpv/trajectory.hpp"
#include "qlpv/util.hpp"

namespace qlpv {

// Two-mass nonlinear spring-mass-damper bench. State (x1, v1, x2, v2),
// inputs are the two forces, outputs the two positions.
//
// The tanh damper has slope e/v0 = 200 near v = 0, which acts on the light
// mass with rate ~2(e/v0)/m2 = 4e4 1/s. Explicit RK4 therefore needs
// h <= ~7e-5 s; the default substeps keep h = 5e-5 s.
struct OscillatorParams {
  double m1 = 2.0;
  double m2 = 0.01;
  double a = 1.0;
  double b = 10.0;
  double c = 100.0;
  double d = 1.0;
  double e = 2.0;
  double v0 = 0.01;
  double dt = 0.1;      // sample period in seconds
  int substeps = 2000;  // RK4 steps per sample
};

Eigen::Vector4d oscillator_rhs(const Eigen::Vector4d& state, const Eigen::Vector2d& u,
                               const OscillatorParams& params);

// Per-channel affine maps between physical units and the scaled unit boxes.
struct Scaler {
  Eigen::VectorXd in_center, in_half;    // n_u
  Eigen::VectorXd out_center, out_half;  // n_y

  Eigen::VectorXd scale_u(const Eigen::Ref<const Eigen::VectorXd>& U_phys) const;
  Eigen::VectorXd unscale_u(const Eigen::Ref<const Eigen::VectorXd>& U_scaled) const;
  Eigen::VectorXd scale_y(const Eigen::Ref<const Eigen::VectorXd>& Y_phys) const;
  Eigen::VectorXd unscale_y(const Eigen::Ref<const Eigen::VectorXd>& Y_scaled) const;
};

// Black-box plant evaluated over a fixed horizon from a fixed initial
// condition, in scaled units. Deterministic by contract.
class Plant {
 public:
  virtual ~Plant() = default;
  virtual int n_u() const = 0;
  virtual int n_y() const = 0;
  virtual int horizon() const = 0;
  virtual Eigen::VectorXd respond(const Eigen::Ref<const Eigen::VectorXd>& U_scaled) const = 0;
  Box input_box() const { return Box::unit(horizon() * n_u()); }
  Box output_box() const { return Box::unit(horizon() * n_y()); }
};

// Physical-units rollout: zero-order-hold inputs, classical RK4 with
// params.substeps internal steps per sample, outputs sampled before the
// input of the step applies (y_0 is the origin response).
Eigen::VectorXd oscillator_simulate_physical(const OscillatorParams& params,
                                             const Eigen::Ref<const Eigen::VectorXd>& U_phys, int T);

// Scaled-units rollout per the plant interface.
Eigen::VectorXd oscillator_simulate(const OscillatorParams& params,
                                    const Eigen::Ref<const Eigen::VectorXd>& U_scaled, int T,
                                    const Scaler& scaler);

// Output scaling fitted from a pilot batch of random input trajectories;
// inputs scale by the physical box [-10, 10]^2.
Scaler fit_oscillator_scaler(const OscillatorParams& params, int T, int pilot_count, uint64_t seed);

class OscillatorPlant : public Plant {
 public:
  OscillatorPlant(OscillatorParams params, int T, Scaler scaler)
      : params_(params), T_(T), scaler_(std::move(scaler)) {}

  int n_u() const override { return 2; }
  int n_y() const override { return 2; }
  int horizon() const override { return T_; }
  Eigen::VectorXd respond(const Eigen::Ref<const Eigen::VectorXd>& U_scaled) const override {
    return oscillator_simulate(params_, U_scaled, T_, scaler_);
  }
  const Scaler& scaler() const { return scaler_; }
  const OscillatorParams& params() const { return params_; }

 private:
  OscillatorParams params_;
  int T_;
  Scaler scaler_;
};

// Cascaded-tanks benchmark files: <dir>/train.csv and <dir>/test.csv, each a
// two-column "u,y" table with one row per time step. Values are returned in
// scaled units (scaler fitted on the training signal).
struct TanksData {
  Trajectory train;
  Trajectory test;
  Scaler scaler;
  std::string train_sha256;
  std::string test_sha256;
};

TanksData tanks_load(const std::string& dir, int expected_length = 1024);

// Writes one trajectory in the canonical tanks format.
void tanks_write_csv(const std::string& path, const Eigen::Ref<const Eigen::VectorXd>& u,
                     const Eigen::Ref<const Eigen::VectorXd>& y);

// Labels each input with the plant response; output-constraint violations are
// flagged in the dataset metadata, not rejected.
Dataset make_dataset(const Plant& plant, const std::vector<Eigen::VectorXd>& inputs);

}  // namespace qlpv
