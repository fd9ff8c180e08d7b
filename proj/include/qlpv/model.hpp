#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "qlpv/dims.hpp"

namespace qlpv {

enum class Activation { Swish, Tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation act);

double act_eval(Activation act, double x);
double act_deriv(Activation act, double x);
double act_deriv2(Activation act, double x);

// Scheduling network h: one single-hidden-layer feedforward net per output
// channel h_2..h_{n_p}. Channel h_1 is the fixed zero logit and carries no
// parameters, so `channels() == n_p - 1`.
struct SchedulingNet {
  int width = 4;
  Activation activation = Activation::Swish;
  std::vector<Eigen::MatrixXd> W1;  // width x (n_x + n_u)
  std::vector<Eigen::VectorXd> b1;  // width
  std::vector<Eigen::VectorXd> w2;  // width
  std::vector<double> b2;

  int channels() const { return static_cast<int>(W1.size()); }
  int params_per_channel(int n_z) const { return width * n_z + 2 * width + 1; }
};

// Quasi-LPV model x+ = A(p) x + B(p) u, y = C x with p = softmax(h(x, u)) and
// A(p) = sum_i p_i A_i, B(p) = sum_i p_i B_i.
struct QlpvModel {
  Dims dims;
  std::vector<Eigen::MatrixXd> A;  // n_p matrices, n_x x n_x
  std::vector<Eigen::MatrixXd> B;  // n_p matrices, n_x x n_u
  Eigen::MatrixXd C;               // n_y x n_x
  SchedulingNet net;

  int num_params() const;

  // Flat parameter vector: A_1..A_{n_p} row-major, then B_1..B_{n_p} row-major,
  // then C row-major, then per channel W1 row-major, b1, w2, b2. The layout is
  // the serialization manifest order; flatten/set_params round-trip bitwise.
  Eigen::VectorXd flatten() const;
  void set_params(const Eigen::Ref<const Eigen::VectorXd>& theta);

  void validate() const;

  static QlpvModel zeros(const Dims& dims, int width, Activation act = Activation::Swish);

  void save(const std::string& path) const;
  static QlpvModel load(const std::string& path);
};

// Seeded random initialization: each A_i rescaled to the requested spectral
// radius, B_i and C uniform in [-coef_scale, coef_scale], net weights uniform
// in [-net_scale, net_scale].
QlpvModel init_model(const Dims& dims, int width, Activation act, uint64_t seed,
                     double spectral_radius = 0.9, double coef_scale = 0.3,
                     double net_scale = 0.5);

// Logits (0, h_2(x,u), ..., h_{n_p}(x,u)).
Eigen::VectorXd scheduling_logits(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& u);

// Max-subtracted softmax.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

// Jacobians of the logit vector at (x, u): Hx = dh/dx (n_p x n_x, first row
// zero), Hu = dh/du (n_p x n_u). Compose with softmax_jacobian for dp/d(x,u).
void scheduling_logit_jacobians(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                const Eigen::Ref<const Eigen::VectorXd>& u, Eigen::MatrixXd* Hx,
                                Eigen::MatrixXd* Hu);

// diag(p) - p p^T.
Eigen::MatrixXd softmax_jacobian(const Eigen::Ref<const Eigen::VectorXd>& p);

}  // namespace qlpv
