#include "qlpv/plants.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "qlpv/hash.hpp"
#include "qlpv/rng.hpp"

namespace qlpv {

namespace {

double spring_force(const OscillatorParams& p, double x) {
  return p.a * x + p.b * x * x * x + p.c * x * x * x * x * x;
}

double damper_force(const OscillatorParams& p, double v) {
  return p.d * v + p.e * std::tanh(v / p.v0);
}

}  // namespace

Eigen::Vector4d oscillator_rhs(const Eigen::Vector4d& state, const Eigen::Vector2d& u,
                               const OscillatorParams& p) {
  const double x1 = state[0], v1 = state[1], x2 = state[2], v2 = state[3];
  const double dx = x1 - x2;
  const double dv = v1 - v2;
  const double f_couple = spring_force(p, dx) + damper_force(p, dv);
  Eigen::Vector4d deriv;
  deriv[0] = v1;
  deriv[1] = (u[0] - spring_force(p, x1) - damper_force(p, v1) - f_couple) / p.m1;
  deriv[2] = v2;
  deriv[3] = (u[1] - spring_force(p, x2) - damper_force(p, v2) + f_couple) / p.m2;
  return deriv;
}

Eigen::VectorXd oscillator_simulate_physical(const OscillatorParams& params,
                                             const Eigen::Ref<const Eigen::VectorXd>& U_phys, int T) {
  if (U_phys.size() != 2 * static_cast<Eigen::Index>(T))
    throw std::invalid_argument("oscillator_simulate: U must hold T force pairs");
  if (params.substeps <= 0 || params.dt <= 0)
    throw std::invalid_argument("oscillator_simulate: invalid integration settings");
  const double h = params.dt / params.substeps;

  Eigen::Vector4d z = Eigen::Vector4d::Zero();
  Eigen::VectorXd Y(2 * T);
  for (int t = 0; t < T; ++t) {
    Y[2 * t] = z[0];
    Y[2 * t + 1] = z[2];
    const Eigen::Vector2d u = U_phys.segment(2 * t, 2);
    for (int s = 0; s < params.substeps; ++s) {
      const Eigen::Vector4d k1 = oscillator_rhs(z, u, params);
      const Eigen::Vector4d k2 = oscillator_rhs(z + 0.5 * h * k1, u, params);
      const Eigen::Vector4d k3 = oscillator_rhs(z + 0.5 * h * k2, u, params);
      const Eigen::Vector4d k4 = oscillator_rhs(z + h * k3, u, params);
      z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!z.allFinite())
      throw InstabilityError("oscillator_simulate: non-finite state at sample " + std::to_string(t), t);
  }
  return Y;
}

Eigen::VectorXd Scaler::scale_u(const Eigen::Ref<const Eigen::VectorXd>& U_phys) const {
  const int n = static_cast<int>(in_center.size());
  Eigen::VectorXd out(U_phys.size());
  for (Eigen::Index i = 0; i < U_phys.size(); ++i)
    out[i] = (U_phys[i] - in_center[i % n]) / in_half[i % n];
  return out;
}

Eigen::VectorXd Scaler::unscale_u(const Eigen::Ref<const Eigen::VectorXd>& U_scaled) const {
  const int n = static_cast<int>(in_center.size());
  Eigen::VectorXd out(U_scaled.size());
  for (Eigen::Index i = 0; i < U_scaled.size(); ++i)
    out[i] = U_scaled[i] * in_half[i % n] + in_center[i % n];
  return out;
}

Eigen::VectorXd Scaler::scale_y(const Eigen::Ref<const Eigen::VectorXd>& Y_phys) const {
  const int n = static_cast<int>(out_center.size());
  Eigen::VectorXd out(Y_phys.size());
  for (Eigen::Index i = 0; i < Y_phys.size(); ++i)
    out[i] = (Y_phys[i] - out_center[i % n]) / out_half[i % n];
  return out;
}

Eigen::VectorXd Scaler::unscale_y(const Eigen::Ref<const Eigen::VectorXd>& Y_scaled) const {
  const int n = static_cast<int>(out_center.size());
  Eigen::VectorXd out(Y_scaled.size());
  for (Eigen::Index i = 0; i < Y_scaled.size(); ++i)
    out[i] = Y_scaled[i] * out_half[i % n] + out_center[i % n];
  return out;
}

Eigen::VectorXd oscillator_simulate(const OscillatorParams& params,
                                    const Eigen::Ref<const Eigen::VectorXd>& U_scaled, int T,
                                    const Scaler& scaler) {
  return scaler.scale_y(oscillator_simulate_physical(params, scaler.unscale_u(U_scaled), T));
}

Scaler fit_oscillator_scaler(const OscillatorParams& params, int T, int pilot_count, uint64_t seed) {
  Scaler s;
  s.in_center = Eigen::VectorXd::Zero(2);
  s.in_half = Eigen::VectorXd::Constant(2, 10.0);

  Rng rng(seed);
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  for (int k = 0; k < pilot_count; ++k) {
    Eigen::VectorXd U(2 * T);
    for (Eigen::Index i = 0; i < U.size(); ++i) U[i] = rng.uniform(-10.0, 10.0);
    const Eigen::VectorXd Y = oscillator_simulate_physical(params, U, T);
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < 2; ++c) {
        lo[c] = std::min(lo[c], Y[2 * t + c]);
        hi[c] = std::max(hi[c], Y[2 * t + c]);
      }
  }
  s.out_center = 0.5 * (hi + lo);
  s.out_half = (0.5 * (hi - lo)).cwiseMax(1e-9);
  return s;
}

void tanks_write_csv(const std::string& path, const Eigen::Ref<const Eigen::VectorXd>& u,
                     const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (u.size() != y.size()) throw std::invalid_argument("tanks_write_csv: u and y lengths differ");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("tanks_write_csv: cannot open " + path);
  out << "u,y\n";
  char buf[64];
  for (Eigen::Index t = 0; t < u.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", u[t], y[t]);
    out << buf;
  }
}

namespace {

std::pair<Eigen::VectorXd, Eigen::VectorXd> read_tanks_csv(const std::string& path,
                                                           int expected_length) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("tanks_load: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("tanks_load: empty file " + path);
  if (line != "u,y" && line != "u,y\r")
    throw std::runtime_error("tanks_load: expected header 'u,y' in " + path);
  std::vector<double> u, y;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("tanks_load: missing column at " + path + ":" + std::to_string(lineno));
    size_t used = 0;
    double uv, yv;
    try {
      uv = std::stod(line.substr(0, comma), &used);
      yv = std::stod(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw std::runtime_error("tanks_load: non-numeric entry at " + path + ":" +
                               std::to_string(lineno));
    }
    u.push_back(uv);
    y.push_back(yv);
  }
  if (expected_length > 0 && static_cast<int>(u.size()) != expected_length)
    throw std::runtime_error("tanks_load: " + path + " holds " + std::to_string(u.size()) +
                             " rows, expected " + std::to_string(expected_length));
  return {Eigen::Map<Eigen::VectorXd>(u.data(), u.size()),
          Eigen::Map<Eigen::VectorXd>(y.data(), y.size())};
}

}  // namespace

TanksData tanks_load(const std::string& dir, int expected_length) {
  TanksData data;
  const std::string train_path = dir + "/train.csv";
  const std::string test_path = dir + "/test.csv";
  auto [u_tr, y_tr] = read_tanks_csv(train_path, expected_length);
  auto [u_te, y_te] = read_tanks_csv(test_path, expected_length);
  data.train_sha256 = sha256_file(train_path);
  data.test_sha256 = sha256_file(test_path);

  Scaler s;
  s.in_center = Eigen::VectorXd::Constant(1, 0.5 * (u_tr.maxCoeff() + u_tr.minCoeff()));
  s.in_half = Eigen::VectorXd::Constant(1, std::max(0.5 * (u_tr.maxCoeff() - u_tr.minCoeff()), 1e-9));
  s.out_center = Eigen::VectorXd::Constant(1, 0.5 * (y_tr.maxCoeff() + y_tr.minCoeff()));
  s.out_half = Eigen::VectorXd::Constant(1, std::max(0.5 * (y_tr.maxCoeff() - y_tr.minCoeff()), 1e-9));
  data.scaler = s;

  data.train.U = s.scale_u(u_tr);
  data.train.Y = s.scale_y(y_tr);
  data.test.U = s.scale_u(u_te);
  data.test.Y = s.scale_y(y_te);
  return data;
}

Dataset make_dataset(const Plant& plant, const std::vector<Eigen::VectorXd>& inputs) {
  Dataset data;
  const Box y_box = plant.output_box();
  for (const auto& U : inputs) {
    if (!plant.input_box().contains(U, 1e-12))
      throw std::invalid_argument("make_dataset: input outside the input box");
    Trajectory tr;
    tr.U = U;
    tr.Y = plant.respond(U);
    const bool violation = !y_box.contains(tr.Y);
    data.append(std::move(tr), violation);
  }
  return data;
}

}  // namespace qlpv
