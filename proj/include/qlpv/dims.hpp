#pragma once

#include <stdexcept>

namespace qlpv {

// Problem dimensions shared by models, trajectories and experiments.
struct Dims {
  int n_x = 0;  // state dimension
  int n_u = 0;  // input dimension
  int n_y = 0;  // output dimension
  int n_p = 1;  // number of scheduling modes
  int T = 0;    // horizon length in time steps

  void validate() const {
    if (n_x <= 0 || n_u <= 0 || n_y <= 0 || T <= 0)
      throw std::invalid_argument("Dims: n_x, n_u, n_y, T must be strictly positive");
    if (n_p < 1) throw std::invalid_argument("Dims: n_p must be >= 1");
  }

  bool operator==(const Dims&) const = default;
};

}  // namespace qlpv
