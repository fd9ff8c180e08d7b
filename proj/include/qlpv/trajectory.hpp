#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qlpv {

// One labeled experiment: stacked inputs U (T*n_u), stacked outputs Y (T*n_y)
// and the initial model state (empty means the origin).
struct Trajectory {
  Eigen::VectorXd U;
  Eigen::VectorXd Y;
  Eigen::VectorXd x0;

  int horizon(int n_u) const {
    if (n_u <= 0 || U.size() % n_u != 0)
      throw std::invalid_argument("Trajectory::horizon: U length not divisible by n_u");
    return static_cast<int>(U.size()) / n_u;
  }

  void validate(int n_u, int n_y) const {
    if (U.size() == 0 || U.size() % n_u != 0)
      throw std::invalid_argument("Trajectory: U length not divisible by n_u");
    if (Y.size() % n_y != 0) throw std::invalid_argument("Trajectory: Y length not divisible by n_y");
    if (Y.size() / n_y != U.size() / n_u)
      throw std::invalid_argument("Trajectory: U and Y disagree on the horizon");
  }
};

// Ordered collection of labeled trajectories. `y_violation` flags experiments
// whose measured output left the output constraint box (kept, not rejected).
struct Dataset {
  std::vector<Trajectory> items;
  std::vector<uint8_t> y_violation;

  int size() const { return static_cast<int>(items.size()); }
  bool empty() const { return items.empty(); }

  void append(Trajectory t, bool violation = false) {
    items.push_back(std::move(t));
    y_violation.push_back(violation ? 1 : 0);
  }

  std::vector<Eigen::VectorXd> inputs() const {
    std::vector<Eigen::VectorXd> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.U);
    return out;
  }
};

}  // namespace qlpv
