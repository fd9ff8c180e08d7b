#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qlpv/backprop.hpp"
#include "qlpv/optimize.hpp"
#include "qlpv/rng.hpp"
#include "qlpv/trajectory.hpp"
#include "qlpv/util.hpp"

namespace qlpv {

enum class RegKind { GradientPenalty, ManifoldPenalty, MultiShootPenalty };

RegKind reg_kind_from_string(const std::string& name);
std::string to_string(RegKind kind);

// r(theta) = kappa1 ||theta||^2 + kappa2 * <selected smoothness penalty>.
// The pool holds unlabeled input trajectories; it must be pairwise distinct
// (build it with build_pool). For the multiple-shooting variant the samples
// around each interval are drawn deterministically from `seed`.
struct RegularizerSpec {
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  RegKind kind = RegKind::ManifoldPenalty;
  std::vector<Eigen::VectorXd> pool;
  int shoot_len = 0;      // interval length T~, must divide T
  int shoot_samples = 0;  // samples per interval
  double eps_u = 1.0;     // neighborhood radius for interval samples
  uint64_t seed = 0;
};

// Sampling region of Eq.-style dataset neighborhoods: the union of eps_u
// infinity-norm balls around anchor inputs, intersected with the input box.
struct NeighborhoodSpec {
  double eps_u = 1.0;
  Box input_box;
  bool clip = true;
};

std::vector<Eigen::VectorXd> sample_neighborhood(const std::vector<Eigen::VectorXd>& anchors,
                                                 const NeighborhoodSpec& spec, int count, Rng& rng);

// Concatenates base and extra entries, dropping near-duplicates (minimum
// pairwise distance; first occurrence wins).
std::vector<Eigen::VectorXd> build_pool(const std::vector<Eigen::VectorXd>& base,
                                        const std::vector<Eigen::VectorXd>& extra,
                                        double min_dist = 1e-8);

struct ObjectiveBreakdown {
  double fit = 0.0;
  double l2 = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  int unstable = 0;  // diverged rollouts seen during evaluation
};

// (1/N_d) sum_i ||Y_i - F(U_i, x0_i)||^2. Diverged rollouts contribute a
// large-but-finite penalty so that line searches can retreat.
double fit_loss(const QlpvModel& model, const Dataset& data, int* unstable_count = nullptr);

// m(theta): pairwise scheduling-sequence distances weighted by inverse input
// distances, normalized by 1/N_r (any constant folds into kappa2).
double manifold_penalty(const QlpvModel& model, const std::vector<Eigen::VectorXd>& pool);

// (1/N_r) sum_k ||dP/dU(U_k)||_F^2.
double gradient_penalty(const QlpvModel& model, const std::vector<Eigen::VectorXd>& pool);

// Multiple-shooting manifold penalty: intervals of length shoot_len anchored
// at states simulated from each training trajectory under the current model.
double multishoot_penalty(const QlpvModel& model, const Dataset& data, const RegularizerSpec& spec);

// The deterministic per-interval sample draw used by the multishoot penalty
// (exposed so that its pairwise sums can be recomputed independently).
std::vector<Eigen::VectorXd> multishoot_interval_samples(const RegularizerSpec& spec,
                                                         const Eigen::Ref<const Eigen::VectorXd>& U_interval,
                                                         int traj_index, int interval_index);

double total_objective(const QlpvModel& model, const Dataset& data, const RegularizerSpec& spec,
                       ObjectiveBreakdown* breakdown = nullptr);

// Exact reverse-mode gradient of total_objective. Layout: [dtheta] or, when
// estimate_x0 is set, [dtheta; dx0_1; ...; dx0_Nd].
Eigen::VectorXd objective_gradient(const QlpvModel& model, const Dataset& data,
                                   const RegularizerSpec& spec, bool estimate_x0 = false);

struct TrainConfig {
  int adam_iters = 1000;
  double adam_step = 1e-3;
  int bfgs_max_iters = 1000;
  double bfgs_grad_tol = 1e-6;
  std::optional<Eigen::VectorXd> warm_start;  // overrides `init` when present
  uint64_t seed = 0;
  bool estimate_x0 = false;  // append one x0 per trajectory to the decision vector
  std::string log_path;      // line-delimited per-iteration log (appended)
};

struct TrainResult {
  QlpvModel model;
  double objective = 0.0;
  std::vector<Eigen::VectorXd> x0;  // per-trajectory estimates when estimate_x0
  ObjectiveBreakdown breakdown;
  int adam_iters = 0;
  int bfgs_iters = 0;
};

// Adam followed by BFGS; returns the best-objective iterate seen (never worse
// than the starting point). Throws if the objective is never finite.
TrainResult train(const Dataset& data, const RegularizerSpec& spec, const TrainConfig& config,
                  const QlpvModel& init);

struct InitialStateEstimate {
  Eigen::VectorXd x0;
  bool ok = true;
  double residual = 0.0;
};

// Least-squares fit of x0 against the first n_prefix output samples.
InitialStateEstimate estimate_initial_state(const QlpvModel& model,
                                            const Eigen::Ref<const Eigen::VectorXd>& U,
                                            const Eigen::Ref<const Eigen::VectorXd>& Y_prefix,
                                            int n_prefix);

// Mean pairwise scheduling spread over a pool: the per-pair average of the
// m(theta) summand. Reported by the harness as the schedule-variability statistic.
double scheduling_spread(const QlpvModel& model, const std::vector<Eigen::VectorXd>& pool);

}  // namespace qlpv
