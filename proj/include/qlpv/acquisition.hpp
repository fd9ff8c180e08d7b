#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "qlpv/path.hpp"
#include "qlpv/trajectory.hpp"
#include "qlpv/util.hpp"

namespace qlpv {

enum class AcqTag { QLPV, LTV, IDEAL, FISHER, RANDOM };

AcqTag acq_tag_from_string(const std::string& name);
std::string to_string(AcqTag tag);

// Acquisition criterion. Path variants carry the grid and metric weight;
// IDEAL is the LTV criterion with a single segment (the plain inverse-distance
// variance measure). RANDOM scores candidates by a seed-deterministic draw and
// ignores the output-constraint filter.
struct AcquisitionKind {
  AcqTag tag = AcqTag::LTV;
  PathGrid grid = PathGrid::uniform(10);
  MetricWeight W;
  PathMode qlpv_mode = PathMode::Chord;
  bool min_aggregate = false;  // min over anchors instead of the IDW-weighted sum
  uint64_t seed = 0;           // RANDOM scores
  double fisher_jitter = 1e-9;

  static AcquisitionKind make(AcqTag tag, int M = 10, MetricWeight W = MetricWeight::identity());
};

struct CandidatePool {
  std::vector<Eigen::VectorXd> inputs;
  std::string provenance;
};

// Normalized inverse squared-distance weights; the indicator of the nearest
// coincident anchor when U lies on the dataset (limit behavior).
Eigen::VectorXd idw_weights(const Eigen::Ref<const Eigen::VectorXd>& U,
                            const std::vector<Eigen::VectorXd>& dataset_inputs);

// a(U | theta, D): IDW-weighted path length to the measured dataset anchors
// for the path kinds, the log-det information gain for FISHER, a seeded draw
// for RANDOM. Unstable candidate rollouts score -inf.
double acquisition_value(const AcquisitionKind& kind, const Eigen::Ref<const Eigen::VectorXd>& U,
                         const QlpvModel& model, const Dataset& data);

struct SelectionAudit {
  std::vector<double> scores;
  std::vector<uint8_t> feasible;
  int chosen = -1;
};

// Pool-based argmax of the acquisition over candidates whose predicted output
// satisfies the box (RANDOM skips the filter). Ties break to the lowest index.
// Throws if every candidate is filtered out.
int select_input(const CandidatePool& pool, const AcquisitionKind& kind, const QlpvModel& model,
                 const Dataset& data, const Box& output_box, SelectionAudit* audit = nullptr);

// Gram matrix sum_i grad_theta F(U_i)^T grad_theta F(U_i), dense n_theta square.
Eigen::MatrixXd fisher_information(const QlpvModel& model,
                                   const std::vector<Eigen::VectorXd>& U_list);

}  // namespace qlpv
