#include "qlpv/acquisition.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "qlpv/backprop.hpp"
#include "qlpv/rng.hpp"

namespace qlpv {

namespace {

constexpr double kCoincidentDist = 1e-12;
const double kNegInf = -std::numeric_limits<double>::infinity();

uint64_t mix_seed(uint64_t seed, uint64_t idx) {
  uint64_t z = seed ^ ((idx + 1) * 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  return z ^ (z >> 27);
}

// Endpoint-anchored LTV path length with both endpoint schedules already
// available, so a pool sweep pays only the interior LTV rollouts per pair.
double ltv_path_length_prepared(const QlpvModel& model, const GraphPoint& p1,
                                const SchedulingSequence& P1, const GraphPoint& p2,
                                const SchedulingSequence& P2, const PathGrid& grid,
                                const MetricWeight& W) {
  const int n_knots = static_cast<int>(grid.knots.size());
  KahanSum acc;
  const SchedulingSequence dP = P2 - P1;
  const Eigen::VectorXd dU = p2.U - p1.U;
  SchedulingSequence P(P1.rows(), P1.cols());
  Eigen::VectorXd U_prev = p1.U, Y_prev = p1.Y, U_k, Y_k;
  for (int k = 1; k < n_knots; ++k) {
    const double tau = grid.knots[k];
    U_k = p1.U + tau * dU;
    if (k == n_knots - 1) {
      Y_k = p2.Y;
    } else {
      P = P1 + tau * dP;
      const int blowup = ltv_output(model, P, U_k, Y_k);
      if (blowup >= 0)
        throw InstabilityError("ltv path: unstable at knot " + std::to_string(k), blowup, k);
    }
    acc.add(W.norm(U_k - U_prev, Y_k - Y_prev));
    std::swap(U_prev, U_k);
    std::swap(Y_prev, Y_k);
  }
  return acc.value();
}

// Precomputed dataset-side quantities for one acquisition sweep. Anchors on
// which the current model itself diverges are dropped from the scoring set;
// coincidence detection still sees every dataset input.
struct AcqContext {
  const AcquisitionKind& kind;
  const QlpvModel& model;
  std::vector<Eigen::VectorXd> all_U;
  std::vector<Eigen::VectorXd> anchor_U;
  std::vector<Eigen::VectorXd> anchor_Y;     // measured outputs
  std::vector<SchedulingSequence> anchor_P;  // LTV/IDEAL with interior knots
  Eigen::MatrixXd gram;                      // FISHER only

  AcqContext(const AcquisitionKind& k, const QlpvModel& m, const Dataset& data) : kind(k), model(m) {
    if (data.empty()) throw std::invalid_argument("acquisition: empty dataset");
    for (const auto& tr : data.items) all_U.push_back(tr.U);
    if (kind.tag == AcqTag::RANDOM) return;

    const bool need_anchor_P =
        (kind.tag == AcqTag::LTV || kind.tag == AcqTag::IDEAL) && kind.grid.segments() > 1;
    if (kind.tag == AcqTag::FISHER) {
      const int n = model.num_params();
      gram = Eigen::MatrixXd::Zero(n, n);
    }
    for (const auto& tr : data.items) {
      const SimulationResult sim = simulate(model, tr.U);
      if (!sim.stable) continue;
      if (kind.tag == AcqTag::FISHER) {
        const Eigen::MatrixXd J = output_param_jacobian(model, tr.U);
        gram.noalias() += J.transpose() * J;
      }
      anchor_U.push_back(tr.U);
      anchor_Y.push_back(tr.Y);
      if (need_anchor_P) anchor_P.push_back(sim.P);
    }
  }

  double score(const Eigen::Ref<const Eigen::VectorXd>& U, bool* feasible_out,
               const Box* output_box) const {
    if (feasible_out) *feasible_out = true;
    if (kind.tag == AcqTag::RANDOM) return Rng(mix_seed(kind.seed, hash_input(U))).uniform();

    const SimulationResult sim = simulate(model, U);
    if (!sim.stable) {
      if (feasible_out) *feasible_out = false;
      return kNegInf;
    }
    const bool feasible = output_box == nullptr || output_box->contains(sim.Y);
    if (feasible_out) *feasible_out = feasible;
    if (!feasible) return kNegInf;

    if (kind.tag == AcqTag::FISHER) {
      Eigen::MatrixXd info = gram;
      try {
        const Eigen::MatrixXd J = output_param_jacobian(model, U);
        info.noalias() += J.transpose() * J;
      } catch (const std::exception&) {
        return kNegInf;
      }
      const int n = static_cast<int>(info.rows());
      info += kind.fisher_jitter * Eigen::MatrixXd::Identity(n, n);
      Eigen::LLT<Eigen::MatrixXd> llt(info);
      if (llt.info() != Eigen::Success) return kNegInf;
      return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    }

    // Path kinds. Coincidence with a dataset input is the zero-information
    // limit: the IDW weights collapse to that anchor and the path has zero length.
    for (const auto& Ui : all_U)
      if ((U - Ui).norm() < kCoincidentDist) return 0.0;

    const size_t n_d = anchor_U.size();
    if (n_d == 0) return kNegInf;  // model diverges on every dataset anchor
    Eigen::VectorXd d2(n_d);
    for (size_t i = 0; i < n_d; ++i) d2[i] = (U - anchor_U[i]).squaredNorm();

    const GraphPoint cand{U, sim.Y};
    Eigen::VectorXd dist(n_d);
    try {
      for (size_t i = 0; i < n_d; ++i) {
        const GraphPoint anchor{anchor_U[i], anchor_Y[i]};
        if (kind.tag == AcqTag::QLPV) {
          dist[i] = qlpv_path_length(model, anchor, cand, kind.grid, kind.W, kind.qlpv_mode);
        } else if (kind.grid.segments() > 1) {
          dist[i] = ltv_path_length_prepared(model, anchor, anchor_P[i], cand, sim.P, kind.grid, kind.W);
        } else {
          dist[i] = kind.W.norm(cand.U - anchor.U, cand.Y - anchor.Y);
        }
      }
    } catch (const InstabilityError&) {
      if (feasible_out) *feasible_out = false;
      return kNegInf;
    }

    if (kind.min_aggregate) return dist.minCoeff();
    const Eigen::VectorXd inv = d2.cwiseInverse();
    const Eigen::VectorXd sigma = inv / inv.sum();
    return sigma.dot(dist);
  }

  static uint64_t hash_input(const Eigen::Ref<const Eigen::VectorXd>& U) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (Eigen::Index i = 0; i < U.size(); ++i) {
      uint64_t bits;
      const double v = U[i];
      static_assert(sizeof(bits) == sizeof(v));
      __builtin_memcpy(&bits, &v, sizeof(bits));
      h = (h ^ bits) * 0x100000001b3ULL;
    }
    return h;
  }
};

}  // namespace

AcqTag acq_tag_from_string(const std::string& name) {
  if (name == "qlpv") return AcqTag::QLPV;
  if (name == "ltv") return AcqTag::LTV;
  if (name == "ideal") return AcqTag::IDEAL;
  if (name == "fisher") return AcqTag::FISHER;
  if (name == "random") return AcqTag::RANDOM;
  throw std::invalid_argument("unknown acquisition kind: " + name);
}

std::string to_string(AcqTag tag) {
  switch (tag) {
    case AcqTag::QLPV: return "qlpv";
    case AcqTag::LTV: return "ltv";
    case AcqTag::IDEAL: return "ideal";
    case AcqTag::FISHER: return "fisher";
    case AcqTag::RANDOM: return "random";
  }
  return "?";
}

AcquisitionKind AcquisitionKind::make(AcqTag tag, int M, MetricWeight W) {
  AcquisitionKind k;
  k.tag = tag;
  k.grid = PathGrid::uniform(tag == AcqTag::IDEAL ? 1 : M);
  k.W = std::move(W);
  return k;
}

Eigen::VectorXd idw_weights(const Eigen::Ref<const Eigen::VectorXd>& U,
                            const std::vector<Eigen::VectorXd>& dataset_inputs) {
  if (dataset_inputs.empty()) throw std::invalid_argument("idw_weights: empty dataset");
  const size_t n = dataset_inputs.size();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);

  // Coincidence limit: indicator of the nearest coincident anchor.
  int nearest = -1;
  double nearest_d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    const double d = (U - dataset_inputs[i]).norm();
    if (d < kCoincidentDist && d < nearest_d) {
      nearest_d = d;
      nearest = static_cast<int>(i);
    }
  }
  if (nearest >= 0) {
    w[nearest] = 1.0;
    return w;
  }

  for (size_t i = 0; i < n; ++i) w[i] = 1.0 / (U - dataset_inputs[i]).squaredNorm();
  return w / w.sum();
}

double acquisition_value(const AcquisitionKind& kind, const Eigen::Ref<const Eigen::VectorXd>& U,
                         const QlpvModel& model, const Dataset& data) {
  const AcqContext ctx(kind, model, data);
  return ctx.score(U, nullptr, nullptr);
}

int select_input(const CandidatePool& pool, const AcquisitionKind& kind, const QlpvModel& model,
                 const Dataset& data, const Box& output_box, SelectionAudit* audit) {
  if (pool.inputs.empty()) throw std::invalid_argument("select_input: empty candidate pool");
  const AcqContext ctx(kind, model, data);
  const bool filter = kind.tag != AcqTag::RANDOM;

  int best = -1;
  double best_score = kNegInf;
  if (audit) {
    audit->scores.assign(pool.inputs.size(), kNegInf);
    audit->feasible.assign(pool.inputs.size(), 0);
  }
  for (size_t j = 0; j < pool.inputs.size(); ++j) {
    bool feasible = true;
    const double s = ctx.score(pool.inputs[j], &feasible, filter ? &output_box : nullptr);
    if (audit) {
      audit->scores[j] = s;
      audit->feasible[j] = feasible ? 1 : 0;
    }
    if (feasible && s > best_score) {
      best_score = s;
      best = static_cast<int>(j);
    }
  }
  if (best < 0)
    throw std::runtime_error(
        "select_input: every candidate was filtered out or unstable; enlarge the pool");
  if (audit) audit->chosen = best;
  return best;
}

Eigen::MatrixXd fisher_information(const QlpvModel& model,
                                   const std::vector<Eigen::VectorXd>& U_list) {
  const int n = model.num_params();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  for (const auto& U : U_list) {
    const Eigen::MatrixXd J = output_param_jacobian(model, U);
    gram.noalias() += J.transpose() * J;
  }
  return gram;
}

}  // namespace qlpv
