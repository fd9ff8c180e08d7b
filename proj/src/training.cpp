#include "qlpv/training.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace qlpv {

namespace {

constexpr double kDivergedBase = 1e12;

double diverged_value(int T, int blowup_index) {
  return kDivergedBase + static_cast<double>(T - blowup_index);
}

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
  uint64_t z = seed ^ ((a + 1) * 0x9e3779b97f4a7c15ULL) ^ ((b + 1) * 0xbf58476d1ce4e5b9ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  return z ^ (z >> 27);
}

Eigen::VectorXd x0_or_zero(const Trajectory& tr, int n_x) {
  if (tr.x0.size() == 0) return Eigen::VectorXd::Zero(n_x);
  if (tr.x0.size() != n_x) throw std::invalid_argument("trajectory x0 has wrong length");
  return tr.x0;
}

void validate_spec(const RegularizerSpec& spec) {
  if (spec.kappa1 < 0 || spec.kappa2 < 0)
    throw std::invalid_argument("RegularizerSpec: kappa1, kappa2 must be nonnegative");
  if (spec.kappa2 > 0) {
    if (spec.kind == RegKind::MultiShootPenalty) {
      if (spec.shoot_len <= 0) throw std::invalid_argument("multishoot: shoot_len must be positive");
      if (spec.shoot_samples < 2)
        throw std::invalid_argument("multishoot: need at least 2 samples per interval");
    } else if (spec.pool.empty()) {
      throw std::invalid_argument("RegularizerSpec: pool must be nonempty when kappa2 > 0");
    }
  }
}

// Scheduling sequences of pool entries plus pairwise penalty sums. The same
// routine backs manifold_penalty, scheduling_spread and the fused gradient.
struct PoolSims {
  std::vector<SimulationResult> sims;
  std::vector<Eigen::VectorXd> P;  // stacked, only valid entries
  std::vector<int> blowup;         // per-entry blowup index, -1 if stable
  double surcharge = 0.0;
  int unstable = 0;
};

PoolSims simulate_pool(const QlpvModel& model, const std::vector<Eigen::VectorXd>& pool) {
  PoolSims out;
  out.sims.resize(pool.size());
  out.P.resize(pool.size());
  out.blowup.assign(pool.size(), -1);
  for (size_t k = 0; k < pool.size(); ++k) {
    out.sims[k] = simulate(model, pool[k]);
    if (!out.sims[k].stable) {
      out.blowup[k] = out.sims[k].blowup_index;
      out.surcharge += diverged_value(static_cast<int>(out.sims[k].P.cols()), out.sims[k].blowup_index);
      ++out.unstable;
      continue;
    }
    out.P[k] = stack_columns(out.sims[k].P);
  }
  return out;
}

double pairwise_penalty_sum(const std::vector<Eigen::VectorXd>& pool, const PoolSims& sims) {
  KahanSum acc;
  for (size_t k = 0; k + 1 < pool.size(); ++k) {
    if (sims.blowup[k] >= 0) continue;
    for (size_t l = k + 1; l < pool.size(); ++l) {
      if (sims.blowup[l] >= 0) continue;
      const double d2 = (pool[k] - pool[l]).squaredNorm();
      if (d2 < 1e-30)
        throw std::invalid_argument("manifold penalty: coincident pool entries " + std::to_string(k) +
                                    " and " + std::to_string(l));
      acc.add((sims.P[k] - sims.P[l]).squaredNorm() / d2);
    }
  }
  return acc.value();
}

}  // namespace

RegKind reg_kind_from_string(const std::string& name) {
  if (name == "gradient") return RegKind::GradientPenalty;
  if (name == "manifold") return RegKind::ManifoldPenalty;
  if (name == "multishoot") return RegKind::MultiShootPenalty;
  throw std::invalid_argument("unknown regularizer kind: " + name);
}

std::string to_string(RegKind kind) {
  switch (kind) {
    case RegKind::GradientPenalty: return "gradient";
    case RegKind::ManifoldPenalty: return "manifold";
    case RegKind::MultiShootPenalty: return "multishoot";
  }
  return "?";
}

std::vector<Eigen::VectorXd> sample_neighborhood(const std::vector<Eigen::VectorXd>& anchors,
                                                 const NeighborhoodSpec& spec, int count, Rng& rng) {
  if (anchors.empty()) throw std::invalid_argument("sample_neighborhood: no anchors");
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  for (int j = 0; j < count; ++j) {
    const size_t idx = static_cast<size_t>(rng.uniform() * anchors.size()) % anchors.size();
    Eigen::VectorXd u = anchors[idx];
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] += spec.eps_u * rng.uniform(-1.0, 1.0);
    if (spec.clip) u = spec.input_box.clip(u);
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<Eigen::VectorXd> build_pool(const std::vector<Eigen::VectorXd>& base,
                                        const std::vector<Eigen::VectorXd>& extra, double min_dist) {
  std::vector<Eigen::VectorXd> pool;
  pool.reserve(base.size() + extra.size());
  auto try_add = [&](const Eigen::VectorXd& u) {
    for (const auto& v : pool)
      if ((u - v).norm() < min_dist) return;
    pool.push_back(u);
  };
  for (const auto& u : base) try_add(u);
  for (const auto& u : extra) try_add(u);
  return pool;
}

double fit_loss(const QlpvModel& model, const Dataset& data, int* unstable_count) {
  if (data.empty()) throw std::invalid_argument("fit_loss: empty dataset");
  const int n_x = model.dims.n_x;
  const double inv_n = 1.0 / data.size();
  KahanSum acc;
  int unstable = 0;
  for (const auto& tr : data.items) {
    const SimulationResult sim = simulate(model, tr.U, x0_or_zero(tr, n_x));
    if (!sim.stable) {
      acc.add(diverged_value(static_cast<int>(sim.P.cols()), sim.blowup_index));
      ++unstable;
      continue;
    }
    acc.add((sim.Y - tr.Y).squaredNorm() * inv_n);
  }
  if (unstable_count) *unstable_count = unstable;
  return acc.value();
}

double manifold_penalty(const QlpvModel& model, const std::vector<Eigen::VectorXd>& pool) {
  if (pool.empty()) throw std::invalid_argument("manifold_penalty: empty pool");
  const PoolSims sims = simulate_pool(model, pool);
  return pairwise_penalty_sum(pool, sims) / pool.size() + sims.surcharge;
}

double scheduling_spread(const QlpvModel& model, const std::vector<Eigen::VectorXd>& pool) {
  if (pool.size() < 2) throw std::invalid_argument("scheduling_spread: need at least 2 pool entries");
  const PoolSims sims = simulate_pool(model, pool);
  const size_t n = pool.size();
  return pairwise_penalty_sum(pool, sims) / (0.5 * n * (n - 1));
}

double gradient_penalty(const QlpvModel& model, const std::vector<Eigen::VectorXd>& pool) {
  if (pool.empty()) throw std::invalid_argument("gradient_penalty: empty pool");
  KahanSum acc;
  for (const auto& u : pool) {
    try {
      acc.add(scheduling_jacobian_norm2(model, u, nullptr));
    } catch (const InstabilityError&) {
      acc.add(kDivergedBase);
    }
  }
  return acc.value() / pool.size();
}

std::vector<Eigen::VectorXd> multishoot_interval_samples(const RegularizerSpec& spec,
                                                         const Eigen::Ref<const Eigen::VectorXd>& U_interval,
                                                         int traj_index, int interval_index) {
  Rng rng(mix_seed(spec.seed, traj_index, interval_index));
  std::vector<Eigen::VectorXd> samples;
  samples.reserve(spec.shoot_samples);
  for (int k = 0; k < spec.shoot_samples; ++k) {
    Eigen::VectorXd u = U_interval;
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] += spec.eps_u * rng.uniform(-1.0, 1.0);
    samples.push_back(std::move(u));
  }
  return samples;
}

namespace {

// Shared value/gradient path of the multiple-shooting penalty. `weight`
// multiplies the gradient contributions (the caller passes kappa2; the value
// returned is unweighted). Gradients accumulate into gtheta / gx0.
double multishoot_eval(const QlpvModel& model, const Dataset& data, const RegularizerSpec& spec,
                       double weight, Eigen::VectorXd* gtheta, Eigen::MatrixXd* gx0,
                       double* surcharge_out, int* unstable_out) {
  const int n_x = model.dims.n_x, n_u = model.dims.n_u, n_p = model.dims.n_p;
  const int Tt = spec.shoot_len;
  const int Ns = spec.shoot_samples;
  KahanSum total;
  double surcharge = 0.0;
  int unstable = 0;

  for (int i = 0; i < data.size(); ++i) {
    const Trajectory& tr = data.items[i];
    const int T = tr.horizon(n_u);
    if (T % Tt != 0)
      throw std::invalid_argument("multishoot: shoot_len must divide the trajectory horizon");
    const Eigen::VectorXd x0 = x0_or_zero(tr, n_x);
    const SimulationResult sim_full = simulate(model, tr.U, x0);
    if (!sim_full.stable) {
      surcharge += diverged_value(T, sim_full.blowup_index);
      ++unstable;
      continue;
    }
    const int n_intervals = T / Tt;
    const double norm = 1.0 / (static_cast<double>(Tt) * Ns * data.size());
    Eigen::MatrixXd dX_main;
    if (gtheta) dX_main = Eigen::MatrixXd::Zero(n_x, T);
    bool any_anchor_adjoint = false;

    for (int iv = 0; iv < n_intervals; ++iv) {
      const Eigen::VectorXd anchor = sim_full.X.col(iv * Tt);
      const auto U_iv = tr.U.segment(iv * Tt * n_u, Tt * n_u);
      const auto samples = multishoot_interval_samples(spec, U_iv, i, iv);

      std::vector<SimulationResult> sims(samples.size());
      std::vector<Eigen::VectorXd> P(samples.size());
      std::vector<bool> ok(samples.size(), true);
      for (size_t k = 0; k < samples.size(); ++k) {
        sims[k] = simulate(model, samples[k], anchor);
        if (!sims[k].stable) {
          ok[k] = false;
          surcharge += diverged_value(Tt, sims[k].blowup_index);
          ++unstable;
          continue;
        }
        P[k] = stack_columns(sims[k].P);
      }

      for (size_t k = 0; k + 1 < samples.size(); ++k) {
        if (!ok[k]) continue;
        for (size_t l = k + 1; l < samples.size(); ++l) {
          if (!ok[l]) continue;
          const double d2 = (samples[k] - samples[l]).squaredNorm();
          if (d2 < 1e-30) throw std::invalid_argument("multishoot: coincident interval samples");
          total.add(norm * (P[k] - P[l]).squaredNorm() / d2);
        }
      }

      if (gtheta) {
        for (size_t k = 0; k < samples.size(); ++k) {
          if (!ok[k]) continue;
          Eigen::VectorXd dP = Eigen::VectorXd::Zero(Tt * n_p);
          for (size_t l = 0; l < samples.size(); ++l) {
            if (l == k || !ok[l]) continue;
            const double d2 = (samples[k] - samples[l]).squaredNorm();
            dP += (2.0 * weight * norm / d2) * (P[k] - P[l]);
          }
          if (dP.isZero(0.0)) continue;
          AdjointSeeds seeds;
          seeds.dP = unstack_columns(dP, n_p);
          const BackpropResult bp = backprop(model, samples[k], anchor, sims[k], seeds);
          *gtheta += bp.dtheta;
          dX_main.col(iv * Tt) += bp.dx0;
          any_anchor_adjoint = true;
        }
      }
    }

    if (gtheta && any_anchor_adjoint) {
      AdjointSeeds seeds;
      seeds.dX = dX_main;
      const BackpropResult bp = backprop(model, tr.U, x0, sim_full, seeds);
      *gtheta += bp.dtheta;
      if (gx0) gx0->col(i) += bp.dx0;
    }
  }

  if (surcharge_out) *surcharge_out = surcharge;
  if (unstable_out) *unstable_out = unstable;
  return total.value();
}

// Fused value/gradient evaluation shared by the public entry points and the
// optimizer loop.
double eval_objective(const QlpvModel& model, const Dataset& data, const RegularizerSpec& spec,
                      bool estimate_x0, Eigen::VectorXd* grad, ObjectiveBreakdown* breakdown) {
  validate_spec(spec);
  if (data.empty()) throw std::invalid_argument("total_objective: empty dataset");
  const int n_x = model.dims.n_x, n_p = model.dims.n_p;
  const int n_theta = model.num_params();
  const int n_grad = n_theta + (estimate_x0 ? data.size() * n_x : 0);
  if (grad) grad->setZero(n_grad);

  ObjectiveBreakdown bd;
  double surcharge = 0.0;

  // Data term.
  {
    const double inv_n = 1.0 / data.size();
    KahanSum acc;
    for (int i = 0; i < data.size(); ++i) {
      const Trajectory& tr = data.items[i];
      const Eigen::VectorXd x0 = x0_or_zero(tr, n_x);
      const SimulationResult sim = simulate(model, tr.U, x0);
      if (!sim.stable) {
        surcharge += diverged_value(static_cast<int>(sim.P.cols()), sim.blowup_index);
        ++bd.unstable;
        continue;
      }
      const Eigen::VectorXd r = sim.Y - tr.Y;
      acc.add(r.squaredNorm() * inv_n);
      if (grad) {
        AdjointSeeds seeds;
        seeds.dY = (2.0 * inv_n) * r;
        const BackpropResult bp = backprop(model, tr.U, x0, sim, seeds);
        grad->head(n_theta) += bp.dtheta;
        if (estimate_x0) grad->segment(n_theta + i * n_x, n_x) += bp.dx0;
      }
    }
    bd.fit = acc.value();
  }

  // Parameter ridge.
  const Eigen::VectorXd theta = model.flatten();
  bd.l2 = spec.kappa1 * theta.squaredNorm();
  if (grad && spec.kappa1 > 0) grad->head(n_theta) += 2.0 * spec.kappa1 * theta;

  // Smoothness penalty.
  if (spec.kappa2 > 0) {
    switch (spec.kind) {
      case RegKind::ManifoldPenalty: {
        const PoolSims sims = simulate_pool(model, spec.pool);
        surcharge += sims.surcharge;
        bd.unstable += sims.unstable;
        const double m = pairwise_penalty_sum(spec.pool, sims) / spec.pool.size();
        bd.penalty = spec.kappa2 * m;
        if (grad) {
          const size_t n = spec.pool.size();
          for (size_t k = 0; k < n; ++k) {
            if (sims.blowup[k] >= 0) continue;
            Eigen::VectorXd dP = Eigen::VectorXd::Zero(sims.P[k].size());
            for (size_t l = 0; l < n; ++l) {
              if (l == k || sims.blowup[l] >= 0) continue;
              const double d2 = (spec.pool[k] - spec.pool[l]).squaredNorm();
              dP += (2.0 * spec.kappa2 / (n * d2)) * (sims.P[k] - sims.P[l]);
            }
            if (dP.isZero(0.0)) continue;
            AdjointSeeds seeds;
            seeds.dP = unstack_columns(dP, n_p);
            const BackpropResult bp =
                backprop(model, spec.pool[k], Eigen::VectorXd::Zero(n_x), sims.sims[k], seeds);
            grad->head(n_theta) += bp.dtheta;
          }
        }
        break;
      }
      case RegKind::GradientPenalty: {
        KahanSum acc;
        const double inv_n = 1.0 / spec.pool.size();
        for (const auto& u : spec.pool) {
          try {
            Eigen::VectorXd dtheta;
            const double v = scheduling_jacobian_norm2(model, u, grad ? &dtheta : nullptr);
            acc.add(v * inv_n);
            if (grad) grad->head(n_theta) += (spec.kappa2 * inv_n) * dtheta;
          } catch (const InstabilityError&) {
            surcharge += kDivergedBase;
            ++bd.unstable;
          }
        }
        bd.penalty = spec.kappa2 * acc.value();
        break;
      }
      case RegKind::MultiShootPenalty: {
        double ms_surcharge = 0.0;
        int ms_unstable = 0;
        Eigen::MatrixXd gx0;
        if (grad && estimate_x0) gx0 = Eigen::MatrixXd::Zero(n_x, data.size());
        Eigen::VectorXd gtheta_part = Eigen::VectorXd::Zero(n_theta);
        const double m =
            multishoot_eval(model, data, spec, spec.kappa2, grad ? &gtheta_part : nullptr,
                            (grad && estimate_x0) ? &gx0 : nullptr, &ms_surcharge, &ms_unstable);
        surcharge += ms_surcharge;
        bd.unstable += ms_unstable;
        bd.penalty = spec.kappa2 * m;
        if (grad) {
          grad->head(n_theta) += gtheta_part;
          if (estimate_x0)
            for (int i = 0; i < data.size(); ++i)
              grad->segment(n_theta + i * n_x, n_x) += gx0.col(i);
        }
        break;
      }
    }
  }

  bd.total = bd.fit + bd.l2 + bd.penalty + surcharge;
  if (breakdown) *breakdown = bd;
  return bd.total;
}

}  // namespace

double multishoot_penalty(const QlpvModel& model, const Dataset& data, const RegularizerSpec& spec) {
  if (spec.shoot_len <= 0 || spec.shoot_samples < 2)
    throw std::invalid_argument("multishoot_penalty: invalid shoot_len/shoot_samples");
  double surcharge = 0.0;
  const double m = multishoot_eval(model, data, spec, 1.0, nullptr, nullptr, &surcharge, nullptr);
  return m + surcharge;
}

double total_objective(const QlpvModel& model, const Dataset& data, const RegularizerSpec& spec,
                       ObjectiveBreakdown* breakdown) {
  return eval_objective(model, data, spec, false, nullptr, breakdown);
}

Eigen::VectorXd objective_gradient(const QlpvModel& model, const Dataset& data,
                                   const RegularizerSpec& spec, bool estimate_x0) {
  Eigen::VectorXd grad;
  eval_objective(model, data, spec, estimate_x0, &grad, nullptr);
  return grad;
}

TrainResult train(const Dataset& data, const RegularizerSpec& spec, const TrainConfig& config,
                  const QlpvModel& init) {
  validate_spec(spec);
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  QlpvModel model = init;
  if (config.warm_start) model.set_params(*config.warm_start);
  const int n_x = model.dims.n_x;
  const int n_theta = model.num_params();
  const int n_v = n_theta + (config.estimate_x0 ? data.size() * n_x : 0);

  Dataset working = data;
  if (config.estimate_x0)
    for (auto& tr : working.items)
      if (tr.x0.size() == 0) tr.x0 = Eigen::VectorXd::Zero(n_x);

  Eigen::VectorXd v0(n_v);
  v0.head(n_theta) = model.flatten();
  if (config.estimate_x0)
    for (int i = 0; i < working.size(); ++i) v0.segment(n_theta + i * n_x, n_x) = working.items[i].x0;

  auto apply = [&](const Eigen::VectorXd& v) {
    model.set_params(v.head(n_theta));
    if (config.estimate_x0)
      for (int i = 0; i < working.size(); ++i)
        working.items[i].x0 = v.segment(n_theta + i * n_x, n_x);
  };

  ObjectiveFn fn = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad) -> double {
    apply(v);
    if (!grad) return eval_objective(model, working, spec, config.estimate_x0, nullptr, nullptr);
    return eval_objective(model, working, spec, config.estimate_x0, grad, nullptr);
  };

  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path, std::ios::app);
    if (!log) throw std::runtime_error("train: cannot open log file " + config.log_path);
  }
  StepSink sink;
  if (log.is_open()) {
    sink = [&log](const OptStep& s) {
      nlohmann::ordered_json j{{"iter", s.iter},
                               {"phase", s.phase},
                               {"objective", s.objective},
                               {"grad_norm", s.grad_norm},
                               {"t_wall", s.t_wall}};
      log << j.dump() << "\n";
    };
  }

  AdamOptions adam_opts;
  adam_opts.iters = config.adam_iters;
  adam_opts.step = config.adam_step;
  const MinimizeResult adam_res = adam_minimize(fn, v0, adam_opts, sink);

  BfgsOptions bfgs_opts;
  bfgs_opts.max_iters = config.bfgs_max_iters;
  bfgs_opts.grad_tol = config.bfgs_grad_tol;
  const MinimizeResult bfgs_res = bfgs_minimize(fn, adam_res.x, bfgs_opts, sink);

  if (!adam_res.ever_finite && !bfgs_res.ever_finite)
    throw std::runtime_error("train: objective never finite (all iterations diverged)");

  // Best iterate across the starting point and both phases.
  Eigen::VectorXd best = v0;
  double best_f = fn(v0, nullptr);
  for (const auto* r : {&adam_res, &bfgs_res}) {
    if (std::isfinite(r->f) && r->f < best_f) {
      best_f = r->f;
      best = r->x;
    }
  }

  TrainResult out;
  apply(best);
  out.objective = eval_objective(model, working, spec, config.estimate_x0, nullptr, &out.breakdown);
  out.model = model;
  out.adam_iters = adam_res.iters;
  out.bfgs_iters = bfgs_res.iters;
  if (config.estimate_x0) {
    out.x0.reserve(working.size());
    for (const auto& tr : working.items) out.x0.push_back(tr.x0);
  }
  return out;
}

InitialStateEstimate estimate_initial_state(const QlpvModel& model,
                                            const Eigen::Ref<const Eigen::VectorXd>& U,
                                            const Eigen::Ref<const Eigen::VectorXd>& Y_prefix,
                                            int n_prefix) {
  const int n_x = model.dims.n_x, n_y = model.dims.n_y, n_u = model.dims.n_u;
  if (n_prefix <= 0 || Y_prefix.size() != static_cast<Eigen::Index>(n_prefix) * n_y)
    throw std::invalid_argument("estimate_initial_state: Y_prefix must hold n_prefix output samples");
  const int T = static_cast<int>(U.size()) / n_u;
  if (n_prefix > T) throw std::invalid_argument("estimate_initial_state: prefix longer than horizon");
  if (n_prefix < n_x)
    std::cerr << "estimate_initial_state: prefix shorter than n_x; estimate may be unobservable\n";

  ObjectiveFn fn = [&](const Eigen::VectorXd& x0, Eigen::VectorXd* grad) -> double {
    const SimulationResult sim = simulate(model, U, x0);
    if (!sim.stable) {
      if (grad) grad->setZero(n_x);
      return diverged_value(T, sim.blowup_index);
    }
    Eigen::VectorXd dY = Eigen::VectorXd::Zero(sim.Y.size());
    double value = 0.0;
    for (int t = 0; t < n_prefix; ++t) {
      const Eigen::VectorXd r = sim.Y.segment(t * n_y, n_y) - Y_prefix.segment(t * n_y, n_y);
      value += r.squaredNorm();
      dY.segment(t * n_y, n_y) = 2.0 * r;
    }
    if (grad) {
      AdjointSeeds seeds;
      seeds.dY = dY;
      *grad = backprop(model, U, x0, sim, seeds).dx0;
    }
    return value;
  };

  BfgsOptions opts;
  opts.max_iters = 200;
  opts.grad_tol = 1e-12;
  const MinimizeResult res = bfgs_minimize(fn, Eigen::VectorXd::Zero(n_x), opts);

  InitialStateEstimate est;
  if (!res.ever_finite || !res.x.allFinite()) {
    est.x0 = Eigen::VectorXd::Zero(n_x);
    est.ok = false;
    est.residual = fn(est.x0, nullptr);
    return est;
  }
  est.x0 = res.x;
  est.residual = res.f;
  return est;
}

}  // namespace qlpv
