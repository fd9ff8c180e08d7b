#include "qlpv/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "qlpv/dataset_io.hpp"
#include "qlpv/hash.hpp"
#include "qlpv/rng.hpp"

namespace qlpv {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

double now_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string value_text(const std::string& v) { return v; }
std::string value_text(bool v) { return v ? "true" : "false"; }
std::string value_text(int v) { return std::to_string(v); }
std::string value_text(double v) { return format_double(v); }
std::string value_text(const std::vector<uint64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

template <typename T>
const char* type_name(const T&) { return "string"; }
const char* type_name(const int&) { return "int"; }
const char* type_name(const double&) { return "float"; }
const char* type_name(const bool&) { return "bool"; }
const char* type_name(const std::vector<uint64_t>&) { return "uint list"; }

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  return z ^ (z >> 27);
}

Eigen::VectorXd random_unit_input(int len, Rng& rng) {
  Eigen::VectorXd u(len);
  for (int i = 0; i < len; ++i) u[i] = rng.uniform(-1.0, 1.0);
  return u;
}

// Sample `count` distinct indices from [0, n) by partial Fisher-Yates.
std::vector<int> sample_indices(int n, int count, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.uniform() * (n - i));
    std::swap(idx[i], idx[std::min(j, n - 1)]);
  }
  idx.resize(count);
  return idx;
}

AcquisitionKind kind_from_config(const ExperimentConfig& c, uint64_t seed) {
  AcquisitionKind kind = AcquisitionKind::make(acq_tag_from_string(c.acquisition), c.path_M,
                                               MetricWeight::blocks(c.w_u, c.w_y));
  kind.qlpv_mode = c.qlpv_literal ? PathMode::Literal : PathMode::Chord;
  kind.min_aggregate = c.acq_min_aggregate;
  kind.seed = seed;
  return kind;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (plant != "oscillator" && plant != "tanks")
    throw std::invalid_argument("config: unknown plant '" + plant + "'");
  if (T <= 0 || n_x <= 0 || n_p < 1 || net_width <= 0)
    throw std::invalid_argument("config: invalid model dimensions");
  if (n_d_init < 1 || n_max < n_d_init)
    throw std::invalid_argument("config: need 1 <= n_d_init <= n_max");
  if (plant == "oscillator") {
    if (test_size < reg_base_size + pool_size)
      throw std::invalid_argument("config: test_size must cover reg_base_size + pool_size");
    if (reg_base_size < 0 || pool_size < 1 || spread_pool_size < 2)
      throw std::invalid_argument("config: invalid pool sizes");
  }
  if (kappa1 < 0 || kappa2 < 0) throw std::invalid_argument("config: kappas must be >= 0");
  if (path_M < 1) throw std::invalid_argument("config: path_M must be >= 1");
  activation_from_string(activation);
  reg_kind_from_string(reg_kind);
  acq_tag_from_string(acquisition);
}

Dims ExperimentConfig::model_dims(int n_u, int n_y, int T_override) const {
  Dims d;
  d.n_x = n_x;
  d.n_u = n_u;
  d.n_y = n_y;
  d.n_p = n_p;
  d.T = T_override > 0 ? T_override : T;
  return d;
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  visit_fields(*this, [&](const char* key, const auto& value, const char*) {
    os << key << " = " << value_text(value) << "\n";
  });
  return os.str();
}

std::string ExperimentConfig::fingerprint() const { return sha256_hex(canonical()); }

std::string ExperimentConfig::schema() const {
  std::ostringstream os;
  os << "# experiment config schema: key = default  (type)  description\n";
  visit_fields(*this, [&](const char* key, const auto& value, const char* help) {
    os << key << " = " << value_text(value) << "  (" << type_name(value) << ")  " << help << "\n";
  });
  return os.str();
}

BootstrapResult bootstrap(const ExperimentConfig& config, uint64_t seed) {
  config.validate();
  if (config.plant != "oscillator")
    throw std::invalid_argument("bootstrap: only the oscillator plant supports active learning");

  BootstrapResult out;
  const OscillatorParams params;
  // One scaler per horizon, shared across seeds so every run sees the same boxes.
  const Scaler scaler =
      fit_oscillator_scaler(params, config.T, config.scaler_pilot, 0x5CA1EDULL + config.T);
  out.plant = std::make_shared<OscillatorPlant>(params, config.T, scaler);
  const int m = config.T * out.plant->n_u();

  Rng root(mix(seed, 0xB007));
  Rng rng_data = root.fork(1);
  Rng rng_test = root.fork(2);
  Rng rng_subset = root.fork(3);
  const uint64_t theta_seed = root.fork(4).next();
  Rng rng_spread = root.fork(5);

  std::vector<Eigen::VectorXd> test_inputs;
  test_inputs.reserve(config.test_size);
  for (int i = 0; i < config.test_size; ++i) test_inputs.push_back(random_unit_input(m, rng_test));
  out.test = make_dataset(*out.plant, test_inputs);

  const std::vector<int> base_idx = sample_indices(config.test_size, config.reg_base_size, rng_subset);
  std::vector<uint8_t> in_base(config.test_size, 0);
  for (int i : base_idx) {
    out.reg_base.push_back(test_inputs[i]);
    in_base[i] = 1;
  }

  // Candidate pool: test inputs minus the regularization base.
  std::vector<int> remaining;
  for (int i = 0; i < config.test_size; ++i)
    if (!in_base[i]) remaining.push_back(i);
  const std::vector<int> pool_pick =
      sample_indices(static_cast<int>(remaining.size()), config.pool_size, rng_subset);
  for (int k : pool_pick) out.pool.inputs.push_back(test_inputs[remaining[k]]);
  out.pool.provenance = "test-pool";

  for (int i = 0; i < config.spread_pool_size; ++i)
    out.spread_pool.push_back(random_unit_input(m, rng_spread));

  std::vector<Eigen::VectorXd> train_inputs;
  for (int i = 0; i < config.n_d_init; ++i) train_inputs.push_back(random_unit_input(m, rng_data));
  out.train = make_dataset(*out.plant, train_inputs);

  out.theta0 = init_model(config.model_dims(out.plant->n_u(), out.plant->n_y()), config.net_width,
                          activation_from_string(config.activation), theta_seed);
  return out;
}

std::string RunLog::fingerprint() const {
  std::ostringstream os;
  os << config_fp << "\n" << seed << "\n";
  for (const auto& r : records) {
    os << r.N << "|" << r.theta_fp << "|" << format_double(r.train_objective) << "|"
       << format_double(r.mu_e) << "|" << format_double(r.sigma2_e) << "|" << r.unstable << "|"
       << format_double(r.spread) << "|" << r.chosen << "|" << format_double(r.acq_value) << "|"
       << (r.violation ? 1 : 0) << "\n";
  }
  return sha256_hex(os.str());
}

void RunLog::save_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("RunLog: cannot write " + path);
  json head{{"record", "header"}, {"config_fp", config_fp}, {"seed", seed},
            {"fingerprint", fingerprint()}};
  out << head.dump() << "\n";
  for (const auto& r : records) {
    json j{{"record", "iteration"},
           {"N", r.N},
           {"theta_fp", r.theta_fp},
           {"train_objective", r.train_objective},
           {"mu_e", r.mu_e},
           {"sigma2_e", r.sigma2_e},
           {"unstable", r.unstable},
           {"spread", r.spread},
           {"chosen", r.chosen},
           {"acq_value", r.acq_value},
           {"violation", r.violation},
           {"t_train", r.t_train},
           {"t_acquire", r.t_acquire},
           {"t_evaluate", r.t_evaluate}};
    out << j.dump() << "\n";
  }
}

RunLog run_active_learning(const ExperimentConfig& config, uint64_t seed) {
  BootstrapResult bs = bootstrap(config, seed);
  const std::string fp8 = config.fingerprint().substr(0, 8);

  std::string train_log_path, audit_path;
  std::ofstream audit;
  if (!config.outdir.empty()) {
    fs::create_directories(config.outdir);
    const std::string tag = fp8 + "_seed" + std::to_string(seed);
    train_log_path = (fs::path(config.outdir) / ("train_log_" + tag + ".jsonl")).string();
    std::ofstream(train_log_path, std::ios::trunc);  // start fresh
    audit_path = (fs::path(config.outdir) / ("audit_" + tag + ".jsonl")).string();
    audit.open(audit_path, std::ios::trunc);
  }

  RunLog log;
  log.config_fp = config.fingerprint();
  log.seed = seed;

  QlpvModel model = bs.theta0;
  Dataset data = bs.train;
  CandidatePool pool = bs.pool;
  AcquisitionKind kind = kind_from_config(config, mix(seed, 0xACD));
  const Box y_box = bs.plant->output_box();
  Eigen::VectorXd warm = model.flatten();
  const RegKind reg = reg_kind_from_string(config.reg_kind);

  for (int N = config.n_d_init; N <= config.n_max; ++N) {
    IterationRecord rec;
    rec.N = N;

    RegularizerSpec spec;
    spec.kappa1 = config.kappa1;
    spec.kappa2 = config.kappa2;
    spec.kind = reg;
    spec.eps_u = config.eps_u;
    spec.shoot_len = config.shoot_len;
    spec.shoot_samples = config.shoot_samples;
    spec.seed = mix(seed, static_cast<uint64_t>(N));
    if (reg != RegKind::MultiShootPenalty && config.kappa2 > 0)
      spec.pool = build_pool(bs.reg_base, data.inputs());

    TrainConfig tc;
    tc.adam_iters = config.adam_iters;
    tc.adam_step = config.adam_step;
    tc.bfgs_max_iters = config.bfgs_max_iters;
    tc.bfgs_grad_tol = config.bfgs_grad_tol;
    tc.warm_start = warm;
    tc.log_path = train_log_path;

    const auto t_train0 = std::chrono::steady_clock::now();
    const TrainResult tr = train(data, spec, tc, model);
    rec.t_train = now_seconds(t_train0);
    model = tr.model;
    warm = model.flatten();
    rec.theta_fp = fingerprint_vector(warm);
    rec.train_objective = tr.objective;

    const auto t_eval0 = std::chrono::steady_clock::now();
    const EvalResult ev = evaluate(model, bs.test);
    rec.t_evaluate = now_seconds(t_eval0);
    rec.mu_e = ev.mu_e;
    rec.sigma2_e = ev.sigma2_e;
    rec.unstable = ev.unstable;
    rec.spread = scheduling_spread(model, bs.spread_pool);

    if (N < config.n_max) {
      SelectionAudit sel_audit;
      const auto t_acq0 = std::chrono::steady_clock::now();
      const int sel = select_input(pool, kind, model, data, y_box, &sel_audit);
      rec.t_acquire = now_seconds(t_acq0);

      if (audit.is_open()) {
        for (size_t j = 0; j < pool.inputs.size(); ++j) {
          json row{{"N", N},
                   {"candidate", j},
                   {"score", sel_audit.scores[j]},
                   {"feasible", sel_audit.feasible[j] != 0},
                   {"chosen", static_cast<int>(j) == sel}};
          audit << row.dump() << "\n";
        }
      }

      const Eigen::VectorXd U_a = pool.inputs[sel];
      const Eigen::VectorXd Y_a = bs.plant->respond(U_a);
      rec.chosen = sel;
      rec.acq_value = sel_audit.scores[sel];
      rec.violation = !y_box.contains(Y_a);
      Trajectory t_new;
      t_new.U = U_a;
      t_new.Y = Y_a;
      data.append(std::move(t_new), rec.violation);
      pool.inputs.erase(pool.inputs.begin() + sel);
    }
    log.records.push_back(rec);
  }

  if (!config.outdir.empty()) {
    const std::string tag = fp8 + "_seed" + std::to_string(seed);
    log.save_jsonl((fs::path(config.outdir) / ("runlog_" + tag + ".jsonl")).string());
    model.save((fs::path(config.outdir) / ("model_" + tag + ".json")).string());
  }
  return log;
}

EvalResult evaluate(const QlpvModel& model, const Dataset& test) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  EvalResult out;
  KahanSum sum;
  for (const auto& tr : test.items) {
    const SimulationResult sim = simulate(model, tr.U);
    if (!sim.stable) {
      ++out.unstable;
      continue;
    }
    const double e = (sim.Y - tr.Y).squaredNorm();
    out.errors.push_back(e);
    sum.add(e);
  }
  if (out.errors.empty()) {
    out.mu_e = std::numeric_limits<double>::infinity();
    out.sigma2_e = std::numeric_limits<double>::infinity();
    return out;
  }
  out.mu_e = sum.value() / out.errors.size();
  KahanSum var;
  for (double e : out.errors) var.add((e - out.mu_e) * (e - out.mu_e));
  out.sigma2_e = var.value() / out.errors.size();
  return out;
}

BfrResult bfr_score(const QlpvModel& model, const Dataset& test) {
  if (test.empty()) throw std::invalid_argument("bfr_score: empty test set");
  const int n_y = model.dims.n_y;
  BfrResult out;
  out.per_channel = Eigen::VectorXd::Zero(n_y);
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(n_y);

  for (const auto& tr : test.items) {
    const SimulationResult sim = simulate(model, tr.U);
    if (!sim.stable) {
      ++out.unstable;
      continue;
    }
    const int T = static_cast<int>(tr.Y.size()) / n_y;
    for (int c = 0; c < n_y; ++c) {
      Eigen::VectorXd y(T), yhat(T);
      for (int t = 0; t < T; ++t) {
        y[t] = tr.Y[t * n_y + c];
        yhat[t] = sim.Y[t * n_y + c];
      }
      const double denom = (y.array() - y.mean()).matrix().norm();
      if (denom < 1e-12) {
        out.skipped.push_back(static_cast<int>(&tr - test.items.data()) * n_y + c);
        continue;
      }
      const double bfr = std::max(0.0, 100.0 * (1.0 - (y - yhat).norm() / denom));
      out.per_channel[c] += bfr;
      counts[c] += 1;
    }
  }
  for (int c = 0; c < n_y; ++c)
    if (counts[c] > 0) out.per_channel[c] /= counts[c];
  out.mean = out.per_channel.mean();
  return out;
}

PathCompareResult compare_path_methods(const QlpvModel& model, const Dataset& samples,
                                       const std::vector<Eigen::VectorXd>& pool, int M,
                                       const MetricWeight& W) {
  if (pool.empty()) throw std::invalid_argument("compare_path_methods: empty pool");
  CandidatePool cp;
  cp.inputs = pool;
  Box no_filter;  // effectively unconstrained: the comparison ranks raw scores
  no_filter.lo = Eigen::VectorXd::Constant(samples.items.front().Y.size(), -1e300);
  no_filter.hi = Eigen::VectorXd::Constant(samples.items.front().Y.size(), 1e300);

  AcquisitionKind qlpv = AcquisitionKind::make(AcqTag::QLPV, M, W);
  AcquisitionKind ltv = AcquisitionKind::make(AcqTag::LTV, M, W);

  PathCompareResult out;
  SelectionAudit audit_q, audit_l;
  {
    const auto t0 = std::chrono::steady_clock::now();
    out.argmax_qlpv = select_input(cp, qlpv, model, samples, no_filter, &audit_q);
    out.t_qlpv = now_seconds(t0);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    out.argmax_ltv = select_input(cp, ltv, model, samples, no_filter, &audit_l);
    out.t_ltv = now_seconds(t0);
  }
  out.pct_time = 100.0 * out.t_ltv / std::max(out.t_qlpv, 1e-12);
  out.argmax_agree = out.argmax_qlpv == out.argmax_ltv;

  double mape = 0.0;
  for (size_t j = 0; j < pool.size(); ++j) {
    const double q = audit_q.scores[j], l = audit_l.scores[j];
    if (!std::isfinite(q) || !std::isfinite(l) || std::abs(q) < 1e-12) continue;
    mape = std::max(mape, 100.0 * std::abs(l - q) / std::abs(q));
  }
  out.mape = mape;
  return out;
}

TanksRunResult run_tanks_training(const ExperimentConfig& config, uint64_t seed) {
  config.validate();
  if (config.tanks_dir.empty()) throw std::invalid_argument("tanks: set tanks_dir");
  const TanksData tanks = tanks_load(config.tanks_dir, config.tanks_T);
  const int T = static_cast<int>(tanks.train.U.size());

  const Dims dims = config.model_dims(1, 1, T);
  QlpvModel init = init_model(dims, config.net_width, activation_from_string(config.activation),
                              mix(seed, 0x7A4C5));

  Dataset data;
  Trajectory train_tr = tanks.train;
  train_tr.x0 = Eigen::VectorXd::Zero(dims.n_x);
  data.append(std::move(train_tr));

  RegularizerSpec spec;
  spec.kappa1 = config.kappa1;
  spec.kappa2 = config.kappa2;
  spec.kind = RegKind::MultiShootPenalty;
  spec.shoot_len = config.shoot_len;
  spec.shoot_samples = config.shoot_samples;
  spec.eps_u = config.eps_u;
  spec.seed = mix(seed, 0x540C);

  TrainConfig tc;
  tc.adam_iters = config.adam_iters;
  tc.adam_step = config.adam_step;
  tc.bfgs_max_iters = config.bfgs_max_iters;
  tc.bfgs_grad_tol = config.bfgs_grad_tol;
  tc.estimate_x0 = true;
  if (!config.outdir.empty()) {
    fs::create_directories(config.outdir);
    tc.log_path = (fs::path(config.outdir) /
                   ("tanks_train_log_" + config.fingerprint().substr(0, 8) + "_seed" +
                    std::to_string(seed) + ".jsonl"))
                      .string();
    std::ofstream(tc.log_path, std::ios::trunc);
  }

  const TrainResult tr = train(data, spec, tc, init);

  TanksRunResult out;
  out.model = tr.model;
  out.objective = tr.objective;

  const SimulationResult train_sim = simulate(tr.model, tanks.train.U, tr.x0.at(0));
  out.train_rmse = train_sim.stable
                       ? std::sqrt((train_sim.Y - tanks.train.Y).squaredNorm() / T)
                       : std::numeric_limits<double>::infinity();

  const int prefix = std::min(config.x0_prefix, T);
  const InitialStateEstimate est =
      estimate_initial_state(tr.model, tanks.test.U, tanks.test.Y.head(prefix), prefix);
  out.test_x0 = est.x0;
  const SimulationResult test_sim = simulate(tr.model, tanks.test.U, est.x0);
  out.test_rmse = test_sim.stable ? std::sqrt((test_sim.Y - tanks.test.Y).squaredNorm() / T)
                                  : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace qlpv
