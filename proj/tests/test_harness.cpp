#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "qlpv/dataset_io.hpp"
#include "qlpv/harness.hpp"
#include "test_helpers.hpp"

using namespace qlpv;
using qlpv::test::make_random_model;
using qlpv::test::random_vector;

namespace {

// Small everything: keeps harness tests in seconds.
ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.T = 6;
  c.n_x = 3;
  c.n_p = 2;
  c.net_width = 3;
  c.n_d_init = 3;
  c.n_max = 5;
  c.test_size = 40;
  c.pool_size = 20;
  c.reg_base_size = 8;
  c.spread_pool_size = 6;
  c.path_M = 4;
  c.kappa2 = 0.01;
  c.adam_iters = 40;
  c.adam_step = 0.05;
  c.bfgs_max_iters = 30;
  c.scaler_pilot = 20;
  return c;
}

Dataset dataset_from_model(const QlpvModel& m, int count, Rng& rng) {
  Dataset d;
  for (int i = 0; i < count; ++i) {
    Trajectory tr;
    tr.U = random_vector(m.dims.T * m.dims.n_u, rng);
    tr.Y = simulate(m, tr.U).Y;
    d.append(std::move(tr));
  }
  return d;
}

}  // namespace

TEST_CASE("config: canonical text, fingerprint stability and the printed schema") {
  ExperimentConfig a = tiny_config();
  ExperimentConfig b = tiny_config();
  CHECK(a.canonical() == b.canonical());
  CHECK(a.fingerprint() == b.fingerprint());
  b.kappa2 = 0.02;
  CHECK(a.fingerprint() != b.fingerprint());

  const std::string schema = a.schema();
  for (const char* key : {"plant", "kappa1", "kappa2", "acquisition", "seeds", "path_M"})
    CHECK(schema.find(key) != std::string::npos);

  ExperimentConfig bad = a;
  bad.plant = "reactor";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("bootstrap: determinism, sizes and pool exclusion") {
  const ExperimentConfig c = tiny_config();
  const BootstrapResult a = bootstrap(c, 11);
  const BootstrapResult b = bootstrap(c, 11);

  CHECK(a.train.size() == 3);
  CHECK(a.test.size() == 40);
  CHECK(static_cast<int>(a.pool.inputs.size()) == 20);
  CHECK(static_cast<int>(a.reg_base.size()) == 8);

  for (int i = 0; i < a.train.size(); ++i) {
    CHECK((a.train.items[i].U - b.train.items[i].U).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.train.items[i].Y - b.train.items[i].Y).lpNorm<Eigen::Infinity>() == 0.0);
  }
  CHECK((a.theta0.flatten() - b.theta0.flatten()).lpNorm<Eigen::Infinity>() == 0.0);

  // Candidate pool and regularization base do not overlap.
  for (const auto& cand : a.pool.inputs)
    for (const auto& base : a.reg_base) CHECK((cand - base).norm() > 1e-12);

  // A different seed moves the data.
  const BootstrapResult other = bootstrap(c, 12);
  CHECK((a.train.items[0].U - other.train.items[0].U).lpNorm<Eigen::Infinity>() > 1e-12);
}

TEST_CASE("run_active_learning: growth, warm starts, determinism and the no-iteration edge") {
  ExperimentConfig c = tiny_config();
  c.acquisition = "ltv";

  const RunLog log = run_active_learning(c, 3);
  REQUIRE(static_cast<int>(log.records.size()) == c.n_max - c.n_d_init + 1);
  std::set<std::string> fps;
  for (size_t i = 0; i < log.records.size(); ++i) {
    const auto& r = log.records[i];
    CHECK(r.N == c.n_d_init + static_cast<int>(i));
    CHECK(std::isfinite(r.mu_e));
    CHECK(r.spread >= 0.0);
    fps.insert(r.theta_fp);
    if (r.N < c.n_max) CHECK(r.chosen >= 0);
    else CHECK(r.chosen == -1);
  }

  // Byte-identical reruns.
  const RunLog log2 = run_active_learning(c, 3);
  CHECK(log.fingerprint() == log2.fingerprint());

  // Different seeds differ.
  const RunLog log3 = run_active_learning(c, 4);
  CHECK(log.fingerprint() != log3.fingerprint());

  // No-iteration edge: a single training record, no acquisition.
  ExperimentConfig c0 = tiny_config();
  c0.n_max = c0.n_d_init;
  const RunLog short_log = run_active_learning(c0, 3);
  REQUIRE(short_log.records.size() == 1);
  CHECK(short_log.records[0].chosen == -1);
}

TEST_CASE("run_active_learning: RANDOM seeds diverge but replay identically") {
  ExperimentConfig c = tiny_config();
  c.acquisition = "random";
  c.n_max = 5;
  const RunLog a1 = run_active_learning(c, 21);
  const RunLog a2 = run_active_learning(c, 21);
  const RunLog b = run_active_learning(c, 22);
  CHECK(a1.fingerprint() == a2.fingerprint());
  CHECK(a1.fingerprint() != b.fingerprint());
}

TEST_CASE("run_active_learning writes artifacts under outdir") {
  namespace fs = std::filesystem;
  ExperimentConfig c = tiny_config();
  c.n_max = 4;
  c.outdir = (fs::temp_directory_path() / "qlpv_run_artifacts").string();
  fs::remove_all(c.outdir);
  const RunLog log = run_active_learning(c, 5);
  const std::string tag = c.fingerprint().substr(0, 8) + "_seed5";
  CHECK(fs::exists(fs::path(c.outdir) / ("runlog_" + tag + ".jsonl")));
  CHECK(fs::exists(fs::path(c.outdir) / ("model_" + tag + ".json")));
  CHECK(fs::exists(fs::path(c.outdir) / ("train_log_" + tag + ".jsonl")));
  CHECK(fs::exists(fs::path(c.outdir) / ("audit_" + tag + ".jsonl")));
  const QlpvModel final_model =
      QlpvModel::load((fs::path(c.outdir) / ("model_" + tag + ".json")).string());
  CHECK(fingerprint_vector(final_model.flatten()) == log.records.back().theta_fp);
  fs::remove_all(c.outdir);
}

TEST_CASE("evaluate: exact model, zero model and constant errors") {
  Rng rng(91);
  QlpvModel m = make_random_model(2, 1, 1, 2, 6, 910);
  Dataset test = dataset_from_model(m, 10, rng);
  const EvalResult perfect = evaluate(m, test);
  CHECK(perfect.mu_e == doctest::Approx(0.0).epsilon(1e-18));
  CHECK(perfect.sigma2_e == doctest::Approx(0.0).epsilon(1e-18));
  CHECK(perfect.unstable == 0);

  QlpvModel zero = QlpvModel::zeros(m.dims, m.net.width);
  const EvalResult ev = evaluate(zero, test);
  double mean = 0.0;
  for (const auto& tr : test.items) mean += tr.Y.squaredNorm();
  mean /= test.size();
  CHECK(ev.mu_e == doctest::Approx(mean).epsilon(1e-12));

  Dataset constant;
  for (int i = 0; i < 4; ++i) {
    Trajectory tr;
    tr.U = Eigen::VectorXd::Zero(6);
    tr.Y = Eigen::VectorXd::Ones(6);
    constant.append(std::move(tr));
  }
  const EvalResult ev_const = evaluate(zero, constant);
  CHECK(ev_const.sigma2_e == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("bfr_score: perfect prediction scores 100, the mean predictor scores 0") {
  Rng rng(92);
  QlpvModel m = make_random_model(2, 1, 2, 2, 6, 920);
  Dataset test = dataset_from_model(m, 5, rng);
  const BfrResult perfect = bfr_score(m, test);
  for (Eigen::Index c = 0; c < perfect.per_channel.size(); ++c)
    CHECK(perfect.per_channel[c] == doctest::Approx(100.0).epsilon(1e-9));

  // A zero model predicts the per-trajectory mean when outputs are centered.
  QlpvModel zero = QlpvModel::zeros(m.dims, m.net.width);
  Dataset centered;
  for (int i = 0; i < 4; ++i) {
    Trajectory tr;
    tr.U = Eigen::VectorXd::Zero(6);
    Eigen::VectorXd y = random_vector(12, rng);
    Eigen::Map<Eigen::MatrixXd> ym(y.data(), 2, 6);
    ym.row(0).array() -= ym.row(0).mean();
    ym.row(1).array() -= ym.row(1).mean();
    tr.Y = y;
    centered.append(std::move(tr));
  }
  const BfrResult mean_pred = bfr_score(zero, centered);
  for (Eigen::Index c = 0; c < mean_pred.per_channel.size(); ++c)
    CHECK(mean_pred.per_channel[c] == doctest::Approx(0.0).epsilon(1e-9));

  // Independent recomputation on a random fixture.
  QlpvModel other = make_random_model(2, 1, 2, 2, 6, 921);
  const BfrResult fix = bfr_score(other, test);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(2);
  for (const auto& tr : test.items) {
    const Eigen::VectorXd yhat = simulate(other, tr.U).Y;
    for (int c = 0; c < 2; ++c) {
      Eigen::VectorXd y(6), yh(6);
      for (int t = 0; t < 6; ++t) {
        y[t] = tr.Y[2 * t + c];
        yh[t] = yhat[2 * t + c];
      }
      expected[c] +=
          std::max(0.0, 100.0 * (1.0 - (y - yh).norm() / (y.array() - y.mean()).matrix().norm()));
    }
  }
  expected /= test.size();
  CHECK((fix.per_channel - expected).lpNorm<Eigen::Infinity>() < 1e-9);

  // Flat reference outputs are skipped with a flag.
  Dataset flat;
  Trajectory tr;
  tr.U = Eigen::VectorXd::Zero(6);
  tr.Y = Eigen::VectorXd::Ones(12);
  flat.append(std::move(tr));
  const BfrResult skipped = bfr_score(zero, flat);
  CHECK(skipped.skipped.size() == 2);
}

TEST_CASE("compare_path_methods: LTI gives zero error, M = 1 equals the plain distance") {
  Rng rng(93);
  QlpvModel lti = make_random_model(2, 1, 1, 1, 6, 930);
  Dataset samples = dataset_from_model(lti, 3, rng);
  std::vector<Eigen::VectorXd> pool;
  for (int i = 0; i < 8; ++i) pool.push_back(random_vector(6, rng));

  const PathCompareResult r = compare_path_methods(lti, samples, pool, 5, MetricWeight::identity());
  CHECK(r.mape == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.argmax_agree);

  // M = 1: LTV scores coincide with the IDEAL joint-space distance.
  QlpvModel m = make_random_model(2, 1, 1, 3, 6, 931);
  Dataset samples2 = dataset_from_model(m, 3, rng);
  CandidatePool cp;
  cp.inputs = pool;
  Box wide;
  wide.lo = Eigen::VectorXd::Constant(6, -1e9);
  wide.hi = Eigen::VectorXd::Constant(6, 1e9);
  SelectionAudit ltv1, ideal;
  select_input(cp, AcquisitionKind::make(AcqTag::LTV, 1), m, samples2, wide, &ltv1);
  select_input(cp, AcquisitionKind::make(AcqTag::IDEAL), m, samples2, wide, &ideal);
  for (size_t j = 0; j < pool.size(); ++j)
    CHECK(ltv1.scores[j] == doctest::Approx(ideal.scores[j]).epsilon(1e-14));
}

TEST_CASE("tanks training runs end to end on synthetic data") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "qlpv_tanks_run";
  fs::create_directories(dir);

  // Synthetic nonlinear single-tank-like data with a nonzero initial level.
  auto synth = [](double level0, uint64_t seed, int T) {
    Rng rng(seed);
    Eigen::VectorXd u(T), y(T);
    double level = level0;
    for (int t = 0; t < T; ++t) {
      u[t] = 2.0 + 1.5 * std::sin(0.15 * t) + 0.4 * rng.uniform(-1.0, 1.0);
      y[t] = level;
      level += 0.25 * u[t] - 0.35 * std::sqrt(std::max(level, 0.0));
    }
    return std::make_pair(u, y);
  };
  const int T = 32;
  const auto [u_tr, y_tr] = synth(1.2, 1, T);
  const auto [u_te, y_te] = synth(0.6, 2, T);
  tanks_write_csv((dir / "train.csv").string(), u_tr, y_tr);
  tanks_write_csv((dir / "test.csv").string(), u_te, y_te);

  ExperimentConfig c;
  c.plant = "tanks";
  c.tanks_dir = dir.string();
  c.tanks_T = T;
  c.n_x = 2;
  c.n_p = 2;
  c.net_width = 2;
  c.T = T;
  c.kappa1 = 1e-3;
  c.kappa2 = 0.01;
  c.reg_kind = "multishoot";
  c.shoot_len = 8;
  c.shoot_samples = 3;
  c.adam_iters = 150;
  c.adam_step = 0.05;
  c.bfgs_max_iters = 150;
  c.x0_prefix = 5;

  const TanksRunResult r = run_tanks_training(c, 0);
  CHECK(std::isfinite(r.train_rmse));
  CHECK(std::isfinite(r.test_rmse));
  CHECK(r.train_rmse < 0.5);  // fits the scaled signal reasonably
  CHECK(r.test_x0.size() == 2);

  // Determinism of the whole pipeline.
  const TanksRunResult r2 = run_tanks_training(c, 0);
  CHECK(r.train_rmse == r2.train_rmse);
  CHECK(r.test_rmse == r2.test_rmse);
  fs::remove_all(dir);
}
