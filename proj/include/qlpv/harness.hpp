#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "qlpv/acquisition.hpp"
#include "qlpv/plants.hpp"
#include "qlpv/training.hpp"

namespace qlpv {

// All knobs of one experiment. visit_fields enumerates every field once so
// the CLI flags, the config file keys and the canonical fingerprint text
// cannot drift apart.
struct ExperimentConfig {
  std::string plant = "oscillator";  // oscillator | tanks
  int T = 10;

  int n_x = 4;
  int n_p = 3;
  int net_width = 4;
  std::string activation = "swish";

  int n_d_init = 5;
  int n_max = 10;
  int test_size = 200;
  int pool_size = 150;
  int reg_base_size = 20;
  int spread_pool_size = 30;

  int path_M = 10;
  double w_u = 1.0;
  double w_y = 1.0;
  std::string acquisition = "ltv";  // qlpv | ltv | ideal | fisher | random
  bool acq_min_aggregate = false;
  bool qlpv_literal = false;

  double eps_u = 1.0;
  double kappa1 = 1e-4;
  double kappa2 = 0.01;
  std::string reg_kind = "manifold";  // manifold | gradient | multishoot
  int shoot_len = 64;
  int shoot_samples = 6;

  int adam_iters = 600;
  double adam_step = 0.02;
  int bfgs_max_iters = 400;
  double bfgs_grad_tol = 1e-6;

  std::vector<uint64_t> seeds = {0, 1, 2};
  std::string outdir;

  std::string tanks_dir;
  int tanks_T = 1024;
  int x0_prefix = 5;
  int scaler_pilot = 100;

  template <typename Self, typename Visitor>
  static void visit_fields(Self& c, Visitor&& v) {
    v("plant", c.plant, "plant tag: oscillator | tanks");
    v("T", c.T, "horizon length in samples");
    v("n_x", c.n_x, "model state dimension");
    v("n_p", c.n_p, "number of scheduling modes");
    v("net_width", c.net_width, "scheduling net hidden width");
    v("activation", c.activation, "scheduling net activation: swish | tanh");
    v("n_d_init", c.n_d_init, "initial dataset size N_d");
    v("n_max", c.n_max, "final dataset size N_max");
    v("test_size", c.test_size, "test set size");
    v("pool_size", c.pool_size, "candidate pool size");
    v("reg_base_size", c.reg_base_size, "fixed regularization base pool size");
    v("spread_pool_size", c.spread_pool_size, "held-out pool for the spread statistic");
    v("path_M", c.path_M, "path grid segments M");
    v("w_u", c.w_u, "metric weight on input increments");
    v("w_y", c.w_y, "metric weight on output increments");
    v("acquisition", c.acquisition, "acquisition kind: qlpv | ltv | ideal | fisher | random");
    v("acq_min_aggregate", c.acq_min_aggregate, "min over anchors instead of IDW sum");
    v("qlpv_literal", c.qlpv_literal, "qlpv distance in sensitivity (literal) mode");
    v("eps_u", c.eps_u, "neighborhood radius");
    v("kappa1", c.kappa1, "ridge weight kappa_1");
    v("kappa2", c.kappa2, "smoothness weight kappa_2");
    v("reg_kind", c.reg_kind, "regularizer: manifold | gradient | multishoot");
    v("shoot_len", c.shoot_len, "multishoot interval length");
    v("shoot_samples", c.shoot_samples, "multishoot samples per interval");
    v("adam_iters", c.adam_iters, "Adam iterations");
    v("adam_step", c.adam_step, "Adam step size");
    v("bfgs_max_iters", c.bfgs_max_iters, "BFGS iteration cap");
    v("bfgs_grad_tol", c.bfgs_grad_tol, "BFGS gradient tolerance");
    v("seeds", c.seeds, "experiment seeds");
    v("outdir", c.outdir, "artifact output directory (empty: no files)");
    v("tanks_dir", c.tanks_dir, "cascaded-tanks data directory");
    v("tanks_T", c.tanks_T, "expected tanks signal length");
    v("x0_prefix", c.x0_prefix, "samples used to estimate the test initial state");
    v("scaler_pilot", c.scaler_pilot, "pilot trajectories for output scaling");
  }

  void validate() const;
  Dims model_dims(int n_u, int n_y, int T_override = 0) const;
  std::string canonical() const;
  std::string fingerprint() const;
  std::string schema() const;
};

struct BootstrapResult {
  std::shared_ptr<OscillatorPlant> plant;
  Dataset train;  // D_1
  Dataset test;
  std::vector<Eigen::VectorXd> reg_base;    // fixed across iterations
  std::vector<Eigen::VectorXd> spread_pool; // held out from all training pools
  CandidatePool pool;
  QlpvModel theta0;
};

BootstrapResult bootstrap(const ExperimentConfig& config, uint64_t seed);

struct IterationRecord {
  int N = 0;
  std::string theta_fp;
  double train_objective = 0.0;
  double mu_e = 0.0;
  double sigma2_e = 0.0;
  int unstable = 0;
  double spread = 0.0;
  int chosen = -1;  // pool index of U_a; -1 on the final iteration
  double acq_value = 0.0;
  bool violation = false;  // true plant response left the output box
  double t_train = 0.0, t_acquire = 0.0, t_evaluate = 0.0;
};

struct RunLog {
  std::string config_fp;
  uint64_t seed = 0;
  std::vector<IterationRecord> records;

  // Deterministic content hash; wall times excluded.
  std::string fingerprint() const;
  void save_jsonl(const std::string& path) const;
};

// Algorithm steps: train on D_N (warm started), evaluate, select U_a from the
// pool, query the plant, append, repeat until N_max. Artifacts are written
// under config.outdir when set.
RunLog run_active_learning(const ExperimentConfig& config, uint64_t seed);

struct EvalResult {
  double mu_e = 0.0;
  double sigma2_e = 0.0;
  std::vector<double> errors;  // per stable trajectory
  int unstable = 0;
};

EvalResult evaluate(const QlpvModel& model, const Dataset& test);

struct BfrResult {
  Eigen::VectorXd per_channel;      // averaged over trajectories, clipped at 0
  std::vector<int> skipped;         // trajectory/channel pairs with flat reference
  int unstable = 0;
  double mean = 0.0;
};

BfrResult bfr_score(const QlpvModel& model, const Dataset& test);

struct PathCompareResult {
  double pct_time = 0.0;  // LTV sweep wall time as % of the qLPV sweep
  double mape = 0.0;      // max absolute percentage error over candidate scores
  bool argmax_agree = false;
  int argmax_qlpv = -1;
  int argmax_ltv = -1;
  double t_qlpv = 0.0, t_ltv = 0.0;
};

PathCompareResult compare_path_methods(const QlpvModel& model, const Dataset& samples,
                                       const std::vector<Eigen::VectorXd>& pool, int M,
                                       const MetricWeight& W);

struct TanksRunResult {
  double train_rmse = 0.0;
  double test_rmse = 0.0;
  double objective = 0.0;
  Eigen::VectorXd test_x0;
  QlpvModel model;
};

// Identification path for the tanks benchmark: joint (theta, x0) training
// with the multishoot regularizer, then prefix-based initial-state estimation
// on the test signal.
TanksRunResult run_tanks_training(const ExperimentConfig& config, uint64_t seed);

}  // namespace qlpv
