#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qlpv/dataset_io.hpp"
#include "qlpv/harness.hpp"
#include "qlpv/hash.hpp"
#include "qlpv/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace qlpv;

namespace {

json scaler_json(const Scaler& s) {
  auto vec = [](const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  return json{{"in_center", vec(s.in_center)},
              {"in_half", vec(s.in_half)},
              {"out_center", vec(s.out_center)},
              {"out_half", vec(s.out_half)}};
}

json dataset_manifest(const ExperimentConfig& config, uint64_t seed, const Scaler& scaler,
                      const char* split) {
  return json{{"plant", config.plant},
              {"split", split},
              {"n_u", 2},
              {"n_y", 2},
              {"T", config.T},
              {"seed", seed},
              {"config_fp", config.fingerprint()},
              {"scaler", scaler_json(scaler)}};
}

int cmd_bootstrap(const ExperimentConfig& config) {
  if (config.outdir.empty()) throw std::runtime_error("bootstrap: set --outdir");
  const std::string fp8 = config.fingerprint().substr(0, 8);
  for (uint64_t seed : config.seeds) {
    const BootstrapResult bs = bootstrap(config, seed);
    const fs::path base = fs::path(config.outdir) / ("dataset_" + fp8 + "_seed" + std::to_string(seed));
    save_dataset((base / "train").string(), bs.train,
                 dataset_manifest(config, seed, bs.plant->scaler(), "train"));
    save_dataset((base / "test").string(), bs.test,
                 dataset_manifest(config, seed, bs.plant->scaler(), "test"));
    bs.theta0.save((base / "theta0.json").string());
    std::cout << "seed " << seed << "  D1=" << bs.train.size() << " test=" << bs.test.size()
              << " pool=" << bs.pool.inputs.size()
              << "  train_fp=" << dataset_fingerprint((base / "train").string()).substr(0, 16)
              << "  test_fp=" << dataset_fingerprint((base / "test").string()).substr(0, 16) << "\n";
  }
  return 0;
}

int cmd_run(const ExperimentConfig& config) {
  const std::string fp8 = config.fingerprint().substr(0, 8);
  if (config.plant == "tanks") {
    std::ofstream table;
    if (!config.outdir.empty()) {
      fs::create_directories(config.outdir);
      const fs::path p = fs::path(config.outdir) / ("tanks_" + fp8 + ".csv");
      const bool fresh = !fs::exists(p);
      table.open(p, std::ios::app);
      if (fresh) table << "seed,kappa2,train_rmse,test_rmse\n";
    }
    for (uint64_t seed : config.seeds) {
      const TanksRunResult r = run_tanks_training(config, seed);
      std::cout << "tanks seed " << seed << "  kappa2=" << config.kappa2
                << "  train_rmse=" << r.train_rmse << "  test_rmse=" << r.test_rmse << "\n";
      if (table.is_open())
        table << seed << "," << format_double(config.kappa2) << "," << format_double(r.train_rmse)
              << "," << format_double(r.test_rmse) << "\n";
      if (!config.outdir.empty())
        r.model.save((fs::path(config.outdir) /
                      ("tanks_model_" + fp8 + "_seed" + std::to_string(seed) + ".json"))
                         .string());
    }
    return 0;
  }

  std::ofstream errors;
  if (!config.outdir.empty()) {
    fs::create_directories(config.outdir);
    const fs::path p = fs::path(config.outdir) / ("errors_" + fp8 + ".csv");
    const bool fresh = !fs::exists(p);
    errors.open(p, std::ios::app);
    if (fresh) errors << "seed,N,mu_e,sigma2_e,spread,unstable,violation\n";
  }
  for (uint64_t seed : config.seeds) {
    const RunLog log = run_active_learning(config, seed);
    for (const auto& r : log.records) {
      if (errors.is_open())
        errors << seed << "," << r.N << "," << format_double(r.mu_e) << ","
               << format_double(r.sigma2_e) << "," << format_double(r.spread) << "," << r.unstable
               << "," << (r.violation ? 1 : 0) << "\n";
    }
    const auto& last = log.records.back();
    std::cout << "seed " << seed << "  final N=" << last.N << "  mu_e=" << last.mu_e
              << "  sigma2_e=" << last.sigma2_e << "  unstable=" << last.unstable
              << "  runlog_fp=" << log.fingerprint().substr(0, 16) << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& dataset_dir) {
  const QlpvModel model = QlpvModel::load(model_path);
  const LoadedDataset loaded = load_dataset(dataset_dir);
  const EvalResult ev = evaluate(model, loaded.data);
  const BfrResult bfr = bfr_score(model, loaded.data);
  std::cout << "trajectories=" << loaded.data.size() << "  mu_e=" << ev.mu_e
            << "  sigma2_e=" << ev.sigma2_e << "  unstable=" << ev.unstable << "\n";
  std::cout << "bfr_mean=" << bfr.mean << "  bfr_per_channel=";
  for (Eigen::Index c = 0; c < bfr.per_channel.size(); ++c)
    std::cout << (c ? "," : "") << bfr.per_channel[c];
  std::cout << "\n";
  return 0;
}

int cmd_compare_paths(const ExperimentConfig& config, const std::string& model_path,
                      const std::string& dataset_dir, int nd, int pool_size, uint64_t pool_seed) {
  const QlpvModel model = QlpvModel::load(model_path);
  LoadedDataset loaded = load_dataset(dataset_dir);
  Dataset samples = loaded.data;
  if (nd > 0 && nd < samples.size()) {
    samples.items.resize(nd);
    samples.y_violation.resize(nd);
  }
  Rng rng(pool_seed);
  std::vector<Eigen::VectorXd> pool;
  const int m = static_cast<int>(samples.items.front().U.size());
  for (int i = 0; i < pool_size; ++i) {
    Eigen::VectorXd u(m);
    for (int j = 0; j < m; ++j) u[j] = rng.uniform(-1.0, 1.0);
    pool.push_back(std::move(u));
  }
  const PathCompareResult r = compare_path_methods(model, samples, pool, config.path_M,
                                                   MetricWeight::blocks(config.w_u, config.w_y));
  std::cout << "n_d=" << samples.size() << "  pool=" << pool_size << "  M=" << config.path_M
            << "  pct_time=" << r.pct_time << "%  mape=" << r.mape << "%  argmax_agree="
            << (r.argmax_agree ? "yes" : "no") << "  (qlpv " << r.t_qlpv << "s, ltv " << r.t_ltv
            << "s)\n";
  if (!config.outdir.empty()) {
    fs::create_directories(config.outdir);
    const fs::path p = fs::path(config.outdir) / "path_compare.csv";
    const bool fresh = !fs::exists(p);
    std::ofstream out(p, std::ios::app);
    if (fresh) out << "n_d,pool,M,pct_time,mape,argmax_agree,t_qlpv,t_ltv\n";
    out << samples.size() << "," << pool_size << "," << config.path_M << ","
        << format_double(r.pct_time) << "," << format_double(r.mape) << "," << r.argmax_agree << ","
        << format_double(r.t_qlpv) << "," << format_double(r.t_ltv) << "\n";
  }
  return 0;
}

// Converts the public benchmark export (header uEst,uVal,yEst,yVal) into the
// canonical two-column train/test files.
int cmd_import_tanks(const std::string& input, const std::string& out_dir) {
  std::ifstream in(input);
  if (!in) throw std::runtime_error("import-tanks: cannot open " + input);
  std::string header;
  if (!std::getline(in, header) || header.rfind("uEst,uVal,yEst,yVal", 0) != 0)
    throw std::runtime_error("import-tanks: expected header 'uEst,uVal,yEst,yVal'");
  std::vector<double> cols[4];
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    for (int c = 0; c < 4; ++c) {
      if (!std::getline(ls, cell, ','))
        throw std::runtime_error("import-tanks: short row at line " + std::to_string(lineno));
      cols[c].push_back(std::stod(cell));
    }
  }
  const auto n = cols[0].size();
  for (const auto& c : cols)
    if (c.size() != n) throw std::runtime_error("import-tanks: ragged columns");
  fs::create_directories(out_dir);
  auto map = [](std::vector<double>& v) {
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  };
  tanks_write_csv((fs::path(out_dir) / "train.csv").string(), map(cols[0]), map(cols[2]));
  tanks_write_csv((fs::path(out_dir) / "test.csv").string(), map(cols[1]), map(cols[3]));
  std::cout << "wrote " << n << " rows per split to " << out_dir << "\n"
            << "train sha256 " << sha256_file((fs::path(out_dir) / "train.csv").string()) << "\n"
            << "test  sha256 " << sha256_file((fs::path(out_dir) / "test.csv").string()) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qLPV identification with manifold regularization and active learning"};
  app.set_config("--config", "", "read options from a key=value config file");

  ExperimentConfig config;
  bool print_schema = false;
  app.add_flag("--schema", print_schema, "print the canonical config schema and exit");
  ExperimentConfig::visit_fields(config, [&](const char* key, auto& value, const char* help) {
    using T = std::decay_t<decltype(value)>;
    if constexpr (std::is_same_v<T, bool>) {
      app.add_flag(std::string("--") + key, value, help);
    } else {
      app.add_option(std::string("--") + key, value, help);
    }
  });

  auto* sub_bootstrap = app.add_subcommand("bootstrap", "generate and persist the initial datasets");
  auto* sub_run = app.add_subcommand("run", "run the active-learning loop (or tanks training)");
  auto* sub_eval = app.add_subcommand("evaluate", "score a saved model on a saved dataset");
  auto* sub_cmp = app.add_subcommand("compare-paths", "compare the qLPV and LTV path criteria");
  auto* sub_import = app.add_subcommand("import-tanks", "convert a benchmark CSV export");
  for (auto* sub : {sub_bootstrap, sub_run, sub_eval, sub_cmp, sub_import}) sub->fallthrough();

  std::string model_path, dataset_dir, import_input, import_out;
  int cmp_nd = 0, cmp_pool = 200;
  uint64_t cmp_seed = 0;
  sub_eval->add_option("--model", model_path, "model file")->required();
  sub_eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
  sub_cmp->add_option("--model", model_path, "model file")->required();
  sub_cmp->add_option("--dataset", dataset_dir, "anchor dataset directory")->required();
  sub_cmp->add_option("--nd", cmp_nd, "number of anchors to keep (0: all)");
  sub_cmp->add_option("--pool-size", cmp_pool, "random candidate pool size");
  sub_cmp->add_option("--pool-seed", cmp_seed, "candidate pool seed");
  sub_import->add_option("--input", import_input, "benchmark CSV (uEst,uVal,yEst,yVal)")->required();
  sub_import->add_option("--out", import_out, "output directory")->required();

  app.require_subcommand(0, 1);
  CLI11_PARSE(app, argc, argv);

  if (print_schema) {
    std::cout << config.schema();
    return 0;
  }

  try {
    if (sub_bootstrap->parsed()) return cmd_bootstrap(config);
    if (sub_run->parsed()) return cmd_run(config);
    if (sub_eval->parsed()) return cmd_evaluate(model_path, dataset_dir);
    if (sub_cmp->parsed())
      return cmd_compare_paths(config, model_path, dataset_dir, cmp_nd, cmp_pool, cmp_seed);
    if (sub_import->parsed()) return cmd_import_tanks(import_input, import_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << app.help();
  return 0;
}
