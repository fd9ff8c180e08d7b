#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "qlpv/acquisition.hpp"
#include "qlpv/dataset_io.hpp"
#include "qlpv/harness.hpp"
#include "qlpv/path.hpp"
#include "qlpv/plants.hpp"
#include "qlpv/sensitivity.hpp"
#include "qlpv/training.hpp"

namespace py = pybind11;
using namespace qlpv;

PYBIND11_MODULE(_core, m) {
  m.doc() = "qLPV identification with manifold regularization and path-length active learning";

  py::register_exception<InstabilityError>(m, "InstabilityError");

  py::class_<Dims>(m, "Dims")
      .def(py::init([](int n_x, int n_u, int n_y, int n_p, int T) {
             Dims d{n_x, n_u, n_y, n_p, T};
             d.validate();
             return d;
           }),
           py::arg("n_x"), py::arg("n_u"), py::arg("n_y"), py::arg("n_p"), py::arg("T"))
      .def_readwrite("n_x", &Dims::n_x)
      .def_readwrite("n_u", &Dims::n_u)
      .def_readwrite("n_y", &Dims::n_y)
      .def_readwrite("n_p", &Dims::n_p)
      .def_readwrite("T", &Dims::T);

  py::enum_<Activation>(m, "Activation")
      .value("swish", Activation::Swish)
      .value("tanh", Activation::Tanh);

  py::class_<QlpvModel>(m, "QlpvModel")
      .def_readwrite("dims", &QlpvModel::dims)
      .def_readwrite("A", &QlpvModel::A)
      .def_readwrite("B", &QlpvModel::B)
      .def_readwrite("C", &QlpvModel::C)
      .def("num_params", &QlpvModel::num_params)
      .def("flatten", &QlpvModel::flatten)
      .def("set_params", &QlpvModel::set_params)
      .def("save", &QlpvModel::save)
      .def_static("load", &QlpvModel::load)
      .def_static("zeros", &QlpvModel::zeros, py::arg("dims"), py::arg("width"),
                  py::arg("activation") = Activation::Swish);

  m.def("init_model", &init_model, py::arg("dims"), py::arg("width"), py::arg("activation"),
        py::arg("seed"), py::arg("spectral_radius") = 0.9, py::arg("coef_scale") = 0.3,
        py::arg("net_scale") = 0.5);

  py::class_<SimulationResult>(m, "SimulationResult")
      .def_readonly("Y", &SimulationResult::Y)
      .def_readonly("X", &SimulationResult::X)
      .def_readonly("P", &SimulationResult::P)
      .def_readonly("stable", &SimulationResult::stable)
      .def_readonly("blowup_index", &SimulationResult::blowup_index);

  m.def("scheduling_eval", &scheduling_eval, py::arg("model"), py::arg("x"), py::arg("u"));
  m.def(
      "simulate",
      [](const QlpvModel& model, const Eigen::VectorXd& U, std::optional<Eigen::VectorXd> x0) {
        return x0 ? simulate(model, U, *x0) : simulate(model, U);
      },
      py::arg("model"), py::arg("U"), py::arg("x0") = std::nullopt);
  m.def(
      "ltv_simulate",
      [](const QlpvModel& model, const SchedulingSequence& P, const Eigen::VectorXd& U,
         std::optional<Eigen::VectorXd> x0) {
        return x0 ? ltv_simulate(model, P, U, *x0) : ltv_simulate(model, P, U);
      },
      py::arg("model"), py::arg("P"), py::arg("U"), py::arg("x0") = std::nullopt);
  m.def("assemble_G", &assemble_G, py::arg("model"), py::arg("P"));

  py::enum_<SensitivityMethod>(m, "SensitivityMethod")
      .value("forward", SensitivityMethod::Forward)
      .value("finite_difference", SensitivityMethod::FiniteDifference);
  m.def("output_sensitivity", &output_sensitivity, py::arg("model"), py::arg("U"),
        py::arg("method") = SensitivityMethod::Forward, py::arg("fd_step") = 1e-6);
  m.def("scheduling_input_jacobian", &scheduling_input_jacobian, py::arg("model"), py::arg("U"));

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init([](Eigen::VectorXd U, Eigen::VectorXd Y, std::optional<Eigen::VectorXd> x0) {
             Trajectory t;
             t.U = std::move(U);
             t.Y = std::move(Y);
             if (x0) t.x0 = *x0;
             return t;
           }),
           py::arg("U"), py::arg("Y"), py::arg("x0") = std::nullopt)
      .def_readwrite("U", &Trajectory::U)
      .def_readwrite("Y", &Trajectory::Y)
      .def_readwrite("x0", &Trajectory::x0);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("items", &Dataset::items)
      .def("append", &Dataset::append, py::arg("trajectory"), py::arg("violation") = false)
      .def("inputs", &Dataset::inputs)
      .def("__len__", &Dataset::size);

  py::enum_<RegKind>(m, "RegKind")
      .value("gradient", RegKind::GradientPenalty)
      .value("manifold", RegKind::ManifoldPenalty)
      .value("multishoot", RegKind::MultiShootPenalty);

  py::class_<RegularizerSpec>(m, "RegularizerSpec")
      .def(py::init<>())
      .def_readwrite("kappa1", &RegularizerSpec::kappa1)
      .def_readwrite("kappa2", &RegularizerSpec::kappa2)
      .def_readwrite("kind", &RegularizerSpec::kind)
      .def_readwrite("pool", &RegularizerSpec::pool)
      .def_readwrite("shoot_len", &RegularizerSpec::shoot_len)
      .def_readwrite("shoot_samples", &RegularizerSpec::shoot_samples)
      .def_readwrite("eps_u", &RegularizerSpec::eps_u)
      .def_readwrite("seed", &RegularizerSpec::seed);

  m.def(
      "fit_loss", [](const QlpvModel& model, const Dataset& d) { return fit_loss(model, d); },
      py::arg("model"), py::arg("data"));
  m.def("manifold_penalty", &manifold_penalty, py::arg("model"), py::arg("pool"));
  m.def("gradient_penalty", &gradient_penalty, py::arg("model"), py::arg("pool"));
  m.def("multishoot_penalty", &multishoot_penalty, py::arg("model"), py::arg("data"),
        py::arg("spec"));
  m.def(
      "total_objective",
      [](const QlpvModel& model, const Dataset& d, const RegularizerSpec& spec) {
        return total_objective(model, d, spec);
      },
      py::arg("model"), py::arg("data"), py::arg("spec"));
  m.def("objective_gradient", &objective_gradient, py::arg("model"), py::arg("data"),
        py::arg("spec"), py::arg("estimate_x0") = false);
  m.def("scheduling_spread", &scheduling_spread, py::arg("model"), py::arg("pool"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("adam_iters", &TrainConfig::adam_iters)
      .def_readwrite("adam_step", &TrainConfig::adam_step)
      .def_readwrite("bfgs_max_iters", &TrainConfig::bfgs_max_iters)
      .def_readwrite("bfgs_grad_tol", &TrainConfig::bfgs_grad_tol)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("estimate_x0", &TrainConfig::estimate_x0)
      .def_readwrite("log_path", &TrainConfig::log_path);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("objective", &TrainResult::objective)
      .def_readonly("x0", &TrainResult::x0)
      .def_readonly("adam_iters", &TrainResult::adam_iters)
      .def_readonly("bfgs_iters", &TrainResult::bfgs_iters);

  m.def("train", &train, py::arg("data"), py::arg("spec"), py::arg("config"), py::arg("init"),
        py::call_guard<py::gil_scoped_release>());

  py::class_<InitialStateEstimate>(m, "InitialStateEstimate")
      .def_readonly("x0", &InitialStateEstimate::x0)
      .def_readonly("ok", &InitialStateEstimate::ok)
      .def_readonly("residual", &InitialStateEstimate::residual);
  m.def("estimate_initial_state", &estimate_initial_state, py::arg("model"), py::arg("U"),
        py::arg("Y_prefix"), py::arg("n_prefix"));

  py::class_<PathGrid>(m, "PathGrid")
      .def_static("uniform", &PathGrid::uniform, py::arg("M"))
      .def_readwrite("knots", &PathGrid::knots)
      .def("segments", &PathGrid::segments);

  py::class_<MetricWeight>(m, "MetricWeight")
      .def_static("identity", &MetricWeight::identity)
      .def_static("blocks", &MetricWeight::blocks, py::arg("w_u"), py::arg("w_y"))
      .def_static("general", &MetricWeight::general, py::arg("W"))
      .def("norm", &MetricWeight::norm, py::arg("du"), py::arg("dy"));

  py::class_<GraphPoint>(m, "GraphPoint")
      .def_static("from_model", &GraphPoint::from_model, py::arg("model"), py::arg("U"))
      .def_static("from_data", &GraphPoint::from_data, py::arg("U"), py::arg("Y"))
      .def_readwrite("U", &GraphPoint::U)
      .def_readwrite("Y", &GraphPoint::Y);

  py::enum_<PathMode>(m, "PathMode")
      .value("chord", PathMode::Chord)
      .value("literal", PathMode::Literal);

  m.def("linear_scheduling_curve", &linear_scheduling_curve, py::arg("P_start"), py::arg("P_end"),
        py::arg("tau"));
  m.def(
      "qlpv_path_length",
      [](const QlpvModel& model, const Eigen::VectorXd& U1, const Eigen::VectorXd& U2,
         const PathGrid& grid, const MetricWeight& W, PathMode mode) {
        return qlpv_path_length(model, U1, U2, grid, W, mode);
      },
      py::arg("model"), py::arg("U1"), py::arg("U2"), py::arg("grid"), py::arg("W"),
      py::arg("mode") = PathMode::Chord);
  m.def(
      "qlpv_path_length_points",
      [](const QlpvModel& model, const GraphPoint& p1, const GraphPoint& p2, const PathGrid& grid,
         const MetricWeight& W, PathMode mode) {
        return qlpv_path_length(model, p1, p2, grid, W, mode);
      },
      py::arg("model"), py::arg("p1"), py::arg("p2"), py::arg("grid"), py::arg("W"),
      py::arg("mode") = PathMode::Chord);
  m.def("ltv_path_length", &ltv_path_length, py::arg("model"), py::arg("p1"), py::arg("p2"),
        py::arg("grid"), py::arg("W"));

  py::enum_<AcqTag>(m, "AcqTag")
      .value("qlpv", AcqTag::QLPV)
      .value("ltv", AcqTag::LTV)
      .value("ideal", AcqTag::IDEAL)
      .value("fisher", AcqTag::FISHER)
      .value("random", AcqTag::RANDOM);

  py::class_<AcquisitionKind>(m, "AcquisitionKind")
      .def_static("make", &AcquisitionKind::make, py::arg("tag"), py::arg("M") = 10,
                  py::arg("W") = MetricWeight::identity())
      .def_readwrite("tag", &AcquisitionKind::tag)
      .def_readwrite("grid", &AcquisitionKind::grid)
      .def_readwrite("W", &AcquisitionKind::W)
      .def_readwrite("qlpv_mode", &AcquisitionKind::qlpv_mode)
      .def_readwrite("min_aggregate", &AcquisitionKind::min_aggregate)
      .def_readwrite("seed", &AcquisitionKind::seed);

  py::class_<CandidatePool>(m, "CandidatePool")
      .def(py::init<>())
      .def_readwrite("inputs", &CandidatePool::inputs)
      .def_readwrite("provenance", &CandidatePool::provenance);

  py::class_<Box>(m, "Box")
      .def_static("unit", &Box::unit, py::arg("dim"))
      .def_readwrite("lo", &Box::lo)
      .def_readwrite("hi", &Box::hi)
      .def("contains", &Box::contains, py::arg("v"), py::arg("tol") = 0.0);

  py::class_<SelectionAudit>(m, "SelectionAudit")
      .def(py::init<>())
      .def_readonly("scores", &SelectionAudit::scores)
      .def_readonly("feasible", &SelectionAudit::feasible)
      .def_readonly("chosen", &SelectionAudit::chosen);

  m.def("idw_weights", &idw_weights, py::arg("U"), py::arg("dataset_inputs"));
  m.def("acquisition_value", &acquisition_value, py::arg("kind"), py::arg("U"), py::arg("model"),
        py::arg("data"));
  m.def(
      "select_input",
      [](const CandidatePool& pool, const AcquisitionKind& kind, const QlpvModel& model,
         const Dataset& data, const Box& output_box) {
        SelectionAudit audit;
        const int chosen = select_input(pool, kind, model, data, output_box, &audit);
        return py::make_tuple(chosen, audit);
      },
      py::arg("pool"), py::arg("kind"), py::arg("model"), py::arg("data"), py::arg("output_box"));
  m.def("fisher_information", &fisher_information, py::arg("model"), py::arg("U_list"));

  py::class_<OscillatorParams>(m, "OscillatorParams")
      .def(py::init<>())
      .def_readwrite("m1", &OscillatorParams::m1)
      .def_readwrite("m2", &OscillatorParams::m2)
      .def_readwrite("a", &OscillatorParams::a)
      .def_readwrite("b", &OscillatorParams::b)
      .def_readwrite("c", &OscillatorParams::c)
      .def_readwrite("d", &OscillatorParams::d)
      .def_readwrite("e", &OscillatorParams::e)
      .def_readwrite("v0", &OscillatorParams::v0)
      .def_readwrite("dt", &OscillatorParams::dt)
      .def_readwrite("substeps", &OscillatorParams::substeps);

  py::class_<Scaler>(m, "Scaler")
      .def_readwrite("in_center", &Scaler::in_center)
      .def_readwrite("in_half", &Scaler::in_half)
      .def_readwrite("out_center", &Scaler::out_center)
      .def_readwrite("out_half", &Scaler::out_half)
      .def("scale_u", &Scaler::scale_u)
      .def("unscale_u", &Scaler::unscale_u)
      .def("scale_y", &Scaler::scale_y)
      .def("unscale_y", &Scaler::unscale_y);

  m.def("oscillator_rhs", &oscillator_rhs, py::arg("state"), py::arg("u"), py::arg("params"));
  m.def("oscillator_simulate_physical", &oscillator_simulate_physical, py::arg("params"),
        py::arg("U_phys"), py::arg("T"));
  m.def("oscillator_simulate", &oscillator_simulate, py::arg("params"), py::arg("U_scaled"),
        py::arg("T"), py::arg("scaler"));
  m.def("fit_oscillator_scaler", &fit_oscillator_scaler, py::arg("params"), py::arg("T"),
        py::arg("pilot_count"), py::arg("seed"));

  py::class_<Plant, std::shared_ptr<Plant>>(m, "Plant")
      .def("n_u", &Plant::n_u)
      .def("n_y", &Plant::n_y)
      .def("horizon", &Plant::horizon)
      .def("respond", &Plant::respond)
      .def("input_box", &Plant::input_box)
      .def("output_box", &Plant::output_box);

  py::class_<OscillatorPlant, Plant, std::shared_ptr<OscillatorPlant>>(m, "OscillatorPlant")
      .def(py::init<OscillatorParams, int, Scaler>(), py::arg("params"), py::arg("T"),
           py::arg("scaler"));

  py::class_<TanksData>(m, "TanksData")
      .def_readonly("train", &TanksData::train)
      .def_readonly("test", &TanksData::test)
      .def_readonly("scaler", &TanksData::scaler)
      .def_readonly("train_sha256", &TanksData::train_sha256)
      .def_readonly("test_sha256", &TanksData::test_sha256);
  m.def("tanks_load", &tanks_load, py::arg("dir"), py::arg("expected_length") = 1024);
  m.def("make_dataset", &make_dataset, py::arg("plant"), py::arg("inputs"));

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def("validate", &ExperimentConfig::validate)
      .def("canonical", &ExperimentConfig::canonical)
      .def("fingerprint", &ExperimentConfig::fingerprint)
      .def("schema", &ExperimentConfig::schema)
#define QLPV_FIELD(name) .def_readwrite(#name, &ExperimentConfig::name)
      QLPV_FIELD(plant) QLPV_FIELD(T) QLPV_FIELD(n_x) QLPV_FIELD(n_p) QLPV_FIELD(net_width)
      QLPV_FIELD(activation) QLPV_FIELD(n_d_init) QLPV_FIELD(n_max) QLPV_FIELD(test_size)
      QLPV_FIELD(pool_size) QLPV_FIELD(reg_base_size) QLPV_FIELD(spread_pool_size)
      QLPV_FIELD(path_M) QLPV_FIELD(w_u) QLPV_FIELD(w_y) QLPV_FIELD(acquisition)
      QLPV_FIELD(acq_min_aggregate) QLPV_FIELD(qlpv_literal) QLPV_FIELD(eps_u) QLPV_FIELD(kappa1)
      QLPV_FIELD(kappa2) QLPV_FIELD(reg_kind) QLPV_FIELD(shoot_len) QLPV_FIELD(shoot_samples)
      QLPV_FIELD(adam_iters) QLPV_FIELD(adam_step) QLPV_FIELD(bfgs_max_iters)
      QLPV_FIELD(bfgs_grad_tol) QLPV_FIELD(seeds) QLPV_FIELD(outdir) QLPV_FIELD(tanks_dir)
      QLPV_FIELD(tanks_T) QLPV_FIELD(x0_prefix) QLPV_FIELD(scaler_pilot)
#undef QLPV_FIELD
      ;

  py::class_<BootstrapResult>(m, "BootstrapResult")
      .def_readonly("plant", &BootstrapResult::plant)
      .def_readonly("train", &BootstrapResult::train)
      .def_readonly("test", &BootstrapResult::test)
      .def_readonly("reg_base", &BootstrapResult::reg_base)
      .def_readonly("spread_pool", &BootstrapResult::spread_pool)
      .def_readonly("pool", &BootstrapResult::pool)
      .def_readonly("theta0", &BootstrapResult::theta0);
  m.def("bootstrap", &bootstrap, py::arg("config"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());

  py::class_<IterationRecord>(m, "IterationRecord")
      .def_readonly("N", &IterationRecord::N)
      .def_readonly("theta_fp", &IterationRecord::theta_fp)
      .def_readonly("train_objective", &IterationRecord::train_objective)
      .def_readonly("mu_e", &IterationRecord::mu_e)
      .def_readonly("sigma2_e", &IterationRecord::sigma2_e)
      .def_readonly("unstable", &IterationRecord::unstable)
      .def_readonly("spread", &IterationRecord::spread)
      .def_readonly("chosen", &IterationRecord::chosen)
      .def_readonly("acq_value", &IterationRecord::acq_value)
      .def_readonly("violation", &IterationRecord::violation);

  py::class_<RunLog>(m, "RunLog")
      .def_readonly("config_fp", &RunLog::config_fp)
      .def_readonly("seed", &RunLog::seed)
      .def_readonly("records", &RunLog::records)
      .def("fingerprint", &RunLog::fingerprint)
      .def("save_jsonl", &RunLog::save_jsonl);
  m.def("run_active_learning", &run_active_learning, py::arg("config"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());

  py::class_<EvalResult>(m, "EvalResult")
      .def_readonly("mu_e", &EvalResult::mu_e)
      .def_readonly("sigma2_e", &EvalResult::sigma2_e)
      .def_readonly("errors", &EvalResult::errors)
      .def_readonly("unstable", &EvalResult::unstable);
  m.def("evaluate", &evaluate, py::arg("model"), py::arg("test"));

  py::class_<BfrResult>(m, "BfrResult")
      .def_readonly("per_channel", &BfrResult::per_channel)
      .def_readonly("skipped", &BfrResult::skipped)
      .def_readonly("unstable", &BfrResult::unstable)
      .def_readonly("mean", &BfrResult::mean);
  m.def("bfr_score", &bfr_score, py::arg("model"), py::arg("test"));

  py::class_<PathCompareResult>(m, "PathCompareResult")
      .def_readonly("pct_time", &PathCompareResult::pct_time)
      .def_readonly("mape", &PathCompareResult::mape)
      .def_readonly("argmax_agree", &PathCompareResult::argmax_agree)
      .def_readonly("argmax_qlpv", &PathCompareResult::argmax_qlpv)
      .def_readonly("argmax_ltv", &PathCompareResult::argmax_ltv);
  m.def("compare_path_methods", &compare_path_methods, py::arg("model"), py::arg("samples"),
        py::arg("pool"), py::arg("M"), py::arg("W"), py::call_guard<py::gil_scoped_release>());

  py::class_<TanksRunResult>(m, "TanksRunResult")
      .def_readonly("train_rmse", &TanksRunResult::train_rmse)
      .def_readonly("test_rmse", &TanksRunResult::test_rmse)
      .def_readonly("objective", &TanksRunResult::objective)
      .def_readonly("test_x0", &TanksRunResult::test_x0)
      .def_readonly("model", &TanksRunResult::model);
  m.def("run_tanks_training", &run_tanks_training, py::arg("config"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());

#ifdef VERSION_INFO
#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
  m.attr("__version__") = "dev";
#endif
}
