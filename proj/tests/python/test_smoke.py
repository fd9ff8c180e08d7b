"""Smoke tests for the python module: the main operations round-trip sanely."""

import numpy as np
import pytest

qlpv = pytest.importorskip("qlpv_al")


@pytest.fixture(scope="module")
def model():
    dims = qlpv.Dims(n_x=3, n_u=2, n_y=2, n_p=3, T=8)
    return qlpv.init_model(dims, width=3, activation=qlpv.Activation.swish, seed=42)


def test_scheduling_eval_is_simplex(model):
    p = qlpv.scheduling_eval(model, np.zeros(3), np.zeros(2))
    assert p.shape == (3,)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-12


def test_factorization_identity(model):
    rng = np.random.default_rng(0)
    U = rng.uniform(-1, 1, size=16)
    sim = qlpv.simulate(model, U)
    assert sim.stable
    ltv = qlpv.ltv_simulate(model, sim.P, U)
    assert np.max(np.abs(ltv.Y - sim.Y)) < 1e-10
    G = qlpv.assemble_G(model, sim.P)
    assert np.max(np.abs(G @ U - ltv.Y)) < 1e-10


def test_parameter_roundtrip(model):
    theta = model.flatten()
    assert theta.shape == (model.num_params(),)
    copy = qlpv.QlpvModel.zeros(model.dims, 3)
    copy.set_params(theta)
    assert np.array_equal(copy.flatten(), theta)


def test_sensitivity_matches_finite_differences(model):
    rng = np.random.default_rng(1)
    U = rng.uniform(-1, 1, size=16)
    fwd = qlpv.output_sensitivity(model, U)
    fd = qlpv.output_sensitivity(model, U, method=qlpv.SensitivityMethod.finite_difference)
    assert np.max(np.abs(fwd - fd)) < 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_idw_weights_normalize():
    rng = np.random.default_rng(2)
    U = rng.uniform(-1, 1, size=6)
    pts = [rng.uniform(-1, 1, size=6) for _ in range(4)]
    w = qlpv.idw_weights(U, pts)
    assert abs(w.sum() - 1.0) < 1e-12
    assert np.all(w >= 0)
    w_coincident = qlpv.idw_weights(pts[2], pts)
    assert w_coincident[2] == 1.0


def test_path_lengths(model):
    rng = np.random.default_rng(3)
    U1, U2 = rng.uniform(-1, 1, size=(2, 16))
    grid = qlpv.PathGrid.uniform(8)
    W = qlpv.MetricWeight.identity()
    p1 = qlpv.GraphPoint.from_model(model, U1)
    p2 = qlpv.GraphPoint.from_model(model, U2)
    ds = qlpv.qlpv_path_length(model, U1, U2, grid, W)
    ds_tilde = qlpv.ltv_path_length(model, p1, p2, grid, W)
    straight = W.norm(U2 - U1, p2.Y - p1.Y)
    assert ds >= straight - 1e-12
    assert ds_tilde > 0
    one = qlpv.ltv_path_length(model, p1, p2, qlpv.PathGrid.uniform(1), W)
    assert abs(one - straight) < 1e-12


def test_training_descends(model):
    rng = np.random.default_rng(4)
    data = qlpv.Dataset()
    for _ in range(3):
        U = rng.uniform(-1, 1, size=16)
        Y = qlpv.simulate(model, U).Y + rng.normal(0, 0.05, size=16)
        data.append(qlpv.Trajectory(U, Y))
    spec = qlpv.RegularizerSpec()
    spec.kappa1 = 1e-4
    spec.kappa2 = 0.01
    spec.pool = [rng.uniform(-1, 1, size=16) for _ in range(3)]
    cfg = qlpv.TrainConfig()
    cfg.adam_iters = 60
    cfg.bfgs_max_iters = 40
    init = qlpv.init_model(model.dims, 3, qlpv.Activation.swish, seed=7)
    before = qlpv.total_objective(init, data, spec)
    result = qlpv.train(data, spec, cfg, init)
    assert result.objective < before


def test_acquisition_selects_informative_candidate(model):
    rng = np.random.default_rng(5)
    data = qlpv.Dataset()
    anchor = rng.uniform(-1, 1, size=16)
    data.append(qlpv.Trajectory(anchor, qlpv.simulate(model, anchor).Y))
    pool = qlpv.CandidatePool()
    pool.inputs = [anchor, rng.uniform(-1, 1, size=16)]
    box = qlpv.Box.unit(16)
    box.lo, box.hi = box.lo * 1e6, box.hi * 1e6
    kind = qlpv.AcquisitionKind.make(qlpv.AcqTag.ltv, M=4)
    chosen, audit = qlpv.select_input(pool, kind, model, data, box)
    assert chosen == 1
    assert audit.scores[0] == 0.0


def test_oscillator_plant_and_run_config():
    params = qlpv.OscillatorParams()
    scaler = qlpv.fit_oscillator_scaler(params, T=5, pilot_count=5, seed=1)
    plant = qlpv.OscillatorPlant(params, 5, scaler)
    Y = plant.respond(np.zeros(10))
    assert Y.shape == (10,)

    cfg = qlpv.ExperimentConfig()
    cfg.T = 5
    assert len(cfg.fingerprint()) == 64
    assert "kappa2" in cfg.schema()
