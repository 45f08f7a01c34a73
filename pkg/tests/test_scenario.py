from __future__ import annotations

import numpy as np
import pytest

from coopobs.exceptions import DimensionMismatch, NonFiniteState
from coopobs.observer import (
    ObserverGains,
    ObserverState,
    observer_rhs,
    output_error_rhs,
    stacked_error_rhs,
    vec,
)
from coopobs.rk4 import rk4_solve
from coopobs.scenario import (
    InitialConditions,
    ScenarioConfig,
    SimResult,
    closed_loop_residuals,
    default_controller_gains,
    default_plants,
    integrate,
    stability_margin,
)

from conftest import BENCHMARK_H

Q0 = np.array([[0.3, -0.2], [0.5, 0.1], [-0.4, 0.2], [0.1, 0.6]])
QD0 = np.array([[1.0, -1.0], [0.5, 0.5], [-1.0, 0.2], [0.0, 1.0]])


@pytest.fixture(scope="module")
def short_closed(benchmark_cfg):
    return benchmark_cfg.with_overrides(horizon=0.05, record_stride=10,
                                        initial=InitialConditions(q=Q0, qdot=QD0),
                                        track_lyapunov=True)


def test_config_validation(benchmark_cfg):
    with pytest.raises(ValueError, match="mode"):
        benchmark_cfg.with_overrides(mode="nope")
    with pytest.raises(ValueError, match="step"):
        benchmark_cfg.with_overrides(step=0.0)
    with pytest.raises(ValueError, match="horizon"):
        benchmark_cfg.with_overrides(horizon=1e-5)
    assert benchmark_cfg.n_steps == 200000
    assert benchmark_cfg.n_nodes == 4


def test_stability_margin(benchmark_cfg):
    lam = np.abs(np.linalg.eigvals(np.diag([1, 2, 3, 4.0]) @ BENCHMARK_H)).max()
    assert stability_margin(benchmark_cfg) == pytest.approx(1e-4 * 80 * lam)
    assert stability_margin(benchmark_cfg) < 2.5


def test_stiff_step_warns(benchmark_cfg):
    cfg = benchmark_cfg.with_overrides(mode="observer_only", step=5e-3, horizon=5e-3)
    with pytest.warns(RuntimeWarning, match="unstable"):
        integrate(cfg)


def test_initial_conditions_shapes():
    ic = InitialConditions(eta=np.zeros((2, 6)))
    with pytest.raises(DimensionMismatch):
        ic.observer_state(4, 6, 2)
    with pytest.raises(DimensionMismatch):
        InitialConditions(q=np.zeros((3, 2))).arm_state(4)
    q, qd = InitialConditions().arm_state(2)
    assert q.shape == qd.shape == (2, 2)


def test_simresult_length_check():
    with pytest.raises(DimensionMismatch):
        SimResult(times=np.zeros(3), series={"a": np.zeros(2)})


def test_backends_agree_observer_only(benchmark_cfg):
    cfg = benchmark_cfg.with_overrides(mode="observer_only", horizon=0.02, record_stride=20,
                                       track_lyapunov=True)
    a = integrate(cfg, backend="compiled")
    b = integrate(cfg, backend="numpy")
    np.testing.assert_allclose(a.final_state, b.final_state, rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(a.step_series["V"], b.step_series["V"], rtol=1e-10)
    assert np.all(np.isnan(a.series["err_track"]))


def test_backends_agree_closed_loop(short_closed):
    a = integrate(short_closed, backend="compiled")
    b = integrate(short_closed, backend="numpy")
    np.testing.assert_allclose(a.final_state, b.final_state, rtol=1e-10, atol=1e-11)
    np.testing.assert_allclose(a.step_series["V_i"], b.step_series["V_i"], rtol=1e-9,
                               atol=1e-14)


def test_unknown_backend(benchmark_cfg):
    with pytest.raises(ValueError):
        integrate(benchmark_cfg, backend="gpu")


def test_series_and_snapshots(short_closed):
    res = integrate(short_closed)
    assert res.times.shape == (51,)
    assert set(res.series) >= {"err_eta", "err_omega", "err_E", "err_track", "V", "V_i"}
    assert res.err_eta.shape == (51, 4)
    y = res.snapshots["y"]
    np.testing.assert_allclose(res.err_track[0], np.linalg.norm(Q0 - y[0], axis=1))
    # zero initial estimates: eta error is the leader state norm
    np.testing.assert_allclose(res.err_eta[0], np.linalg.norm(res.snapshots["v"][0]))
    assert res.meta["stability_margin"] < 2.5
    assert res.n_nodes == 4


def test_slip_lyapunov_decreases(short_closed):
    res = integrate(short_closed)
    vi = res.step_series["V_i"]
    assert vi[0].min() > 0
    assert np.diff(vi, axis=0).max() <= 1e-8


def test_closed_loop_model_residuals(short_closed):
    res = integrate(short_closed)
    out = closed_loop_residuals(short_closed, res)
    assert out["slip"] < 1e-6
    assert out["tracking_error"] < 1e-8
    assert out["uncorrected_plus_drift"] < 1e-8
    assert out["output_drift"] > 1.0
    with pytest.raises(ValueError):
        closed_loop_residuals(short_closed.with_overrides(mode="observer_only"), res)


def test_error_derivative_matches_finite_difference(benchmark_cfg):
    cfg = benchmark_cfg.with_overrides(mode="observer_only", horizon=0.002, step=1e-5,
                                       record_stride=1)
    res = integrate(cfg, backend="numpy")
    lead, og = cfg.leader, cfg.observer_gains
    k, h = 100, cfg.step
    eta = res.snapshots["eta_hat"]
    om = res.snapshots["omega_hat"]
    v = res.snapshots["v"]
    deta, domega = stacked_error_rhs(eta[k] - v[k], om[k] - lead.omega, eta[k], lead.omega,
                                     og.d, BENCHMARK_H, og.mu1, og.mu2)
    fd_eta = ((eta[k + 1] - v[k + 1]) - (eta[k - 1] - v[k - 1])) / (2 * h)
    fd_om = (om[k + 1] - om[k - 1]) / (2 * h)
    scale = np.abs(deta).max()
    assert np.abs(fd_eta - deta).max() < 1e-3 * scale
    assert np.abs(fd_om - domega).max() < 1e-3 * np.abs(domega).max()


def test_vectorized_output_error_trajectory(benchmark_cfg, graph):
    cfg = benchmark_cfg.with_overrides(mode="observer_only", horizon=0.01, record_stride=100)
    res = integrate(cfg, backend="numpy")
    lead, og = cfg.leader, cfg.observer_gains
    n, m, p = 4, lead.m, lead.n_out
    split = n * (m + lead.ell + p * m)

    def rhs(t, x):
        obs = ObserverState.from_vector(x[:split], n, m, p)
        v, y = lead.state_and_output(t)
        zeta = x[split:].reshape(n, p * m)
        dz = output_error_rhs(zeta, obs.eta, v, lead.e_out, graph, og.d, check=False)
        return np.concatenate([observer_rhs(obs, v, y, graph, og).to_vector(), dz.ravel()])

    obs0 = ObserverState.zeros(n, m, p)
    zeta0 = vec(obs0.e_hat - lead.e_out).ravel()
    _, states = rk4_solve(rhs, np.concatenate([obs0.to_vector(), zeta0]), cfg.step,
                          cfg.n_steps, record_stride=cfg.n_steps)
    zeta_end = states[-1, split:].reshape(n, p * m)
    ref = vec(res.snapshots["e_hat"][-1] - lead.e_out)
    np.testing.assert_allclose(zeta_end, ref, atol=1e-10)


def test_divergence_raises(benchmark_cfg):
    cfg = benchmark_cfg.with_overrides(mode="observer_only", step=0.05, horizon=5.0,
                                       observer_gains=ObserverGains(80.0, 60.0, [1, 2, 3, 4]))
    with pytest.warns(RuntimeWarning):
        with pytest.raises(NonFiniteState):
            integrate(cfg)


def test_defaults():
    gains = default_controller_gains(3)
    assert len(gains) == 3 and gains[0].alpha == 0.5
    plants = default_plants([[1, 1, 0.1, 1, 1]] * 2, 0.0)
    assert len(plants) == 2 and plants[1].gravity == 0.0


def test_rerun_is_deterministic(short_closed):
    a = integrate(short_closed)
    b = integrate(short_closed)
    np.testing.assert_array_equal(a.final_state, b.final_state)


def test_single_follower(benchmark_cfg):
    from coopobs.graph import AugmentedGraph

    g = AugmentedGraph(np.zeros((1, 1)), np.ones(1))
    cfg = ScenarioConfig(graph=g, leader=benchmark_cfg.leader,
                         observer_gains=ObserverGains(10.0, 10.0, [1.0]),
                         controller_gains=default_controller_gains(1),
                         plants=default_plants([benchmark_cfg.plants[0].theta]),
                         horizon=0.1, step=1e-3, record_stride=10, mode="closed_loop")
    res = integrate(cfg)
    assert res.err_eta.shape == (11, 1)
    assert res.err_eta[-1, 0] < res.err_eta[0, 0]
