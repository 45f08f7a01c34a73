from __future__ import annotations

import numpy as np
import pytest

from coopobs.exceptions import NonPositiveSeries
from coopobs.metrics import (
    RateFit,
    default_window,
    fit_exponential_rate,
    metrics,
    monotonicity_violations,
    rk4_order_ratio,
    signal_window,
    time_below,
)
from coopobs.scenario import SimResult


def _result(times, **series):
    return SimResult(times=np.asarray(times, dtype=float),
                     series={k: np.asarray(v, dtype=float) for k, v in series.items()})


def test_exact_exponential_fit():
    t = np.linspace(0, 5, 501)
    fit = fit_exponential_rate(t, 3 * np.exp(-2 * t))
    assert fit.slope == pytest.approx(-2.0, abs=1e-9)
    assert fit.intercept == pytest.approx(np.log(3), abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.window == pytest.approx((3.0, 5.0))


def test_constant_series_has_zero_slope():
    t = np.linspace(0, 1, 11)
    fit = fit_exponential_rate(t, np.full(11, 4.0))
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == 1.0


def test_non_positive_series_raises():
    t = np.linspace(0, 1, 11)
    with pytest.raises(NonPositiveSeries):
        fit_exponential_rate(t, np.zeros(11))
    with pytest.raises(NonPositiveSeries):
        fit_exponential_rate(t, np.ones(11), window=(0.51, 0.55))


def test_rate_fit_rejects_bad_r2():
    with pytest.raises(ValueError):
        RateFit(0.0, 0.0, 1.5, (0, 1))


def test_windows():
    assert default_window(np.array([0.0, 10.0])) == pytest.approx((6.0, 10.0))
    t = np.linspace(0, 10, 1001)
    y = np.maximum(np.exp(-5 * t), 1e-12)
    w = signal_window(t, y)
    # exp(-5 t) hits 1e-8 near t = 3.68
    assert w[1] == pytest.approx(np.log(1e8) / 5, abs=0.02)
    assert w[0] == pytest.approx(0.6 * w[1], abs=0.02)
    # a series that never reaches the floor keeps the full span
    assert signal_window(t, 1 + t) == pytest.approx((6.0, 10.0))


def test_time_below():
    t = np.arange(5.0)
    assert time_below(t, [5, 3, 0.1, 0.05, 0.01], 0.5) == 2.0
    assert time_below(t, [0.1] * 5, 0.5) == 0.0
    assert time_below(t, [1, 0.1, 1, 0.1, 1], 0.5) == float("inf")


def test_monotonicity_violations():
    assert monotonicity_violations([3, 2, 2, 1]) == 0
    assert monotonicity_violations([3, 2, 2.5, 1]) == 1
    assert monotonicity_violations([1, 1 + 1e-9]) == 0
    assert monotonicity_violations([1]) == 0


def test_all_zero_run_meets_thresholds_at_start():
    t = np.linspace(0, 1, 11)
    res = _result(t, err_eta=np.zeros((11, 2)))
    rep = metrics(res)
    assert rep.time_below["err_eta"] == 0.0
    assert rep.converged["err_eta"]
    assert rep.rate_fits["err_eta"] is None


def test_diverging_run_reports_without_raising():
    t = np.linspace(0, 1, 11)
    res = _result(t, err_eta=np.exp(t)[:, None] * np.ones((1, 3)))
    rep = metrics(res)
    assert not rep.converged["err_eta"]
    assert rep.time_below["err_eta"] == float("inf")
    assert rep.rate_fits["err_eta"].slope == pytest.approx(1.0)
    assert rep.orders_of_decay["err_eta"] == pytest.approx(0.0)


def test_metrics_uses_worst_node_and_lyapunov():
    t = np.linspace(0, 1, 3)
    res = _result(t, err_omega=[[1, 2], [0.5, 0.4], [0.1, 0.2]])
    res.step_series = {"V": np.array([3.0, 2.0, 2.5, 1.0])}
    rep = metrics(res)
    assert rep.final["err_omega"] == 0.2
    assert rep.peak["err_omega"] == 2.0
    assert rep.lyapunov_violations["V"] == 1
    doc = rep.as_dict()
    assert doc["final"]["err_omega"] == 0.2


def test_rk4_order_ratio_on_linear_ode():
    from coopobs.rk4 import rk4_solve

    def final(h):
        _, s = rk4_solve(lambda t, x: -3 * x, np.ones(1), h, int(round(1 / h)),
                         record_stride=10 ** 6)
        return s[-1]

    assert 15 < rk4_order_ratio(final, 0.02) < 17
