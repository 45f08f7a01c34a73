"""Convergence metrics, exponential-rate fits and the RK4 order check."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonPositiveSeries

__all__ = [
    "RateFit",
    "MetricReport",
    "fit_exponential_rate",
    "default_window",
    "signal_window",
    "time_below",
    "monotonicity_violations",
    "metrics",
    "rk4_order_ratio",
]

ERROR_FAMILIES = ("err_eta", "err_omega", "err_E", "err_track")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple

    def __post_init__(self):
        if not 0.0 <= self.r_squared <= 1.0:
            raise ValueError(f"r_squared outside [0, 1]: {self.r_squared}")


def default_window(times, fraction=0.4):
    """The last ``fraction`` of the time span."""
    t0, t1 = float(times[0]), float(times[-1])
    return (t1 - fraction * (t1 - t0), t1)


def signal_window(times, series, fraction=0.4, floor_rel=1e-8):
    """Tail window restricted to the part of the run above the numerical floor.

    The span ends where ``series`` first drops below ``floor_rel * peak``
    (the end of the run if it never does); the window is the last
    ``fraction`` of ``[t0, end]``. Converged runs otherwise fit pure roundoff.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    below = np.flatnonzero(y < floor_rel * np.nanmax(y))
    end = float(t[below[0]]) if below.size else float(t[-1])
    if end <= t[0]:
        end = float(t[-1])
    return default_window(np.array([t[0], end]), fraction)


def fit_exponential_rate(times, series, window=None) -> RateFit:
    """Least-squares fit of ``log(series)`` against time on ``window``.

    Parameters
    ----------
    times, series : array_like
        Samples of a positive signal.
    window : (float, float), optional
        Inclusive time window; defaults to the last 40 % of the span.

    Raises
    ------
    NonPositiveSeries
        If any sample inside the window is not strictly positive.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    if window is None:
        window = default_window(t)
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    t, y = t[sel], y[sel]
    if t.size < 2:
        raise NonPositiveSeries("fewer than two samples inside the fit window")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise NonPositiveSeries("series must be strictly positive on the fit window")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    resid = logy - (slope * t + intercept)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    # a constant series is fitted perfectly
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return RateFit(float(slope), float(intercept), r2, (float(window[0]), float(window[1])))


def time_below(times, series, threshold):
    """First time after which ``series`` stays below ``threshold``; ``inf`` if never."""
    y = np.asarray(series, dtype=float)
    above = ~(y < threshold)
    if not above.any():
        return float(times[0])
    last = int(np.flatnonzero(above)[-1])
    if last == y.size - 1:
        return float("inf")
    return float(times[last + 1])


def monotonicity_violations(values, tol=1e-8):
    """Number of steps where ``values`` increases by more than ``tol``."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] < 2:
        return 0
    return int(np.count_nonzero(np.diff(v, axis=0) > tol))


@dataclass
class MetricReport:
    final: dict = field(default_factory=dict)
    peak: dict = field(default_factory=dict)
    orders_of_decay: dict = field(default_factory=dict)
    time_below: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    lyapunov_violations: dict = field(default_factory=dict)
    rate_fits: dict = field(default_factory=dict)

    def as_dict(self):
        out = {k: dict(v) for k, v in vars(self).items() if k != "rate_fits"}
        out["rate_fits"] = {k: (vars(v) if v is not None else None)
                            for k, v in self.rate_fits.items()}
        return out


def metrics(result, threshold=1e-2, lyap_tol=1e-8, window="signal") -> MetricReport:
    """Summarize a run; never raises on non-convergence.

    For each error family the worst node is used: final value, peak,
    ``log10(peak/final)``, the time after which it stays below
    ``threshold``, and an exponential-rate fit on the tail window.
    ``window`` is a ``(t0, t1)`` pair, ``None`` for the last 40 % of the
    run, or ``"signal"`` for :func:`signal_window`.
    """
    rep = MetricReport()
    times = result.times
    for name in ERROR_FAMILIES:
        data = result.series.get(name)
        if data is None:
            continue
        worst = np.max(np.asarray(data, dtype=float), axis=1) if np.ndim(data) == 2 \
            else np.asarray(data, dtype=float)
        if not np.all(np.isfinite(worst)):
            continue
        final, peak = float(worst[-1]), float(worst.max())
        rep.final[name] = final
        rep.peak[name] = peak
        rep.orders_of_decay[name] = (float(np.log10(peak / final)) if final > 0 and peak > 0
                                     else (float("inf") if peak > 0 else 0.0))
        rep.time_below[name] = time_below(times, worst, threshold)
        rep.converged[name] = bool(final < threshold)
        try:
            win = signal_window(times, worst) if isinstance(window, str) else window
            rep.rate_fits[name] = fit_exponential_rate(times, worst, win)
        except (NonPositiveSeries, ValueError):
            rep.rate_fits[name] = None
    steps = result.step_series or {}
    for name, vals in steps.items():
        vals = np.asarray(vals, dtype=float)
        vals = vals[np.isfinite(vals).all(axis=tuple(range(1, vals.ndim)))] if vals.ndim > 1 \
            else vals[np.isfinite(vals)]
        rep.lyapunov_violations[name] = monotonicity_violations(vals, lyap_tol)
    return rep


def rk4_order_ratio(run_final_state, step):
    """Global-error ratio ``|x_h - x_{h/2}| / |x_{h/2} - x_{h/4}|``.

    ``run_final_state(h)`` must return the final state for step ``h``. For a
    fourth-order method the ratio approaches 16.
    """
    x1 = np.asarray(run_final_state(step))
    x2 = np.asarray(run_final_state(step / 2))
    x4 = np.asarray(run_final_state(step / 4))
    return float(np.linalg.norm(x1 - x2) / np.linalg.norm(x2 - x4))
