"""Classical fixed-step fourth-order Runge-Kutta."""

from __future__ import annotations

import numpy as np

from .exceptions import NonFiniteState

__all__ = ["rk4_step", "rk4_solve", "record_indices"]


def rk4_step(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def record_indices(n_steps, record_stride):
    """Step indices kept by a run: every ``record_stride``-th plus the last."""
    idx = list(range(0, n_steps + 1, record_stride))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return np.asarray(idx, dtype=np.int64)


def rk4_solve(f, x0, step, n_steps, record_stride=1, t0=0.0, on_step=None):
    """Integrate ``x' = f(t, x)`` for ``n_steps`` steps of size ``step``.

    Returns ``(times, states)`` sampled every ``record_stride`` steps, always
    including the initial and the final state. ``on_step(k, t, x_prev, x)``
    is called after every step when given. Time is computed as ``t0 + k*step``
    so it does not drift.

    Raises
    ------
    NonFiniteState
        As soon as the state stops being finite.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if record_stride < 1:
        raise ValueError("record_stride must be at least 1")
    x = np.array(x0, dtype=float)
    rec_idx = record_indices(n_steps, record_stride)
    times = t0 + step * rec_idx.astype(float)
    states = np.empty((len(rec_idx),) + x.shape)
    states[0] = x
    slot = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            t = t0 + k * step
            x_new = rk4_step(f, t, x, step)
            if not np.isfinite(x_new).all():
                raise NonFiniteState(f"state became non-finite at t={t + step:.6g}",
                                     time=t + step)
            if on_step is not None:
                on_step(k + 1, t + step, x, x_new)
            x = x_new
            if slot < len(rec_idx) and rec_idx[slot] == k + 1:
                states[slot] = x
                slot += 1
    return times, states
