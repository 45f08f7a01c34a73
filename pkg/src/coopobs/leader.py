"""Multi-tone leader exosystem, the phi regressor and excitation checks.

The leader state ``v`` stacks ``l`` planar rotations; block ``k`` spins at
``omega[k]`` rad/s, so ``S(omega) = diag(omega) kron [[0, 1], [-1, 0]]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, OddLength, WindowTooShort

__all__ = [
    "LeaderParams",
    "PEReport",
    "s_matrix",
    "s_apply",
    "phi",
    "phi_apply",
    "phi_t_apply",
    "propagate",
    "c_min",
    "block_amplitudes",
    "pe_level",
]

_ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])


def s_matrix(omega) -> np.ndarray:
    """Block-diagonal skew matrix with blocks ``omega_k * [[0, 1], [-1, 0]]``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    return np.kron(np.diag(omega), _ROT)


def _paired_shape(per_block, x):
    lead = np.broadcast_shapes(np.shape(per_block)[:-1], x.shape[:-1])
    return lead + (x.shape[-1],)


def s_apply(omega, x):
    """``S(omega) @ x`` without forming ``S``; broadcasts over leading axes."""
    omega = np.asarray(omega, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.empty(_paired_shape(omega, x))
    out[..., 0::2] = omega * x[..., 1::2]
    out[..., 1::2] = -omega * x[..., 0::2]
    return out


def _check_even(x):
    if x.shape[-1] % 2:
        raise OddLength(f"phi needs an even-length vector, got length {x.shape[-1]}")


def phi(x) -> np.ndarray:
    """The ``l x 2l`` regressor with row ``k`` = ``(-x_{2k}, x_{2k-1})`` in its block.

    Satisfies ``S(w) x = -phi(x).T @ w`` for every ``w``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("phi expects a 1-D vector")
    _check_even(x)
    ell = x.shape[0] // 2
    out = np.zeros((ell, 2 * ell))
    k = np.arange(ell)
    out[k, 2 * k] = -x[1::2]
    out[k, 2 * k + 1] = x[0::2]
    return out


def phi_apply(x, y):
    """``phi(x) @ y`` batched over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_even(x)
    return -x[..., 1::2] * y[..., 0::2] + x[..., 0::2] * y[..., 1::2]


def phi_t_apply(x, w):
    """``phi(x).T @ w`` batched over leading axes."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_even(x)
    out = np.empty(_paired_shape(w, x))
    out[..., 0::2] = -x[..., 1::2] * w
    out[..., 1::2] = x[..., 0::2] * w
    return out


def block_amplitudes(v0) -> np.ndarray:
    """Per-rotation amplitudes ``C_k = ||(v_{2k-1}, v_{2k})||``."""
    v0 = np.asarray(v0, dtype=float)
    _check_even(v0)
    return np.hypot(v0[..., 0::2], v0[..., 1::2])


def c_min(v0) -> float:
    """Smallest rotation amplitude; zero flags a dead (non-exciting) block."""
    return float(block_amplitudes(v0).min())


def propagate(omega, v0, t):
    """Closed-form solution of ``v' = S(omega) v`` from ``v(0) = v0``.

    ``t`` may be a scalar or an array; the result has shape ``t.shape + (m,)``.
    """
    omega = np.asarray(omega, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    amp = block_amplitudes(v0)
    phase = np.arctan2(v0[0::2], v0[1::2])
    t = np.asarray(t, dtype=float)
    arg = np.multiply.outer(t, omega) + phase
    out = np.empty(t.shape + v0.shape)
    out[..., 0::2] = amp * np.sin(arg)
    out[..., 1::2] = amp * np.cos(arg)
    return out


@dataclass(frozen=True)
class LeaderParams:
    """Leader frequencies, output matrix and initial state."""

    omega: np.ndarray
    e_out: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        e_out = np.atleast_2d(np.asarray(self.e_out, dtype=float))
        v0 = np.asarray(self.v0, dtype=float).reshape(-1)
        if v0.shape[0] % 2:
            raise OddLength("leader state dimension must be even")
        if omega.shape[0] * 2 != v0.shape[0]:
            raise DimensionMismatch(
                f"{omega.shape[0]} frequencies need a state of size "
                f"{2 * omega.shape[0]}, got {v0.shape[0]}"
            )
        if e_out.shape[1] != v0.shape[0]:
            raise DimensionMismatch(
                f"output matrix has {e_out.shape[1]} columns, state has {v0.shape[0]}"
            )
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(e_out))
                and np.all(np.isfinite(v0))):
            raise ValueError("leader parameters must be finite")
        for name, val in (("omega", omega), ("e_out", e_out), ("v0", v0)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def m(self) -> int:
        return self.v0.shape[0]

    @property
    def ell(self) -> int:
        return self.omega.shape[0]

    @property
    def n_out(self) -> int:
        return self.e_out.shape[0]

    def s(self):
        return s_matrix(self.omega)

    def state(self, t):
        return propagate(self.omega, self.v0, t)

    def output(self, t):
        return self.state(t) @ self.e_out.T

    def state_and_output(self, t):
        v = self.state(t)
        return v, self.e_out @ v


@dataclass(frozen=True)
class PEReport:
    level_low: float
    level_high: float
    window: float
    start: float
    is_pe: bool


def pe_level(samples, step, window, start=0.0, tol=1e-9) -> PEReport:
    """Excitation levels of a uniformly sampled matrix signal.

    ``samples`` has shape ``(K, s, r)`` (or ``(K, s)`` / ``(K,)``, promoted to
    columns). For every window of length ``window`` seconds the Gram average
    ``(1/T) int f f^T`` is formed by the trapezoidal rule; the report holds
    the smallest minimum eigenvalue and the largest maximum eigenvalue seen.
    """
    f = np.asarray(samples, dtype=float)
    if f.ndim == 1:
        f = f[:, None, None]
    elif f.ndim == 2:
        f = f[:, :, None]
    n_int = int(round(window / step))
    if n_int < 1 or n_int + 1 > f.shape[0]:
        raise WindowTooShort(
            f"window of {window} s at step {step} s spans {n_int + 1} samples; "
            f"need between 2 and {f.shape[0]}"
        )
    gram = np.einsum("kij,klj->kil", f, f)
    # cumulative trapezoid so each window is a difference of two prefixes
    cum = np.concatenate(
        [np.zeros((1,) + gram.shape[1:]),
         np.cumsum(0.5 * step * (gram[1:] + gram[:-1]), axis=0)]
    )
    t_len = n_int * step
    win = (cum[n_int:] - cum[:-n_int]) / t_len
    win = 0.5 * (win + np.swapaxes(win, 1, 2))
    eig = np.linalg.eigvalsh(win)
    low = max(float(eig[:, 0].min()), 0.0)
    high = float(eig[:, -1].max())
    return PEReport(level_low=low, level_high=max(high, low), window=t_len,
                    start=float(start), is_pe=bool(low > tol))
