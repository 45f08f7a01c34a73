"""Certainty-equivalence tracking law driven by the observer estimates.

Per follower, with estimates ``(eta_hat, omega_hat, e_hat)``:

    qr_dot  = E_hat S(omega_hat) eta_hat - alpha (q - E_hat eta_hat)
    s       = q_dot - qr_dot
    tau     = -K s + M(q) qr_ddot + C(q, q_dot) qr_dot + G(q)

``qr_ddot`` is differentiated analytically using the observer right-hand
side at the same instant, so the closed loop reduces exactly to
``M s' = -C s - K s``. All functions accept stacked ``(N, ...)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch
from .leader import s_apply
from .plant import coriolis_matrix, gravity_vector, mass_matrix

__all__ = [
    "ControllerGains",
    "reference_velocity",
    "reference_acceleration",
    "slip",
    "torque",
    "slip_residual",
    "tracking_error_residual",
    "slip_lyapunov",
]


@dataclass(frozen=True)
class ControllerGains:
    k: np.ndarray
    alpha: float

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.k, dtype=float))
        if k.shape[0] != k.shape[1]:
            raise ValueError("K must be square")
        if not np.allclose(k, k.T, rtol=0, atol=1e-12 * max(np.abs(k).max(), 1.0)):
            raise ValueError("K must be symmetric")
        try:
            np.linalg.cholesky(k)
        except np.linalg.LinAlgError:
            raise ValueError("K must be positive definite") from None
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        k.setflags(write=False)
        object.__setattr__(self, "k", k)


def _mv(a, x):
    return np.einsum("...ij,...j->...i", a, x)


def _check(e_hat, eta, q):
    if e_hat.shape[-1] != eta.shape[-1] or e_hat.shape[-2] != q.shape[-1]:
        raise DimensionMismatch(
            f"E_hat {e_hat.shape}, eta_hat {eta.shape} and q {q.shape} are inconsistent"
        )


def reference_velocity(eta_hat, omega_hat, e_hat, q, alpha):
    eta_hat, omega_hat, e_hat, q = (np.asarray(a, dtype=float)
                                    for a in (eta_hat, omega_hat, e_hat, q))
    _check(e_hat, eta_hat, q)
    return _mv(e_hat, s_apply(omega_hat, eta_hat)) - alpha * (q - _mv(e_hat, eta_hat))


def reference_acceleration(obs, dobs, q, qdot, alpha):
    """Analytic derivative of :func:`reference_velocity`.

    ``obs`` and ``dobs`` are ``ObserverState`` values (estimates and their
    time derivatives from ``observer_rhs``) stacked over followers.
    """
    eta, om, eh = obs.eta, obs.omega, obs.e_hat
    deta, dom, deh = dobs.eta, dobs.omega, dobs.e_hat
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    _check(eh, eta, q)
    return (_mv(deh, s_apply(om, eta))
            + _mv(eh, s_apply(om, deta))
            + _mv(eh, s_apply(dom, eta))
            - alpha * (qdot - _mv(deh, eta) - _mv(eh, deta)))


def slip(obs, q, qdot, alpha):
    return np.asarray(qdot, dtype=float) - reference_velocity(obs.eta, obs.omega, obs.e_hat,
                                                              q, alpha)


def torque(theta, q, qdot, obs, dobs, gains, gravity=None):
    """Control torque for every follower; ``theta`` may be stacked ``(N, 5)``."""
    qr_dot = reference_velocity(obs.eta, obs.omega, obs.e_hat, q, gains.alpha)
    qr_ddot = reference_acceleration(obs, dobs, q, qdot, gains.alpha)
    s = np.asarray(qdot, dtype=float) - qr_dot
    m = mass_matrix(theta, q)
    c = coriolis_matrix(theta, q, qdot)
    return (-_mv(gains.k, s) + _mv(m, qr_ddot) + _mv(c, qr_dot)
            + gravity_vector(theta, q, gravity))


def slip_residual(theta, q, qdot, s, s_dot, k):
    """``M s' + C s + K s``; zero along the ideal closed loop."""
    return (_mv(mass_matrix(theta, q), s_dot) + _mv(coriolis_matrix(theta, q, qdot), s)
            + _mv(np.asarray(k), s))


def tracking_error_residual(obs, dobs, ev, q, qdot, s, alpha, mu1, d,
                            include_output_drift=True):
    """Residual of ``e' = -alpha e + s - mu1 d E_hat e_v - E_hat' eta_hat``.

    ``e = q - E_hat eta_hat``. With ``include_output_drift=False`` the last
    term is dropped, which leaves exactly ``-E_hat' eta_hat`` as residual.
    """
    eh, eta = obs.e_hat, obs.eta
    e = np.asarray(q) - _mv(eh, eta)
    e_dot = np.asarray(qdot) - _mv(dobs.e_hat, eta) - _mv(eh, dobs.eta)
    pred = -alpha * e + s - mu1 * np.asarray(d)[:, None] * _mv(eh, ev)
    if include_output_drift:
        pred = pred - _mv(dobs.e_hat, eta)
    return e_dot - pred


def slip_lyapunov(theta, q, s):
    """``V_i = s_i^T M_i(q_i) s_i / 2`` per follower."""
    s = np.asarray(s, dtype=float)
    return 0.5 * np.einsum("...i,...ij,...j->...", s, mass_matrix(theta, q), s)
