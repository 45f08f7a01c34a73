"""Two-link planar arm in Euler-Lagrange form.

``theta = (a1, ..., a5)`` are lumped mass/geometry parameters:

    M(q) = [[a1 + a2 + 2 a3 cos q2, a2 + a3 cos q2],
            [a2 + a3 cos q2,        a2           ]]
    C(q, qd) = [[-a3 sin q2 qd2, -a3 sin q2 (qd1 + qd2)],
                [ a3 sin q2 qd1,  0                    ]]
    G(q) = [a4 g cos q1 + a5 g cos(q1 + q2), a5 g cos(q1 + q2)]

Every function broadcasts over leading axes, so ``theta`` of shape
``(N, 5)`` with ``q`` of shape ``(N, 2)`` evaluates a whole team at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import SingularMass

__all__ = [
    "TwoLinkParams",
    "ELState",
    "mass_matrix",
    "mass_matrix_dot",
    "coriolis_matrix",
    "gravity_vector",
    "forward_dynamics",
    "inverse_dynamics",
    "kinetic_energy",
    "BENCHMARK_THETAS",
]

GRAVITY = 9.8

BENCHMARK_THETAS = (
    (0.64, 1.10, 0.08, 0.64, 0.32),
    (0.76, 1.17, 0.14, 0.93, 0.44),
    (0.91, 1.26, 0.22, 1.27, 0.58),
    (1.10, 1.36, 0.32, 1.67, 0.73),
)


@dataclass(frozen=True)
class TwoLinkParams:
    theta: np.ndarray
    gravity: float = GRAVITY

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if theta.shape != (5,):
            raise ValueError(f"theta needs 5 entries, got {theta.shape[0]}")
        if not np.all(np.isfinite(theta)) or not np.isfinite(self.gravity):
            raise ValueError("theta and gravity must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def mass_is_pd(self) -> bool:
        """Exact check over all ``q2``: ``a2 > 0`` and ``det M > 0`` at both cos extremes.

        ``det M = a1 a2 - a3^2 cos^2 q2`` so the worst case is ``|cos q2| = 1``.
        """
        a1, a2, a3 = self.theta[:3]
        return bool(a2 > 0 and a1 + a2 - 2 * abs(a3) > 0 and a1 * a2 - a3 ** 2 > 0)


@dataclass
class ELState:
    q: np.ndarray
    qdot: np.ndarray


def _split(theta):
    if isinstance(theta, TwoLinkParams):
        theta = theta.theta
    theta = np.asarray(theta, dtype=float)
    return tuple(theta[..., k] for k in range(5))


def mass_matrix(theta, q):
    a1, a2, a3, _, _ = _split(theta)
    q = np.asarray(q, dtype=float)
    c2 = np.cos(q[..., 1])
    m12 = a2 + a3 * c2
    out = np.empty(np.broadcast_shapes(np.shape(a1), c2.shape) + (2, 2))
    out[..., 0, 0] = a1 + a2 + 2 * a3 * c2
    out[..., 0, 1] = m12
    out[..., 1, 0] = m12
    out[..., 1, 1] = a2
    return out


def mass_matrix_dot(theta, q, qdot):
    """Time derivative of ``M(q)`` along ``qdot`` (chain rule, analytic)."""
    _, _, a3, _, _ = _split(theta)
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    ds = -a3 * np.sin(q[..., 1]) * qdot[..., 1]
    out = np.empty(np.broadcast_shapes(ds.shape) + (2, 2))
    out[..., 0, 0] = 2 * ds
    out[..., 0, 1] = ds
    out[..., 1, 0] = ds
    out[..., 1, 1] = 0.0
    return out


def coriolis_matrix(theta, q, qdot):
    _, _, a3, _, _ = _split(theta)
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    hs = a3 * np.sin(q[..., 1])
    out = np.empty(np.broadcast_shapes(hs.shape, qdot.shape[:-1]) + (2, 2))
    out[..., 0, 0] = -hs * qdot[..., 1]
    out[..., 0, 1] = -hs * (qdot[..., 0] + qdot[..., 1])
    out[..., 1, 0] = hs * qdot[..., 0]
    out[..., 1, 1] = 0.0
    return out


def _gravity(theta, gravity):
    if gravity is None:
        return theta.gravity if isinstance(theta, TwoLinkParams) else GRAVITY
    return gravity


def gravity_vector(theta, q, gravity=None):
    """Gravity torques; ``gravity=None`` takes ``theta.gravity`` or 9.8 m/s^2."""
    gravity = _gravity(theta, gravity)
    _, _, _, a4, a5 = _split(theta)
    q = np.asarray(q, dtype=float)
    c12 = np.cos(q[..., 0] + q[..., 1])
    out = np.empty(np.broadcast_shapes(np.shape(a4), c12.shape) + (2,))
    out[..., 0] = a4 * gravity * np.cos(q[..., 0]) + a5 * gravity * c12
    out[..., 1] = a5 * gravity * c12
    return out


def _solve2(m, rhs):
    """Batched 2x2 solve by Cramer's rule."""
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    if np.any(det <= 0):
        raise SingularMass("inertia matrix is not positive definite")
    out = np.empty(np.broadcast_shapes(det.shape, rhs.shape[:-1]) + (2,))
    out[..., 0] = (m[..., 1, 1] * rhs[..., 0] - m[..., 0, 1] * rhs[..., 1]) / det
    out[..., 1] = (m[..., 0, 0] * rhs[..., 1] - m[..., 1, 0] * rhs[..., 0]) / det
    return out


def forward_dynamics(theta, q, qdot, tau, gravity=None):
    """``qddot = M^-1 (tau - C qdot - G)``."""
    qdot = np.asarray(qdot, dtype=float)
    m = mass_matrix(theta, q)
    c = coriolis_matrix(theta, q, qdot)
    rhs = np.asarray(tau, dtype=float) - np.einsum("...ij,...j->...i", c, qdot) \
        - gravity_vector(theta, q, gravity)
    return _solve2(m, rhs)


def inverse_dynamics(theta, q, qdot, qddot, gravity=None):
    """``tau = M qddot + C qdot + G``."""
    qdot = np.asarray(qdot, dtype=float)
    m = mass_matrix(theta, q)
    c = coriolis_matrix(theta, q, qdot)
    return (np.einsum("...ij,...j->...i", m, qddot)
            + np.einsum("...ij,...j->...i", c, qdot)
            + gravity_vector(theta, q, gravity))


def kinetic_energy(theta, q, qdot):
    qdot = np.asarray(qdot, dtype=float)
    return 0.5 * np.einsum("...i,...ij,...j->...", qdot, mass_matrix(theta, q), qdot)
