"""Distributed adaptive observer for an uncertain multi-tone leader.

Each follower ``i`` keeps estimates of the leader state (``eta_hat``), the
leader frequencies (``omega_hat``) and the leader output matrix (``e_hat``)
and updates them from neighbor estimates only:

    eta_hat_i'   = S(omega_hat_i) eta_hat_i + mu1 d_i e_vi
    omega_hat_i' = mu2 d_i phi(e_vi) eta_hat_i
    e_hat_i'     = d_i sum_j a_ij (y_hat_j - y_hat_i) eta_hat_i^T

with ``e_vi = sum_j a_ij (eta_hat_j - eta_hat_i)``, the leader entering as
``eta_hat_0 = v`` and ``y_hat_0 = y``.

Network-wide quantities are stored as stacked arrays: ``eta`` is
``(N, m)``, ``omega`` is ``(N, l)`` and ``e_hat`` is ``(N, n, m)``. Kronecker
products such as ``(DH kron I_m) x`` are applied as ``DH @ X`` on these
arrays, never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, MissingPilot
from .leader import block_amplitudes, phi_apply, phi_t_apply, s_apply

__all__ = [
    "NodeObserverState",
    "ObserverState",
    "ObserverGains",
    "BoundsReport",
    "consensus_errors",
    "consensus_error",
    "output_consensus_errors",
    "observer_rhs",
    "stacked_eta_rhs",
    "stacked_error_rhs",
    "output_error_rhs",
    "output_error_rhs_matrix",
    "lyapunov_v",
    "mu1_lower_bound",
    "vec",
    "unvec",
]


def vec(a):
    """Column-stacking vectorization (batched over leading axes)."""
    a = np.asarray(a)
    return np.swapaxes(a, -1, -2).reshape(a.shape[:-2] + (-1,))


def unvec(z, rows):
    z = np.asarray(z)
    cols = z.shape[-1] // rows
    return np.swapaxes(z.reshape(z.shape[:-1] + (cols, rows)), -1, -2)


@dataclass(frozen=True)
class NodeObserverState:
    eta_hat: np.ndarray
    omega_hat: np.ndarray
    e_hat: np.ndarray

    @property
    def y_hat(self):
        return self.e_hat @ self.eta_hat


@dataclass
class ObserverState:
    """Estimates of every follower, stacked along the first axis."""

    eta: np.ndarray
    omega: np.ndarray
    e_hat: np.ndarray

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        self.e_hat = np.asarray(self.e_hat, dtype=float)
        n_nodes, m = self.eta.shape
        if self.omega.shape != (n_nodes, m // 2) or m % 2:
            raise DimensionMismatch(
                f"omega estimates have shape {self.omega.shape}, "
                f"expected {(n_nodes, m // 2)}"
            )
        if self.e_hat.ndim != 3 or self.e_hat.shape[0] != n_nodes or self.e_hat.shape[2] != m:
            raise DimensionMismatch(
                f"output-matrix estimates have shape {self.e_hat.shape}, "
                f"expected ({n_nodes}, n, {m})"
            )

    @property
    def n_nodes(self):
        return self.eta.shape[0]

    @property
    def shape_info(self):
        return self.eta.shape[0], self.eta.shape[1], self.e_hat.shape[1]

    @property
    def y_hat(self):
        return np.einsum("inm,im->in", self.e_hat, self.eta)

    def node(self, i):
        return NodeObserverState(self.eta[i], self.omega[i], self.e_hat[i])

    def to_vector(self):
        return np.concatenate([self.eta.ravel(), self.omega.ravel(), self.e_hat.ravel()])

    @classmethod
    def from_vector(cls, x, n_nodes, m, n_out):
        ell = m // 2
        a = n_nodes * m
        b = a + n_nodes * ell
        return cls(
            x[:a].reshape(n_nodes, m),
            x[a:b].reshape(n_nodes, ell),
            x[b:].reshape(n_nodes, n_out, m),
        )

    @classmethod
    def zeros(cls, n_nodes, m, n_out):
        return cls(np.zeros((n_nodes, m)), np.zeros((n_nodes, m // 2)),
                   np.zeros((n_nodes, n_out, m)))

    @classmethod
    def exact(cls, leader, n_nodes, t=0.0):
        """All followers already agree with the leader at time ``t``."""
        v = leader.state(t)
        return cls(np.tile(v, (n_nodes, 1)), np.tile(leader.omega, (n_nodes, 1)),
                   np.tile(leader.e_out, (n_nodes, 1, 1)))


@dataclass(frozen=True)
class ObserverGains:
    mu1: float
    mu2: float
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if self.mu1 <= 1:
            raise ValueError(f"mu1 must exceed 1, got {self.mu1}")
        if self.mu2 <= 0:
            raise ValueError(f"mu2 must be positive, got {self.mu2}")
        if np.any(d <= 0):
            raise ValueError("node gains d_i must be positive")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)


def _check_nodes(graph, n_nodes):
    if graph.n_followers != n_nodes:
        raise DimensionMismatch(
            f"graph has {graph.n_followers} followers, state has {n_nodes}"
        )


def consensus_errors(eta, v, graph):
    """``e_vi = sum_j a_ij (eta_j - eta_i) + a_i0 (v - eta_i)`` for every node."""
    eta = np.asarray(eta, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_nodes(graph, eta.shape[0])
    if v.shape[-1] != eta.shape[-1]:
        raise DimensionMismatch(f"leader state size {v.shape[-1]} != {eta.shape[-1]}")
    a, a0 = graph.adjacency, graph.pinning
    deg = a.sum(axis=1) + a0
    return a @ eta + np.outer(a0, v) - deg[:, None] * eta


def consensus_error(i, eta, v, graph):
    """Consensus error of the single follower ``i`` (0-based)."""
    if not 0 <= i < graph.n_followers:
        raise DimensionMismatch(f"node index {i} out of range")
    eta = np.asarray(eta, dtype=float)
    v = np.asarray(v, dtype=float)
    if eta.shape[0] != graph.n_followers or v.shape[-1] != eta.shape[-1]:
        raise DimensionMismatch("state dimensions do not match the graph/leader")
    out = graph.pinning[i] * (v - eta[i])
    for j in graph.neighbors(i):
        out = out + graph.adjacency[i, j] * (eta[j] - eta[i])
    return out


def output_consensus_errors(y_hat, y, graph):
    """``sum_j a_ij (y_hat_j - y_hat_i) + a_i0 (y - y_hat_i)``; same algebra as states."""
    return consensus_errors(y_hat, y, graph)


def observer_rhs(state, v, y, graph, gains):
    """Right-hand side of the observer for all followers; returns an ``ObserverState``."""
    _check_nodes(graph, state.n_nodes)
    d = gains.d
    if d.shape[0] != state.n_nodes:
        raise DimensionMismatch(f"{d.shape[0]} node gains for {state.n_nodes} nodes")
    if np.shape(y)[-1] != state.e_hat.shape[1]:
        raise DimensionMismatch("leader output size does not match e_hat rows")
    ev = consensus_errors(state.eta, v, graph)
    ey = output_consensus_errors(state.y_hat, y, graph)
    deta = s_apply(state.omega, state.eta) + gains.mu1 * d[:, None] * ev
    domega = gains.mu2 * d[:, None] * phi_apply(ev, state.eta)
    de = d[:, None, None] * ey[:, :, None] * state.eta[:, None, :]
    return ObserverState(deta, domega, de)


def stacked_eta_rhs(eta, omega_hat, v, d, h, mu1):
    """Compact network form ``S_d(omega_hat) eta - mu1 (DH kron I)(eta - 1 kron v)``."""
    dh = np.asarray(d, dtype=float).reshape(-1)[:, None] * np.asarray(h, dtype=float)
    return s_apply(omega_hat, eta) - mu1 * dh @ (eta - v)


def stacked_error_rhs(eta_tilde, omega_tilde, eta_hat, omega, d, h, mu1, mu2,
                      check=True, rtol=1e-12):
    """Error dynamics of the state and frequency estimates.

    Returns ``(eta_tilde', omega_tilde')`` from the regression form

        eta_tilde'   = (I kron S(omega) - mu1 DH kron I) eta_tilde - phi_d(eta_hat)^T omega_tilde
        omega_tilde' = mu2 phi_d(eta_hat) (DH kron I) eta_tilde

    With ``check`` the un-rewritten form (``S_d(omega_tilde) eta_hat`` and
    ``phi_d(e_v) (D kron I) eta_hat``) is evaluated as well and both must
    agree to ``rtol``.
    """
    eta_tilde = np.asarray(eta_tilde, dtype=float)
    omega_tilde = np.asarray(omega_tilde, dtype=float)
    eta_hat = np.asarray(eta_hat, dtype=float)
    if eta_tilde.shape != eta_hat.shape or omega_tilde.shape[0] != eta_tilde.shape[0]:
        raise DimensionMismatch("stacked error arrays have inconsistent shapes")
    d = np.asarray(d, dtype=float).reshape(-1)
    h = np.asarray(h, dtype=float)
    dh = d[:, None] * h
    lin = s_apply(omega, eta_tilde) - mu1 * dh @ eta_tilde
    deta = lin - phi_t_apply(eta_hat, omega_tilde)
    domega = mu2 * phi_apply(eta_hat, dh @ eta_tilde)
    if check:
        ev = -h @ eta_tilde
        deta8 = lin + s_apply(omega_tilde, eta_hat)
        domega8 = mu2 * phi_apply(ev, d[:, None] * eta_hat)
        for a, b, name in ((deta, deta8, "eta"), (domega, domega8, "omega")):
            scale = max(np.abs(a).max(), np.abs(b).max(), 1.0)
            if np.abs(a - b).max() > rtol * scale:
                raise AssertionError(f"{name} error forms disagree")
    return deta, domega


def output_error_rhs_matrix(e_tilde, eta_hat, v, e_true, graph, d):
    """Output-matrix error dynamics in matrix form, one ``(n, m)`` block per node.

    ``E_tilde_i' = d_i sum_j a_ij (E_tilde_j - E_tilde_i) v v^T + psi_i`` where the
    leader's own error is zero.
    """
    e_tilde = np.asarray(e_tilde, dtype=float)
    eta_hat = np.asarray(eta_hat, dtype=float)
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float).reshape(-1)
    eta_tilde = eta_hat - v
    ev = consensus_errors(eta_hat, v, graph)
    # consensus over the E_tilde blocks, leader contributes E_tilde_0 = 0
    a, a0 = graph.adjacency, graph.pinning
    deg = a.sum(axis=1) + a0
    diff_e = np.einsum("ij,jnm->inm", a, e_tilde) - deg[:, None, None] * e_tilde
    et_eta = np.einsum("inm,im->in", e_tilde, eta_tilde)
    diff_ee = a @ et_eta - deg[:, None] * et_eta
    out = np.empty_like(e_tilde)
    for i in range(e_tilde.shape[0]):
        dv = diff_e[i] @ v
        psi = (np.outer(dv, eta_tilde[i])
               + np.outer(e_true @ ev[i], eta_hat[i])
               + np.outer(diff_ee[i], eta_hat[i]))
        out[i] = d[i] * (np.outer(dv, v) + psi)
    return out


def output_error_rhs(zeta, eta_hat, v, e_true, graph, d, check=True, rtol=1e-12):
    """Vectorized output-matrix error dynamics.

    ``zeta`` is ``(N, n*m)`` with rows ``vec(E_tilde_i)``. Evaluates

        zeta' = -(DH kron (v v^T kron I_n)) zeta + pi

    using per-node Kronecker blocks of size ``n*m`` for ``pi``. With ``check``
    the result is compared against :func:`output_error_rhs_matrix`.
    """
    zeta = np.asarray(zeta, dtype=float)
    eta_hat = np.asarray(eta_hat, dtype=float)
    v = np.asarray(v, dtype=float)
    e_true = np.asarray(e_true, dtype=float)
    n_out, m = e_true.shape
    n_nodes = eta_hat.shape[0]
    if zeta.shape != (n_nodes, n_out * m):
        raise DimensionMismatch(f"zeta has shape {zeta.shape}, expected {(n_nodes, n_out * m)}")
    _check_nodes(graph, n_nodes)
    d = np.asarray(d, dtype=float).reshape(-1)
    h = np.diag(graph.adjacency.sum(axis=1) + graph.pinning) - graph.adjacency
    dh = d[:, None] * h
    eye_n = np.eye(n_out)
    vv = np.kron(np.outer(v, v), eye_n)
    eta_tilde = eta_hat - v
    ev = consensus_errors(eta_hat, v, graph)
    zeta0 = vec(e_true)
    a, a0 = graph.adjacency, graph.pinning
    pi = np.zeros_like(zeta)
    for i in range(n_nodes):
        k_i = np.kron(np.outer(eta_tilde[i], v), eye_n)
        acc = np.zeros(n_out * m)
        for j in np.flatnonzero(a[i] > 0):
            acc += a[i, j] * (k_i @ (zeta[j] - zeta[i])
                              + np.kron(np.outer(eta_hat[i], eta_tilde[j]), eye_n) @ zeta[j]
                              - np.kron(np.outer(eta_hat[i], eta_tilde[i]), eye_n) @ zeta[i])
        if a0[i] > 0:
            # leader neighbor: zeta_j = 0 and eta_tilde_j = 0
            acc += a0[i] * (k_i @ (-zeta[i])
                            - np.kron(np.outer(eta_hat[i], eta_tilde[i]), eye_n) @ zeta[i])
        acc += np.kron(np.outer(eta_hat[i], ev[i]), eye_n) @ zeta0
        pi[i] = d[i] * acc
    out = -(dh @ zeta) @ vv.T + pi
    if check:
        ref = vec(output_error_rhs_matrix(unvec(zeta, n_out), eta_hat, v, e_true, graph, d))
        scale = max(np.abs(out).max(), np.abs(ref).max(), 1.0)
        if np.abs(out - ref).max() > rtol * scale:
            raise AssertionError("vectorized and matrix output-error forms disagree")
    return out


def lyapunov_v(eta_tilde, omega_tilde, p, w, mu2):
    """``eta~^T (P kron I) eta~ + omega~^T (W kron I) omega~ / mu2``."""
    eta_tilde = np.asarray(eta_tilde, dtype=float)
    omega_tilde = np.asarray(omega_tilde, dtype=float)
    return float(np.sum(eta_tilde * (p @ eta_tilde))
                 + np.sum(omega_tilde * (w @ omega_tilde)) / mu2)


@dataclass(frozen=True)
class BoundsReport:
    m_star: float
    omega_star: float
    q_eta: float
    c_min: float
    mu_max: float
    gamma: float
    delta: float
    q0_star: float
    rho1_star: float
    mu_frequency_term: float
    mu_excitation_term: float

    def as_dict(self):
        return {k: float(v) for k, v in vars(self).items()}


def mu1_lower_bound(gainset, leader, pilot=None, safety=1.25, omega_star=None):
    """Sufficient coupling gain ``mu_max`` from the graph gains and a pilot run.

    The trajectory suprema (frequency-error bound and the excitation
    disturbance bound) are estimated from ``pilot`` (a ``SimResult`` with
    raw snapshots) and inflated by ``safety``. Passing ``omega_star``
    explicitly skips the pilot for that quantity.
    """
    c = gainset.constants
    n_nodes = gainset.h.shape[0]
    v0 = np.asarray(leader.v0, dtype=float)
    norm_v0 = float(np.linalg.norm(v0))
    cmin = float(block_amplitudes(v0).min())

    rho1 = float("nan")
    if omega_star is None:
        if pilot is None or pilot.snapshots is None or "omega_hat" not in pilot.snapshots:
            raise MissingPilot("a pilot run with state snapshots is required")
        om = pilot.snapshots["omega_hat"] - leader.omega
        omega_star = safety * float(np.sqrt((om ** 2).sum(axis=(1, 2))).max())
    if pilot is not None and pilot.snapshots is not None and "eta_hat" in pilot.snapshots:
        om = pilot.snapshots["omega_hat"] - leader.omega
        sd = s_apply(om, pilot.snapshots["eta_hat"])
        norm_sd = np.sqrt((sd ** 2).sum(axis=(1, 2)))
        rho1 = safety * 2.0 * c.b_max * n_nodes * norm_v0 * float(norm_sd.max())

    m_star = 2.0 * c.norm_p + 2.0 * c.norm_w * c.norm_dh
    q_eta = 4.0 * c.lambda_h * c.norm_bdh * np.sqrt(2.0 * n_nodes * c.b_max / (3.0 * c.b_min))
    freq_term = (omega_star * m_star + 1.0) / c.lambda_q
    if cmin > 0:
        exc_term = (32.0 * omega_star * c.b_max ** 2 * n_nodes * norm_v0 ** 2 * q_eta
                    / (cmin ** 2 * c.lambda_h * c.b_min))
    else:
        exc_term = float("inf")
    return BoundsReport(
        m_star=m_star,
        omega_star=float(omega_star),
        q_eta=float(q_eta),
        c_min=cmin,
        mu_max=float(max(freq_term, exc_term)),
        gamma=3.0 * c.lambda_h / (4.0 * c.b_max),
        delta=c.lambda_h / c.b_max,
        q0_star=4.0 * n_nodes * c.norm_bdh ** 2 / c.lambda_h,
        rho1_star=rho1,
        mu_frequency_term=float(freq_term),
        mu_excitation_term=float(exc_term),
    )
