"""Stand-alone stability harnesses.

``run_lemma8`` simulates the cascaded linear time-varying system used to
prove exponential convergence under persistent excitation:

    x' = (I kron A_a - Y kron I) x - (I kron psi(t)^T) z
    z' = kappa (Y kron psi(t) P_a) x

``run_linear_example`` applies the graph gains to a linear leader-following
problem with Riccati feedback ``u_i = c d_i K sum_j a_ij (x_j - x_i)``.
"""

from __future__ import annotations

import numpy as np

from .exceptions import PreconditionFailed, RiccatiFailed
from .gains import is_spd, synthesize_gains
from .graph import build_matrices
from .leader import phi, pe_level
from .metrics import fit_exponential_rate
from .exceptions import NonPositiveSeries
from .rk4 import rk4_solve

__all__ = [
    "solve_riccati",
    "riccati_residual",
    "coupling_gain_bound",
    "run_linear_example",
    "run_lemma8",
    "check_lemma8_preconditions",
    "run_from_config",
]

RICCATI_RTOL = 1e-10


def riccati_residual(a, b, q, r, p):
    """Relative residual of ``A^T P + P A + Q - P B R^-1 B^T P``."""
    g = b @ np.linalg.solve(r, b.T)
    res = a.T @ p + p @ a + q - p @ g @ p
    scale = max(np.linalg.norm(q), np.linalg.norm(a.T @ p), np.linalg.norm(p @ g @ p), 1e-300)
    return float(np.linalg.norm(res) / scale)


def solve_riccati(a, b, q, r, rtol=RICCATI_RTOL):
    """Stabilizing solution of the continuous algebraic Riccati equation.

    Uses the stable invariant subspace of the Hamiltonian
    ``[[A, -B R^-1 B^T], [-Q, -A^T]]`` spanned by its eigenvectors, then
    certifies the residual.

    Raises
    ------
    RiccatiFailed
        If the Hamiltonian has eigenvalues on the imaginary axis, the
        subspace is not a graph, or the residual exceeds ``rtol``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    n = a.shape[0]
    if not is_spd(r):
        raise RiccatiFailed("R must be symmetric positive definite")
    g = b @ np.linalg.solve(r, b.T)
    ham = np.block([[a, -g], [-q, -a.T]])
    lam, vecs = np.linalg.eig(ham)
    scale = max(np.abs(lam).max(), 1.0)
    stable = np.flatnonzero(lam.real < -1e-12 * scale)
    if stable.size != n:
        raise RiccatiFailed(f"Hamiltonian has {stable.size} stable eigenvalues, expected {n}")
    x = vecs[:, stable]
    x1, x2 = x[:n], x[n:]
    if np.linalg.cond(x1) > 1e12:
        raise RiccatiFailed("stable subspace is not a graph over the state coordinates")
    p = np.real(np.linalg.solve(x1.T, x2.T).T)
    p = 0.5 * (p + p.T)
    resid = riccati_residual(a, b, q, r, p)
    if not resid <= rtol:
        raise RiccatiFailed(f"Riccati residual {resid:.3e} exceeds {rtol:.1e}")
    return p


def coupling_gain_bound(gainset, q_o, ktrk):
    """Sufficient coupling ``c`` for the linear example.

    ``sigma_max(WDH kron (Q_o - K^T R K)) / sigma_min(H^T D W D H kron K^T R K)``,
    evaluated through the singular values of the Kronecker factors.
    """
    dh = gainset.d @ gainset.h
    num = (np.linalg.norm(gainset.w @ dh, 2)
           * np.linalg.norm(np.asarray(q_o, dtype=float) - ktrk, 2))
    den = (np.linalg.svd(gainset.h.T @ gainset.d @ gainset.w @ dh, compute_uv=False).min()
           * np.linalg.svd(ktrk, compute_uv=False).min())
    if den <= 1e-14 * max(np.linalg.norm(ktrk, 2), 1.0):
        raise PreconditionFailed("K^T R K nonsingular", "the input matrix must have full row rank")
    return float(num / den)


def run_linear_example(a_o, b_o, q_o, r_o, graph, gainset, x0, leader_x0, horizon, step=None,
                       record_stride=10, margin=1.05, c=None):
    """Simulate the networked tracking error ``x~' = (I kron A - c DH kron BK) x~``.

    ``c`` defaults to the sufficient bound times ``margin``; when the bound
    is zero any positive ``c`` works and ``c = 1`` is used. With
    ``step=None`` the step is ``1 / (c rho(DH) ||BK|| + ||A||)``, well inside
    the RK4 stability region.
    """
    from .scenario import SimResult

    a_o = np.atleast_2d(np.asarray(a_o, dtype=float))
    b_o = np.asarray(b_o, dtype=float).reshape(a_o.shape[0], -1)
    q_o = np.atleast_2d(np.asarray(q_o, dtype=float))
    r_o = np.atleast_2d(np.asarray(r_o, dtype=float))
    p1 = solve_riccati(a_o, b_o, q_o, r_o)
    k = np.linalg.solve(r_o, b_o.T @ p1)
    ktrk = k.T @ r_o @ k
    bound = coupling_gain_bound(gainset, q_o, ktrk)
    if c is None:
        c = margin * bound if bound > 1e-12 else 1.0
    dh = gainset.d @ gainset.h
    bk = b_o @ k
    n_nodes, dim = dh.shape[0], a_o.shape[0]
    stiffness = (c * np.abs(np.linalg.eigvals(dh)).max() * np.linalg.norm(bk, 2)
                 + np.linalg.norm(a_o, 2))
    if step is None:
        step = horizon / np.ceil(horizon * stiffness)
    x0 = np.asarray(x0, dtype=float).reshape(n_nodes, dim)
    xt0 = x0 - np.asarray(leader_x0, dtype=float).reshape(1, dim)

    def rhs(t, x):
        xt = x.reshape(n_nodes, dim)
        return (xt @ a_o.T - c * dh @ xt @ bk.T).ravel()

    n_steps = int(round(horizon / step))
    times, states = rk4_solve(rhs, xt0.ravel(), step, n_steps, record_stride)
    xt = states.reshape(-1, n_nodes, dim)
    series = {"err": np.linalg.norm(xt, axis=2), "norm": np.linalg.norm(states, axis=1)}
    meta = {"n_nodes": n_nodes, "riccati": p1, "feedback": k, "c": float(c),
            "c_bound": bound, "stability_margin": float(step * stiffness),
            "riccati_residual": riccati_residual(a_o, b_o, q_o, r_o, p1)}
    return SimResult(times=times, series=series, final_state=states[-1].copy(),
                     mode="linear_example", step=step, meta=meta)


def check_lemma8_preconditions(a_a, p_a, y_mat, kappa, tol=1e-9):
    """Raise :class:`PreconditionFailed` naming the first violated hypothesis."""
    a_a = np.atleast_2d(np.asarray(a_a, dtype=float))
    p_a = np.atleast_2d(np.asarray(p_a, dtype=float))
    y_mat = np.atleast_2d(np.asarray(y_mat, dtype=float))
    if not kappa > 0:
        raise PreconditionFailed("kappa > 0", f"got {kappa}")
    if not is_spd(p_a, tol):
        raise PreconditionFailed("P_a symmetric positive definite")
    sym = p_a @ a_a + a_a.T @ p_a
    top = float(np.linalg.eigvalsh(0.5 * (sym + sym.T))[-1])
    if top > tol * max(np.linalg.norm(sym, 2), np.linalg.norm(p_a, 2), 1.0):
        raise PreconditionFailed("P_a A_a + A_a^T P_a <= 0",
                                 f"largest eigenvalue {top:.3e}")
    lam, vecs = np.linalg.eig(y_mat)
    scale = max(np.abs(lam).max(), 1.0)
    if (np.abs(lam.imag).max() > tol * scale or lam.real.min() <= tol * scale
            or np.linalg.cond(vecs) > 1e10):
        raise PreconditionFailed("Y diagonalizable with positive real eigenvalues",
                                 f"eigenvalues {np.round(lam, 6)}")


def run_lemma8(a_a, p_a, y_mat, psi, kappa, x0, z0, horizon, step, record_stride=10,
               pe_window=None):
    """Simulate the excitation cascade and report excitation and decay.

    ``psi`` is a callable ``t -> (s, m)`` matrix. ``meta`` holds the
    excitation report of ``psi psi^T`` and an exponential fit of
    ``||(x, z)||`` over the tail when the norm stays positive.
    """
    from .scenario import SimResult

    check_lemma8_preconditions(a_a, p_a, y_mat, kappa)
    a_a = np.atleast_2d(np.asarray(a_a, dtype=float))
    p_a = np.atleast_2d(np.asarray(p_a, dtype=float))
    y_mat = np.atleast_2d(np.asarray(y_mat, dtype=float))
    n, m = y_mat.shape[0], a_a.shape[0]
    n_steps = int(round(horizon / step))
    dt = step * record_stride
    grid = np.arange(0.0, horizon + 0.5 * dt, dt)
    psi_samples = np.stack([np.atleast_2d(psi(t)) for t in grid])
    if not np.all(np.isfinite(psi_samples)):
        raise PreconditionFailed("psi bounded", "psi is not finite on the horizon")
    s_dim = psi_samples.shape[1]
    x0 = np.asarray(x0, dtype=float).reshape(n, m)
    z0 = np.asarray(z0, dtype=float).reshape(n, s_dim)
    split = n * m

    def rhs(t, w):
        x = w[:split].reshape(n, m)
        z = w[split:].reshape(n, s_dim)
        ps = np.atleast_2d(psi(t))
        dx = x @ a_a.T - y_mat @ x - z @ ps
        dz = kappa * (y_mat @ x @ p_a.T @ ps.T)
        return np.concatenate([dx.ravel(), dz.ravel()])

    times, states = rk4_solve(rhs, np.concatenate([x0.ravel(), z0.ravel()]), step, n_steps,
                              record_stride)
    x_norm = np.linalg.norm(states[:, :split], axis=1)
    z_norm = np.linalg.norm(states[:, split:], axis=1)
    norm = np.hypot(x_norm, z_norm)
    if pe_window is None:
        pe_window = max(horizon / 10.0, 2 * dt)
    pe_window = min(pe_window, grid[-1])
    pe = pe_level(psi_samples, dt, pe_window)
    try:
        fit = fit_exponential_rate(times, norm)
    except NonPositiveSeries:
        fit = None
    meta = {"n_nodes": n, "pe": pe, "decay_fit": fit}
    return SimResult(times=times, series={"x_norm": x_norm, "z_norm": z_norm, "norm": norm},
                     final_state=states[-1].copy(), mode="lemma8", step=step, meta=meta)


def _leader_phi(leader):
    return lambda t: phi(leader.state(t))


def run_from_config(cfg):
    """Dispatch ``linear_example`` and ``lemma8`` scenarios."""
    ex = cfg.extras
    if cfg.mode == "linear_example":
        h = build_matrices(cfg.graph).h
        gs = synthesize_gains(h, d=cfg.observer_gains.d, seed=cfg.seed)
        dim = np.atleast_2d(ex["a_o"]).shape[0]
        n = cfg.n_nodes
        x0 = ex.get("x0")
        if x0 is None:
            x0 = np.random.default_rng(cfg.seed).normal(size=(n, dim))
        return run_linear_example(ex["a_o"], ex["b_o"], ex["q_o"], ex["r_o"], cfg.graph, gs,
                                  x0, ex.get("leader_x0", np.zeros(dim)), cfg.horizon,
                                  ex.get("step", cfg.step), cfg.record_stride)
    if cfg.mode == "lemma8":
        psi_spec = ex.get("psi", "leader_phi")
        if isinstance(psi_spec, str):
            if psi_spec != "leader_phi":
                raise ValueError(f"unknown psi signal {psi_spec!r}")
            psi = _leader_phi(cfg.leader)
        else:
            const = np.atleast_2d(np.asarray(psi_spec, dtype=float))
            psi = lambda t: const  # noqa: E731
        y_mat = np.atleast_2d(ex.get("y", [[1.0]]))
        a_a = np.atleast_2d(ex["a_a"])
        s_dim = np.atleast_2d(psi(0.0)).shape[0]
        x0 = ex.get("x0", np.ones(y_mat.shape[0] * a_a.shape[0]))
        z0 = ex.get("z0", np.ones(y_mat.shape[0] * s_dim))
        return run_lemma8(a_a, ex.get("p_a", np.eye(a_a.shape[0])), y_mat, psi,
                          ex.get("kappa", 1.0), x0, z0, cfg.horizon, cfg.step,
                          cfg.record_stride)
    raise ValueError(f"mode {cfg.mode!r} is not handled here")
