"""Scenario description and the coupled leader/observer/arm simulation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import (
    ControllerGains,
    reference_acceleration,
    reference_velocity,
    slip_lyapunov,
    slip_residual,
    tracking_error_residual,
)
from .exceptions import DimensionMismatch, NonFiniteState
from .gains import synthesize_gains
from .graph import AugmentedGraph, build_matrices
from .leader import LeaderParams, block_amplitudes
from .observer import ObserverGains, ObserverState, consensus_errors, observer_rhs
from .plant import TwoLinkParams, coriolis_matrix, forward_dynamics, gravity_vector, mass_matrix
from .rk4 import record_indices, rk4_solve

__all__ = [
    "MODES",
    "InitialConditions",
    "ScenarioConfig",
    "SimResult",
    "integrate",
    "closed_loop_residuals",
    "stability_margin",
    "default_controller_gains",
    "default_plants",
]

MODES = ("observer_only", "closed_loop", "linear_example", "lemma8")
STEP_HEURISTIC = 2.5


@dataclass
class InitialConditions:
    """Observer and arm initial states; ``None`` fields mean zeros."""

    eta: np.ndarray | None = None
    omega: np.ndarray | None = None
    e_hat: np.ndarray | None = None
    q: np.ndarray | None = None
    qdot: np.ndarray | None = None

    def observer_state(self, n_nodes, m, n_out):
        base = ObserverState.zeros(n_nodes, m, n_out)
        eta = base.eta if self.eta is None else np.asarray(self.eta, dtype=float)
        omega = base.omega if self.omega is None else np.asarray(self.omega, dtype=float)
        e_hat = base.e_hat if self.e_hat is None else np.asarray(self.e_hat, dtype=float)
        if eta.shape != base.eta.shape or omega.shape != base.omega.shape \
                or e_hat.shape != base.e_hat.shape:
            raise DimensionMismatch("initial observer estimates do not match the scenario")
        return ObserverState(eta.copy(), omega.copy(), e_hat.copy())

    def arm_state(self, n_nodes):
        q = np.zeros((n_nodes, 2)) if self.q is None else np.asarray(self.q, dtype=float)
        qd = np.zeros((n_nodes, 2)) if self.qdot is None else np.asarray(self.qdot, dtype=float)
        if q.shape != (n_nodes, 2) or qd.shape != (n_nodes, 2):
            raise DimensionMismatch("initial joint states must have shape (N, 2)")
        return q.copy(), qd.copy()


@dataclass
class ScenarioConfig:
    """Everything needed to run one simulation.

    ``controller_gains`` and ``plants`` hold one entry per follower.
    ``extras`` carries mode-specific settings for the linear and excitation-cascade
    harnesses.
    """

    graph: AugmentedGraph
    leader: LeaderParams
    observer_gains: ObserverGains
    controller_gains: list = field(default_factory=list)
    plants: list = field(default_factory=list)
    initial: InitialConditions = field(default_factory=InitialConditions)
    horizon: float = 20.0
    step: float = 1e-4
    record_stride: int = 100
    seed: int = 0
    mode: str = "observer_only"
    name: str = "custom"
    track_lyapunov: bool = False
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.horizon >= self.step:
            raise ValueError("horizon must be at least one step")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be a positive integer")

    @property
    def n_nodes(self):
        return self.graph.n_followers

    @property
    def n_steps(self):
        return int(round(self.horizon / self.step))

    def with_overrides(self, **kw):
        return replace(self, **kw)


def stability_margin(cfg):
    """``step * mu1 * lambda_max(DH)``; RK4 is comfortable below about 2.5."""
    h = build_matrices(cfg.graph).h
    dh = cfg.observer_gains.d[:, None] * h
    lam = float(np.abs(np.linalg.eigvals(dh)).max())
    return cfg.step * cfg.observer_gains.mu1 * lam


@dataclass
class SimResult:
    """Recorded trajectory plus the error series derived from it.

    ``series`` maps names to arrays whose first axis matches ``times``.
    ``step_series`` holds per-step values (e.g. Lyapunov functions) when
    requested.
    """

    times: np.ndarray
    series: dict
    snapshots: dict | None = None
    step_series: dict | None = None
    final_state: np.ndarray | None = None
    mode: str = "observer_only"
    step: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.series.items():
            if np.shape(v)[0] != self.times.shape[0]:
                raise DimensionMismatch(f"series {k!r} has {np.shape(v)[0]} rows, "
                                        f"expected {self.times.shape[0]}")

    @property
    def n_nodes(self):
        return self.meta.get("n_nodes", 0)

    @property
    def err_eta(self):
        return self.series["err_eta"]

    @property
    def err_omega(self):
        return self.series["err_omega"]

    @property
    def err_e(self):
        return self.series["err_E"]

    @property
    def err_track(self):
        return self.series["err_track"]


class _Network:
    """Packed right-hand side of the coupled system for RK4."""

    def __init__(self, cfg, closed_loop):
        self.cfg = cfg
        self.leader = cfg.leader
        self.graph = cfg.graph
        self.gains = cfg.observer_gains
        self.n = cfg.n_nodes
        self.m = cfg.leader.m
        self.ell = cfg.leader.ell
        self.n_out = cfg.leader.n_out
        self.closed_loop = closed_loop
        n_obs = self.n * (self.m + self.ell + self.n_out * self.m)
        self.n_obs = n_obs
        if closed_loop:
            if len(cfg.plants) != self.n or len(cfg.controller_gains) != self.n:
                raise DimensionMismatch("closed loop needs one plant and one gain set per node")
            if self.n_out != 2:
                raise DimensionMismatch("two-link arms need a 2-dimensional leader output")
            self.theta = np.stack([p.theta for p in cfg.plants])
            self.gravity = np.array([p.gravity for p in cfg.plants])
            self.k = np.stack([g.k for g in cfg.controller_gains])
            self.alpha = np.array([float(g.alpha) for g in cfg.controller_gains])[:, None]

    def pack(self, obs, q=None, qdot=None):
        parts = [obs.to_vector()]
        if self.closed_loop:
            parts += [q.ravel(), qdot.ravel()]
        return np.concatenate(parts)

    def unpack(self, x):
        obs = ObserverState.from_vector(x[:self.n_obs], self.n, self.m, self.n_out)
        if not self.closed_loop:
            return obs, None, None
        rest = x[self.n_obs:]
        return obs, rest[:2 * self.n].reshape(self.n, 2), rest[2 * self.n:].reshape(self.n, 2)

    def gravity_terms(self, q):
        return gravity_vector(self.theta, q, self.gravity)

    def control(self, obs, dobs, q, qdot):
        """Torque, slip, reference velocity and acceleration for all arms."""
        qr_dot = reference_velocity(obs.eta, obs.omega, obs.e_hat, q, self.alpha)
        qr_ddot = reference_acceleration(obs, dobs, q, qdot, self.alpha)
        s = qdot - qr_dot
        m = mass_matrix(self.theta, q)
        c = coriolis_matrix(self.theta, q, qdot)
        tau = (-np.einsum("nij,nj->ni", self.k, s) + np.einsum("nij,nj->ni", m, qr_ddot)
               + np.einsum("nij,nj->ni", c, qr_dot) + self.gravity_terms(q))
        return tau, s, qr_dot, qr_ddot

    def rhs(self, t, x):
        v, y = self.leader.state_and_output(t)
        obs, q, qdot = self.unpack(x)
        dobs = observer_rhs(obs, v, y, self.graph, self.gains)
        if not self.closed_loop:
            return dobs.to_vector()
        tau, _, _, _ = self.control(obs, dobs, q, qdot)
        qddot = forward_dynamics(self.theta, q, qdot, tau, self.gravity)
        return np.concatenate([dobs.to_vector(), qdot.ravel(), qddot.ravel()])


def _gain_matrices(cfg):
    """``P`` and ``W`` for the configured ``D``; ``None`` when certification fails."""
    h = build_matrices(cfg.graph).h
    try:
        gs = synthesize_gains(h, d=cfg.observer_gains.d, seed=cfg.seed)
    except Exception:  # noqa: BLE001 - gains are only needed for the V series
        return None
    return gs


def integrate(cfg: ScenarioConfig, backend="compiled") -> SimResult:
    """Integrate an ``observer_only`` or ``closed_loop`` scenario with RK4.

    The leader is evaluated in closed form at every stage time. Series are
    recorded every ``record_stride`` steps; with ``cfg.track_lyapunov`` the
    observer Lyapunov function ``V`` (and the arm functions ``V_i`` in
    closed loop) are stored at every step as well.

    ``backend="compiled"`` runs the numba loop; ``"numpy"`` runs the
    reference implementation built from the public module functions.
    """
    if backend not in ("compiled", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if cfg.mode in ("linear_example", "lemma8"):
        from . import harness

        return harness.run_from_config(cfg)
    closed = cfg.mode == "closed_loop"
    net = _Network(cfg, closed)
    margin = stability_margin(cfg)
    if margin >= STEP_HEURISTIC:
        warnings.warn(f"step*mu1*lambda_max(DH) = {margin:.3g} exceeds {STEP_HEURISTIC}; "
                      "RK4 may be unstable", RuntimeWarning, stacklevel=2)
    obs0 = cfg.initial.observer_state(net.n, net.m, net.n_out)
    if closed:
        q0, qd0 = cfg.initial.arm_state(net.n)
        x0 = net.pack(obs0, q0, qd0)
    else:
        x0 = net.pack(obs0)

    gs = _gain_matrices(cfg)
    mu2 = cfg.observer_gains.mu2
    n_steps = cfg.n_steps
    meta = {"n_nodes": net.n, "scenario": cfg.name, "seed": cfg.seed,
            "stability_margin": margin, "backend": backend}
    if backend == "compiled":
        times, states, step_series = _integrate_compiled(cfg, net, gs, x0)
        series, snaps = _derive_series(net, gs, mu2, times, states)
        return SimResult(times=times, series=series, snapshots=snaps,
                         step_series=step_series, final_state=states[-1].copy(),
                         mode=cfg.mode, step=cfg.step, meta=meta)
    step_series = None
    on_step = None
    if cfg.track_lyapunov:
        step_v = np.full(n_steps + 1, np.nan)
        step_vi = np.full((n_steps + 1, net.n), np.nan) if closed else None

        def lyap(t, x):
            obs, q, qdot = net.unpack(x)
            v = cfg.leader.state(t)
            if gs is not None:
                et = obs.eta - v
                wt = obs.omega - cfg.leader.omega
                step_v[k_of(t)] = np.sum(et * (gs.p @ et)) + np.sum(wt * (gs.w @ wt)) / mu2
            if closed:
                qr = reference_velocity(obs.eta, obs.omega, obs.e_hat, q, net.alpha)
                step_vi[k_of(t)] = slip_lyapunov(net.theta, q, qdot - qr)

        def k_of(t):
            return int(round(t / cfg.step))

        lyap(0.0, x0)

        def on_step(k, t, x_prev, x_new):
            lyap(k * cfg.step, x_new)

        step_series = {"V": step_v}
        if closed:
            step_series["V_i"] = step_vi

    times, states = rk4_solve(net.rhs, x0, cfg.step, n_steps,
                              record_stride=int(cfg.record_stride), on_step=on_step)
    series, snaps = _derive_series(net, gs, mu2, times, states)
    return SimResult(times=times, series=series, snapshots=snaps, step_series=step_series,
                     final_state=states[-1].copy(), mode=cfg.mode, step=cfg.step,
                     meta=meta)


def _integrate_compiled(cfg, net, gs, x0):
    from . import _kernel

    leader = cfg.leader
    v0 = leader.v0
    n_steps = cfg.n_steps
    rec_idx = record_indices(n_steps, int(cfg.record_stride))
    if net.closed_loop:
        theta, grav, kmat, alpha = net.theta, net.gravity, net.k, net.alpha[:, 0]
    else:
        theta = np.zeros((net.n, 5))
        grav = np.zeros(net.n)
        kmat = np.zeros((net.n, 2, 2))
        alpha = np.zeros(net.n)
    p = gs.p if gs is not None else np.zeros((net.n, net.n))
    w = gs.w if gs is not None else np.zeros((net.n, net.n))
    states, step_v, step_vi, status, fail = _kernel.run_rk4(
        np.ascontiguousarray(x0), float(cfg.step), n_steps, rec_idx,
        np.ascontiguousarray(cfg.graph.adjacency), np.ascontiguousarray(cfg.graph.pinning),
        np.ascontiguousarray(cfg.observer_gains.d), float(cfg.observer_gains.mu1),
        float(cfg.observer_gains.mu2), np.ascontiguousarray(leader.omega),
        block_amplitudes(v0), np.arctan2(v0[0::2], v0[1::2]),
        np.ascontiguousarray(leader.e_out), net.closed_loop,
        np.ascontiguousarray(theta, dtype=float), np.ascontiguousarray(grav, dtype=float),
        np.ascontiguousarray(kmat, dtype=float), np.ascontiguousarray(alpha, dtype=float),
        bool(cfg.track_lyapunov), np.ascontiguousarray(p), np.ascontiguousarray(w))
    if status:
        t_fail = fail * cfg.step
        raise NonFiniteState(f"state became non-finite at t={t_fail:.6g}", time=t_fail)
    times = cfg.step * rec_idx.astype(float)
    step_series = None
    if cfg.track_lyapunov:
        if gs is None:
            step_v[:] = np.nan
        step_series = {"V": step_v}
        if net.closed_loop:
            step_series["V_i"] = step_vi
    return times, states, step_series


def _derive_series(net, gs, mu2, times, states):
    leader = net.leader
    k = times.shape[0]
    eta = np.empty((k, net.n, net.m))
    omega = np.empty((k, net.n, net.ell))
    e_hat = np.empty((k, net.n, net.n_out, net.m))
    q = np.full((k, net.n, 2), np.nan)
    qdot = np.full((k, net.n, 2), np.nan)
    for r in range(k):
        obs, qq, qd = net.unpack(states[r])
        eta[r], omega[r], e_hat[r] = obs.eta, obs.omega, obs.e_hat
        if net.closed_loop:
            q[r], qdot[r] = qq, qd
    v = leader.state(times)
    y = v @ leader.e_out.T
    eta_t = eta - v[:, None, :]
    omega_t = omega - leader.omega
    series = {
        "err_eta": np.linalg.norm(eta_t, axis=2),
        "err_omega": np.linalg.norm(omega_t, axis=2),
        "err_E": np.sqrt(((e_hat - leader.e_out) ** 2).sum(axis=(2, 3))),
    }
    if net.closed_loop:
        series["err_track"] = np.linalg.norm(q - y[:, None, :], axis=2)
        qr = reference_velocity(eta, omega, e_hat, q, net.alpha)
        series["V_i"] = slip_lyapunov(net.theta, q, qdot - qr)
    else:
        series["err_track"] = np.full((k, net.n), np.nan)
        series["V_i"] = np.full((k, net.n), np.nan)
    if gs is not None:
        series["V"] = (np.einsum("knm,ij,kjm->k", eta_t, gs.p, eta_t)
                       + np.einsum("knl,ij,kjl->k", omega_t, gs.w, omega_t) / mu2)
    else:
        series["V"] = np.full(k, np.nan)
    snaps = {"eta_hat": eta, "omega_hat": omega, "e_hat": e_hat, "v": v, "y": y,
             "q": q, "qdot": qdot}
    return series, snaps


def closed_loop_residuals(cfg: ScenarioConfig, result: SimResult) -> dict:
    """Pointwise model residuals at every recorded closed-loop state.

    Returns the maxima of the slip-dynamics residual ``M s' + C s + K s``,
    of the corrected tracking-error residual, and of the uncorrected one
    (which equals ``-E_hat' eta_hat`` by construction) together with the
    size of that drift term.
    """
    if cfg.mode != "closed_loop":
        raise ValueError("residuals are defined for closed-loop runs only")
    net = _Network(cfg, True)
    snaps = result.snapshots
    d = cfg.observer_gains.d
    out = {"slip": 0.0, "tracking_error": 0.0, "tracking_error_uncorrected": 0.0,
           "output_drift": 0.0, "uncorrected_plus_drift": 0.0}
    for r in range(result.times.shape[0]):
        obs = ObserverState(snaps["eta_hat"][r], snaps["omega_hat"][r], snaps["e_hat"][r])
        v, y = snaps["v"][r], snaps["y"][r]
        q, qdot = snaps["q"][r], snaps["qdot"][r]
        dobs = observer_rhs(obs, v, y, cfg.graph, cfg.observer_gains)
        tau, s, _, qr_ddot = net.control(obs, dobs, q, qdot)
        qddot = forward_dynamics(net.theta, q, qdot, tau, net.gravity)
        s_dot = qddot - qr_ddot
        res = slip_residual(net.theta, q, qdot, s, s_dot, net.k)
        ev = consensus_errors(obs.eta, v, cfg.graph)
        fixed = tracking_error_residual(obs, dobs, ev, q, qdot, s, net.alpha,
                                        cfg.observer_gains.mu1, d)
        raw = tracking_error_residual(obs, dobs, ev, q, qdot, s, net.alpha,
                                      cfg.observer_gains.mu1, d, include_output_drift=False)
        drift = np.einsum("inm,im->in", dobs.e_hat, obs.eta)
        out["slip"] = max(out["slip"], float(np.abs(res).max()))
        out["tracking_error"] = max(out["tracking_error"], float(np.abs(fixed).max()))
        out["tracking_error_uncorrected"] = max(out["tracking_error_uncorrected"],
                                                float(np.abs(raw).max()))
        out["output_drift"] = max(out["output_drift"], float(np.abs(drift).max()))
        out["uncorrected_plus_drift"] = max(out["uncorrected_plus_drift"],
                                            float(np.abs(raw + drift).max()))
    return out


def default_controller_gains(n, k=0.5, alpha=0.5):
    return [ControllerGains(k * np.eye(2), alpha) for _ in range(n)]


def default_plants(thetas, gravity=9.8):
    return [TwoLinkParams(t, gravity) for t in thetas]
