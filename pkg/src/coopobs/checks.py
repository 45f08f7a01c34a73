"""Invariant suite behind ``coopobs check``."""

from __future__ import annotations

import numpy as np

from .gains import certify, synthesize_gains
from .graph import build_matrices, has_leader_spanning_tree, is_nonsingular_m_matrix
from .leader import phi_t_apply, s_apply
from .observer import consensus_errors, output_error_rhs, stacked_error_rhs
from .plant import coriolis_matrix, mass_matrix, mass_matrix_dot

__all__ = ["run_checks"]


def _safe(fn):
    try:
        return fn()
    except Exception as exc:  # noqa: BLE001 - a crashing check is a failing check
        return False, f"{type(exc).__name__}: {exc}"


def run_checks(cfg, trials=200, seed=None):
    """Return ``{name: (passed, detail)}`` for structural and algebraic invariants."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    g = cfg.graph
    h = build_matrices(g).h
    n, m, ell, n_out = g.n_followers, cfg.leader.m, cfg.leader.ell, cfg.leader.n_out
    d = cfg.observer_gains.d
    out = {}

    out["leader_spanning_tree"] = (has_leader_spanning_tree(g), "leader reaches every follower")
    out["h_nonsingular_m_matrix"] = (is_nonsingular_m_matrix(h), f"N={n}")

    def gains():
        certs = certify(synthesize_gains(h, d=d, seed=cfg.seed))
        bad = [k for k, v in certs.items() if not v]
        return not bad, "all certificates hold" if not bad else "failed: " + ", ".join(bad)

    out["gain_certificates"] = _safe(gains)

    def regressor():
        x = rng.normal(size=(trials, m))
        w = rng.normal(size=(trials, ell))
        err = np.abs(s_apply(w, x) + phi_t_apply(x, w)).max()
        return err < 1e-13, f"max |S(w)x + phi(x)^T w| = {err:.2e}"

    out["regressor_identity"] = _safe(regressor)

    def consensus():
        worst = 0.0
        for _ in range(trials):
            eta = rng.normal(size=(n, m))
            v = rng.normal(size=m)
            ref = -h @ (eta - v)
            worst = max(worst, np.abs(consensus_errors(eta, v, g) - ref).max())
        return worst < 1e-12, f"max deviation {worst:.2e}"

    out["stacked_consensus_identity"] = _safe(consensus)

    def error_forms():
        for _ in range(trials):
            stacked_error_rhs(rng.normal(size=(n, m)), rng.normal(size=(n, ell)),
                              rng.normal(size=(n, m)), rng.normal(size=ell), d, h,
                              cfg.observer_gains.mu1, cfg.observer_gains.mu2)
            output_error_rhs(rng.normal(size=(n, n_out * m)), rng.normal(size=(n, m)),
                             rng.normal(size=m), rng.normal(size=(n_out, m)), g, d)
        return True, f"{trials} random states agree"

    out["error_form_equivalence"] = _safe(error_forms)

    for i, p in enumerate(cfg.plants):
        def arm(p=p):
            q = rng.uniform(-np.pi, np.pi, size=(trials, 2))
            qd = rng.normal(size=(trials, 2))
            lam = np.linalg.eigvalsh(mass_matrix(p, q)).min()
            x = rng.normal(size=(trials, 2))
            skew = mass_matrix_dot(p, q, qd) - 2 * coriolis_matrix(p, q, qd)
            quad = np.abs(np.einsum("ki,kij,kj->k", x, skew, x)).max()
            return (lam > 0 and quad < 1e-10,
                    f"min eig M = {lam:.3g}, max |x^T(Mdot - 2C)x| = {quad:.1e}")

        out[f"arm_{i + 1}_energy_structure"] = _safe(arm)
    return out
