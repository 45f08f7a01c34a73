"""Graph Lyapunov gains for directed topologies.

Given ``H = L + G`` (a nonsingular M-matrix when the leader spans the
graph) this module builds

* a positive diagonal ``D`` such that ``DH`` has real, positive, distinct
  eigenvalues,
* a symmetric positive definite ``W`` with ``P = W D H`` symmetric positive
  definite, hence ``Q = P D H + H^T D P = 2 H^T D W D H`` positive definite,
* a positive diagonal ``B`` with ``Hbar = B D H + H^T D B`` positive definite,

and certifies every property numerically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    CertificationFailed,
    NotDiagonalizable,
    NotMMatrix,
    SynthesisFailed,
)
from .graph import is_nonsingular_m_matrix

__all__ = [
    "GainSet",
    "SpectralConstants",
    "dh_spectrum_ok",
    "synthesize_d",
    "synthesize_w",
    "compute_p_q",
    "synthesize_b",
    "synthesize_gains",
    "spectral_constants",
    "certify",
    "is_spd",
]

logger = logging.getLogger(__name__)

DISTINCT_REL_GAP = 1e-8
MAX_EIGVEC_COND = 1e10


def is_spd(a, tol=1e-9) -> bool:
    """Symmetric to ``tol * ||a||`` and smallest eigenvalue above ``tol * ||a||``."""
    a = np.asarray(a, dtype=float)
    scale = np.linalg.norm(a, 2)
    if scale == 0 or not np.all(np.isfinite(a)):
        return False
    if np.linalg.norm(a - a.T, 2) > tol * scale:
        return False
    sym = 0.5 * (a + a.T)
    try:
        np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        return False
    return bool(np.linalg.eigvalsh(sym)[0] > tol * scale)


def _spectrum(dh):
    """Eigenvalues/vectors sorted ascending by real part."""
    lam, vec = np.linalg.eig(dh)
    order = np.argsort(lam.real)
    return lam[order], vec[:, order]


def dh_spectrum_ok(dh, rel_gap=DISTINCT_REL_GAP, imag_tol=1e-9):
    """Return ``(ok, eigenvalues)``: real, positive and pairwise distinct.

    Imaginary parts must stay below ``imag_tol * max|lambda|`` and adjacent
    eigenvalues must differ by more than ``rel_gap * max|lambda|``.
    """
    lam, _ = _spectrum(np.asarray(dh, dtype=float))
    scale = np.abs(lam).max()
    if scale == 0:
        return False, lam
    if np.any(np.abs(lam.imag) > imag_tol * scale):
        return False, lam
    real = lam.real
    if np.any(real <= 0):
        return False, lam
    if real.size > 1 and np.diff(real).min() <= rel_gap * scale:
        return False, lam
    return True, real


def _candidate_score(dh):
    """Higher is better; ``-inf`` when the spectrum does not qualify.

    Penalizes both eigenvector conditioning and eigenvalue spread, since
    either one inflates the condition of ``W`` and ``P``.
    """
    ok, lam = dh_spectrum_ok(dh)
    if not ok:
        return -np.inf
    _, vec = _spectrum(dh)
    vec = vec.real / np.linalg.norm(vec.real, axis=0)
    return -np.log10(np.linalg.cond(vec) * lam[-1] / lam[0])


def synthesize_d(h, seed=0, max_random=2000, cond_target=1e3):
    """Positive diagonal scaling with real, positive, distinct spectrum of ``DH``.

    Tries the identity, then a leading-block recursion (each new ``d_k`` is
    picked from a geometric ladder so the growing leading block keeps a
    simple real spectrum; small ``d_k`` always works because the new
    eigenvalue is then approximately ``d_k`` times a positive Schur
    complement), and finally a seeded log-uniform random search.
    Returns the diagonal of ``D``.
    """
    h = np.asarray(h, dtype=float)
    n = h.shape[0]
    if not is_nonsingular_m_matrix(h):
        raise NotMMatrix("H is not a nonsingular M-matrix")

    ones = np.ones(n)
    if _candidate_score(h) > -np.log10(cond_target):
        return ones

    d = np.ones(1)
    ladder = 2.0 ** np.arange(4, -41, -1)
    for k in range(2, n + 1):
        block = h[:k, :k]
        best, best_score = None, -np.inf
        for dk in ladder:
            cand = np.append(d, dk)
            score = _candidate_score(cand[:, None] * block)
            if score > best_score:
                best, best_score = cand, score
        if best is None:
            break
        d = best
    else:
        if _candidate_score(d[:, None] * h) > -np.inf:
            d = _refine_d(d, h)
            return d / d.max()

    rng = np.random.default_rng(seed)
    best, best_score = None, -np.inf
    for _ in range(max_random):
        cand = np.exp(rng.uniform(np.log(1e-3), 0.0, size=n))
        score = _candidate_score(cand[:, None] * h)
        if score > best_score:
            best, best_score = cand, score
            if score > -np.log10(cond_target):
                break
    if best is None:
        raise SynthesisFailed(f"no diagonal scaling found after {max_random} draws")
    return best


def _refine_d(d, h, sweeps=6, factors=(0.5, 2.0, 0.8, 1.25)):
    """Greedy coordinate search that improves the conditioning score."""
    d = d.copy()
    best = _candidate_score(d[:, None] * h)
    for _ in range(sweeps):
        improved = False
        for k in range(d.size):
            for f in factors:
                cand = d.copy()
                cand[k] *= f
                score = _candidate_score(cand[:, None] * h)
                if score > best:
                    d, best, improved = cand, score, True
        if not improved:
            break
    return d


def synthesize_w(dh) -> np.ndarray:
    """Symmetric positive definite ``W`` making ``W @ dh`` symmetric positive definite.

    With ``dh = V diag(lam) V^-1`` the choice ``W = V^-T V^-1`` gives
    ``W dh = V^-T diag(lam) V^-1``.
    """
    dh = np.asarray(dh, dtype=float)
    lam, vec = _spectrum(dh)
    scale = np.abs(lam).max()
    if np.any(np.abs(lam.imag) > 1e-9 * scale) or np.any(lam.real <= 0):
        raise NotDiagonalizable("spectrum is not real and positive")
    vec = vec.real
    vec /= np.linalg.norm(vec, axis=0)
    if np.linalg.cond(vec) > MAX_EIGVEC_COND:
        raise NotDiagonalizable(
            f"eigenvector matrix condition number {np.linalg.cond(vec):.3g} "
            f"exceeds {MAX_EIGVEC_COND:g}"
        )
    vinv = np.linalg.inv(vec)
    w = vinv.T @ vinv
    w = 0.5 * (w + w.T)
    return w / np.linalg.norm(w, 2)


def compute_p_q(w, d, h, tol=1e-9):
    """``P = W D H`` and ``Q = P D H + H^T D P``, both certified SPD."""
    w = np.asarray(w, dtype=float)
    dmat = np.diag(np.asarray(d, dtype=float).reshape(-1)) if np.ndim(d) == 1 else np.asarray(d)
    h = np.asarray(h, dtype=float)
    dh = dmat @ h
    p = w @ dh
    q = p @ dh + h.T @ dmat @ p
    if not is_spd(p, tol):
        raise CertificationFailed("P = W D H is not symmetric positive definite")
    if not is_spd(q, tol):
        raise CertificationFailed("Q = P D H + H^T D P is not symmetric positive definite")
    return p, q


def synthesize_b(d, h, seed=0, max_random=2000, tol=1e-9):
    """Positive diagonal ``B`` with ``B D H + H^T D B`` positive definite.

    Primary candidate: ``b_i = y_i / x_i`` with ``x = (DH)^-1 1`` and
    ``y = (DH)^-T 1`` (both positive for a nonsingular M-matrix).
    Returns the diagonal of ``B``.
    """
    d = np.asarray(d, dtype=float).reshape(-1)
    dh = d[:, None] * np.asarray(h, dtype=float)
    ones = np.ones(dh.shape[0])

    def ok(b):
        hb = b[:, None] * dh
        return is_spd(hb + hb.T, tol)

    try:
        x = np.linalg.solve(dh, ones)
        y = np.linalg.solve(dh.T, ones)
    except np.linalg.LinAlgError:
        x = y = None
    if x is not None and np.all(x > 0) and np.all(y > 0):
        b = y / x
        b /= b.max()
        if ok(b):
            return b
    if ok(ones):
        return ones
    rng = np.random.default_rng(seed)
    for _ in range(max_random):
        b = np.exp(rng.uniform(np.log(1e-3), 0.0, size=ones.size))
        if ok(b):
            return b
    raise SynthesisFailed(f"no diagonal B found after {max_random} draws")


@dataclass(frozen=True)
class SpectralConstants:
    lambda_q: float
    lambda_h: float
    b_min: float
    b_max: float
    norm_p: float
    norm_w: float
    norm_dh: float
    norm_bdh: float


@dataclass(frozen=True)
class GainSet:
    """Certified graph gains. ``d`` and ``b`` are stored as full diagonal matrices."""

    h: np.ndarray
    d: np.ndarray
    w: np.ndarray
    p: np.ndarray
    q: np.ndarray
    b: np.ndarray
    h_bar: np.ndarray
    constants: SpectralConstants = field(repr=False)

    @property
    def dh(self):
        return self.d @ self.h

    @property
    def lambda_q(self):
        return self.constants.lambda_q

    @property
    def lambda_h(self):
        return self.constants.lambda_h

    @property
    def b_min(self):
        return self.constants.b_min

    @property
    def b_max(self):
        return self.constants.b_max

    def as_dict(self):
        out = {k: getattr(self, k).tolist() for k in ("h", "d", "w", "p", "q", "b", "h_bar")}
        out["constants"] = {k: float(v) for k, v in vars(self.constants).items()}
        return out


def spectral_constants(gs) -> SpectralConstants:
    """Smallest eigenvalues of ``Q`` and ``Hbar``, extremes of ``B``, and 2-norms."""
    bdiag = np.diag(gs.b)
    dh = gs.d @ gs.h
    return SpectralConstants(
        lambda_q=float(np.linalg.eigvalsh(0.5 * (gs.q + gs.q.T))[0]),
        lambda_h=float(np.linalg.eigvalsh(0.5 * (gs.h_bar + gs.h_bar.T))[0]),
        b_min=float(bdiag.min()),
        b_max=float(bdiag.max()),
        norm_p=float(np.linalg.norm(gs.p, 2)),
        norm_w=float(np.linalg.norm(gs.w, 2)),
        norm_dh=float(np.linalg.norm(dh, 2)),
        norm_bdh=float(np.linalg.norm(gs.b @ dh, 2)),
    )


def certify(gs, tol=1e-9, rel_gap=DISTINCT_REL_GAP) -> dict:
    """Evaluate every gain certificate; returns ``{name: bool}``."""
    dh = gs.d @ gs.h
    ddiag, bdiag = np.diag(gs.d), np.diag(gs.b)
    q_ident = 2.0 * gs.h.T @ gs.d @ gs.w @ dh
    checks = {
        "d_positive_diagonal": bool(np.all(ddiag > 0)
                                    and np.count_nonzero(gs.d - np.diag(ddiag)) == 0),
        "b_positive_diagonal": bool(np.all(bdiag > 0)
                                    and np.count_nonzero(gs.b - np.diag(bdiag)) == 0),
        "dh_spectrum_real_positive_distinct": dh_spectrum_ok(dh, rel_gap)[0],
        "w_spd": is_spd(gs.w, tol),
        "p_equals_wdh": bool(np.linalg.norm(gs.p - gs.w @ dh, 2)
                             <= tol * max(np.linalg.norm(gs.p, 2), 1.0)),
        "p_spd": is_spd(gs.p, tol),
        "q_spd": is_spd(gs.q, tol),
        "q_identity": bool(np.linalg.norm(gs.q - q_ident, 2)
                           <= 1e-12 * np.linalg.norm(q_ident, 2)),
        "h_bar_spd": is_spd(gs.h_bar, tol),
    }
    return checks


def synthesize_gains(h, d=None, w=None, b=None, seed=0, tol=1e-9) -> GainSet:
    """Build and certify a full :class:`GainSet` for ``h``.

    ``d``, ``w`` and ``b`` may be supplied (e.g. reference values); any that
    are missing are synthesized. Raises :class:`CertificationFailed` when a
    certificate does not hold.
    """
    h = np.asarray(h, dtype=float)
    if d is None:
        ddiag = synthesize_d(h, seed=seed)
    else:
        ddiag = np.asarray(d, dtype=float)
        ddiag = np.diag(ddiag) if ddiag.ndim == 2 else ddiag
        if np.any(ddiag <= 0):
            raise CertificationFailed("D must have a strictly positive diagonal")
        ok, lam = dh_spectrum_ok(ddiag[:, None] * h)
        if not ok:
            raise CertificationFailed(f"supplied D gives DH spectrum {lam}")
    dmat = np.diag(ddiag)
    dh = dmat @ h
    w = synthesize_w(dh) if w is None else np.asarray(w, dtype=float)
    p, q = compute_p_q(w, ddiag, h, tol)
    bdiag = synthesize_b(ddiag, h, seed=seed, tol=tol) if b is None else np.asarray(b, dtype=float)
    bdiag = np.diag(bdiag) if bdiag.ndim == 2 else bdiag
    bmat = np.diag(bdiag)
    h_bar = bmat @ dh + dh.T @ bmat
    proto = GainSet(h=h, d=dmat, w=w, p=p, q=q, b=bmat, h_bar=h_bar,
                    constants=None)
    gs = GainSet(h=h, d=dmat, w=w, p=p, q=q, b=bmat, h_bar=h_bar,
                 constants=spectral_constants(proto))
    failed = [k for k, v in certify(gs, tol).items() if not v]
    if failed:
        raise CertificationFailed("gain certificates failed: " + ", ".join(failed))
    return gs
