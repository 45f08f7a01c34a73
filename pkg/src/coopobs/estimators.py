"""scikit-learn style wrappers around gain synthesis and the observer network.

Only the ``fit``/``get_params``/``set_params`` conventions are used; the
objects are not meant for pipelines or cross-validation since the inputs
are a graph and a leader, not a feature matrix.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .gains import certify, synthesize_gains
from .graph import AugmentedGraph, build_matrices
from .leader import LeaderParams
from .observer import ObserverGains
from .scenario import InitialConditions, ScenarioConfig, integrate

__all__ = ["GainSynthesizer", "DistributedLeaderObserver"]


def _h_matrix(graph):
    if isinstance(graph, AugmentedGraph):
        return build_matrices(graph).h
    h = np.asarray(graph, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected an AugmentedGraph or a square H, got shape {h.shape}")
    return h


class GainSynthesizer(BaseEstimator):
    """Certified ``D``, ``W``, ``P``, ``Q``, ``B`` and ``Hbar`` for a graph.

    Parameters
    ----------
    d : array_like, optional
        Node gains to use instead of searching for them.
    seed : int
        Seed for the randomized part of the search.
    tol : float
        Certification tolerance.
    """

    def __init__(self, d=None, seed=0, tol=1e-9):
        self.d = d
        self.seed = seed
        self.tol = tol

    def fit(self, graph, y=None):
        """Synthesize gains for an :class:`AugmentedGraph` or its ``H`` matrix."""
        h = _h_matrix(graph)
        gs = synthesize_gains(h, d=self.d, seed=self.seed, tol=self.tol)
        self.gainset_ = gs
        self.certificates_ = certify(gs, tol=self.tol)
        self.constants_ = gs.constants
        self.d_ = np.diag(gs.d).copy()
        self.w_, self.p_, self.q_ = gs.w, gs.p, gs.q
        self.b_ = np.diag(gs.b).copy()
        self.h_bar_ = gs.h_bar
        return self


class DistributedLeaderObserver(BaseEstimator):
    """Run the observer network and expose the estimates over time.

    ``fit(graph, leader)`` integrates the observers from zero initial
    estimates; ``predict(t)`` linearly interpolates the recorded estimates
    of the leader state, shape ``(len(t), N, m)``.
    """

    def __init__(self, mu1=80.0, mu2=60.0, d=None, step=1e-4, horizon=20.0,
                 record_stride=100, seed=0):
        self.mu1 = mu1
        self.mu2 = mu2
        self.d = d
        self.step = step
        self.horizon = horizon
        self.record_stride = record_stride
        self.seed = seed

    def fit(self, graph: AugmentedGraph, leader: LeaderParams):
        if not isinstance(graph, AugmentedGraph):
            raise TypeError("graph must be an AugmentedGraph")
        if not isinstance(leader, LeaderParams):
            raise TypeError("leader must be LeaderParams")
        d = self.d
        if d is None:
            d = GainSynthesizer(seed=self.seed).fit(graph).d_
        cfg = ScenarioConfig(graph=graph, leader=leader,
                             observer_gains=ObserverGains(self.mu1, self.mu2, d),
                             initial=InitialConditions(), horizon=self.horizon,
                             step=self.step, record_stride=self.record_stride,
                             seed=self.seed, mode="observer_only")
        res = integrate(cfg)
        self.result_ = res
        self.times_ = res.times
        self.eta_hat_ = res.snapshots["eta_hat"]
        self.omega_hat_ = res.snapshots["omega_hat"]
        self.e_hat_ = res.snapshots["e_hat"]
        return self

    def _interp(self, arr, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        flat = arr.reshape(arr.shape[0], -1)
        out = np.stack([np.interp(t, self.times_, col) for col in flat.T], axis=-1)
        return out.reshape((t.shape[0],) + arr.shape[1:])

    def predict(self, t):
        """Leader-state estimates at times ``t`` (within the fitted horizon)."""
        check_is_fitted(self, "times_")
        return self._interp(self.eta_hat_, t)

    def predict_frequencies(self, t):
        check_is_fitted(self, "times_")
        return self._interp(self.omega_hat_, t)

    def predict_output_matrix(self, t):
        check_is_fitted(self, "times_")
        return self._interp(self.e_hat_, t)
