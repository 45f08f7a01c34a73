"""Distributed adaptive observers and cooperative tracking for Euler-Lagrange arms."""

from .exceptions import *  # noqa: F401,F403
from .gains import GainSet, certify, synthesize_d, synthesize_gains, synthesize_w, synthesize_b
from .graph import AugmentedGraph, build_matrices, has_leader_spanning_tree, benchmark_graph
from .leader import LeaderParams
from .observer import ObserverGains, ObserverState, mu1_lower_bound
from .plant import TwoLinkParams
from .controller import ControllerGains
from .scenario import InitialConditions, ScenarioConfig, SimResult, integrate
from .metrics import fit_exponential_rate, metrics
from .harness import run_lemma8, run_linear_example, solve_riccati
from .estimators import DistributedLeaderObserver, GainSynthesizer

__version__ = "0.1.0"

__all__ = [
    "AugmentedGraph", "build_matrices", "has_leader_spanning_tree", "benchmark_graph",
    "GainSet", "certify", "synthesize_d", "synthesize_w", "synthesize_b", "synthesize_gains",
    "LeaderParams", "ObserverGains", "ObserverState", "mu1_lower_bound", "TwoLinkParams",
    "ControllerGains", "InitialConditions", "ScenarioConfig", "SimResult", "integrate",
    "fit_exponential_rate", "metrics", "run_lemma8", "run_linear_example", "solve_riccati",
    "DistributedLeaderObserver", "GainSynthesizer",
]
