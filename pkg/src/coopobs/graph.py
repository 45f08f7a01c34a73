"""Leader-pinned communication digraphs and their M-matrix structure.

Convention: ``adjacency[i, j] > 0`` means follower ``i`` receives from
follower ``j`` (an edge j -> i). ``pinning[i] > 0`` means follower ``i``
receives from the leader (node 0).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch

__all__ = [
    "AugmentedGraph",
    "GraphMatrices",
    "build_matrices",
    "has_leader_spanning_tree",
    "is_nonsingular_m_matrix",
    "is_irreducible",
    "random_leader_digraph",
    "benchmark_graph",
]


@dataclass(frozen=True)
class AugmentedGraph:
    """Follower digraph plus leader pinning weights."""

    adjacency: np.ndarray
    pinning: np.ndarray

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        p = np.array(self.pinning, dtype=float).reshape(-1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"adjacency must be square, got shape {a.shape}")
        if p.shape[0] != a.shape[0]:
            raise DimensionMismatch(
                f"pinning has {p.shape[0]} entries for {a.shape[0]} followers"
            )
        if a.shape[0] == 0:
            raise ValueError("graph needs at least one follower")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(p))):
            raise ValueError("graph weights must be finite")
        if np.any(a < 0) or np.any(p < 0):
            raise ValueError("graph weights must be nonnegative")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        a.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "pinning", p)

    @property
    def n_followers(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> list[int]:
        """In-neighbors of follower ``i`` (0-based), leader excluded."""
        return [int(j) for j in np.flatnonzero(self.adjacency[i] > 0)]

    @classmethod
    def from_edges(cls, n, edges, pinned, weight=1.0):
        """Build from 1-based ``(src, dst)`` follower edges and pinned followers.

        Edge ``(j, i)`` means information flows from j to i, so it sets
        ``a_ij``. ``pinned`` lists the 1-based followers the leader feeds.
        """
        a = np.zeros((n, n))
        for src, dst in edges:
            a[dst - 1, src - 1] = weight
        p = np.zeros(n)
        for i in pinned:
            p[i - 1] = weight
        return cls(a, p)


@dataclass(frozen=True)
class GraphMatrices:
    laplacian: np.ndarray
    pinning_diag: np.ndarray
    h: np.ndarray


def build_matrices(g: AugmentedGraph) -> GraphMatrices:
    """Return the Laplacian ``L``, pinning matrix ``G`` and ``H = L + G``."""
    lap = np.diag(g.adjacency.sum(axis=1)) - g.adjacency
    pin = np.diag(g.pinning)
    return GraphMatrices(laplacian=lap, pinning_diag=pin, h=lap + pin)


def has_leader_spanning_tree(g: AugmentedGraph) -> bool:
    """True iff every follower is reachable from the leader."""
    n = g.n_followers
    seen = np.zeros(n, dtype=bool)
    queue = deque(int(i) for i in np.flatnonzero(g.pinning > 0))
    seen[list(queue)] = True
    while queue:
        j = queue.popleft()
        # followers listening to j
        for i in np.flatnonzero(g.adjacency[:, j] > 0):
            if not seen[i]:
                seen[i] = True
                queue.append(int(i))
    return bool(seen.all())


def is_nonsingular_m_matrix(a, tol=1e-9) -> bool:
    """Check the sign pattern and positive-real-part spectrum of ``a``.

    Eigenvalue real parts must exceed ``tol * ||a||_1``, so singular
    M-matrices (a zero eigenvalue) are reported as not nonsingular.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    off = a - np.diag(np.diag(a))
    if np.any(off > 0) or np.any(np.diag(a) <= 0):
        return False
    scale = max(np.linalg.norm(a, 1), np.finfo(float).tiny)
    return bool(np.all(np.linalg.eigvals(a).real > tol * scale))


def is_irreducible(a) -> bool:
    """Strong connectivity of the directed pattern of nonzero off-diagonals."""
    a = np.asarray(a)
    n = a.shape[0]
    pattern = (a != 0) & ~np.eye(n, dtype=bool)
    for adj in (pattern, pattern.T):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            k = stack.pop()
            for nxt in np.flatnonzero(adj[k]):
                if not seen[nxt]:
                    seen[nxt] = True
                    stack.append(int(nxt))
        if not seen.all():
            return False
    return True


def random_leader_digraph(n, rng, edge_prob=0.35, weights=(0.2, 2.0)):
    """Random weighted digraph in which the leader spans every follower.

    A random arborescence rooted at the leader guarantees the spanning tree;
    extra edges are then sprinkled with probability ``edge_prob``.
    """
    lo, hi = weights
    order = rng.permutation(n)
    a = np.zeros((n, n))
    p = np.zeros(n)
    p[order[0]] = rng.uniform(lo, hi)
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        a[order[k], parent] = rng.uniform(lo, hi)
    extra = (rng.random((n, n)) < edge_prob) & (a == 0)
    np.fill_diagonal(extra, False)
    a[extra] = rng.uniform(lo, hi, size=int(extra.sum()))
    more_pins = (rng.random(n) < edge_prob / 2) & (p == 0)
    p[more_pins] = rng.uniform(lo, hi, size=int(more_pins.sum()))
    return AugmentedGraph(a, p)


def benchmark_graph() -> AugmentedGraph:
    """Four-follower benchmark topology with unit weights.

    Leader -> 1, and follower edges 1->2, 3->2, 2->3, 2->4, 3->4, 4->1.
    """
    return AugmentedGraph.from_edges(
        4,
        edges=[(1, 2), (3, 2), (2, 3), (2, 4), (3, 4), (4, 1)],
        pinned=[1],
    )
