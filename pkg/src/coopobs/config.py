"""Scenario files: parsing, total validation, built-in scenarios, hashing.

A scenario is a YAML (or JSON) mapping::

    name: my_run
    mode: closed_loop            # observer_only | closed_loop | linear_example | lemma8
    seed: 0
    simulation: {horizon: 20.0, step: 1.0e-4, record_stride: 100, track_lyapunov: false}
    graph:
      adjacency: [0, 0, 0, 1, ...]   # row-major N*N, a_ij > 0 means j feeds i
      pinning: [1, 0, 0, 0]          # leader weights a_i0
    leader:
      omega: [10, 20, 30]
      output_matrix: [[1, 0, 2, 0, 3, 0], [0, 3, 0, 2, 0, 1]]
      v0: [2, 0.6, 2, 0.8, 2, 1]
    observer: {mu1: 80, mu2: 60, d: [1, 2, 3, 4]}   # d optional (synthesized)
    controller: {k: [[0.5, 0], [0, 0.5]], alpha: 0.5}  # k shared or one per node
    plants: {gravity: 9.8, theta: [[...5 values...], ...]}   # gravity scalar or one per node
    initial: {eta: ..., omega: ..., e_hat: ..., q: ..., qdot: ...}   # all optional
    linear_example: {a_o: ..., b_o: ..., q_o: ..., r_o: ..., x0: ..., leader_x0: ...}
    lemma8: {a_a: ..., p_a: ..., y: ..., kappa: 1.0, psi: leader_phi, x0: ..., z0: ...}

Every violation is collected and reported together as
``ValidationError.errors``, a list of ``(field_path, message)`` pairs.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import numpy as np
import yaml

from .controller import ControllerGains
from .exceptions import ParseError, ValidationError
from .gains import synthesize_d
from .graph import AugmentedGraph, build_matrices, has_leader_spanning_tree
from .leader import LeaderParams
from .observer import ObserverGains
from .plant import BENCHMARK_THETAS, GRAVITY, TwoLinkParams
from .scenario import MODES, InitialConditions, ScenarioConfig

__all__ = [
    "BUILTIN_SCENARIOS",
    "builtin_scenario",
    "load_config",
    "parse_config",
    "config_hash",
    "normalize",
]

# four two-link arms on a directed ring-with-chords, leader feeding arm 1
_BENCHMARK = {
    "name": "paper_sec5",
    "mode": "closed_loop",
    "seed": 0,
    "simulation": {"horizon": 20.0, "step": 1e-4, "record_stride": 100,
                   "track_lyapunov": False},
    "graph": {
        "adjacency": [0, 0, 0, 1,
                      1, 0, 1, 0,
                      0, 1, 0, 0,
                      0, 1, 1, 0],
        "pinning": [1, 0, 0, 0],
    },
    "leader": {
        "omega": [10.0, 20.0, 30.0],
        "output_matrix": [[1, 0, 2, 0, 3, 0], [0, 3, 0, 2, 0, 1]],
        "v0": [2.0, 0.6, 2.0, 0.8, 2.0, 1.0],
    },
    "observer": {"mu1": 80.0, "mu2": 60.0, "d": [1.0, 2.0, 3.0, 4.0]},
    "controller": {"k": [[0.5, 0.0], [0.0, 0.5]], "alpha": 0.5},
    "plants": {"gravity": GRAVITY, "theta": [list(t) for t in BENCHMARK_THETAS]},
}

BUILTIN_SCENARIOS = {"paper_sec5": _BENCHMARK}


def builtin_scenario(name, as_dict=False):
    """A built-in scenario as a validated config (or its raw mapping)."""
    if name not in BUILTIN_SCENARIOS:
        raise ValidationError([("scenario", f"unknown built-in scenario {name!r}; "
                                f"choose from {sorted(BUILTIN_SCENARIOS)}")])
    raw = copy.deepcopy(BUILTIN_SCENARIOS[name])
    return raw if as_dict else parse_config(raw)


def load_config(path):
    """Read and validate a scenario file (YAML or JSON).

    Raises
    ------
    ParseError
        The file cannot be read or is not a mapping.
    ValidationError
        One or more fields are invalid; all problems are listed.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    return parse_config(raw)


class _Collector:
    def __init__(self):
        self.errors = []

    def add(self, path, msg):
        self.errors.append((path, msg))

    def array(self, section, key, path, ndim=None, shape=None, required=True):
        """Fetch a numeric array, recording problems instead of raising."""
        if not isinstance(section, dict) or key not in section or section[key] is None:
            if required:
                self.add(path, "missing")
            return None
        try:
            a = np.asarray(section[key], dtype=float)
        except (TypeError, ValueError):
            self.add(path, "must be numeric")
            return None
        if not np.all(np.isfinite(a)):
            self.add(path, "must be finite")
            return None
        if ndim is not None and a.ndim != ndim:
            self.add(path, f"expected {ndim}-D array, got shape {a.shape}")
            return None
        if shape is not None and a.shape != tuple(shape):
            self.add(path, f"expected shape {tuple(shape)}, got {a.shape}")
            return None
        return a

    def number(self, section, key, path, default=None, positive=False, integer=False):
        val = section.get(key, default) if isinstance(section, dict) else default
        if val is None:
            self.add(path, "missing")
            return None
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.add(path, f"must be a number, got {val!r}")
            return None
        if integer and int(val) != val:
            self.add(path, "must be an integer")
            return None
        if not np.isfinite(val):
            self.add(path, "must be finite")
            return None
        if positive and not val > 0:
            self.add(path, f"must be positive, got {val}")
            return None
        return int(val) if integer else float(val)


def _section(raw, key, col, required=False):
    sec = raw.get(key)
    if sec is None:
        if required:
            col.add(key, "missing section")
        return {}
    if not isinstance(sec, dict):
        col.add(key, "must be a mapping")
        return {}
    return sec


def _graph(raw, col):
    sec = _section(raw, "graph", col, required=True)
    adj = col.array(sec, "adjacency", "graph.adjacency")
    pin = col.array(sec, "pinning", "graph.pinning", ndim=1)
    if adj is None or pin is None:
        return None
    n = pin.shape[0]
    declared = sec.get("n_followers")
    if declared is not None and declared != n:
        col.add("graph.n_followers", f"declares {declared} followers, pinning has {n}")
    if adj.ndim == 1:
        if adj.size != n * n:
            col.add("graph.adjacency", f"needs {n * n} row-major entries, got {adj.size}")
            return None
        adj = adj.reshape(n, n)
    if adj.shape != (n, n):
        col.add("graph.adjacency", f"expected shape {(n, n)}, got {adj.shape}")
        return None
    bad = False
    if np.any(adj < 0):
        col.add("graph.adjacency", "weights must be nonnegative")
        bad = True
    if np.any(np.diag(adj) != 0):
        col.add("graph.adjacency", "diagonal (self loops) must be zero")
        bad = True
    if np.any(pin < 0):
        col.add("graph.pinning", "weights must be nonnegative")
        bad = True
    if bad:
        return None
    g = AugmentedGraph(adj, pin)
    if not has_leader_spanning_tree(g):
        col.add("graph", "some follower is not reachable from the leader")
    return g


def _leader(raw, col):
    sec = _section(raw, "leader", col, required=True)
    omega = col.array(sec, "omega", "leader.omega", ndim=1)
    e_out = col.array(sec, "output_matrix", "leader.output_matrix", ndim=2)
    v0 = col.array(sec, "v0", "leader.v0", ndim=1)
    if omega is None or e_out is None or v0 is None:
        return None
    ok = True
    if v0.size != 2 * omega.size:
        col.add("leader.v0", f"needs {2 * omega.size} entries for {omega.size} frequencies")
        ok = False
    if e_out.shape[1] != v0.size:
        col.add("leader.output_matrix", f"needs {v0.size} columns, got {e_out.shape[1]}")
        ok = False
    return LeaderParams(omega, e_out, v0) if ok else None


def _observer(raw, col, graph, seed):
    sec = _section(raw, "observer", col)
    mu1 = col.number(sec, "mu1", "observer.mu1", default=80.0)
    mu2 = col.number(sec, "mu2", "observer.mu2", default=60.0, positive=True)
    if mu1 is not None and not mu1 > 1:
        col.add("observer.mu1", f"must exceed 1, got {mu1}")
        mu1 = None
    d = col.array(sec, "d", "observer.d", ndim=1, required=False)
    if d is not None:
        if graph is not None and d.size != graph.n_followers:
            col.add("observer.d", f"needs {graph.n_followers} entries, got {d.size}")
            d = None
        elif np.any(d <= 0):
            col.add("observer.d", "entries must be positive")
            d = None
    elif graph is not None and "d" not in sec:
        try:
            d = synthesize_d(build_matrices(graph).h, seed=seed)
        except Exception as exc:  # noqa: BLE001 - reported as a field error
            col.add("observer.d", f"could not be synthesized: {exc}")
    if mu1 is None or mu2 is None or d is None:
        return None
    return ObserverGains(mu1, mu2, d)


def _controller(raw, col, n):
    sec = _section(raw, "controller", col)
    alpha = col.array(sec, "alpha", "controller.alpha", required=False)
    k = col.array(sec, "k", "controller.k", required=False)
    if n is None:
        return None
    alphas = np.full(n, 0.5) if alpha is None else np.broadcast_to(alpha, (n,)) \
        if alpha.ndim == 0 or alpha.shape == (n,) else None
    if alphas is None:
        col.add("controller.alpha", f"must be a scalar or {n} values")
    ks = np.broadcast_to(0.5 * np.eye(2), (n, 2, 2)) if k is None else None
    if k is not None:
        if k.shape == (2, 2):
            ks = np.broadcast_to(k, (n, 2, 2))
        elif k.shape == (n, 2, 2):
            ks = k
        else:
            col.add("controller.k", f"must be 2x2 or {n}x2x2, got shape {k.shape}")
    if ks is None or alphas is None:
        return None
    out = []
    for i in range(n):
        path = "controller.k" if k is None or k.ndim == 2 else f"controller.k[{i}]"
        try:
            out.append(ControllerGains(ks[i], float(alphas[i])))
        except ValueError as exc:
            where = "controller.alpha" if "alpha" in str(exc) else path
            if (where, str(exc)) not in col.errors:
                col.add(where, str(exc))
    return out if len(out) == n else None


def _plants(raw, col, n, required):
    sec = _section(raw, "plants", col, required=required)
    if not sec:
        return []
    grav_raw = sec.get("gravity", GRAVITY)
    if isinstance(grav_raw, (list, tuple)):
        grav = None
        if n is not None and len(grav_raw) != n:
            col.add("plants.gravity", f"expected one value or {n} values, got {len(grav_raw)}")
        else:
            grav = [col.number({"g": g}, "g", f"plants.gravity[{i}]")
                    for i, g in enumerate(grav_raw)]
            grav = None if None in grav else grav
    else:
        grav = col.number(sec, "gravity", "plants.gravity", default=GRAVITY)
    theta = col.array(sec, "theta", "plants.theta", ndim=2, required=required)
    if theta is None or grav is None or n is None:
        return []
    if theta.shape != (n, 5):
        col.add("plants.theta", f"expected shape {(n, 5)}, got {theta.shape}")
        return []
    plants = []
    for i in range(n):
        p = TwoLinkParams(theta[i], grav[i] if isinstance(grav, list) else grav)
        if not p.mass_is_pd():
            col.add(f"plants.theta[{i}]", "inertia matrix is not positive definite")
        plants.append(p)
    return plants


def _initial(raw, col, n, leader):
    sec = _section(raw, "initial", col)
    if n is None or leader is None:
        return InitialConditions()
    m, ell, n_out = leader.m, leader.ell, leader.n_out
    shapes = {"eta": (n, m), "omega": (n, ell), "e_hat": (n, n_out, m),
              "q": (n, 2), "qdot": (n, 2)}
    vals = {}
    for key, shape in shapes.items():
        a = col.array(sec, key, f"initial.{key}", required=False)
        if a is None:
            continue
        try:
            vals[key] = np.broadcast_to(a, shape).copy()
        except ValueError:
            col.add(f"initial.{key}", f"cannot broadcast shape {a.shape} to {shape}")
    return InitialConditions(**vals)


def _extras(raw, col, mode, leader=None, n=None):
    if mode not in ("linear_example", "lemma8"):
        return {}
    sec = _section(raw, mode, col, required=True)
    out = {}
    for key, val in sec.items():
        if isinstance(val, str):
            out[key] = val
            continue
        try:
            out[key] = np.asarray(val, dtype=float) if isinstance(val, list) else val
        except (TypeError, ValueError):
            col.add(f"{mode}.{key}", "must be numeric")
    needed = ("a_o", "b_o", "q_o", "r_o") if mode == "linear_example" else ("a_a",)
    missing = [key for key in needed if key not in out]
    for key in missing:
        col.add(f"{mode}.{key}", "missing")
    if not missing:
        _extras_shapes(out, col, mode, leader, n)
    return out


def _square(col, path, a, size=None):
    a = np.atleast_2d(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or (size is not None and a.shape[0] != size):
        want = f"({size}, {size})" if size is not None else "square"
        col.add(path, f"expected {want}, got shape {a.shape}")
        return None
    return a.shape[0]


def _extras_shapes(ex, col, mode, leader, n):
    if mode == "linear_example":
        dim = _square(col, "linear_example.a_o", ex["a_o"])
        if dim is None:
            return
        b = np.atleast_2d(ex["b_o"])
        b = b.reshape(dim, -1) if b.size % dim == 0 else b
        if b.shape[0] != dim:
            col.add("linear_example.b_o", f"needs {dim} rows, got shape {b.shape}")
            return
        _square(col, "linear_example.q_o", ex["q_o"], dim)
        _square(col, "linear_example.r_o", ex["r_o"], b.shape[1])
        if "x0" in ex and n is not None and np.size(ex["x0"]) != n * dim:
            col.add("linear_example.x0", f"needs {n * dim} values, got {np.size(ex['x0'])}")
        if "leader_x0" in ex and np.size(ex["leader_x0"]) != dim:
            col.add("linear_example.leader_x0", f"needs {dim} values")
        return
    dim = _square(col, "lemma8.a_a", ex["a_a"])
    if dim is None:
        return
    if "p_a" in ex:
        _square(col, "lemma8.p_a", ex["p_a"], dim)
    if "y" in ex:
        _square(col, "lemma8.y", ex["y"])
    psi = ex.get("psi", "leader_phi")
    if isinstance(psi, str):
        if psi != "leader_phi":
            col.add("lemma8.psi", f"must be 'leader_phi' or a matrix, got {psi!r}")
        elif leader is not None and leader.m != dim:
            col.add("lemma8.a_a", f"leader_phi has {leader.m} columns, a_a is {dim}x{dim}")
    elif np.atleast_2d(psi).shape[1] != dim:
        col.add("lemma8.psi", f"needs {dim} columns, got shape {np.atleast_2d(psi).shape}")


def parse_config(raw) -> ScenarioConfig:
    """Validate a raw mapping and build a :class:`ScenarioConfig`."""
    if not isinstance(raw, dict):
        raise ParseError("scenario must be a mapping")
    col = _Collector()
    known = {"name", "mode", "seed", "simulation", "graph", "leader", "observer",
             "controller", "plants", "initial", "linear_example", "lemma8"}
    for key in raw:
        if key not in known:
            col.add(str(key), "unknown field")
    mode = raw.get("mode", "observer_only")
    if mode not in MODES:
        col.add("mode", f"must be one of {list(MODES)}, got {mode!r}")
        mode = "observer_only"
    seed = col.number(raw, "seed", "seed", default=0, integer=True)
    sim = _section(raw, "simulation", col)
    step = col.number(sim, "step", "simulation.step", default=1e-4, positive=True)
    horizon = col.number(sim, "horizon", "simulation.horizon", default=20.0, positive=True)
    stride = col.number(sim, "record_stride", "simulation.record_stride", default=100,
                        positive=True, integer=True)
    track = sim.get("track_lyapunov", False)
    if not isinstance(track, bool):
        col.add("simulation.track_lyapunov", "must be true or false")
    if step is not None and horizon is not None and horizon < step:
        col.add("simulation.horizon", f"must be at least one step ({step})")

    graph = _graph(raw, col)
    n = graph.n_followers if graph is not None else None
    leader = _leader(raw, col)
    obs = _observer(raw, col, graph, seed or 0)
    closed = mode == "closed_loop"
    ctrl = _controller(raw, col, n)
    plants = _plants(raw, col, n, required=closed)
    if closed and leader is not None and leader.n_out != 2:
        col.add("leader.output_matrix", "closed loop needs two output rows (two joints)")
    initial = _initial(raw, col, n, leader)
    extras = _extras(raw, col, mode, leader, n)
    if col.errors:
        raise ValidationError(col.errors)
    return ScenarioConfig(graph=graph, leader=leader, observer_gains=obs,
                          controller_gains=ctrl or [], plants=plants, initial=initial,
                          horizon=horizon, step=step, record_stride=stride, seed=seed,
                          mode=mode, name=str(raw.get("name", "custom")),
                          track_lyapunov=bool(track), extras=extras)


def _plain(x):
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    return x


def normalize(cfg: ScenarioConfig) -> dict:
    """Canonical mapping of a validated config (every default made explicit)."""
    init = cfg.initial
    out = {
        "name": cfg.name,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "simulation": {"horizon": cfg.horizon, "step": cfg.step,
                       "record_stride": int(cfg.record_stride),
                       "track_lyapunov": cfg.track_lyapunov},
        "graph": {"adjacency": cfg.graph.adjacency.ravel(), "pinning": cfg.graph.pinning},
        "leader": {"omega": cfg.leader.omega, "output_matrix": cfg.leader.e_out,
                   "v0": cfg.leader.v0},
        "observer": {"mu1": cfg.observer_gains.mu1, "mu2": cfg.observer_gains.mu2,
                     "d": cfg.observer_gains.d},
        "initial": {k: getattr(init, k) for k in ("eta", "omega", "e_hat", "q", "qdot")
                    if getattr(init, k) is not None},
    }
    if cfg.controller_gains:
        out["controller"] = {"k": [g.k for g in cfg.controller_gains],
                             "alpha": [g.alpha for g in cfg.controller_gains]}
    if cfg.plants:
        out["plants"] = {"gravity": [p.gravity for p in cfg.plants],
                         "theta": [p.theta for p in cfg.plants]}
    if cfg.extras:
        out[cfg.mode] = dict(cfg.extras)
    return _plain(out)


def config_hash(cfg: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form; stable across reruns and processes."""
    text = json.dumps(normalize(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
