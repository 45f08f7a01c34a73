"""Randomized property checks of the structural identities the package relies on."""
from __future__ import annotations

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coopobs.config import builtin_scenario, config_hash, normalize, parse_config
from coopobs.exceptions import ParseError, ValidationError
from coopobs.gains import certify, dh_spectrum_ok, synthesize_gains
from coopobs.graph import (
    AugmentedGraph,
    build_matrices,
    has_leader_spanning_tree,
    is_irreducible,
    is_nonsingular_m_matrix,
    random_leader_digraph,
)
from coopobs.leader import phi, phi_apply, phi_t_apply, propagate, s_apply, s_matrix
from coopobs.outputs import emit_csv
from coopobs.scenario import integrate
from coopobs.observer import (
    ObserverGains,
    ObserverState,
    consensus_errors,
    observer_rhs,
    output_error_rhs,
    stacked_error_rhs,
    vec,
)
from coopobs.plant import (
    BENCHMARK_THETAS,
    coriolis_matrix,
    forward_dynamics,
    inverse_dynamics,
    mass_matrix,
    mass_matrix_dot,
)

from conftest import BENCHMARK_D, BENCHMARK_H

# magnitudes below 1e-100 would underflow when squared
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False).map(
    lambda v: 0.0 if abs(v) < 1e-100 else v)
weights = st.sampled_from([0.0, 0.0, 0.5, 1.0, 2.0])
seeds = st.integers(0, 2**32 - 1)
FAST = settings(max_examples=60, deadline=None,
                suppress_health_check=[HealthCheck.too_slow])


def vectors(n):
    return arrays(float, n, elements=finite)


@st.composite
def digraphs(draw, max_n=5):
    n = draw(st.integers(1, max_n))
    a = np.array(draw(st.lists(weights, min_size=n * n, max_size=n * n))).reshape(n, n)
    np.fill_diagonal(a, 0.0)
    p = np.array(draw(st.lists(weights, min_size=n, max_size=n)))
    return AugmentedGraph(a, p)


@st.composite
def even_vectors(draw, max_blocks=4):
    ell = draw(st.integers(1, max_blocks))
    return draw(vectors(2 * ell))


# graph


@FAST
@given(digraphs())
def test_laplacian_rows_sum_to_zero(g):
    mats = build_matrices(g)
    np.testing.assert_array_equal(mats.laplacian.sum(axis=1), 0.0)


@FAST
@given(digraphs())
def test_spanning_tree_implies_m_matrix(g):
    h = build_matrices(g).h
    if has_leader_spanning_tree(g):
        assert is_nonsingular_m_matrix(h)
        inv = np.linalg.inv(h)
        assert inv.min() >= -1e-12 * np.abs(inv).max()
        if is_irreducible(h):
            assert inv.min() > 0


# gains


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(2, 5))
def test_random_graph_gains_certify(seed, n):
    g = random_leader_digraph(n, np.random.default_rng(seed))
    gs = synthesize_gains(build_matrices(g).h, seed=seed)
    assert all(certify(gs).values())
    np.testing.assert_allclose(gs.w @ gs.d @ gs.h, (gs.w @ gs.d @ gs.h).T, atol=1e-9)


@FAST
@given(st.floats(1e-2, 1e2))
def test_d_scaling_keeps_spectrum_certified(c):
    ok, lam = dh_spectrum_ok(c * BENCHMARK_D[:, None] * BENCHMARK_H)
    assert ok
    _, base = dh_spectrum_ok(BENCHMARK_D[:, None] * BENCHMARK_H)
    np.testing.assert_allclose(np.sort(lam), c * np.sort(base), rtol=1e-9)


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(2, 5))
def test_undirected_graph_identity_gains(seed, n):
    rng = np.random.default_rng(seed)
    a = np.triu(rng.uniform(0.2, 2.0, (n, n)) * (rng.random((n, n)) < 0.6), 1)
    a = a + a.T
    pins = rng.uniform(0.2, 2.0, n) * (rng.random(n) < 0.5)
    pins[rng.integers(n)] = 1.0
    g = AugmentedGraph(a, pins)
    h = build_matrices(g).h
    if not has_leader_spanning_tree(g) or not dh_spectrum_ok(h)[0]:
        return
    gs = synthesize_gains(h, d=np.ones(n), w=np.eye(n), b=np.ones(n))
    assert all(certify(gs).values())


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(2, 5))
def test_detailed_balanced_graph_left_null_vector_gains(seed, n):
    # xi_i a_ij = s_ij with s symmetric makes the graph detailed balanced
    rng = np.random.default_rng(seed)
    s = np.triu(rng.uniform(0.2, 2.0, (n, n)), 1)
    s = s + s.T
    xi = rng.uniform(0.2, 3.0, n)
    pins = np.zeros(n)
    pins[0] = 1.0
    g = AugmentedGraph(s / xi[:, None], pins)
    mats = build_matrices(g)
    lam, vecs = np.linalg.eig(mats.laplacian.T)
    left = np.real(vecs[:, np.argmin(np.abs(lam))])
    left = left / left.sum()
    np.testing.assert_allclose(left, xi / xi.sum(), rtol=1e-8)
    if not dh_spectrum_ok(left[:, None] * mats.h)[0]:
        return
    gs = synthesize_gains(mats.h, d=left, w=np.eye(n), b=np.ones(n))
    assert all(certify(gs).values())


# leader


@FAST
@given(even_vectors(), st.data())
def test_phi_regression_identity(x, data):
    w = data.draw(vectors(x.size // 2))
    np.testing.assert_allclose(s_apply(w, x), -phi(x).T @ w, atol=1e-12)
    np.testing.assert_allclose(s_matrix(w) @ x + phi(x).T @ w, 0.0, atol=1e-12)


@FAST
@given(even_vectors(), st.data(), finite, finite)
def test_phi_linear(x, data, a, b):
    y = data.draw(vectors(x.size))
    np.testing.assert_allclose(phi(a * x + b * y), a * phi(x) + b * phi(y), atol=1e-9)


@FAST
@given(even_vectors())
def test_phi_gram_is_block_amplitude_diagonal(x):
    gram = phi(x) @ phi(x).T
    np.testing.assert_array_equal(gram - np.diag(np.diag(gram)), 0.0)
    np.testing.assert_allclose(np.diag(gram), x[0::2] ** 2 + x[1::2] ** 2, rtol=1e-15)


@FAST
@given(arrays(float, (3, 4), elements=finite))
def test_stacked_phi_norm_bound(x):
    # block-diagonal stacking of phi over nodes
    blocks = [phi(row) for row in x]
    rows = sum(b.shape[0] for b in blocks)
    stacked = np.zeros((rows, x.size))
    for k, b in enumerate(blocks):
        stacked[2 * k:2 * k + 2, 4 * k:4 * k + 4] = b
    assert np.linalg.norm(stacked, 2) <= np.linalg.norm(x) * (1 + 1e-12)
    assert np.isclose(np.linalg.norm(stacked, "fro"), np.linalg.norm(x))


@FAST
@given(even_vectors(max_blocks=3), st.data())
def test_propagate_satisfies_ode(v0, data):
    omega = data.draw(arrays(float, v0.size // 2, elements=st.floats(0.1, 5)))
    t, h = data.draw(st.floats(0, 10)), 1e-4
    fd = (propagate(omega, v0, t + h) - propagate(omega, v0, t - h)) / (2 * h)
    exact = s_apply(omega, propagate(omega, v0, t))
    scale = np.abs(v0).max() * (1 + omega.max()) ** 3
    assert np.abs(fd - exact).max() <= 1e-6 * scale + 1e-9


# observer


@st.composite
def observer_snapshots(draw):
    n, m, n_out = 4, 6, 2
    arr = lambda shape: draw(arrays(float, shape, elements=finite))  # noqa: E731
    return dict(eta=arr((n, m)), omega_hat=arr((n, m // 2)), e_hat=arr((n, n_out, m)),
                v=arr(m), omega=arr(m // 2), e_true=arr((n_out, m)))


@FAST
@given(observer_snapshots(), st.floats(1.5, 200), st.floats(0.1, 200))
def test_three_observer_forms_agree(graph, snap, mu1, mu2):
    gains = ObserverGains(mu1, mu2, BENCHMARK_D)
    state = ObserverState(snap["eta"], snap["omega_hat"], snap["e_hat"])
    y = snap["e_true"] @ snap["v"]
    per_node = observer_rhs(state, snap["v"], y, graph, gains)
    # leader moves along S(omega) v, frequencies and output matrix are constant
    dv = s_apply(snap["omega"], snap["v"])
    deta, domega = stacked_error_rhs(snap["eta"] - snap["v"], snap["omega_hat"] - snap["omega"],
                                     snap["eta"], snap["omega"], BENCHMARK_D,
                                     BENCHMARK_H, mu1, mu2)
    scale = 1.0 + np.abs(per_node.eta).max() + np.abs(per_node.omega).max()
    np.testing.assert_allclose(deta, per_node.eta - dv, atol=1e-12 * scale * 1e3)
    np.testing.assert_allclose(domega, per_node.omega, atol=1e-12 * scale * 1e3)


@FAST
@given(observer_snapshots())
def test_output_error_vector_and_matrix_forms(graph, snap):
    zeta = vec(snap["e_hat"] - snap["e_true"])
    # raises when the vectorized and matrix forms disagree
    out = output_error_rhs(zeta, snap["eta"], snap["v"], snap["e_true"], graph,
                           BENCHMARK_D, rtol=1e-10)
    assert out.shape == zeta.shape


@FAST
@given(arrays(float, (4, 6), elements=finite), arrays(float, 3, elements=finite))
def test_skew_term_vanishes_in_quadratic_form(eta_tilde, omega):
    p = 0.5 * (BENCHMARK_H + BENCHMARK_H.T) + 3 * np.eye(4)
    val = np.sum(eta_tilde * (p @ s_apply(omega, eta_tilde)))
    assert abs(val) <= 1e-10 * (1 + np.abs(eta_tilde).max() ** 2 * (1 + np.abs(omega).max()))


@FAST
@given(arrays(float, (4, 6), elements=finite), arrays(float, 6, elements=finite))
def test_consensus_is_minus_h_times_error(graph, eta, v):
    np.testing.assert_allclose(consensus_errors(eta, v, graph), -BENCHMARK_H @ (eta - v),
                               atol=1e-11)


@FAST
@given(arrays(float, (5, 4), elements=finite), arrays(float, (5, 4), elements=finite),
       arrays(float, (5, 2), elements=finite))
def test_phi_batched_match_matrix(x, y, w):
    expect_y = np.stack([phi(r) @ c for r, c in zip(x, y)])
    expect_w = np.stack([phi(r).T @ c for r, c in zip(x, w)])
    np.testing.assert_allclose(phi_apply(x, y), expect_y, atol=1e-12)
    np.testing.assert_allclose(phi_t_apply(x, w), expect_w, atol=1e-12)


# plant

arm_index = st.integers(0, len(BENCHMARK_THETAS) - 1)
angles = arrays(float, 2, elements=st.floats(-2 * np.pi, 2 * np.pi))
rates = arrays(float, 2, elements=st.floats(-20, 20))


@FAST
@given(arm_index, angles)
def test_mass_matrix_spd(k, q):
    m = mass_matrix(BENCHMARK_THETAS[k], q)
    np.testing.assert_array_equal(m, m.T)
    assert np.linalg.eigvalsh(m)[0] > 0


@FAST
@given(arm_index, angles, rates, arrays(float, 2, elements=finite))
def test_mass_dot_minus_two_c_is_skew(k, q, qdot, x):
    theta = BENCHMARK_THETAS[k]
    n = mass_matrix_dot(theta, q, qdot) - 2 * coriolis_matrix(theta, q, qdot)
    assert abs(x @ n @ x) <= 1e-10 * (1 + np.abs(n).max()) * (1 + x @ x)


@FAST
@given(arm_index, angles, rates, arrays(float, 2, elements=finite))
def test_forward_inverse_dynamics_roundtrip(k, q, qdot, tau):
    theta = BENCHMARK_THETAS[k]
    qddot = forward_dynamics(theta, q, qdot, tau, 9.8)
    np.testing.assert_allclose(inverse_dynamics(theta, q, qdot, qddot, 9.8), tau,
                               atol=1e-12 * (1 + np.abs(qddot).max() + qdot @ qdot))


# configuration

json_leaf = st.one_of(st.none(), st.booleans(), st.integers(-5, 5),
                      st.floats(allow_nan=True), st.text(max_size=4))
json_tree = st.recursive(json_leaf, lambda kids: st.one_of(
    st.lists(kids, max_size=4), st.dictionaries(st.text(max_size=6), kids, max_size=4)),
    max_leaves=12)
SECTIONS = ["mode", "graph", "leader", "observer", "controller", "plants", "initial",
            "simulation", "seed", "linear_example", "lemma8"]


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.sampled_from(SECTIONS), json_tree, max_size=6))
def test_validation_is_total_on_random_documents(raw):
    try:
        parse_config(raw)
    except (ValidationError, ParseError):
        pass


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(SECTIONS), st.sampled_from(["graph", "leader", "observer", "plants",
                                                   "controller", "simulation", "initial"]),
       st.text(max_size=6), json_tree)
def test_validation_is_total_on_corrupted_benchmark(section, sub, key, value):
    raw = builtin_scenario("paper_sec5", as_dict=True)
    target = raw.setdefault(sub, {})
    if isinstance(target, dict):
        keys = list(target) or [key]
        target[keys[len(key) % len(keys)]] = value
    raw[section] = raw.get(section) if section != sub else target
    try:
        parse_config(raw)
    except (ValidationError, ParseError):
        pass


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.5, 500), st.floats(0.1, 500))
def test_config_hash_stable_and_sensitive(seed, mu1, mu2):
    raw = builtin_scenario("paper_sec5", as_dict=True)
    raw["seed"] = seed
    raw["observer"]["mu1"], raw["observer"]["mu2"] = mu1, mu2
    cfg = parse_config(raw)
    assert config_hash(cfg) == config_hash(parse_config(raw))
    assert config_hash(parse_config(normalize(cfg))) == config_hash(cfg)
    raw["observer"]["mu1"] = mu1 + 1.0
    assert config_hash(parse_config(raw)) != config_hash(cfg)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 20))
def test_csv_rerun_is_byte_identical(tmp_path_factory, seed, n_steps):
    cfg = builtin_scenario("paper_sec5").with_overrides(seed=seed, horizon=n_steps * 1e-4,
                                                        record_stride=3)
    out = tmp_path_factory.mktemp("csv")
    a = emit_csv(integrate(cfg), out / "a.csv")
    b = emit_csv(integrate(cfg), out / "b.csv")
    assert a.read_bytes() == b.read_bytes()
