from __future__ import annotations

import numpy as np
import pytest

from coopobs.exceptions import SingularMass
from coopobs.plant import (
    BENCHMARK_THETAS,
    GRAVITY,
    TwoLinkParams,
    coriolis_matrix,
    forward_dynamics,
    gravity_vector,
    inverse_dynamics,
    kinetic_energy,
    mass_matrix,
    mass_matrix_dot,
)
from coopobs.rk4 import rk4_solve


@pytest.fixture(params=range(4))
def arm(request):
    return TwoLinkParams(BENCHMARK_THETAS[request.param])


def test_reference_thetas():
    assert BENCHMARK_THETAS[0] == (0.64, 1.10, 0.08, 0.64, 0.32)
    assert BENCHMARK_THETAS[3] == (1.10, 1.36, 0.32, 1.67, 0.73)
    assert GRAVITY == 9.8


def test_mass_matrix_closed_form():
    th = TwoLinkParams([1.0, 0.5, 0.2, 0.0, 0.0])
    m = mass_matrix(th, [0.0, 0.0])
    np.testing.assert_allclose(m, [[1.9, 0.7], [0.7, 0.5]])
    m = mass_matrix(th, [0.3, np.pi / 2])
    np.testing.assert_allclose(m, [[1.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_mass_pd_and_symmetric(arm, rng):
    q = rng.uniform(-np.pi, np.pi, size=(1000, 2))
    m = mass_matrix(arm, q)
    np.testing.assert_array_equal(m, np.swapaxes(m, 1, 2))
    assert np.linalg.eigvalsh(m).min() > 0
    assert arm.mass_is_pd()


def test_mass_dot_finite_difference(arm, rng):
    for _ in range(20):
        q, qd = rng.normal(size=2), rng.normal(size=2)
        eps = 1e-6
        fd = (mass_matrix(arm, q + eps * qd) - mass_matrix(arm, q - eps * qd)) / (2 * eps)
        np.testing.assert_allclose(mass_matrix_dot(arm, q, qd), fd, atol=1e-8)


def test_skew_symmetry(arm, rng):
    q = rng.normal(size=(500, 2))
    qd = rng.normal(size=(500, 2))
    x = rng.normal(size=(500, 2))
    n = mass_matrix_dot(arm, q, qd) - 2 * coriolis_matrix(arm, q, qd)
    np.testing.assert_allclose(n, -np.swapaxes(n, 1, 2), atol=1e-14)
    assert np.abs(np.einsum("ki,kij,kj->k", x, n, x)).max() < 1e-10


def test_gravity_at_rest():
    th = TwoLinkParams([1.0, 1.0, 0.1, 2.0, 3.0])
    np.testing.assert_allclose(gravity_vector(th, [0.0, 0.0]), [5 * GRAVITY, 3 * GRAVITY])
    np.testing.assert_allclose(gravity_vector(th, [np.pi / 2, 0.0]), [0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(gravity_vector(th, [0.0, 0.0], gravity=0.0), [0.0, 0.0])


def test_per_node_gravity():
    thetas = np.array(BENCHMARK_THETAS)
    g = np.array([9.8, 0.0, 1.0, 9.8])
    out = gravity_vector(thetas, np.zeros((4, 2)), g)
    np.testing.assert_allclose(out[1], 0.0)
    np.testing.assert_allclose(out[0], gravity_vector(thetas[0], np.zeros(2)))


def test_forward_inverse_roundtrip(arm, rng):
    for _ in range(20):
        q, qd, qdd = rng.normal(size=(3, 2))
        tau = inverse_dynamics(arm, q, qd, qdd)
        np.testing.assert_allclose(forward_dynamics(arm, q, qd, tau), qdd, atol=1e-11)


def test_energy_conserved_under_gravity_compensation(arm):
    # tau = G leaves kinetic energy as a first integral
    def rhs(t, x):
        q, qd = x[:2], x[2:]
        return np.concatenate([qd, forward_dynamics(arm, q, qd, gravity_vector(arm, q))])

    x0 = np.array([0.2, -0.4, 1.5, -0.7])
    _, states = rk4_solve(rhs, x0, 1e-3, 2000, record_stride=2000)
    e0 = kinetic_energy(arm, x0[:2], x0[2:])
    e1 = kinetic_energy(arm, states[-1, :2], states[-1, 2:])
    assert e1 == pytest.approx(e0, rel=1e-9)


def test_singular_mass_raises():
    th = TwoLinkParams([0.0, 0.0, 0.0, 0.0, 0.0])
    assert not th.mass_is_pd()
    with pytest.raises(SingularMass):
        forward_dynamics(th, [0.0, 0.0], [0.0, 0.0], [1.0, 1.0])


def test_mass_is_pd_exact_boundary():
    # det M = a1 a2 - a3^2 cos^2 q2 vanishes at cos q2 = 1 when a1 a2 = a3^2
    assert not TwoLinkParams([1.0, 1.0, 1.0, 0.0, 0.0]).mass_is_pd()
    assert TwoLinkParams([1.0, 1.0, 0.99, 0.0, 0.0]).mass_is_pd()


@pytest.mark.parametrize("theta", [[1.0, 2.0], [1, 1, 1, 1, np.nan]])
def test_theta_validation(theta):
    with pytest.raises(ValueError):
        TwoLinkParams(theta)
