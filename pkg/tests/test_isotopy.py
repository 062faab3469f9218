import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoferlab.isotopy import (ComposedIsotopy, InverseIsotopy, Rotation, ScalarFamily, compose_pointwise,
                              conjugate, conjugated_hamiltonian, contract_omega, flow, identity,
                              make_explicit, make_hamiltonian, make_rotation, omega_matrix, sharp_omega,
                              invert, symplectic_residual, velocity_consistency)
from hoferlab.torus import GridSpec, wrap_delta


def shear(grid, eps, steps):
    # F = eps/(2 pi) sin(2 pi theta_2): X = (eps cos(2 pi theta_2), 0), flow is exact in closed form
    return make_hamiltonian(grid.sample(lambda x, y: eps * np.sin(2 * np.pi * y) / (2 * np.pi)), steps)


@pytest.fixture(scope="module")
def grid():
    return GridSpec(1, 32)


def test_omega_contraction_and_sharp_are_inverse():
    rng = np.random.default_rng(0)
    for n in (1, 2):
        X = rng.normal(size=(5, 2 * n))
        assert np.allclose(sharp_omega(contract_omega(X, n), n), X)
    # i(X) omega with omega = dtheta_1 ^ dtheta_2 is (-X_2, X_1)
    assert np.allclose(contract_omega(np.array([[0.3, 0.4]]), 1), [[-0.4, 0.3]])
    W = omega_matrix(2)
    assert np.allclose(W, -W.T)


def test_hamiltonian_vector_field_on_t2(grid):
    F = grid.sample(lambda x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) / (2 * np.pi))
    iso = make_hamiltonian(F, 10)
    p = np.random.default_rng(1).random((7, 2))
    X = iso.velocity(0.0, p)
    x, y = p.T
    # X = (dF/dtheta_2, -dF/dtheta_1)
    assert np.allclose(X[:, 0], -np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y), atol=1e-12)
    assert np.allclose(X[:, 1], -np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y), atol=1e-12)


def test_rotation_flow_is_exact():
    g = GridSpec(1, 16)
    rho = make_rotation(g, [0.3, -0.45], 10)
    p = np.array([[0.9, 0.2]])
    assert np.allclose(rho.flow(0.5, p), p + 0.5 * np.array([0.3, -0.45]))
    assert np.allclose(flow(rho, 1.0, p[0]), np.mod(p[0] + [0.3, -0.45], 1.0))
    assert rho.autonomous and not rho.is_identity
    assert identity(g).is_identity


def test_shear_matches_closed_form(grid):
    iso = shear(grid, 0.1, 20)
    p = np.random.default_rng(2).random((50, 2))
    exact = p + np.stack([0.1 * np.cos(2 * np.pi * p[:, 1]), np.zeros(50)], axis=1)
    assert np.abs(iso.flow(1.0, p) - exact).max() < 1e-12


def test_flow_inverse_round_trip(grid):
    F = grid.sample(lambda x, y: 0.04 * np.sin(2 * np.pi * (x + y)) + 0.03 * np.cos(2 * np.pi * (x - 2 * y)))
    p = np.random.default_rng(3).random((30, 2))
    errs = []
    for T in (40, 80):
        iso = make_hamiltonian(ScalarFamily(grid, lambda t: F * (1 + t)), T)
        assert np.array_equal(iso.flow(0.0, p), p)
        errs.append(max(np.abs(iso.inverse_flow(t, iso.flow(t, p)) - p).max() for t in (0.35, 1.0)))
    # forward and backward RK4 differ by the O(h^4) truncation error
    assert errs[0] < 1e-5
    assert errs[0] / errs[1] > 12


def test_grid_pass_agrees_with_direct_integration(grid):
    F = grid.sample(lambda x, y: 0.05 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
    iso = make_hamiltonian(F, 20)
    nodes = grid.points_flat
    cached = iso.flow(1.0, nodes)
    fresh = make_hamiltonian(F, 20).flow(1.0, nodes + 1e-13)
    assert np.abs(cached - fresh).max() < 1e-10


def test_tangent_jacobian_matches_finite_differences():
    errs = []
    for N in (32, 64):
        g = GridSpec(1, N)
        m = make_hamiltonian(g.sample(lambda x, y: 0.03 * np.cos(2 * np.pi * (x + 2 * y))), 40).time_one()
        errs.append(np.abs(m.jacobians - m.fd_jacobians()).max())
        assert symplectic_residual(m) < 1e-6
    # centered differences converge at second order towards the tangent Jacobians
    assert errs[0] / errs[1] > 3.5
    with pytest.raises(ValueError):
        symplectic_residual(m, method="other")


def test_rk4_order_on_perturbed_shear(grid):
    def residual(T):
        F = grid.sample(lambda x, y: np.sin(2 * np.pi * y) / (2 * np.pi) + 0.05 * np.sin(2 * np.pi * x))
        return symplectic_residual(make_hamiltonian(F, T).time_one())
    ratio = residual(25) / residual(50)
    assert ratio >= 8


def test_explicit_source_non_hamiltonian():
    g = GridSpec(1, 16)
    one = g.sample(lambda x, y: np.ones_like(x))
    zero = g.sample(lambda x, y: np.zeros_like(x))
    iso = make_explicit([one * 0.2, zero], 10)
    assert not iso.is_hamiltonian
    assert np.allclose(iso.flow(1.0, np.array([[0.1, 0.1]])), [[0.3, 0.1]])


def test_composition_and_inverse_simplifications():
    g = GridSpec(1, 16)
    a = make_rotation(g, [0.1, 0.2], 10)
    b = make_rotation(g, [0.3, -0.1], 10)
    ab = compose_pointwise(a, b)
    assert isinstance(ab, Rotation) and np.allclose(ab.v, [0.4, 0.1])
    assert compose_pointwise(a, invert(a)).is_identity
    h = shear(g, 0.1, 10)
    hh = compose_pointwise(h, a)
    assert isinstance(hh, ComposedIsotopy)
    assert compose_pointwise(hh, invert(a)) is h
    assert compose_pointwise(invert(h), hh) is a
    inv = invert(h)
    assert isinstance(inv, InverseIsotopy) and invert(inv) is h
    assert compose_pointwise(identity(g, 10), h) is h


def test_inverse_of_autonomous_flow_has_negated_velocity():
    g = GridSpec(1, 16)
    h = shear(g, 0.2, 10)
    p = np.random.default_rng(4).random((5, 2))
    assert invert(h).autonomous
    assert np.allclose(invert(h).velocity(0.3, p), -h.velocity(0.3, p))


def test_composite_velocity_is_consistent():
    g = GridSpec(1, 16)
    c = compose_pointwise(make_rotation(g, [0.2, 0.1], 20), shear(g, 0.1, 20), validate=False)
    assert velocity_consistency(c) < 1e-6


def test_conjugation_routes_agree():
    g = GridSpec(1, 32)
    f = shear(g, 0.1, 20)
    base = make_hamiltonian(g.sample(lambda x, y: 0.05 * np.sin(2 * np.pi * x)), 20)
    a = conjugate(f, base)
    b = conjugated_hamiltonian(f, base)
    p = np.random.default_rng(5).random((20, 2))
    assert np.abs(wrap_delta(a.flow(1.0, p) - b.flow(1.0, p))).max() < 1e-5


def test_incompatible_isotopies_rejected():
    with pytest.raises(ValueError):
        compose_pointwise(make_rotation(GridSpec(1, 16), [0, 0.1], 10), make_rotation(GridSpec(1, 16), [0.1, 0], 20))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=2), st.floats(0, 1))
def test_rotation_group_law(v, t):
    g = GridSpec(1, 8)
    rho = make_rotation(g, v, 10)
    p = np.array([[0.2, 0.7]])
    assert np.allclose(rho.inverse_flow(t, rho.flow(t, p)), p)
    assert np.allclose(rho.flow(t, p) - p, t * np.asarray(v)[None])
