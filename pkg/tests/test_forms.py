import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoferlab.forms import (HarmonicForm, NotClosedError, OneForm, flux, flux_by_displacement, hodge,
                            trapezoid, vector_norm)
from hoferlab.isotopy import identity, make_hamiltonian, make_rotation
from hoferlab.torus import GridSpec, ScalarField


def band_potential(grid, rng, band=3):
    """Random real trigonometric polynomial with |k_i| <= band, built from explicit modes."""
    vals = np.zeros(grid.shape)
    for _ in range(6):
        k = rng.integers(-band, band + 1, grid.dim)
        phase = 2 * np.pi * np.tensordot(k, grid.coords, axes=(0, 0)) + rng.uniform(0, 2 * np.pi)
        vals += rng.normal() * 0.1 * np.cos(phase)
    return ScalarField(grid, vals)


def analytic_differential(grid, f_terms):
    """d of sum amp cos(2 pi k.x + p), evaluated in closed form (independent of the FFT)."""
    comps = np.zeros((grid.dim,) + grid.shape)
    for amp, k, p in f_terms:
        phase = 2 * np.pi * np.tensordot(k, grid.coords, axes=(0, 0)) + p
        for i in range(grid.dim):
            comps[i] += -amp * 2 * np.pi * k[i] * np.sin(phase)
    return OneForm(grid, comps)


def test_vector_norms():
    v = [3.0, -4.0]
    assert vector_norm(v, "l1") == 7.0
    assert vector_norm(v, "l2") == 5.0
    assert vector_norm(v, "linf") == 4.0
    with pytest.raises(ValueError):
        vector_norm(v, "l3")


def test_trapezoid_is_exact_for_linear_integrands():
    t = np.linspace(0, 1, 11)
    assert trapezoid(3 * t + 1, 10) == pytest.approx(2.5)
    assert trapezoid([2.0], 0) == 2.0


def test_harmonic_part_is_the_mean():
    g = GridSpec(1, 32)
    alpha = HarmonicForm([0.3, -0.7]).to_oneform(g)
    dec = hodge(alpha)
    assert np.allclose(dec.harmonic.coeffs, [0.3, -0.7])
    assert dec.potential.sup() < 1e-14


def test_exact_form_recovers_potential_against_closed_form_differential():
    g = GridSpec(1, 32)
    terms = [(0.2, np.array([1, 0]), 0.3), (0.05, np.array([2, -3]), 1.1)]
    alpha = analytic_differential(g, terms) + HarmonicForm([0.1, 0.2]).to_oneform(g)
    dec = hodge(alpha)
    u = sum(a * np.cos(2 * np.pi * np.tensordot(k, g.coords, axes=(0, 0)) + p) for a, k, p in terms)
    u = u - u.mean()
    assert np.allclose(dec.harmonic.coeffs, [0.1, 0.2], atol=1e-12)
    assert np.abs(dec.potential.values - u).max() < 1e-12
    assert dec.residual_norm < 1e-10
    assert abs(dec.potential.mean()) < 1e-14


def test_not_closed_form_raises_with_residual():
    g = GridSpec(1, 16)
    # y dtheta_1 style rotation: a = (sin 2 pi y, 0) has curl 2 pi cos 2 pi y
    comps = np.stack([np.sin(2 * np.pi * g.coords[1]), np.zeros(g.shape)])
    with pytest.raises(NotClosedError) as err:
        hodge(OneForm(g, comps))
    assert err.value.residual == pytest.approx(2 * np.pi, rel=1e-10)


def test_four_dimensional_decomposition():
    g = GridSpec(2, 8)
    rng = np.random.default_rng(4)
    u = band_potential(g, rng, band=2)
    H = rng.normal(size=4)
    dec = hodge(HarmonicForm(H).to_oneform(g) + OneForm.exact(u))
    assert np.allclose(dec.harmonic.coeffs, H, atol=1e-12)
    assert np.allclose(dec.potential.values, (u - u.mean()).values, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_hodge_round_trip_random_closed_forms(seed):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, 16)
    H = rng.normal(size=2)
    u = band_potential(g, rng)
    alpha = HarmonicForm(H).to_oneform(g) + OneForm.exact(u)
    dec = hodge(alpha)
    assert np.allclose(dec.harmonic.coeffs, H, atol=1e-10)
    assert (alpha - dec.reconstruct()).sup() < 1e-10
    # constant shifts of u are invisible: only oscillation is meaningful
    assert dec.potential.osc() == pytest.approx(u.osc(), abs=1e-10)


def test_rotation_flux_is_contracted_vector():
    g = GridSpec(1, 16)
    F = flux(make_rotation(g, [0.3, 0.4], 10))
    assert np.allclose(F.coeffs, [-0.4, 0.3], atol=1e-12)
    g4 = GridSpec(2, 8)
    F4 = flux(make_rotation(g4, [0.1, 0.2, 0.3, 0.4], 10))
    assert np.allclose(F4.coeffs, [-0.3, -0.4, 0.1, 0.2], atol=1e-12)


def test_identity_flux_is_zero():
    g = GridSpec(1, 16)
    assert not flux(identity(g, 5)).coeffs.any()


def test_hamiltonian_flux_vanishes_on_both_routes():
    g = GridSpec(1, 32)
    F = g.sample(lambda x, y: 0.05 * np.sin(2 * np.pi * (x + y)) + 0.03 * np.cos(2 * np.pi * y))
    iso = make_hamiltonian(F, 40)
    assert flux(iso).norm() < 1e-12
    assert flux_by_displacement(iso).norm() < 1e-6
