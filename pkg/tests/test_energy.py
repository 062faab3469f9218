import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoferlab.energy import (displacement_energy_upper, displaces, hl_norm_upper, hofer_length, l0_length,
                             l_length, recheck, rotation_length)
from hoferlab.forms import vector_norm
from hoferlab.isotopy import (ScalarFamily, compose_pointwise, conjugated_hamiltonian, identity, invert,
                              make_explicit, make_hamiltonian, make_rotation)
from hoferlab.regions import Ball, RectUnion, Strip, whole_torus
from hoferlab.torus import GridSpec


@pytest.fixture(scope="module")
def grid():
    return GridSpec(1, 64)


def sin_field(g, amp=1.0):
    return g.sample(lambda x, y: amp * np.sin(2 * np.pi * x))


# -- lengths --------------------------------------------------------------------------


def test_hofer_length_examples(grid):
    assert hofer_length(make_hamiltonian(grid.sample(lambda x, y: 0 * x), 10)) == 0.0
    # osc(sin) = 2, constant in time
    assert abs(hofer_length(make_hamiltonian(sin_field(grid), 10)) - 2.0) < 1e-10
    # F_t = t G: integral of 2t over [0, 1]
    G = sin_field(grid)
    fam = ScalarFamily(grid, lambda t: G * t)
    assert abs(hofer_length(make_hamiltonian(fam, 50)) - 1.0) < 1e-6


def test_hofer_length_needs_hamiltonian(grid):
    one = grid.sample(lambda x, y: np.ones_like(x))
    with pytest.raises(TypeError):
        hofer_length(make_explicit([one, one * 0], 10))


def test_l0_examples(grid):
    assert l0_length(identity(grid, 10)) == 0.0
    assert abs(l0_length(make_rotation(grid, [0.3, 0.4], 10)) - 0.7) < 1e-12
    F = grid.sample(lambda x, y: 0.05 * np.sin(2 * np.pi * (x + y)) + 0.02 * np.cos(2 * np.pi * y))
    iso = make_hamiltonian(ScalarFamily(grid, lambda t: F * (1 + np.cos(2 * np.pi * t))), 20)
    assert abs(l0_length(iso) - hofer_length(iso)) < 1e-6


def test_l_length_report(grid):
    rep = l_length(make_rotation(grid, [0.3, 0.4], 10))
    assert rep.l_sym == pytest.approx(0.7, abs=1e-10)
    assert rep.l0_forward == pytest.approx(rep.l0_inverse, abs=1e-12)
    assert rep.hofer_length is None
    assert np.allclose(rep.flux_vector, [-0.4, 0.3])
    assert rep.norm_choice == "l1"
    zero = l_length(identity(grid, 10))
    assert zero.l_sym == zero.l0_forward == zero.l0_inverse == 0.0
    assert rotation_length([0.3, 0.4], 1, "l2") == pytest.approx(0.5)


def test_l_length_symmetry_under_inversion(grid):
    F = grid.sample(lambda x, y: 0.05 * np.sin(2 * np.pi * (x - y)))
    iso = compose_pointwise(make_rotation(grid, [0.1, -0.2], 20), make_hamiltonian(F, 20), validate=False)
    assert abs(l_length(iso).l_sym - l_length(invert(iso)).l_sym) < 1e-8


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from(["l1", "l2", "linf"]))
def test_l0_bounded_below_by_flux(seed, norm):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, 16)
    k = rng.integers(-2, 3, 2)
    F = g.sample(lambda x, y: rng.uniform(0.01, 0.05) * np.sin(2 * np.pi * (k[0] * x + k[1] * y) + 0.3))
    iso = compose_pointwise(make_rotation(g, rng.uniform(-0.5, 0.5, 2), 10), make_hamiltonian(F, 10),
                            validate=False)
    rep = l_length(iso, norm)
    fn = vector_norm(rep.flux_vector, norm)
    assert rep.l0_forward >= fn - 1e-6
    assert rep.l0_inverse >= fn - 1e-6


def test_hofer_length_conjugation_invariance(grid):
    F = grid.sample(lambda x, y: 0.05 * np.sin(2 * np.pi * (x + 2 * y)) + 0.03 * np.cos(2 * np.pi * x))
    base = make_hamiltonian(F, 20)
    f = make_hamiltonian(grid.sample(lambda x, y: 0.1 * np.sin(2 * np.pi * y) / (2 * np.pi)), 20)
    assert abs(hofer_length(conjugated_hamiltonian(f, base)) - hofer_length(base)) < 1e-3


# -- norm upper bound ---------------------------------------------------------------------


def test_hl_norm_upper_prefers_the_shorter_isotopy(grid):
    v = [0.2, 0.1]
    rho = make_rotation(grid, v, 100)
    # sin(2 pi t) G is a loop: the flow of G for total time 0; l_H = (2/pi) osc G = 0.5
    G = grid.sample(lambda x, y: (np.pi / 8) * np.sin(2 * np.pi * y))
    loop = make_hamiltonian(ScalarFamily(grid, lambda t: G * np.sin(2 * np.pi * t)), 100)
    assert hofer_length(loop) == pytest.approx(0.5, abs=1e-3)
    detour = compose_pointwise(rho, loop, validate=False)
    bound = hl_norm_upper(rho, [detour, rho])
    assert bound.best_index == 1
    assert bound.value == pytest.approx(rotation_length(v, 1), abs=1e-10)
    assert bound.lengths[0] > bound.value
    assert bound.excluded == []
    single = hl_norm_upper(rho, [rho])
    assert single.value == pytest.approx(0.3, abs=1e-10)


def test_hl_norm_upper_excludes_members_that_miss(grid):
    rho = make_rotation(grid, [0.2, 0.1], 10)
    with pytest.warns(UserWarning):
        bound = hl_norm_upper(rho, [make_rotation(grid, [0.3, 0.1], 10), rho])
    assert bound.excluded == [0]
    with pytest.raises(ValueError), pytest.warns(UserWarning):
        hl_norm_upper(rho, [make_rotation(grid, [0.3, 0.1], 10)])


# -- displacement -------------------------------------------------------------------------


def test_displaces_examples(grid):
    strip = Strip(0, 0.0, 0.1)
    assert not displaces(identity(grid).time_one(), strip, 0.0625).displaced
    cert = displaces(make_rotation(grid, [0.5, 0.0]).time_one(), strip, 0.0625)
    assert cert.displaced and cert.min_distance >= 0.4 - 1e-12
    assert not displaces(make_rotation(grid, [0.05, 0.0]).time_one(), strip, 0.0625).displaced


def test_displaces_rejects_margin_below_sample_spacing(grid):
    with pytest.raises(ValueError):
        displaces(identity(grid).time_one(), Strip(0, 0.0, 0.1), 0.01, spacing=0.01)


def test_energy_strip_examples(grid):
    est = displacement_energy_upper(Strip(0, 0.0, 0.1), grid, 0.01)
    assert 0.1 <= est.upper_bound <= 0.12
    assert est.witness["v"][0] == pytest.approx(0.11, abs=1e-6)
    assert est.witness["v"][1] == 0.0
    est = displacement_energy_upper(Strip(0, 0.0, 0.25), grid, 0.01)
    assert 0.25 <= est.upper_bound <= 0.27


def test_energy_whole_torus_infeasible(grid):
    est = displacement_energy_upper(whole_torus(), grid, 0.01)
    assert not est.feasible and math.isinf(est.upper_bound)
    assert "infinity over this family" in est.note


def test_energy_witness_recheck(grid):
    region = Ball((0.3, 0.6), 0.1)
    est = displacement_energy_upper(region, grid, 0.03125)
    again = recheck(est, region, grid)
    assert again.displaced and again.min_distance == est.certificate.min_distance
    # a ball of radius r needs a shift of at least 2r + margin
    assert 0.2 + 0.03125 - 1e-9 <= est.upper_bound <= 0.2 + 0.03125 + 2 / 64


def test_energy_rect_union(grid):
    region = RectUnion([((0.0, 0.0), (0.1, 0.1)), ((0.5, 0.5), (0.1, 0.1))])
    est = displacement_energy_upper(region, grid, 0.03125)
    assert est.feasible and est.certificate.displaced


def test_energy_on_t4():
    g = GridSpec(2, 16)
    est = displacement_energy_upper(Strip(0, 0.0, 0.1, 4), g, 0.125, {"kind": "rotations", "coarse": 16})
    assert 0.1 <= est.upper_bound <= 0.1 + 0.125 + 2 / 16


def test_hamiltonian_family_reports_no_witness(grid):
    est = displacement_energy_upper(Strip(0, 0.0, 0.1), GridSpec(1, 16), 0.125,
                                    {"kind": "hamiltonian", "max_evals": 15}, steps=10)
    assert not est.feasible
    assert est.note == "no Hamiltonian witness found"


@settings(max_examples=8, deadline=None)
@given(st.floats(0.02, 0.3), st.floats(0.01, 0.15))
def test_energy_monotone_under_inclusion(r, extra):
    g = GridSpec(1, 32)
    small = displacement_energy_upper(Strip(0, 0.0, r), g, 0.0625)
    big = displacement_energy_upper(Strip(0, 0.0, r + extra), g, 0.0625)
    assert small.upper_bound <= big.upper_bound + 1e-12
    assert abs(small.upper_bound - (r + 0.0625)) <= 2 / 32
