import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoferlab.cli import shipped_scenario
from hoferlab.forms import hodge
from hoferlab.isotopy import ComposedIsotopy, InverseIsotopy, Rotation
from hoferlab.regions import Ball, Strip
from hoferlab.scenario import (COMMANDS, Scenario, ScenarioError, attach_lines, build_form, build_isotopy,
                               build_region, loads)
from hoferlab.torus import GridSpec, wrap_delta


@pytest.fixture(scope="module")
def grid():
    return GridSpec(1, 16)


def test_every_shipped_scenario_loads():
    for cmd in COMMANDS:
        sc = loads(shipped_scenario(cmd))
        assert sc.command == cmd


def test_defaults_fill_in():
    sc = loads("command: flux\nisotopy: {kind: identity}\n")
    assert sc.grid == {"n": 1, "N": 64, "T": 100}
    assert sc.norm == "l1" and sc.seed == 0 and sc.name == "flux"
    assert sc.grid_spec().points == 64 and sc.steps == 100


@pytest.mark.parametrize("text, path, line", [
    ("command: flux\ngrid: {N: 15}\nisotopy: {kind: identity}\n", "grid.N", 2),
    ("command: length\nnorm: l1\nisotopy: {kind: identity}\nbogus: 1\n", "bogus", 4),
    ("command: displace\nisotopy: {kind: identity}\nregion: {kind: strip, width: 0.1}\nexpect: 3\n", "expect", 4),
    ("name: x\ncommand: nope\n", "command", 2),
    ("command: flux\nnorm: l7\nisotopy: {kind: identity}\n", "norm", 2),
    ("command: hodge\n", "form", None),
    ("command: length\nisotopy:\n  v: [1, 2]\n", "isotopy.kind", 2),
])
def test_errors_carry_field_and_line(text, path, line):
    with pytest.raises(ScenarioError) as err:
        loads(text, "demo.yaml")
    assert err.value.path == path
    assert err.value.line == line
    if line:
        assert f"demo.yaml:{line}" in str(err.value)


def test_invalid_yaml_reports_line():
    with pytest.raises(ScenarioError) as err:
        loads("command: flux\ngrid: {N: [\n")
    assert err.value.line is not None
    with pytest.raises(ScenarioError):
        loads("- just a list\n")


def test_builder_errors_resolve_to_enclosing_line(grid):
    sc = loads("command: length\nisotopy:\n  kind: rotation\n  v: [1, 2, 3]\n")
    with pytest.raises(ScenarioError) as err:
        build_isotopy(sc.params["isotopy"], grid, 10)
    located = attach_lines(err.value, sc.lines, sc.source)
    assert located.path == "isotopy.v" and located.line == 4


names = st.text("abcdefgh-", min_size=1, max_size=12)


@settings(max_examples=30, deadline=None)
@given(names, st.sampled_from([16, 32, 64]), st.integers(1, 200), st.sampled_from(["l1", "l2", "linf"]),
       st.integers(0, 1000), st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=2))
def test_dump_load_round_trip(name, N, T, norm, seed, v):
    sc = Scenario.from_dict({"name": name, "command": "length", "grid": {"n": 1, "N": N, "T": T}, "norm": norm,
                             "seed": seed, "isotopy": {"kind": "rotation", "v": v}})
    assert loads(sc.dump()) == sc


def test_isotopy_builders(grid):
    p = np.random.default_rng(0).random((6, 2))
    assert build_isotopy({"kind": "identity"}, grid, 10).is_identity
    rho = build_isotopy({"kind": "rotation", "v": [0.1, 0.2]}, grid, 10)
    assert isinstance(rho, Rotation)
    sh = build_isotopy({"kind": "shear", "eps": 0.1}, grid, 10)
    exact = p + np.stack([0.1 * np.cos(2 * np.pi * p[:, 1]), np.zeros(6)], axis=1)
    assert np.abs(sh.flow(1.0, p) - exact).max() < 1e-12
    ham = build_isotopy({"kind": "hamiltonian", "time": "t",
                         "terms": [{"k": [1, 0], "amp": 0.05, "wave": "sin"}]}, grid, 10)
    assert ham.is_hamiltonian
    ex = build_isotopy({"kind": "explicit", "components": [{"terms": [{"k": [0, 0], "amp": 0.2, "wave": "cos"}]},
                                                         {"terms": []}]}, grid, 10)
    assert np.allclose(wrap_delta(ex.flow(1.0, p) - p), [0.2, 0.0])
    inv = build_isotopy({"kind": "invert", "of": {"kind": "shear", "eps": 0.1}}, grid, 10)
    assert isinstance(inv, InverseIsotopy)
    comp = build_isotopy({"kind": "compose", "outer": {"kind": "rotation", "v": [0.1, 0.0]},
                          "inner": {"kind": "shear"}}, grid, 10)
    assert isinstance(comp, ComposedIsotopy)
    conj = build_isotopy({"kind": "conjugate", "by": {"kind": "shear"}, "base": {"kind": "rotation", "v": [0.1, 0]}},
                         grid, 10)
    assert conj.flow(1.0, p).shape == p.shape


@pytest.mark.parametrize("spec, path", [
    ({"kind": "warp"}, "isotopy.kind"),
    ({"kind": "rotation", "v": [1]}, "isotopy.v"),
    ({"kind": "invert"}, "isotopy.of"),
    ({"kind": "hamiltonian", "time": "exp"}, "isotopy.time"),
    ({"kind": "hamiltonian", "terms": [{"k": [1], "amp": 1}]}, "isotopy.terms[0].k"),
    ({"kind": "hamiltonian", "terms": [{"k": [1, 0], "wave": "tan"}]}, "isotopy.terms[0].wave"),
    ({"kind": "explicit", "components": [{}]}, "isotopy.components"),
])
def test_isotopy_builder_errors(grid, spec, path):
    with pytest.raises(ScenarioError) as err:
        build_isotopy(spec, grid, 10)
    assert err.value.path == path


def test_region_builder(grid):
    assert isinstance(build_region({"kind": "strip", "axis": 2, "width": 0.1}, grid), Strip)
    assert isinstance(build_region({"kind": "ball", "center": [0.5, 0.5], "radius": 0.1}, grid), Ball)
    with pytest.raises(ScenarioError):
        build_region({"kind": "strip"}, grid)
    with pytest.raises(ScenarioError):
        build_region({"kind": "cone"}, grid)


def test_form_builder(grid):
    alpha = build_form({"harmonic": [0.3, -0.2], "potential": [{"k": [1, 2], "amp": 0.1, "wave": "cos"}]}, grid)
    dec = hodge(alpha)
    assert np.allclose(dec.harmonic.coeffs, [0.3, -0.2], atol=1e-12)
    assert dec.potential.osc() == pytest.approx(0.2, abs=1e-12)
    bent = build_form({"extra": [{"axis": 1, "terms": [{"k": [0, 1], "amp": 1.0}]}]}, grid)
    assert np.abs(bent.components[0]).max() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ScenarioError):
        build_form({"harmonic": [1.0]}, grid)
