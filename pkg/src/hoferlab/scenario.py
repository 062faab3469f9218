"""Scenario files: YAML documents describing one lab run.

A scenario names a command, a resolution and the command's parameters::

    name: strip-0.1
    command: energy
    grid: {n: 1, N: 64, T: 100}
    norm: l1
    seed: 0
    region: {kind: strip, axis: 1, lower: 0.0, width: 0.1}
    margin: 0.01

Isotopies, regions and one-forms are nested descriptors (see ``build_isotopy``,
``region_from_dict`` and ``build_form``).  Validation errors carry the file
line of the offending field.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import yaml

from .forms import HarmonicForm, OneForm
from .isotopy import (Isotopy, ScalarFamily, compose_pointwise, conjugate, identity, invert,
                      make_explicit, make_hamiltonian, make_rotation)
from .regions import Region, region_from_dict
from .torus import GridSpec, ScalarField

COMMANDS = ("hodge", "length", "flux", "displace", "energy", "commutator-lab", "conjugation-lab",
            "uniqueness-demo", "suite")
NORMS = ("l1", "l2", "linf")
DEFAULT_GRID = {"n": 1, "N": 64, "T": 100}
_TOP = ("name", "command", "grid", "norm", "seed")


class ScenarioError(ValueError):
    """Schema violation; ``path`` is the dotted field name, ``line`` 1-based or None."""

    def __init__(self, message: str, path: str = "", line: int | None = None, source: str = "<scenario>"):
        self.message, self.path, self.line, self.source = message, path, line, source
        where = f"{source}:{line}" if line else source
        field_ = f" field '{path}'" if path else ""
        super().__init__(f"{where}:{field_} {message}")


# -- schema ------------------------------------------------------------------------

# field -> (type, required)
SCHEMAS = {
    "hodge": {"form": ("form", True), "closed_tol": ("number", False)},
    "length": {"isotopy": ("isotopy", True), "closed_tol": ("number", False)},
    "flux": {"isotopy": ("isotopy", True), "closed_tol": ("number", False), "tolerance": ("number", False)},
    "displace": {"isotopy": ("isotopy", True), "region": ("region", True), "margin": ("number", False),
                 "expect": ("bool", False)},
    "energy": {"region": ("region", False), "r_values": ("numbers", False), "margin": ("number", False),
               "family": ("dict", False)},
    "commutator-lab": {"region": ("region", True), "h": ("isotopy", False), "a": ("numbers", True),
                       "b": ("numbers", True), "c": ("numbers", True), "margin": ("number", False),
                       "samples": ("int", False), "tolerance": ("number", False),
                       "substeps": ("int", False), "flux_spacing": ("number", False),
                       "randomized": ("int", False)},
    "conjugation-lab": {"phi": ("isotopy", True), "h": ("isotopy", True), "tolerance": ("number", False),
                        "closed_tol": ("number", False)},
    "uniqueness-demo": {"psi": ("isotopy", False), "schedule": ("numbers", False), "ball_check": ("bool", False)},
    "suite": {"criteria": ("ints", False)},
}


@dataclass
class Scenario:
    name: str
    command: str
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    norm: str = "l1"
    seed: int = 0
    params: dict = field(default_factory=dict)
    source: str = field(default="<scenario>", compare=False, repr=False)
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        out = {"name": self.name, "command": self.command, "grid": dict(self.grid), "norm": self.norm,
               "seed": self.seed}
        out.update(copy.deepcopy(self.params))
        return out

    @classmethod
    def from_dict(cls, data: dict, source: str = "<scenario>", lines: dict | None = None) -> "Scenario":
        validate(data, source, lines)
        grid = dict(DEFAULT_GRID)
        grid.update(data.get("grid") or {})
        params = {k: copy.deepcopy(v) for k, v in data.items() if k not in _TOP}
        return cls(str(data.get("name", data["command"])), data["command"], grid,
                   data.get("norm", "l1"), int(data.get("seed", 0)), params, source, dict(lines or {}))

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def grid_spec(self) -> GridSpec:
        return GridSpec(int(self.grid["n"]), int(self.grid["N"]))

    @property
    def steps(self) -> int:
        return int(self.grid["T"])


def _node_lines(node, prefix=""):
    """Map dotted paths to 1-based source lines using the YAML node tree."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            out.update(_node_lines(value, path))
    elif isinstance(node, yaml.SequenceNode):
        for i, value in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = value.start_mark.line + 1
            out.update(_node_lines(value, path))
    return out


def loads(text: str, source: str = "<scenario>") -> Scenario:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"not valid YAML ({getattr(exc, 'problem', exc)})", "",
                            mark.line + 1 if mark else None, source) from None
    if not isinstance(data, dict):
        raise ScenarioError("a scenario must be a mapping", "", 1, source)
    return Scenario.from_dict(data, source, _node_lines(node))


def load(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), str(path))


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate(data: dict, source: str = "<scenario>", lines: dict | None = None):
    lines = lines or {}

    def fail(path, msg):
        parent = path
        while parent and parent not in lines:
            parent = parent.rsplit(".", 1)[0] if "." in parent else ""
        raise ScenarioError(msg, path, lines.get(parent or path), source)

    cmd = data.get("command")
    if cmd is None:
        fail("command", "is required")
    if cmd not in COMMANDS:
        fail("command", f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
    grid = data.get("grid", {})
    if not isinstance(grid, dict):
        fail("grid", "must be a mapping with keys n, N, T")
    for key in grid:
        if key not in DEFAULT_GRID:
            fail(f"grid.{key}", "unknown grid key (expected n, N, T)")
        if not isinstance(grid[key], int) or isinstance(grid[key], bool) or grid[key] <= 0:
            fail(f"grid.{key}", "must be a positive integer")
    N = grid.get("N", DEFAULT_GRID["N"])
    if N % 2 or N < 8:
        fail("grid.N", "must be an even integer >= 8")
    if data.get("norm", "l1") not in NORMS:
        fail("norm", f"must be one of {', '.join(NORMS)}")
    if "seed" in data and not isinstance(data["seed"], int):
        fail("seed", "must be an integer")
    schema = SCHEMAS[cmd]
    for key in data:
        if key not in _TOP and key not in schema:
            fail(key, f"unknown field for command {cmd!r}")
    for key, (kind, required) in schema.items():
        if key not in data:
            if required:
                fail(key, "is required")
            continue
        value = data[key]
        if kind == "number" and not _is_number(value):
            fail(key, "must be a number")
        if kind == "int" and (not isinstance(value, int) or isinstance(value, bool)):
            fail(key, "must be an integer")
        if kind == "bool" and not isinstance(value, bool):
            fail(key, "must be true or false")
        if kind in ("numbers", "ints"):
            if not isinstance(value, list) or not all(_is_number(v) for v in value):
                fail(key, "must be a list of numbers")
        if kind in ("dict", "isotopy", "region", "form") and not isinstance(value, dict):
            fail(key, "must be a mapping")
        if kind in ("isotopy", "region") and "kind" not in value:
            fail(f"{key}.kind", "is required")


# -- descriptor builders ---------------------------------------------------------------

_TIME = {
    "const": lambda t: 1.0,
    "t": lambda t: t,
    "cos": lambda t: np.cos(2 * np.pi * t),
    "sin": lambda t: np.sin(2 * np.pi * t),
}


def fourier_field(grid: GridSpec, terms, path="terms") -> ScalarField:
    """sum amp * sin|cos(2 pi k . theta) over ``terms``."""
    values = np.zeros(grid.shape)
    for i, term in enumerate(terms or []):
        k = np.asarray(term.get("k"), dtype=float)
        if k.shape != (grid.dim,):
            raise ScenarioError(f"wave vector needs {grid.dim} entries", f"{path}[{i}].k")
        phase = 2 * np.pi * np.tensordot(k, grid.coords, axes=(0, 0))
        trig = {"sin": np.sin, "cos": np.cos}.get(term.get("wave", "sin"))
        if trig is None:
            raise ScenarioError("wave must be sin or cos", f"{path}[{i}].wave")
        values = values + float(term.get("amp", 1.0)) * trig(phase)
    return ScalarField(grid, values)


def _family(grid: GridSpec, spec, path):
    terms = spec.get("terms", [])
    time = spec.get("time", "const")
    if time not in _TIME:
        raise ScenarioError(f"time profile must be one of {', '.join(_TIME)}", f"{path}.time")
    base = fourier_field(grid, terms, f"{path}.terms")
    if time == "const":
        return ScalarFamily.constant(base, description="fourier")
    fn = _TIME[time]
    return ScalarFamily(grid, lambda t: base * float(fn(t)), description=f"fourier x {time}(t)")


def build_isotopy(spec: dict, grid: GridSpec, steps: int, path: str = "isotopy") -> Isotopy:
    kind = spec.get("kind")
    sub = int(spec.get("substeps", 1))
    if kind == "identity":
        return identity(grid, steps)
    if kind == "rotation":
        v = spec.get("v")
        if v is None or len(v) != grid.dim:
            raise ScenarioError(f"v needs {grid.dim} entries", f"{path}.v")
        return make_rotation(grid, v, steps)
    if kind == "shear":
        # F = eps / (2 pi) sin(2 pi theta_axis): moves along the conjugate direction
        axis = int(spec.get("axis", grid.half_dim + 1)) - 1
        eps = float(spec.get("eps", 0.1))
        F = grid.sample(lambda *x: eps * np.sin(2 * np.pi * x[axis]) / (2 * np.pi))
        return make_hamiltonian(F, steps, sub, name=f"shear eps={eps}")
    if kind == "hamiltonian":
        return make_hamiltonian(_family(grid, spec, path), steps, sub, name=spec.get("name", ""))
    if kind == "explicit":
        comps = spec.get("components")
        if not isinstance(comps, list) or len(comps) != grid.dim:
            raise ScenarioError(f"needs {grid.dim} components", f"{path}.components")
        fams = [_family(grid, c, f"{path}.components[{i}]") for i, c in enumerate(comps)]
        return make_explicit(fams, steps, sub)
    if kind == "invert":
        return invert(build_isotopy(_child(spec, "of", path), grid, steps, f"{path}.of"))
    if kind == "compose":
        outer = build_isotopy(_child(spec, "outer", path), grid, steps, f"{path}.outer")
        inner = build_isotopy(_child(spec, "inner", path), grid, steps, f"{path}.inner")
        return compose_pointwise(outer, inner, validate=bool(spec.get("validate", True)))
    if kind == "conjugate":
        by = build_isotopy(_child(spec, "by", path), grid, steps, f"{path}.by")
        base = build_isotopy(_child(spec, "base", path), grid, steps, f"{path}.base")
        return conjugate(by, base)
    raise ScenarioError(f"unknown isotopy kind {kind!r}", f"{path}.kind")


def _child(spec, key, path):
    child = spec.get(key)
    if not isinstance(child, dict) or "kind" not in child:
        raise ScenarioError("must be an isotopy descriptor with a kind", f"{path}.{key}")
    return child


def build_region(spec: dict, grid: GridSpec, path: str = "region") -> Region:
    try:
        return region_from_dict(spec, grid.dim)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(str(exc), path) from None


def build_form(spec: dict, grid: GridSpec, path: str = "form") -> OneForm:
    """H + du (+ optional non-exact extra components)."""
    H = HarmonicForm(spec.get("harmonic", np.zeros(grid.dim)))
    if H.coeffs.shape != (grid.dim,):
        raise ScenarioError(f"harmonic part needs {grid.dim} entries", f"{path}.harmonic")
    u = fourier_field(grid, spec.get("potential", []), f"{path}.potential")
    alpha = H.to_oneform(grid) + OneForm.exact(u)
    for i, extra in enumerate(spec.get("extra", [])):
        axis = int(extra.get("axis", 1)) - 1
        comps = np.zeros((grid.dim,) + grid.shape)
        comps[axis] = fourier_field(grid, extra.get("terms", []), f"{path}.extra[{i}].terms").values
        alpha = alpha + OneForm(grid, comps)
    return alpha


def attach_lines(exc: ScenarioError, lines: dict, source: str) -> ScenarioError:
    """The same error with the line of its field (or nearest enclosing field) filled in."""
    path = exc.path
    while path and path not in lines:
        cut = max(path.rfind("."), path.rfind("["))
        path = path[:cut] if cut > 0 else ""
    return ScenarioError(exc.message, exc.path, lines.get(path), source)
