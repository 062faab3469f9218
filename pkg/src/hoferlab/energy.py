"""Length functionals, Hofer-like norm bounds and displacement energy estimates.

Every norm or energy returned here is an UPPER bound: the infimum over all
isotopies is replaced by a minimum over an explicitly declared family.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .forms import CLOSED_TOL, HarmonicForm, flux, hodge, trapezoid, vector_norm
from .isotopy import (DEFAULT_STEPS, FlowMap, Isotopy, Rotation, compose_pointwise, contract_omega,
                      invert, make_hamiltonian)
from .regions import Region
from .torus import GridSpec, ScalarField, wrap_delta

log = logging.getLogger(__name__)

PENALTY = 1e3
MAX_SAMPLES = 4_000_000


# -- lengths ------------------------------------------------------------------------


def hofer_length(iso: Isotopy) -> float:
    """Trapezoid-rule integral of osc(F_t) for a Hamiltonian isotopy."""
    if not iso.is_hamiltonian:
        raise TypeError("Hofer length is only defined for Hamiltonian isotopies")
    if iso.autonomous:
        return iso.hamiltonian(0.0).osc()
    return float(trapezoid([iso.hamiltonian(t).osc() for t in iso.times], iso.steps))


def _decomposition(iso: Isotopy, k: int, closed_tol: float):
    cache = iso.__dict__.setdefault("_hodge_cache", {})
    key = (0 if iso.autonomous else k, closed_tol)
    if key not in cache:
        cache[key] = hodge(iso.generating_one_form(k), closed_tol)
    return cache[key]


def l0_integrand(iso: Isotopy, norm: str = "l1", closed_tol: float = CLOSED_TOL) -> np.ndarray:
    """|H_t| + osc(u_t) at every time node."""
    out = []
    for k in range(iso.steps + 1):
        dec = _decomposition(iso, k, closed_tol)
        out.append(dec.harmonic.norm(norm) + dec.potential.osc())
    return np.array(out)


def l0_length(iso: Isotopy, norm: str = "l1", closed_tol: float = CLOSED_TOL) -> float:
    if iso.is_identity:
        return 0.0
    return float(trapezoid(l0_integrand(iso, norm, closed_tol), iso.steps))


@dataclass
class LengthReport:
    l0_forward: float
    l0_inverse: float
    l_sym: float
    flux_vector: list
    norm_choice: str
    hofer_length: float | None = None
    resolution: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "l0_forward": self.l0_forward, "l0_inverse": self.l0_inverse, "l_sym": self.l_sym,
            "hofer_length": self.hofer_length, "flux": list(self.flux_vector),
            "norm": self.norm_choice, **self.resolution,
        }


def l_length(iso: Isotopy, norm: str = "l1", closed_tol: float = CLOSED_TOL) -> LengthReport:
    fwd = l0_length(iso, norm, closed_tol)
    bwd = l0_length(invert(iso), norm, closed_tol)
    H = hofer_length(iso) if iso.is_hamiltonian else None
    return LengthReport(
        l0_forward=fwd, l0_inverse=bwd, l_sym=0.5 * (fwd + bwd),
        flux_vector=flux(iso, closed_tol).coeffs.tolist(), norm_choice=norm, hofer_length=H,
        resolution={"n": iso.grid.half_dim, "N": iso.grid.points, "T": iso.steps})


@dataclass
class NormBound:
    value: float
    best_index: int
    lengths: list
    excluded: list
    family: list
    norm: str


def hl_norm_upper(target, family, norm: str = "l1", tol: float = 1e-4, samples: int = 256,
                  seed: int = 0) -> NormBound:
    """Minimum of l over isotopies in ``family`` whose time-one map equals ``target``.

    ``target`` is a :class:`FlowMap`, an :class:`Isotopy` (its time-one map)
    or a callable on (M, dim) points.
    """
    family = list(family)
    if not family:
        raise ValueError("empty family")
    if isinstance(target, Isotopy):
        target = target.time_one()
    grid = family[0].grid
    rng = np.random.default_rng(seed)
    pts = np.concatenate([grid.points_flat, rng.random((samples, grid.dim))])
    ref = target(pts)
    lengths, excluded = [], []
    for i, iso in enumerate(family):
        gap = float(np.linalg.norm(wrap_delta(iso.flow(1.0, pts) - ref), axis=1).max())
        if gap > tol:
            warnings.warn(f"family member {i} misses the target time-one map by {gap:.2e}; excluded")
            excluded.append(i)
            lengths.append(math.inf)
            continue
        lengths.append(l_length(iso, norm).l_sym)
    if len(excluded) == len(family):
        raise ValueError("no family member reaches the target map")
    best = int(np.argmin(lengths))
    return NormBound(lengths[best], best, lengths, excluded, [m.describe() for m in family], norm)


# -- displacement ----------------------------------------------------------------------


@dataclass
class DisplacementCertificate:
    displaced: bool
    min_distance: float
    margin: float
    sample_count: int
    sample_spacing: float

    def as_dict(self):
        return dict(self.__dict__)


def sample_spacing(grid: GridSpec, margin: float) -> float:
    """Sample lattice spacing: the grid spacing, refined so that margin >= 2 * spacing."""
    h = grid.spacing
    if margin > 0:
        h = min(h, margin / 2.0)
    return h


def _images(m, pts):
    return m(pts)


def displaces(m, region: Region, margin: float, grid: GridSpec | None = None,
              spacing: float | None = None) -> DisplacementCertificate:
    """Does ``m`` move every sample of ``region`` outside the margin-dilated region?

    ``m`` is a :class:`FlowMap` or any callable on (M, dim) point arrays.
    """
    if grid is None:
        grid = m.grid
    if spacing is None:
        spacing = sample_spacing(grid, margin)
    if margin > 0 and margin < 2 * spacing * (1 - 1e-12):
        raise ValueError(f"margin {margin} is below twice the sample spacing {spacing}")
    expected = (1.0 / spacing) ** region.dim
    if expected > MAX_SAMPLES:
        raise ValueError(f"sampling {region.describe()} at spacing {spacing} needs ~{expected:.0f} points")
    pts = region.samples(spacing)
    dist = region.distance(_images(m, pts))
    dmin = float(dist.min())
    ok = dmin > 0 and dmin >= margin
    return DisplacementCertificate(bool(ok), dmin, float(margin), int(len(pts)), float(spacing))


# -- displacement energy ------------------------------------------------------------------


@dataclass
class EnergyEstimate:
    upper_bound: float
    feasible: bool
    witness: dict
    family: dict
    margin: float
    norm: str
    certificate: DisplacementCertificate | None
    length: LengthReport | None = None
    evaluations: int = 0
    note: str = ""

    def as_dict(self):
        return {
            "upper_bound": self.upper_bound, "feasible": self.feasible, "witness": self.witness,
            "family": self.family, "margin": self.margin, "norm": self.norm,
            "certificate": self.certificate.as_dict() if self.certificate else None,
            "length": self.length.as_dict() if self.length else None,
            "evaluations": self.evaluations, "note": self.note,
        }


DEFAULT_FAMILY = {"kind": "rotations", "coarse": 32, "sweeps": 2}


def rotation_length(v, n: int, norm: str = "l1") -> float:
    """l of the harmonic one-parameter group with velocity v: |i(v) omega|."""
    return vector_norm(contract_omega(np.asarray(v, dtype=float), n), norm)


def _min_image_distance(region, pts, shift):
    return float(region.distance(pts + shift).min())


def _rotation_search(region, grid, margin, norm, family, spacing):
    n, d = grid.half_dim, grid.dim
    pts = region.samples(spacing)
    coarse = int(family.get("coarse", 32))
    axes = family.get("axes")
    axes = list(range(d)) if axes is None else [int(a) - 1 for a in axes]
    step = 1.0 / coarse
    vals = np.arange(-coarse // 2, coarse // 2 + 1) * step
    evals = 0

    def feasible(dist):
        return dist > 0 and dist >= margin

    cands = []
    for combo in itertools.product(vals, repeat=len(axes)):
        v = np.zeros(d)
        v[axes] = combo
        cands.append(v)
    # ties go to the lexicographically largest v, so (a, 0) wins over (-a, 0)
    cands.sort(key=lambda v: (rotation_length(v, n, norm), tuple(-v)))
    best = None
    for v in cands:
        evals += 1
        if feasible(_min_image_distance(region, pts, v)):
            best = v
            break
    if best is None:
        return None, evals

    seen = [(rotation_length(best, n, norm), tuple(-best))]

    def objective(v):
        nonlocal evals
        evals += 1
        dist = _min_image_distance(region, pts, v)
        length = rotation_length(v, n, norm)
        if feasible(dist):
            seen.append((length, tuple(-v)))
        return length + PENALTY * max(0.0, margin - dist)

    current = best.copy()
    for _ in range(int(family.get("sweeps", 2))):
        for a in axes:
            def along(x, a=a):
                v = current.copy()
                v[a] = x
                return objective(v)
            optimize.minimize_scalar(along, bounds=(current[a] - step, current[a] + step),
                                     method="bounded", options={"xatol": 1e-10})
            # move only to certified points
            current = -np.array(min(seen)[1])
    return -np.array(min(seen)[1]), evals


def _fourier_basis(grid: GridSpec, modes):
    out = []
    for k in modes:
        k = np.asarray(k, dtype=float)
        phase = 2 * np.pi * np.tensordot(k, grid.coords, axes=(0, 0))
        out.append(ScalarField(grid, np.sin(phase) / (2 * np.pi * max(np.abs(k).sum(), 1))))
        out.append(ScalarField(grid, np.cos(phase) / (2 * np.pi * max(np.abs(k).sum(), 1))))
    return out


def _composite_search(region, grid, margin, norm, family, spacing, steps, start_v):
    """Nelder-Mead over (rotation v, Hamiltonian coefficients) with a displacement penalty."""
    n, d = grid.half_dim, grid.dim
    modes = family.get("modes", [[1, 0], [0, 1]])
    basis = _fourier_basis(grid, modes)
    use_rotation = family["kind"] != "hamiltonian"
    pts = region.samples(spacing)
    evals = 0
    seen = []

    def build(p):
        v = p[:d] if use_rotation else np.zeros(d)
        c = p[d:] if use_rotation else p
        F = sum((ci * b for ci, b in zip(c, basis)), ScalarField(grid, np.zeros(grid.shape)))
        ham = make_hamiltonian(F, steps=steps)
        if not use_rotation:
            return ham
        return compose_pointwise(Rotation(grid, v, steps), ham, validate=False)

    def length_of(iso):
        if family["kind"] == "hamiltonian":
            return hofer_length(iso)
        return l_length(iso, norm).l_sym

    def objective(p):
        nonlocal evals
        evals += 1
        iso = build(p)
        dist = float(region.distance(iso.flow(1.0, pts)).min())
        length = length_of(iso)
        if dist > 0 and dist >= margin:
            seen.append((length, tuple(p)))
        return length + PENALTY * max(0.0, margin - dist)

    nc = len(basis)
    x0 = np.concatenate([start_v, np.zeros(nc)]) if use_rotation else np.full(nc, 0.5)
    optimize.minimize(objective, x0, method="Nelder-Mead",
                      options={"maxfev": int(family.get("max_evals", 200)), "xatol": 1e-6, "fatol": 1e-8})
    if not seen:
        return None, None, evals
    length, p = min(seen)
    return build(np.array(p)), np.array(p), evals


def displacement_energy_upper(region: Region, grid: GridSpec, margin: float | None = None,
                              family: dict | None = None, norm: str = "l1",
                              steps: int = DEFAULT_STEPS) -> EnergyEstimate:
    """Smallest length of a family member whose time-one map displaces ``region``."""
    family = dict(DEFAULT_FAMILY if family is None else family)
    margin = 4.0 / grid.points if margin is None else float(margin)
    spacing = sample_spacing(grid, margin)
    kind = family.get("kind", "rotations")
    if (1.0 / spacing) ** region.dim > MAX_SAMPLES:
        raise ValueError("region sampling too fine for this dimension; increase the margin")

    if region.is_whole():
        return EnergyEstimate(math.inf, False, {}, family, margin, norm, None,
                              note="infinity over this family: nothing displaces the whole torus")

    if kind == "rotations":
        v, evals = _rotation_search(region, grid, margin, norm, family, spacing)
        if v is None:
            return EnergyEstimate(math.inf, False, {}, family, margin, norm, None, evaluations=evals,
                                  note="infinity over this family (not a claim about the true energy)")
        witness = Rotation(grid, v, steps)
    elif kind in ("rotation+hamiltonian", "hamiltonian"):
        start, evals0 = _rotation_search(region, grid, margin, norm, DEFAULT_FAMILY, spacing) \
            if kind != "hamiltonian" else (np.zeros(grid.dim), 0)
        if start is None:
            start = np.zeros(grid.dim)
        witness, _, evals = _composite_search(region, grid, margin, norm, family, spacing, steps, start)
        evals += evals0
        if witness is None:
            note = "no Hamiltonian witness found" if kind == "hamiltonian" else \
                "infinity over this family (not a claim about the true energy)"
            return EnergyEstimate(math.inf, False, {}, family, margin, norm, None, evaluations=evals, note=note)
    else:
        raise ValueError(f"unknown family kind {kind!r}")

    cert = displaces(witness.time_one(), region, margin, grid, spacing)
    if not cert.displaced:
        raise RuntimeError("search returned a witness that fails the displacement certificate")
    report = l_length(witness, norm)
    bound = report.hofer_length if kind == "hamiltonian" else report.l_sym
    return EnergyEstimate(bound, True, witness.describe(), family, margin, norm, cert, report, evals,
                          note="upper bound over the declared family")


def recheck(estimate: EnergyEstimate, region: Region, grid: GridSpec, steps: int = DEFAULT_STEPS):
    """Re-run the displacement certificate from a stored rotation witness."""
    if estimate.witness.get("kind") != "rotation":
        raise ValueError("only rotation witnesses can be rebuilt from their descriptor")
    iso = Rotation(grid, estimate.witness["v"], steps)
    return displaces(iso.time_one(), region, estimate.margin, grid, estimate.certificate.sample_spacing)
