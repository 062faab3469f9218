"""Scenario drivers: conjugation bound, commutator lemma, strip examples, uniqueness demo.

Every driver returns a report dataclass carrying raw numbers plus a
``checks`` mapping name -> (value, bound, passed).  Failed checks are
findings, not exceptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bump import BUMP_SUBSTEPS, bump_hamiltonian_pair
from .energy import (DEFAULT_FAMILY, displacement_energy_upper, displaces, l0_length, l_length,
                     _decomposition)
from .forms import CLOSED_TOL, HarmonicForm, OneForm, flux, hodge, trapezoid
from .isotopy import (DEFAULT_STEPS, Isotopy, Rotation, compose_pointwise, conjugate, contract_omega,
                      invert, make_hamiltonian)
from .regions import Ball, Region, Strip
from .torus import GridSpec, ScalarField, wrap_delta

LAB_TOL = 1e-3
STRICT_TOL = 1e-4
STRICT_GRID = 128
STRICT_STEPS = 400


def _check(value, bound, slack=0.0):
    return (float(value), float(bound), bool(value <= bound + slack))


def _dist(p, q):
    return np.linalg.norm(wrap_delta(np.asarray(p) - np.asarray(q)), axis=-1)


# -- alpha fields and nu -------------------------------------------------------------


def alpha_basis(iso: Isotopy) -> np.ndarray:
    """alpha for each basis form dtheta_i, shape (dim, N^dim).

    alpha(x) = int_0^1 H(Y_s(phi_s^{-1} x)) ds with Y the velocity of the
    inverse isotopy; at w = phi_s^{-1}(x) that is -D(phi_s^{-1})(x) X_s(x).
    """
    cache = iso.__dict__.setdefault("_alpha_basis", None)
    if cache is not None:
        return cache
    g = iso.grid
    if iso.is_identity:
        out = np.zeros((g.dim, g.size))
    elif isinstance(iso, Rotation):
        out = np.broadcast_to(-iso.v[:, None], (g.dim, g.size)).copy()
    else:
        vals = []
        for k in range(iso.steps + 1):
            t = iso.node_time(k)
            _, J = iso.inverse_flow(t, g.points_flat, jacobian=True)
            X = iso.velocity_grid(k)
            vals.append(-(J @ X[..., None])[..., 0].T)
        out = trapezoid(vals, iso.steps)
    iso.__dict__["_alpha_basis"] = out
    return out


def alpha_field(H, iso: Isotopy) -> ScalarField:
    """The function alpha with (phi^{-1})^* H - H = d alpha (phi = time-one map of ``iso``)."""
    coeffs = H.coeffs if isinstance(H, HarmonicForm) else np.asarray(H, dtype=float)
    vals = np.tensordot(coeffs, alpha_basis(iso), axes=(0, 0))
    return ScalarField(iso.grid, vals.reshape(iso.grid.shape))


def nu_operator_norm(iso: Isotopy) -> float:
    """Operator norm of H -> alpha from the l1 harmonic norm to the sup norm.

    alpha is taken in the mean-zero gauge, so a constant alpha (for example
    from a rotation) contributes nothing.  Linearity puts the maximum over the
    unit l1 ball at one of the basis forms +-dtheta_i.
    """
    basis = alpha_basis(iso)
    centered = basis - basis.mean(axis=1, keepdims=True)
    return float(np.abs(centered).max())


def alpha_identity_residual(H, iso: Isotopy) -> float:
    """sup | (phi^{-1})^* H - H - d alpha | at grid nodes."""
    g = iso.grid
    coeffs = H.coeffs if isinstance(H, HarmonicForm) else np.asarray(H, dtype=float)
    _, J = iso.inverse_flow(1.0, g.points_flat, jacobian=True)
    pulled = np.einsum("i,mij->mj", coeffs, J) - coeffs
    lhs = OneForm(g, pulled.T.reshape((g.dim,) + g.shape))
    return float((lhs - OneForm.exact(alpha_field(H, iso))).sup())


# -- conjugation bound ----------------------------------------------------------------


@dataclass
class ConjugationReport:
    nu: float
    K: float
    k: float
    l0_h: float
    l0_h_inverse: float
    l0_psi: float
    l0_psi_inverse: float
    l_h: float
    l_psi: float
    K_inverse: float
    harmonic_deviation: float
    inequality_slack: float
    tolerance: float
    checks: dict = field(default_factory=dict)
    resolution: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(ok for _, _, ok in self.checks.values())

    def as_dict(self):
        d = dict(self.__dict__)
        d["checks"] = {k: list(v) for k, v in self.checks.items()}
        d["passed"] = self.passed
        return d


def _harmonic_parts(iso, closed_tol):
    return np.array([_decomposition(iso, k, closed_tol).harmonic.coeffs for k in range(iso.steps + 1)])


def conjugation_bound_lab(phi: Isotopy, h: Isotopy, norm: str = "l1", tol: float = LAB_TOL,
                          closed_tol: float = CLOSED_TOL) -> ConjugationReport:
    """Check the conjugation inequalities for Psi_t = phi_1 o h_t o phi_1^{-1}."""
    phi.check_compatible(h)
    psi = conjugate(phi, h)
    h_inv, psi_inv = invert(h), invert(psi)
    l0_h, l0_hi = l0_length(h, norm, closed_tol), l0_length(h_inv, norm, closed_tol)
    l0_p, l0_pi = l0_length(psi, norm, closed_tol), l0_length(psi_inv, norm, closed_tol)
    basis = alpha_basis(phi)
    nu = nu_operator_norm(phi)

    def K_of(iso):
        Hs = _harmonic_parts(iso, closed_tol)
        osc = [float(np.ptp(c @ basis)) for c in Hs]
        return float(trapezoid(osc, iso.steps)), Hs

    K, H_h = K_of(h)
    K_inv, _ = K_of(h_inv)
    H_psi = _harmonic_parts(psi, closed_tol)
    deviation = float(np.abs(H_psi - H_h).max())
    l_h, l_p = 0.5 * (l0_h + l0_hi), 0.5 * (l0_p + l0_pi)
    k = 2 * nu + 1
    checks = {
        "l0(psi) <= l0(h) + K": _check(l0_p, l0_h + K, tol),
        "l0(psi^-1) <= l0(h^-1) + K'": _check(l0_pi, l0_hi + K_inv, tol),
        "K <= 2 nu l0(h)": _check(K, 2 * nu * l0_h, tol),
        "l(psi) <= (2 nu + 1) l(h)": _check(l_p, k * l_h, tol),
        "harmonic deviation": _check(deviation, 0.0, tol),
    }
    return ConjugationReport(
        nu=nu, K=K, k=k, l0_h=l0_h, l0_h_inverse=l0_hi, l0_psi=l0_p, l0_psi_inverse=l0_pi,
        l_h=l_h, l_psi=l_p, K_inverse=K_inv, harmonic_deviation=deviation,
        inequality_slack=l0_h + K - l0_p, tolerance=tol, checks=checks,
        resolution={"n": h.grid.half_dim, "N": h.grid.points, "T": h.steps, "norm": norm})


# -- commutator lemma --------------------------------------------------------------------


@dataclass
class CommutatorReport:
    lemma_deviation: float
    restriction_deviation: float
    nontriviality: float
    expected_nontriviality: float
    commutator_error: float
    support_leakage: float
    outside_escapes: int
    theta_flux: list
    sample_count: int
    inside_count: int
    certificate: dict
    tubes: list
    tolerance: float
    checks: dict = field(default_factory=dict)
    resolution: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(ok for _, _, ok in self.checks.values())

    def as_dict(self):
        d = dict(self.__dict__)
        d["checks"] = {k: list(v) for k, v in self.checks.items()}
        d["passed"] = self.passed
        return d


def _split_samples(region: Region, count: int, rng, extra=()):
    """At least ``count`` points inside and ``count`` outside the region."""
    inside, outside = [np.atleast_2d(p) for p in extra], []
    n_in = n_out = 0
    while n_in < count or n_out < count:
        x = rng.random((4 * count, region.dim))
        mask = region.contains(x)
        if n_in < count:
            inside.append(x[mask][: count - n_in])
            n_in += len(inside[-1])
        if n_out < count:
            outside.append(x[~mask][: count - n_out])
            n_out += len(outside[-1])
    return np.concatenate(inside), np.concatenate(outside)


def commutator(f, f_inv, g, g_inv):
    """[f, g] = g^{-1} o f^{-1} o g o f as a map on point arrays."""
    return lambda x: g_inv(f_inv(g(f(x))))


def commutator_lab(region: Region, h: Isotopy, a, b, c, grid: GridSpec | None = None,
                   steps: int = DEFAULT_STEPS, margin: float | None = None, samples: int = 300,
                   seed: int = 0, tol: float = LAB_TOL, flux_spacing: float = 1 / 256,
                   substeps: int = BUMP_SUBSTEPS) -> CommutatorReport:
    """Check [phi, psi] = [theta, psi] with theta = phi o h^{-1} o phi^{-1} o h."""
    grid = h.grid if grid is None else grid
    margin = 4.0 / grid.points if margin is None else margin
    cert = displaces(h.time_one(), region, margin, grid)
    if not cert.displaced:
        raise ValueError(f"h does not displace the region (min distance {cert.min_distance:.3g}, "
                         f"margin {margin:.3g})")
    phi, psi = bump_hamiltonian_pair(region, a, b, c, grid, steps, substeps)

    def fmap(iso):
        return (lambda x: iso.flow(1.0, x)), (lambda x: iso.inverse_flow(1.0, x))

    P, Pi = fmap(phi)
    S, Si = fmap(psi)
    Hm, Hi = fmap(h)

    def theta(x):
        return P(Hi(Pi(Hm(x))))

    def theta_inv(x):
        return Hi(P(Hm(Pi(x))))

    rng = np.random.default_rng(seed)
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    inside, outside = _split_samples(region, samples, rng, extra=(a, b, c))
    pts = np.concatenate([inside, outside])
    n_in, n_pts = len(inside), len(pts)

    # theta is a product of an isotopy and its inverse conjugates, so its flux
    # is zero; measured as the mean lifted displacement of theta on a lattice
    m = int(round(1.0 / flux_spacing))
    ax = (np.arange(m) + 0.5) / m
    lat = np.stack(np.meshgrid(*([ax] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)

    # maps are pointwise, so every point set goes through each flow in one batch
    every = np.concatenate([pts, lat])
    th_every = theta(every)
    th_pts = th_every[:n_pts]
    phi_in = P(inside)
    lhs = Si(Pi(S(P(pts))))
    rhs = Si(theta_inv(S(th_pts)))
    lemma = float(_dist(lhs, rhs).max())
    restriction = float(_dist(th_pts[:n_in], phi_in).max())
    at_a = lhs[0]
    nontriv = float(_dist(at_a, a))
    escapes = int(region.contains(th_pts[n_in:]).sum())
    nodes_out = grid.points_flat[~region.contains(grid.points_flat)]
    probe = np.concatenate([outside, nodes_out])
    leak = max(float(np.abs(phi.velocity(0.0, probe)).max()), float(np.abs(psi.velocity(0.0, probe)).max()))
    disp = (th_every[n_pts:] - lat).mean(axis=0)
    th_flux = contract_omega(disp, grid.half_dim)

    expected = float(_dist(b, a))
    checks = {
        "lemma deviation": _check(lemma, 0.0, tol),
        "restriction deviation": _check(restriction, 0.0, tol),
        "nontriviality matches |b - a|": _check(abs(nontriv - expected), 0.0, tol),
        "support leakage": _check(leak, 0.0),
        "outside points stay outside": _check(escapes, 0),
        "theta flux": _check(float(np.abs(th_flux).sum()), 0.0, STRICT_TOL),
    }
    return CommutatorReport(
        lemma_deviation=lemma, restriction_deviation=restriction, nontriviality=nontriv,
        expected_nontriviality=expected, commutator_error=float(_dist(at_a, b)), support_leakage=leak,
        outside_escapes=escapes, theta_flux=th_flux.tolist(), sample_count=n_pts,
        inside_count=n_in, certificate=cert.as_dict(),
        tubes=[phi.source.describe(), psi.source.describe()], tolerance=tol, checks=checks,
        resolution={"n": grid.half_dim, "N": grid.points, "T": steps, "substeps": phi.substeps})


def random_admissible_configuration(rng, dim: int = 2):
    """A ball, a displacing rotation and points a, b, c meeting the lab preconditions."""
    while True:
        radius = rng.uniform(0.12, 0.2)
        center = rng.random(dim)
        region = Ball(center, radius)
        pts = []
        while len(pts) < 3:
            u = rng.normal(size=dim)
            p = center + rng.uniform(0.0, 0.55) * radius * u / np.linalg.norm(u)
            if all(_dist(p, q) > 0.35 * radius for q in pts):
                pts.append(np.mod(p, 1.0))
        v = np.zeros(dim)
        v[0] = 0.5
        yield region, v, pts[0], pts[1], pts[2]


# -- strip examples ----------------------------------------------------------------------


@dataclass
class StripRow:
    r: float
    upper_bound: float
    witness_a1: float
    margin: float
    N: int
    checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(ok for _, _, ok in self.checks.values())


def torus_example_suite(r_values=(0.05, 0.1, 0.2, 0.25, 0.4), norm: str = "l1",
                        grid: GridSpec | None = None, margin: float = 0.01, steps: int = DEFAULT_STEPS,
                        family: dict | None = None):
    """Displacement energy bounds for the strips {0 <= theta_1 < r} over rotations."""
    grid = GridSpec(1, 64) if grid is None else grid
    rows, estimates = [], []
    for r in r_values:
        if not 0 < r < 0.5:
            raise ValueError(f"strip width {r} outside (0, 1/2)")
        est = displacement_energy_upper(Strip(0, 0.0, r, grid.dim), grid, margin,
                                        family or DEFAULT_FAMILY, norm, steps)
        slack = margin + 2.0 / grid.points
        a1 = float(est.witness["v"][0]) if est.feasible else math.nan
        rest = np.abs(est.witness["v"][1:]).max() if est.feasible and grid.dim > 1 else 0.0
        checks = {
            "upper <= r + margin + 2/N": _check(est.upper_bound, r + slack),
            "witness a_1 >= r": _check(r, a1),
            "witness a_1 <= r + margin + 2/N": _check(a1, r + slack),
            "witness has no other components": _check(rest, 1e-12),
        }
        rows.append(StripRow(r, est.upper_bound, a1, margin, grid.points, checks))
        estimates.append(est)
    return rows, estimates


# -- uniqueness demo ------------------------------------------------------------------------


@dataclass
class UniquenessReport:
    epsilons: list
    lengths: list
    distances: list
    swapped_lengths: list
    swapped_distances: list
    torus_distances: list
    balls: list
    checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(ok for _, _, ok in self.checks.values())

    def as_dict(self):
        d = dict(self.__dict__)
        d["checks"] = {k: list(v) for k, v in self.checks.items()}
        d["passed"] = self.passed
        return d


def default_schedule(terms: int = 8):
    return [2.0 ** -n for n in range(1, terms + 1)]


def default_psi(grid: GridSpec, steps: int = DEFAULT_STEPS) -> Isotopy:
    """A rotation composed with a shear: an isotopy with both flux and a potential part."""
    n = grid.half_dim
    F = grid.sample(lambda *x: 0.1 * np.sin(2 * np.pi * x[n]) / (2 * np.pi))
    v = np.zeros(grid.dim)
    v[0], v[n] = 0.2, 0.1
    return compose_pointwise(Rotation(grid, v, steps), make_hamiltonian(F, steps), validate=False)


def shear_perturbation(grid: GridSpec, eps: float, steps: int) -> Isotopy:
    """Hamiltonian isotopy of Hofer length eps: F = (eps / 2) sin(2 pi theta_1)."""
    F = grid.sample(lambda *x: 0.5 * eps * np.sin(2 * np.pi * x[0]))
    return make_hamiltonian(F, steps)


def _sequence_checks(name, seq):
    seq = np.asarray(seq, dtype=float)
    steps = np.diff(seq)
    worst = float(steps.max()) if len(steps) else -1.0
    ratio = float(seq[-1] / seq[0]) if seq[0] > 0 else 0.0
    return {
        f"{name} strictly decreasing": (worst, 0.0, bool(np.all(steps < 0))),
        f"{name} final <= 1e-2 initial": (ratio, 1e-2, bool(ratio <= 1e-2)),
    }


def uniqueness_demo(psi: Isotopy, schedule=None, norm: str = "l1", ball_check: bool = True):
    """Perturb psi by Hamiltonian isotopies of length eps_n and track l and C^0 distance."""
    grid, steps = psi.grid, psi.steps
    schedule = default_schedule() if schedule is None else list(schedule)
    if any(e < 0 for e in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:]) if a > 0):
        raise ValueError("schedule must be a decreasing sequence of nonnegative numbers")
    base = psi.time_one()
    pts = grid.points_flat
    ref = base(pts)
    lengths, dists, s_lengths, s_dists, torus_dists, balls = [], [], [], [], [], []
    for eps in schedule:
        G = shear_perturbation(grid, eps, steps)
        Phi = compose_pointwise(psi, G, validate=False)
        forward = compose_pointwise(invert(Phi), psi, validate=False)
        swapped = compose_pointwise(invert(psi), Phi, validate=False)
        lengths.append(l_length(forward, norm).l_sym)
        s_lengths.append(l_length(swapped, norm).l_sym)
        # distance of the lifted time-one maps; the wrapped distance saturates
        # at the torus diameter once eps is large, so it is reported alongside
        img = Phi.flow(1.0, pts)
        dists.append(float(np.linalg.norm(img - ref, axis=1).max()))
        s_dists.append(float(np.linalg.norm(ref - img, axis=1).max()))
        torus_dists.append(float(_dist(img, ref).max()))
        if ball_check and eps > 0:
            balls.append(_ball_witness(forward, pts, grid, steps))
    checks = {}
    if any(e > 0 for e in schedule):
        checks.update(_sequence_checks("lengths", lengths))
        checks.update(_sequence_checks("distances", dists))
    checks["swap symmetry"] = _check(max(abs(x - y) for x, y in zip(lengths + dists, s_lengths + s_dists)), 0.0)
    return UniquenessReport(list(schedule), lengths, dists, s_lengths, s_dists, torus_dists, balls, checks)


def _ball_witness(iso: Isotopy, pts, grid: GridSpec, steps: int):
    """A small ball moved off itself by iso's time-one map, with an upper bound on its energy.

    Any isotopy displacing a ball B has l >= e_s(B); here e_s(B) is bounded
    above by the strip of the same width, which the rotation family handles.
    """
    move = _dist(iso.flow(1.0, pts), pts)
    i = int(np.argmax(move))
    radius = float(move[i]) / 4.0
    center = pts[i]
    m = iso.time_one()
    # strongly distorting maps need a smaller ball around the moved point
    for _ in range(6):
        ball = Ball(center, radius)
        cert = displaces(m, ball, 0.0, grid, spacing=radius / 4.0)
        if cert.displaced:
            break
        radius /= 2.0
    disp_dir = int(np.argmax(np.abs(wrap_delta(iso.flow(1.0, center[None])[0] - center))))
    strip = Strip(disp_dir, center[disp_dir] - radius, 2 * radius, grid.dim)
    margin = max(4.0 / grid.points, 2 * grid.spacing)
    est = displacement_energy_upper(strip, grid, margin, DEFAULT_FAMILY, "l1", steps)
    return {"center": center.tolist(), "radius": radius, "displaced": cert.displaced,
            "strip_upper_bound": est.upper_bound}


__all__ = [
    "LAB_TOL", "STRICT_TOL", "STRICT_GRID", "STRICT_STEPS", "alpha_basis", "alpha_field",
    "nu_operator_norm", "alpha_identity_residual", "ConjugationReport", "conjugation_bound_lab",
    "CommutatorReport", "commutator", "commutator_lab", "random_admissible_configuration",
    "StripRow", "torus_example_suite", "UniquenessReport", "uniqueness_demo", "default_schedule",
    "default_psi", "shear_perturbation",
]
