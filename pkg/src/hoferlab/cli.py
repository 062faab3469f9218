"""Command line: ``hoferlab <command> [scenario.yaml] [flags]``.

Every run writes ``<name>.json`` (structured report; the only run-dependent
fields live under ``header``), ``<name>.csv`` (flat table, byte-identical for
a fixed scenario and seed) and one or more ``<name>-<figure>.png`` files.

Exit status: 0 when every assertion passes, 1 when a numerical assertion
fails (the failing records are printed), 2 for usage or scenario errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import re
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import __version__
from .scenario import COMMANDS, NORMS, Scenario, ScenarioError, attach_lines, load, loads

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MARGIN_COMMANDS = ("displace", "energy", "commutator-lab")
STRICT_COMMANDS = ("commutator-lab", "conjugation-lab")


@dataclass
class Assertion:
    name: str
    value: float
    bound: float
    passed: bool
    record: str = ""

    def as_dict(self):
        return {"record": self.record, "name": self.name, "value": self.value, "bound": self.bound,
                "passed": self.passed}


@dataclass
class Outcome:
    result: dict
    columns: list
    rows: list
    assertions: list = field(default_factory=list)
    figures: list = field(default_factory=list)  # (suffix, fn(path))
    timing: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)


@dataclass
class Options:
    strict: bool = False
    margin: float | None = None
    workers: int = 1


def _assert_checks(checks: dict, record: str):
    return [Assertion(name, value, bound, bool(ok), record) for name, (value, bound, ok) in checks.items()]


# -- serialization ------------------------------------------------------------------


def _plain(x):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x) + 0.0:.15g}"  # + 0.0 folds -0 into 0
    if isinstance(x, (list, tuple, np.ndarray)):
        return " ".join(_cell(v) for v in np.ravel(np.asarray(x, dtype=object)))
    return str(x)


def render_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_atomic(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", name).strip("-") or "report"


# -- commands -----------------------------------------------------------------------


def _grid_meta(sc: Scenario):
    return {"n": sc.grid["n"], "N": sc.grid["N"], "T": sc.grid["T"], "norm": sc.norm}


def cmd_hodge(sc: Scenario, opts: Options) -> Outcome:
    from .forms import CLOSED_TOL, NotClosedError, hodge
    from .scenario import build_form

    grid = sc.grid_spec()
    alpha = build_form(sc.params["form"], grid)
    tol = float(sc.params.get("closed_tol", CLOSED_TOL))
    cols = ["name", "n", "N", "harmonic", "harmonic_norm", "potential_osc", "residual_norm", "d_residual"]
    try:
        dec = hodge(alpha, tol)
    except NotClosedError as exc:
        a = Assertion("form is closed", exc.residual, tol, False, sc.name)
        return Outcome({"closed": False, "d_residual": exc.residual}, cols,
                       [[sc.name, grid.half_dim, grid.points, None, None, None, None, exc.residual]], [a])
    H = dec.harmonic
    res = {"harmonic": H.coeffs, "harmonic_norm": H.norm(sc.norm), "potential_osc": dec.potential.osc(),
           "residual_norm": dec.residual_norm, "d_residual": dec.d_residual, "closed": True}
    rows = [[sc.name, grid.half_dim, grid.points, H.coeffs, res["harmonic_norm"], res["potential_osc"],
             dec.residual_norm, dec.d_residual]]
    checks = [Assertion("form is closed", dec.d_residual, tol, dec.d_residual <= tol, sc.name),
              Assertion("reconstruction residual", dec.residual_norm, 1e-8, dec.residual_norm <= 1e-8, sc.name)]

    def fig(path, u=dec.potential.values):
        from .plotting import field_image
        field_image(u, path, title="exact part potential u", label="u")

    return Outcome(res, cols, rows, checks, [("potential", fig)])


def cmd_length(sc: Scenario, opts: Options) -> Outcome:
    from .energy import l0_integrand, l_length
    from .forms import CLOSED_TOL, NotClosedError, vector_norm
    from .isotopy import invert
    from .scenario import build_isotopy

    grid = sc.grid_spec()
    iso = build_isotopy(sc.params["isotopy"], grid, sc.steps)
    tol = float(sc.params.get("closed_tol", CLOSED_TOL))
    cols = ["name", "n", "N", "T", "norm", "l0_forward", "l0_inverse", "l_sym", "hofer_length", "flux",
            "flux_norm"]
    try:
        rep = l_length(iso, sc.norm, tol)
    except NotClosedError as exc:
        a = Assertion("generating forms are closed", exc.residual, tol, False, sc.name)
        return Outcome({"closed": False, "d_residual": exc.residual}, cols, [], [a])
    fnorm = vector_norm(rep.flux_vector, sc.norm)
    rows = [[sc.name, grid.half_dim, grid.points, sc.steps, sc.norm, rep.l0_forward, rep.l0_inverse,
             rep.l_sym, rep.hofer_length, rep.flux_vector, fnorm]]
    checks = [
        Assertion("l0 forward >= flux norm", fnorm - rep.l0_forward, 1e-6, rep.l0_forward >= fnorm - 1e-6, sc.name),
        Assertion("l0 inverse >= flux norm", fnorm - rep.l0_inverse, 1e-6, rep.l0_inverse >= fnorm - 1e-6, sc.name),
        Assertion("lengths nonnegative", min(rep.l0_forward, rep.l0_inverse), 0.0,
                  min(rep.l0_forward, rep.l0_inverse) >= 0, sc.name),
    ]
    if rep.hofer_length is not None:
        gap = abs(rep.l0_forward - rep.hofer_length)
        checks.append(Assertion("l0 equals Hofer length", gap, 1e-6, gap <= 1e-6, sc.name))
    res = rep.as_dict()
    res["flux_norm"] = fnorm

    def fig(path):
        from .plotting import integrand_plot
        integrand_plot(iso.times, {"forward": l0_integrand(iso, sc.norm, tol),
                                   "inverse": l0_integrand(invert(iso), sc.norm, tol)},
                       path, ylabel="|H_t| + osc u_t", title="l0 integrand")

    return Outcome(res, cols, rows, checks, [("integrand", fig)])


def cmd_flux(sc: Scenario, opts: Options) -> Outcome:
    from .forms import CLOSED_TOL, NotClosedError, flux, flux_by_displacement
    from .scenario import build_isotopy

    grid = sc.grid_spec()
    iso = build_isotopy(sc.params["isotopy"], grid, sc.steps)
    tol = float(sc.params.get("closed_tol", CLOSED_TOL))
    agree = float(sc.params.get("tolerance", 1e-4))
    cols = ["name", "n", "N", "T", "norm", "flux", "flux_norm", "displacement_flux", "route_gap"]
    try:
        F = flux(iso, tol)
    except NotClosedError as exc:
        return Outcome({"closed": False, "d_residual": exc.residual}, cols, [],
                       [Assertion("generating forms are closed", exc.residual, tol, False, sc.name)])
    D = flux_by_displacement(iso)
    gap = float(np.abs(F.coeffs - D.coeffs).max())
    rows = [[sc.name, grid.half_dim, grid.points, sc.steps, sc.norm, F.coeffs, F.norm(sc.norm), D.coeffs, gap]]
    res = {"flux": F.coeffs, "flux_norm": F.norm(sc.norm), "displacement_flux": D.coeffs, "route_gap": gap}
    checks = [Assertion("generating-form and displacement routes agree", gap, agree, gap <= agree, sc.name)]

    def fig(path):
        from .plotting import bar_plot
        labels = [f"c{i + 1}" for i in range(grid.dim)]
        bar_plot(labels, F.coeffs, path, ylabel="flux coefficient", title="flux (harmonic coefficients)")

    return Outcome(res, cols, rows, checks, [("flux", fig)])


def cmd_displace(sc: Scenario, opts: Options) -> Outcome:
    from .energy import displaces, sample_spacing
    from .scenario import build_isotopy, build_region

    grid = sc.grid_spec()
    iso = build_isotopy(sc.params["isotopy"], grid, sc.steps)
    region = build_region(sc.params["region"], grid)
    margin = opts.margin if opts.margin is not None else float(sc.params.get("margin", 4.0 / grid.points))
    m = iso.time_one()
    cert = displaces(m, region, margin, grid)
    cols = ["name", "n", "N", "T", "region", "margin", "displaced", "min_distance", "sample_count", "sample_spacing"]
    rows = [[sc.name, grid.half_dim, grid.points, sc.steps, region.describe()["kind"], margin, cert.displaced,
             cert.min_distance, cert.sample_count, cert.sample_spacing]]
    checks = []
    if "expect" in sc.params:
        want = bool(sc.params["expect"])
        checks.append(Assertion("certificate matches expectation", float(cert.displaced), float(want),
                                cert.displaced == want, sc.name))

    def fig(path):
        from .plotting import displacement_plot
        pts = region.samples(sample_spacing(grid, margin))
        pts = pts[:: max(1, len(pts) // 4000)]
        displacement_plot(pts, m(pts), path, title=f"displaced: {cert.displaced}")

    return Outcome({"certificate": cert.as_dict(), "region": region.describe()}, cols, rows, checks,
                   [("images", fig)])


ENERGY_COLUMNS = ["name", "region", "r", "upper_bound", "feasible", "witness", "margin", "N", "min_distance",
                  "sample_count", "evaluations"]


def _energy_row(name, region, r, est, grid):
    cert = est.certificate
    return [name, region.describe()["kind"], r, est.upper_bound, est.feasible, est.witness.get("v"),
            est.margin, grid.points, cert.min_distance if cert else None, cert.sample_count if cert else None,
            est.evaluations]


def cmd_energy(sc: Scenario, opts: Options) -> Outcome:
    from .energy import DEFAULT_FAMILY, displacement_energy_upper, recheck
    from .lab import _check, torus_example_suite
    from .regions import Strip
    from .scenario import build_region

    grid = sc.grid_spec()
    family = sc.params.get("family") or DEFAULT_FAMILY
    rows, checks, results = [], [], []
    if "r_values" in sc.params:
        margin = opts.margin if opts.margin is not None else float(sc.params.get("margin", 0.01))
        strips, ests = torus_example_suite(sc.params["r_values"], sc.norm, grid, margin, sc.steps, family)
        for row, est in zip(strips, ests):
            region = Strip(0, 0.0, row.r, grid.dim)
            rows.append(_energy_row(sc.name, region, row.r, est, grid))
            checks += _assert_checks(row.checks, f"r={row.r:g}")
            results.append({"region": region.describe(), **est.as_dict()})
    else:
        if "region" not in sc.params:
            raise ScenarioError("energy needs either region or r_values", "region")
        region = build_region(sc.params["region"], grid)
        margin = opts.margin if opts.margin is not None else float(sc.params.get("margin", 4.0 / grid.points))
        est = displacement_energy_upper(region, grid, margin, family, sc.norm, sc.steps)
        r = region.width if isinstance(region, Strip) else None
        rows.append(_energy_row(sc.name, region, r, est, grid))
        results.append({"region": region.describe(), **est.as_dict()})
        if est.feasible and est.witness.get("kind") == "rotation":
            again = recheck(est, region, grid, sc.steps)
            checks.append(Assertion("stored witness re-certifies", abs(again.min_distance - est.certificate.min_distance),
                                    0.0, again.displaced and again.min_distance == est.certificate.min_distance,
                                    sc.name))
        if isinstance(region, Strip) and est.feasible and family.get("kind", "rotations") == "rotations":
            slack = margin + 2.0 / grid.points
            a = abs(float(est.witness["v"][region.axis]))
            tag = f"r={r:g}"
            checks += _assert_checks({"upper <= r + margin + 2/N": _check(est.upper_bound, r + slack),
                                      "witness component >= r": _check(r, a),
                                      "witness component <= r + margin + 2/N": _check(a, r + slack)}, tag)
    figures = []
    if len(rows) > 1:
        def fig(path, rows=rows, margin=margin):
            from .plotting import energy_plot
            energy_plot([r[2] for r in rows], [r[3] for r in rows], margin + 2.0 / grid.points, path)
        figures.append(("bounds", fig))
    elif rows and results[0]["feasible"] and results[0]["witness"].get("kind") == "rotation":
        def fig(path, region=region, est=est):
            from .energy import sample_spacing
            from .isotopy import Rotation
            from .plotting import displacement_plot
            pts = region.samples(sample_spacing(grid, est.margin))
            pts = pts[:: max(1, len(pts) // 4000)]
            m = Rotation(grid, est.witness["v"], sc.steps).time_one()
            displacement_plot(pts, m(pts), path, title=f"witness v = {np.round(est.witness['v'], 4).tolist()}")
        figures.append(("witness", fig))
    return Outcome({"estimates": results}, ENERGY_COLUMNS, rows, checks, figures)


def _commutator_job(args):
    """One randomized commutator run; top level so worker processes can pickle it."""
    from .isotopy import make_rotation
    from .lab import commutator_lab
    from .regions import region_from_dict
    from .torus import GridSpec

    region_desc, v, a, b, c, n, N, T, seed, tol, substeps = args
    grid = GridSpec(n, N)
    region = region_from_dict(region_desc, grid.dim)
    try:
        return commutator_lab(region, make_rotation(grid, v, T), a, b, c, grid, T, seed=seed, tol=tol,
                              substeps=substeps)
    except ValueError:
        return None


def cmd_commutator(sc: Scenario, opts: Options) -> Outcome:
    from .bump import BUMP_SUBSTEPS, bump_hamiltonian_pair
    from .lab import LAB_TOL, STRICT_TOL, commutator_lab, random_admissible_configuration
    from .scenario import build_isotopy, build_region

    grid = sc.grid_spec()
    p = sc.params
    region = build_region(p["region"], grid)
    if "h" in p:
        h = build_isotopy(p["h"], grid, sc.steps, "h")
    else:
        from .isotopy import make_rotation
        v = np.zeros(grid.dim)
        v[0] = 0.5
        h = make_rotation(grid, v, sc.steps)
    tol = STRICT_TOL if opts.strict else float(p.get("tolerance", LAB_TOL))
    margin = opts.margin if opts.margin is not None else p.get("margin")
    substeps = int(p.get("substeps", BUMP_SUBSTEPS))
    for key in "abc":
        if len(p[key]) != grid.dim:
            raise ScenarioError(f"point needs {grid.dim} coordinates", key)
    runs = [("scenario", commutator_lab(region, h, p["a"], p["b"], p["c"], grid, sc.steps, margin,
                                        int(p.get("samples", 300)), sc.seed, tol,
                                        float(p.get("flux_spacing", 1 / 256)), substeps))]
    count = int(p.get("randomized", 0))
    if count:
        rng = np.random.default_rng(sc.seed + 5)
        configs = random_admissible_configuration(rng, grid.dim)
        done = 0
        while done < count:
            batch = []
            for _ in range(count - done):
                reg, v, a, b, c = next(configs)
                batch.append((reg.describe(), v.tolist(), a.tolist(), b.tolist(), c.tolist(), grid.half_dim,
                              grid.points, sc.steps, sc.seed + done + len(batch), tol, substeps))
            if opts.workers > 1 and len(batch) > 1:
                with ProcessPoolExecutor(max_workers=min(opts.workers, len(batch))) as pool:
                    reps = list(pool.map(_commutator_job, batch))
            else:
                reps = [_commutator_job(b) for b in batch]
            for rep in reps:
                if rep is not None and done < count:
                    runs.append((f"random {done + 1}", rep))
                    done += 1
    cols = ["name", "run", "N", "T", "lemma_deviation", "restriction_deviation", "nontriviality",
            "support_leakage", "theta_flux_l1", "tolerance", "passed"]
    rows, checks = [], []
    for tag, rep in runs:
        rows.append([sc.name, tag, grid.points, sc.steps, rep.lemma_deviation, rep.restriction_deviation,
                     rep.nontriviality, rep.support_leakage, float(np.abs(rep.theta_flux).sum()), tol, rep.passed])
        checks += _assert_checks(rep.checks, tag)
    res = {"runs": [{"run": tag, **rep.as_dict()} for tag, rep in runs]}

    def fig(path):
        from .plotting import commutator_plot
        phi, psi = bump_hamiltonian_pair(region, p["a"], p["b"], p["c"], grid, sc.steps, substeps)
        m = 200
        ax = (np.arange(m) + 0.5) / m
        fine = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
        if grid.dim > 2:
            fine = np.concatenate([fine, np.tile(np.asarray(p["a"])[2:], (len(fine), 1))], axis=1)
        tubes = [{"points": fine, "mask": phi.source.support_contains(fine), "label": "supp phi"},
                 {"points": fine, "mask": psi.source.support_contains(fine), "label": "supp psi"}]
        inside = fine[region.contains(fine)]
        commutator_plot(inside, tubes, {k: np.asarray(p[k])[:2] for k in "abc"}, path,
                        title=f"lemma deviation {runs[0][1].lemma_deviation:.2e}")

    return Outcome(res, cols, rows, checks, [("supports", fig)])


def cmd_conjugation(sc: Scenario, opts: Options) -> Outcome:
    from .forms import CLOSED_TOL
    from .lab import LAB_TOL, STRICT_TOL, alpha_field, conjugation_bound_lab
    from .scenario import build_isotopy

    grid = sc.grid_spec()
    phi = build_isotopy(sc.params["phi"], grid, sc.steps, "phi")
    h = build_isotopy(sc.params["h"], grid, sc.steps, "h")
    tol = STRICT_TOL if opts.strict else float(sc.params.get("tolerance", LAB_TOL))
    rep = conjugation_bound_lab(phi, h, sc.norm, tol, float(sc.params.get("closed_tol", CLOSED_TOL)))
    keys = ["nu", "K", "k", "l0_h", "l0_h_inverse", "l0_psi", "l0_psi_inverse", "l_h", "l_psi",
            "harmonic_deviation", "inequality_slack"]
    cols = ["name", "N", "T", "norm"] + keys + ["tolerance", "passed"]
    rows = [[sc.name, grid.points, sc.steps, sc.norm] + [getattr(rep, k) for k in keys] + [tol, rep.passed]]

    def fig_alpha(path):
        from .forms import hodge
        from .plotting import field_image
        H = hodge(h.generating_one_form(0)).harmonic
        field_image(alpha_field(H, phi).values, path, title="alpha for the harmonic part of h at t = 0",
                    label="alpha")

    def fig_terms(path):
        from .plotting import bar_plot
        bar_plot(["l0(h)", "K", "l0(h) + K", "l0(psi)", "(2nu+1) l(h)", "l(psi)"],
                 [rep.l0_h, rep.K, rep.l0_h + rep.K, rep.l0_psi, rep.k * rep.l_h, rep.l_psi], path,
                 ylabel="length", title=f"nu = {rep.nu:.4f}")

    return Outcome(rep.as_dict(), cols, rows, _assert_checks(rep.checks, sc.name),
                   [("alpha", fig_alpha), ("terms", fig_terms)])


def cmd_uniqueness(sc: Scenario, opts: Options) -> Outcome:
    from .lab import default_psi, uniqueness_demo
    from .scenario import build_isotopy

    grid = sc.grid_spec()
    psi = build_isotopy(sc.params["psi"], grid, sc.steps, "psi") if "psi" in sc.params \
        else default_psi(grid, sc.steps)
    rep = uniqueness_demo(psi, sc.params.get("schedule"), sc.norm, bool(sc.params.get("ball_check", True)))
    cols = ["name", "n", "epsilon", "length", "distance", "torus_distance", "swapped_length",
            "swapped_distance", "ball_radius", "ball_displaced", "ball_strip_bound"]
    rows = []
    for i, eps in enumerate(rep.epsilons):
        ball = rep.balls[i] if i < len(rep.balls) else {}
        rows.append([sc.name, i + 1, eps, rep.lengths[i], rep.distances[i], rep.torus_distances[i],
                     rep.swapped_lengths[i], rep.swapped_distances[i], ball.get("radius"),
                     ball.get("displaced"), ball.get("strip_upper_bound")])

    def fig(path):
        from .plotting import convergence_plot
        convergence_plot(rep.epsilons, {"l(Phi_n^-1 Psi)": rep.lengths, "sup distance": rep.distances}, path,
                         title="length and C0 convergence")

    return Outcome(rep.as_dict(), cols, rows, _assert_checks(rep.checks, sc.name), [("convergence", fig)])


def cmd_suite(sc: Scenario, opts: Options) -> Outcome:
    from .battery import CRITERIA, run_battery

    wanted = [int(k) for k in sc.params.get("criteria", sorted(CRITERIA))]
    bad = [k for k in wanted if k not in CRITERIA]
    if bad:
        raise ScenarioError(f"unknown criteria {bad}; expected numbers 1-{len(CRITERIA)}", "criteria")
    results = run_battery(wanted, sc.seed, opts.workers)
    for r in results:
        print(r.line(), flush=True)
    cols = ["criterion", "title", "passed", "summary"]
    rows = [[r.number, r.title, r.passed, r.summary] for r in results]
    checks = [Assertion(r.title, float(r.passed), 1.0, r.passed, f"criterion {r.number}") for r in results]
    res = {"criteria": [{k: v for k, v in r.as_dict().items() if k != "seconds"} for r in results]}

    def fig(path):
        from .plotting import bar_plot
        bar_plot([str(r.number) for r in results], [r.seconds for r in results], path, ylabel="seconds",
                 title="acceptance battery runtime",
                 colors=["#1b9e77" if r.passed else "#d95f02" for r in results])

    return Outcome(res, cols, rows, checks, [("runtime", fig)],
                   timing={f"criterion {r.number}": r.seconds for r in results})


HANDLERS = {
    "hodge": cmd_hodge, "length": cmd_length, "flux": cmd_flux, "displace": cmd_displace, "energy": cmd_energy,
    "commutator-lab": cmd_commutator, "conjugation-lab": cmd_conjugation, "uniqueness-demo": cmd_uniqueness,
    "suite": cmd_suite,
}


# -- driver -------------------------------------------------------------------------


def shipped_scenario(command: str) -> str:
    """Text of the scenario shipped for ``command``."""
    return resources.files("hoferlab").joinpath("scenarios", f"{command}.yaml").read_text(encoding="utf-8")


def _parser():
    p = argparse.ArgumentParser(prog="hoferlab", description="Numerical lab for symplectic isotopies of flat tori.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("scenario", nargs="?", help="scenario YAML file (default: the shipped scenario for the command)")
    p.add_argument("--grid", type=int, metavar="N", help="grid points per axis (even)")
    p.add_argument("--steps", type=int, metavar="T", help="integrator time steps")
    p.add_argument("--norm", choices=NORMS, help="norm on harmonic coefficients")
    p.add_argument("--margin", type=float, metavar="x", help="displacement margin")
    p.add_argument("--strict", action="store_true",
                   help="at least N=128, T=400 and tolerance 1e-4 for the lab commands")
    p.add_argument("--seed", type=int, metavar="s")
    p.add_argument("--out", default=".", metavar="dir", help="output directory (default: current)")
    p.add_argument("--workers", type=int, metavar="k",
                   help="worker processes (default: $HOFERLAB_WORKERS or all cores; 1 = sequential)")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    return p


def _apply_flags(sc: Scenario, args) -> Scenario:
    grid = dict(sc.grid)
    if args.grid is not None:
        grid["N"] = args.grid
    if args.steps is not None:
        grid["T"] = args.steps
    if args.strict and sc.command in STRICT_COMMANDS:
        from .lab import STRICT_GRID, STRICT_STEPS
        grid["N"] = max(grid["N"], STRICT_GRID)
        grid["T"] = max(grid["T"], STRICT_STEPS)
    data = sc.to_dict()
    data["grid"] = grid
    if args.norm is not None:
        data["norm"] = args.norm
    if args.seed is not None:
        data["seed"] = args.seed
    # re-validate so flag values get the same checks as file values
    return Scenario.from_dict(data, sc.source, sc.lines)


def _fail_usage(msg: str) -> int:
    print(f"hoferlab: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.margin is not None and args.command not in MARGIN_COMMANDS:
        return _fail_usage(f"--margin applies to {', '.join(MARGIN_COMMANDS)} only")
    if args.margin is not None and args.margin < 0:
        return _fail_usage("--margin must be nonnegative")
    if args.workers is not None and args.workers < 1:
        return _fail_usage("--workers must be >= 1")
    from .battery import default_workers

    workers = args.workers if args.workers is not None else default_workers()
    try:
        if args.scenario:
            sc = load(args.scenario)
        else:
            sc = loads(shipped_scenario(args.command), f"<shipped {args.command}.yaml>")
        if sc.command != args.command:
            raise ScenarioError(f"scenario is for {sc.command!r}, not {args.command!r}", "command",
                                sc.lines.get("command"), sc.source)
        sc = _apply_flags(sc, args)
    except ScenarioError as exc:
        return _fail_usage(str(exc))
    except OSError as exc:
        return _fail_usage(f"cannot read scenario: {exc}")

    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    opts = Options(strict=args.strict, margin=args.margin, workers=workers)
    try:
        outcome = HANDLERS[sc.command](sc, opts)
    except ScenarioError as exc:
        return _fail_usage(str(attach_lines(exc, sc.lines, sc.source)))
    except (ValueError, RuntimeError) as exc:
        # preconditions such as "h does not displace the region" are findings, not crashes
        outcome = Outcome({"error": f"{type(exc).__name__}: {exc}"}, ["name", "error"],
                          [[sc.name, str(exc)]],
                          [Assertion("run completed", 0.0, 1.0, False, f"{sc.name}: {exc}")])
    elapsed = time.perf_counter() - t0

    stem = os.path.join(args.out, _slug(sc.name))
    report = {
        "header": {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "seconds": elapsed,
                   "timing": outcome.timing, "host": platform.node()},
        "format": "hoferlab-report/1",
        "scenario": sc.to_dict(),
        "environment": {**_grid_meta(sc), "strict": args.strict, "version": __version__,
                        "python": platform.python_version(), "numpy": np.__version__},
        "result": outcome.result,
        "assertions": [a.as_dict() for a in outcome.assertions],
        "passed": outcome.passed,
    }
    write_atomic(stem + ".csv", render_csv(outcome.columns, outcome.rows))
    write_atomic(stem + ".json", json.dumps(_plain(report), indent=2) + "\n")
    written = [stem + ".csv", stem + ".json"]
    if not args.no_figures:
        for suffix, fn in outcome.figures:
            path = f"{stem}-{suffix}.png"
            fn(path)
            written.append(path)
    for path in written:
        print(f"wrote {path}")
    failed = [a for a in outcome.assertions if not a.passed]
    for a in failed:
        print(f"FAIL [{a.record}] {a.name}: value {_cell(_plain(a.value))} vs bound {_cell(_plain(a.bound))}",
              file=sys.stderr)
    ok = len(outcome.assertions) - len(failed)
    print(f"{sc.command}: {ok}/{len(outcome.assertions)} assertions passed")
    return EXIT_FAIL if failed else EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
