"""Compactly supported Hamiltonians that push one point to another along a tube.

Inside the plateau of the tube around the segment a -> b the Hamiltonian is
the linear function L * <n, x - a> with n chosen so its symplectic gradient
is L * e (e the unit direction, L the length).  Hence the time-one flow moves
a to b exactly, and the velocity vanishes identically outside the tube.
"""

from __future__ import annotations

import numpy as np

from .isotopy import DEFAULT_STEPS, IntegratedIsotopy, sharp_omega
from .regions import Region
from .torus import GridSpec, ScalarField, torus_distance, wrap_delta


def _smooth_step(u, order=2):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, with derivatives up to ``order``."""
    u = np.asarray(u, dtype=float)
    inner = (u > 0) & (u < 1)
    s = np.where(u >= 1, 1.0, 0.0)
    s1 = np.zeros_like(u)
    s2 = np.zeros_like(u) if order >= 2 else None
    if inner.any():
        x = u[inner]
        y = 1.0 - x
        A, B = np.exp(-1.0 / x), np.exp(-1.0 / y)
        ix2, iy2 = 1.0 / (x * x), 1.0 / (y * y)
        A1, B1 = A * ix2, -B * iy2
        S = A + B
        num = A1 * B - A * B1
        s[inner] = A / S
        s1[inner] = num / (S * S)
        if order >= 2:
            A2 = A * ix2 * (ix2 - 2.0 / x)
            B2 = B * iy2 * (iy2 - 2.0 / y)
            num1 = A2 * B - A * B2
            s2[inner] = (num1 * S - 2.0 * num * (A1 + B1)) / S ** 3
    return s, s1, s2


def _quintic_step(u, order=2):
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    s = u ** 3 * (10 - 15 * u + 6 * u ** 2)
    s1 = 30 * u ** 2 * (1 - u) ** 2
    s2 = 60 * u * (1 - u) * (1 - 2 * u)
    return s, s1, s2


PROFILES = {"smooth": _smooth_step, "quintic": _quintic_step}


class TubeHamiltonian:
    """Autonomous Hamiltonian supported in a tube around the segment a -> a + L e."""

    kind = "hamiltonian"
    autonomous = True

    def __init__(self, grid: GridSpec, a, b, width: float, profile: str = "smooth"):
        self.grid = grid
        n = grid.half_dim
        self.a = np.asarray(a, dtype=float)
        delta = wrap_delta(np.asarray(b, dtype=float) - self.a)
        self.length = float(np.linalg.norm(delta))
        if self.length == 0:
            raise ValueError("tube endpoints coincide")
        self.e = delta / self.length
        # sharp_omega(n_vec) = e  <=>  n_vec = -sharp_omega(e)
        self.n = -sharp_omega(self.e, n)
        self.width = float(width)
        self.plateau = self.width / 3.0
        self.ramp = self.width - self.plateau
        self.step = PROFILES[profile]
        self.profile = profile
        self._field = None

    def local(self, pts):
        y = wrap_delta(np.atleast_2d(pts) - self.a)
        s = y @ self.e
        perp = y - s[:, None] * self.e
        rho = np.linalg.norm(perp, axis=1)
        return y, s, perp, rho

    def support_contains(self, pts) -> np.ndarray:
        """Points of the closed outer tube (where F may be nonzero)."""
        _, s, _, rho = self.local(pts)
        return (s >= -self.width) & (s <= self.length + self.width) & (rho <= self.width)

    def _cutoffs(self, s, rho, order=2):
        p, tau, L = self.plateau, self.ramp, self.length
        left = -p - s
        right = s - (L + p)
        over = np.maximum(np.maximum(left, right), 0.0)
        sa, sa1, sa2 = self.step(over / tau, order)
        ds = np.where(right > 0, 1.0, np.where(left > 0, -1.0, 0.0))
        sp, sp1, sp2 = self.step(np.maximum(rho - p, 0.0) / tau, order)
        along = [1.0 - sa, -sa1 / tau * ds]
        across = [1.0 - sp, -sp1 / tau]
        if order >= 2:
            along.append(-sa2 / tau ** 2)
            across.append(-sp2 / tau ** 2)
        return along, across

    def derivatives(self, pts, order: int = 2):
        """F and its gradient (and Hessian for ``order`` 2) at points (M, dim)."""
        y, s, perp, rho = self.local(pts)
        d = self.grid.dim
        M = len(y)
        along, across = self._cutoffs(s, rho, order)
        ca, ca1 = along[:2]
        cp, cp1 = across[:2]
        ell = self.length * (y @ self.n)
        dell = self.length * self.n
        safe = np.where(rho > 0, rho, 1.0)
        u = perp / safe[:, None]
        e = self.e
        G = ca * cp
        dG = (ca1 * cp)[:, None] * e + (ca * cp1)[:, None] * u
        F = ell * G
        grad = G[:, None] * dell + ell[:, None] * dG
        if order < 2:
            return F.reshape(M), grad, None
        ca2, cp2 = along[2], across[2]
        P = np.eye(d) - np.outer(e, e)
        hrho = (P[None] - u[:, :, None] * u[:, None, :]) / safe[:, None, None]
        eu = e[None, :, None] * u[:, None, :]
        HG = ((ca2 * cp)[:, None, None] * np.outer(e, e)[None]
              + (ca1 * cp1)[:, None, None] * (eu + np.swapaxes(eu, 1, 2))
              + ca[:, None, None] * (cp2[:, None, None] * u[:, :, None] * u[:, None, :]
                                     + cp1[:, None, None] * hrho))
        hess = (dell[None, :, None] * dG[:, None, :] + dG[:, :, None] * dell[None, None, :]
                + ell[:, None, None] * HG)
        return F.reshape(M), grad, hess

    def velocity(self, t, pts, jacobian=False):
        n = self.grid.half_dim
        _, g, h = self.derivatives(pts, 2 if jacobian else 1)
        X = sharp_omega(g, n)
        if jacobian:
            return X, np.concatenate([h[:, n:, :], -h[:, :n, :]], axis=1)
        return X, None

    def hamiltonian(self, t) -> ScalarField:
        if self._field is None:
            F = self.derivatives(self.grid.points_flat)[0]
            self._field = ScalarField(self.grid, F.reshape(self.grid.shape))
        return self._field

    def describe(self):
        return {"kind": "hamiltonian", "family": "tube bump", "from": self.a.tolist(),
                "direction": self.e.tolist(), "length": self.length, "width": self.width,
                "profile": self.profile}


def _tube_surface(ham: TubeHamiltonian, count: int = 64) -> np.ndarray:
    """Sample points on the boundary of the outer tube."""
    d = ham.grid.dim
    w, L = ham.width, ham.length
    s_vals = np.linspace(-w, L + w, count)
    basis = np.linalg.svd(np.eye(d) - np.outer(ham.e, ham.e))[0][:, : d - 1]
    if d == 2:
        dirs = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(7)
        dirs = rng.normal(size=(32 * d, d - 1))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    perp = dirs @ basis.T
    side = (ham.a + s_vals[:, None, None] * ham.e + w * perp[None]).reshape(-1, d)
    radii = np.linspace(0, w, count // 4)
    caps = []
    for s0 in (-w, L + w):
        caps.append((ham.a + s0 * ham.e + radii[:, None, None] * perp[None]).reshape(-1, d))
    return np.concatenate([side] + caps)


def fit_tube(grid: GridSpec, region: Region, a, b, avoid=None, profile: str = "smooth",
             widths=None) -> TubeHamiltonian:
    """Widest tube from a to b inside ``region`` whose support misses ``avoid``."""
    if widths is None:
        widths = 0.12 * 0.9 ** np.arange(40)
    for w in widths:
        ham = TubeHamiltonian(grid, a, b, w, profile)
        if np.min(region.depth(_tube_surface(ham))) <= 1e-3 * w:
            continue
        if avoid is not None and np.any(ham.support_contains(np.atleast_2d(avoid))):
            continue
        if avoid is not None:
            # keep a visible gap between the avoided point and the tube
            _, s, _, rho = ham.local(np.atleast_2d(avoid))
            gap = np.maximum(np.maximum(-w - s, s - ham.length - w), rho - w)
            if np.min(gap) < 0.1 * w:
                continue
        return ham
    raise ValueError("tube construction infeasible: no tube fits inside the region")


BUMP_SUBSTEPS = 4


def bump_hamiltonian_pair(region: Region, a, b, c, grid: GridSpec, steps: int = DEFAULT_STEPS,
                          substeps: int = BUMP_SUBSTEPS, profile: str = "smooth"):
    """Hamiltonian isotopies phi (a -> b) and psi (b -> c) supported in ``region``.

    phi is supported in a tube V around the segment a-b that avoids c, psi in
    a tube W around b-c; both tubes lie inside the region.  The cutoff ramps
    are steep, so each time step is split into ``substeps`` RK4 steps.
    """
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    pts = np.stack([a, b, c])
    if np.any(region.depth(pts) <= 0):
        raise ValueError("points a, b, c must lie in the interior of the region")
    for p, q in ((a, b), (b, c), (a, c)):
        if torus_distance(p, q) <= 1e-9:
            raise ValueError("points a, b, c must be distinct")
    V = fit_tube(grid, region, a, b, avoid=c, profile=profile)
    W = fit_tube(grid, region, b, c, profile=profile)
    phi = IntegratedIsotopy(grid, V, steps, substeps, name="bump a->b")
    psi = IntegratedIsotopy(grid, W, steps, substeps, name="bump b->c")
    return phi, psi
