"""Symplectic isotopies of T^{2n}: generators, flows and group operations.

The symplectic form is omega = sum_j dtheta_j ^ dtheta_{j+n}.  Contracting a
vector X gives

    i(X) omega = sum_j (X_j dtheta_{j+n} - X_{j+n} dtheta_j),

so the form coefficients are alpha_j = -X_{j+n} and alpha_{j+n} = X_j.
Solving i(X) omega = dF therefore gives X_j = dF/dtheta_{j+n} and
X_{j+n} = -dF/dtheta_j; on T^2 this is X = (dF/dtheta_2, -dF/dtheta_1).

All flows work on lifts to R^{2n}: points are never wrapped internally, so
the displacement phi_t(x) - x of a map isotopic to the identity is periodic
and compositions of lifts are lifts of compositions.

Every isotopy answers the same four queries at a time t and points x:
``flow`` (phi_t x), ``inverse_flow`` (phi_t^{-1} x), optionally with
Jacobians, and ``velocity`` (the Eulerian field dphi_t/dt o phi_t^{-1}).
Leaves are integrated with classical RK4 on the uniform time grid (with the
tangent map carried along the same stages); composite isotopies are built
from their children by the chain rule.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from functools import cached_property

import numpy as np

from .forms import OneForm
from .torus import GridSpec, ScalarField, wrap, wrap_delta

log = logging.getLogger(__name__)

DEFAULT_STEPS = 100
_MEMO_SIZE = 64
_GRID_PASS_LIMIT = 20000


def contract_omega(X, n: int) -> np.ndarray:
    """Coefficients of i(X) omega for vectors X of shape (..., 2n)."""
    X = np.asarray(X)
    return np.concatenate([-X[..., n:], X[..., :n]], axis=-1)


def sharp_omega(alpha, n: int) -> np.ndarray:
    """Inverse of :func:`contract_omega`: the X with i(X) omega = alpha."""
    alpha = np.asarray(alpha)
    return np.concatenate([alpha[..., n:], -alpha[..., :n]], axis=-1)


def omega_matrix(n: int) -> np.ndarray:
    """Matrix W with omega(u, w) = u^T W w."""
    W = np.zeros((2 * n, 2 * n))
    W[:n, n:] = np.eye(n)
    W[n:, :n] = -np.eye(n)
    return W


def _as_points(pts, dim):
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] != dim:
        raise ValueError(f"points have dimension {pts.shape[-1]}, expected {dim}")
    return pts


def _key(t, pts):
    return (round(float(t), 15), pts.shape, hash(pts.tobytes()))


class _Memo:
    """Small LRU cache for flow evaluations on repeated point sets."""

    def __init__(self, size=_MEMO_SIZE):
        self.size = size
        self.data = OrderedDict()

    def get(self, key):
        if key in self.data:
            self.data.move_to_end(key)
            return self.data[key]
        return None

    def put(self, key, value):
        self.data[key] = value
        if len(self.data) > self.size:
            self.data.popitem(last=False)


# -- time families of scalar fields -------------------------------------------


class ScalarFamily:
    """A time-dependent scalar field t -> F_t on one grid.

    Built from a single field (autonomous), from T+1 samples at uniform time
    nodes (cubic Lagrange interpolation in time), or from a function
    ``fn(t, *coords)`` sampled exactly at any requested time.
    """

    def __init__(self, grid: GridSpec, at, autonomous: bool = False, description: str = ""):
        self.grid = grid
        self._at = at
        self.autonomous = autonomous
        self.description = description
        self._cache = OrderedDict()

    @classmethod
    def constant(cls, field: ScalarField, description: str = "autonomous"):
        return cls(field.grid, lambda t: field, autonomous=True, description=description)

    @classmethod
    def from_function(cls, grid: GridSpec, fn, description: str = "function"):
        return cls(grid, lambda t: ScalarField(grid, fn(t, *grid.coords)), description=description)

    @classmethod
    def from_samples(cls, fields, description: str = "samples"):
        fields = list(fields)
        T = len(fields) - 1
        grid = fields[0].grid
        if T == 0:
            return cls.constant(fields[0], description)

        def at(t):
            s = t * T
            k = int(np.clip(math.floor(s), 0, T - 1))
            if s == k:
                return fields[k]
            lo = int(np.clip(k - 1, 0, max(T - 3, 0)))
            nodes = list(range(lo, min(lo + 4, T + 1)))
            vals = 0.0
            for i in nodes:
                w = 1.0
                for j in nodes:
                    if j != i:
                        w *= (s - j) / (i - j)
                vals = vals + w * fields[i].values
            return ScalarField(grid, vals)

        return cls(grid, at, description=description)

    def at(self, t: float) -> ScalarField:
        if self.autonomous:
            t = 0.0
        key = round(float(t), 14)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._at(float(t))
            self._cache[key] = hit
            if len(self._cache) > 1024:
                self._cache.popitem(last=False)
        return hit


# -- velocity sources for integrated leaves -----------------------------------


class HamiltonianSource:
    """Velocity X_t = symplectic gradient of F_t via spectral interpolation."""

    kind = "hamiltonian"

    def __init__(self, family: ScalarFamily):
        self.family = family
        self.grid = family.grid
        self.autonomous = family.autonomous

    def hamiltonian(self, t: float) -> ScalarField:
        return self.family.at(t)

    def velocity(self, t, pts, jacobian=False):
        n = self.grid.half_dim
        F = self.family.at(t)
        if jacobian:
            _, g, h = F.evaluate_derivatives(pts, order=2)
            return sharp_omega(g, n), np.concatenate([h[:, n:, :], -h[:, :n, :]], axis=1)
        _, g = F.evaluate_derivatives(pts, order=1)
        return sharp_omega(g, n), None

    def describe(self):
        return {"kind": "hamiltonian", "family": self.family.description}


class ExplicitSource:
    """Velocity given directly as 2n time families of scalar fields."""

    kind = "explicit"

    def __init__(self, components):
        self.components = list(components)
        self.grid = self.components[0].grid
        self.autonomous = all(c.autonomous for c in self.components)
        if len(self.components) != self.grid.dim:
            raise ValueError("explicit field needs one component per coordinate")

    def velocity(self, t, pts, jacobian=False):
        order = 1 if jacobian else 0
        res = [c.at(t).evaluate_derivatives(pts, order=order) for c in self.components]
        X = np.stack([r[0] for r in res], axis=1)
        if jacobian:
            return X, np.stack([r[1] for r in res], axis=1)
        return X, None

    def describe(self):
        return {"kind": "explicit", "components": [c.description for c in self.components]}


# -- isotopies ------------------------------------------------------------------


class Isotopy:
    """Base class: a symplectic isotopy sampled on T+1 uniform time nodes."""

    grid: GridSpec
    steps: int

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.steps + 1)

    def node_time(self, k: int) -> float:
        return k / self.steps

    # subclasses implement these four
    def flow(self, t, pts, jacobian=False):
        raise NotImplementedError

    def inverse_flow(self, t, pts, jacobian=False):
        raise NotImplementedError

    def velocity(self, t, pts):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    is_identity = False
    is_hamiltonian = False

    # shared machinery

    def velocity_grid(self, k: int) -> np.ndarray:
        """Velocity at grid nodes at time node k, shape (N^dim, dim)."""
        cache = self.__dict__.setdefault("_vel_cache", {})
        key = 0 if self.autonomous else k
        if key not in cache:
            cache[key] = self.velocity(self.node_time(k), self.grid.points_flat)
        return cache[key]

    @property
    def autonomous(self) -> bool:
        return False

    def generating_one_form(self, k: int) -> OneForm:
        """i(phi_dot_t) omega at time node k."""
        X = self.velocity_grid(k)
        alpha = contract_omega(X, self.grid.half_dim)
        return OneForm(self.grid, alpha.T.reshape((self.dim,) + self.grid.shape))

    def flow_map(self, k: int) -> "FlowMap":
        cache = self.__dict__.setdefault("_flowmap_cache", {})
        if k not in cache:
            cache[k] = FlowMap(self, self.node_time(k))
        return cache[k]

    def time_one(self) -> "FlowMap":
        return self.flow_map(self.steps)

    def check_compatible(self, other: "Isotopy"):
        if self.grid != other.grid or self.steps != other.steps:
            raise ValueError(
                f"isotopies live on different grids/time grids: "
                f"({self.grid}, T={self.steps}) vs ({other.grid}, T={other.steps})")

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"


class Rotation(Isotopy):
    """Harmonic one-parameter group x -> x + t v (exact flows)."""

    def __init__(self, grid: GridSpec, v, steps: int = DEFAULT_STEPS):
        self.grid = grid
        self.steps = steps
        self.v = np.asarray(v, dtype=float).reshape(grid.dim)

    @property
    def is_identity(self):
        return not np.any(self.v)

    @property
    def autonomous(self):
        return True

    def flow(self, t, pts, jacobian=False):
        pts = _as_points(pts, self.dim)
        out = pts + t * self.v
        if jacobian:
            return out, np.broadcast_to(np.eye(self.dim), (len(pts), self.dim, self.dim)).copy()
        return out

    def inverse_flow(self, t, pts, jacobian=False):
        pts = _as_points(pts, self.dim)
        out = pts - t * self.v
        if jacobian:
            return out, np.broadcast_to(np.eye(self.dim), (len(pts), self.dim, self.dim)).copy()
        return out

    def velocity(self, t, pts):
        pts = _as_points(pts, self.dim)
        return np.broadcast_to(self.v, pts.shape).copy()

    def harmonic_generator(self) -> np.ndarray:
        return contract_omega(self.v, self.grid.half_dim)

    def describe(self):
        return {"kind": "rotation", "v": self.v.tolist()}


class IntegratedIsotopy(Isotopy):
    """Leaf isotopy whose flow is integrated with RK4 from a velocity source."""

    def __init__(self, grid: GridSpec, source, steps: int = DEFAULT_STEPS, substeps: int = 1, name: str = ""):
        self.grid = grid
        self.steps = steps
        self.substeps = substeps
        self.source = source
        self.name = name
        self._memo = _Memo()

    @property
    def is_hamiltonian(self):
        return self.source.kind == "hamiltonian"

    @property
    def is_identity(self):
        if not (self.is_hamiltonian and self.autonomous and hasattr(self.source, "family")):
            return False
        return not np.any(self.source.hamiltonian(0.0).values)

    @property
    def autonomous(self):
        return self.source.autonomous

    def hamiltonian(self, t: float) -> ScalarField:
        if not self.is_hamiltonian:
            raise TypeError("isotopy has no Hamiltonian generator")
        return self.source.hamiltonian(t)

    def velocity(self, t, pts):
        return self.source.velocity(t, _as_points(pts, self.dim))[0]

    def _rk4(self, t, x, h, J):
        f = self.source.velocity
        jac = J is not None
        k1, A1 = f(t, x, jac)
        x2 = x + 0.5 * h * k1
        k2, A2 = f(t + 0.5 * h, x2, jac)
        x3 = x + 0.5 * h * k2
        k3, A3 = f(t + 0.5 * h, x3, jac)
        x4 = x + h * k3
        k4, A4 = f(t + h, x4, jac)
        xn = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not jac:
            return xn, None
        # the tangent map follows the same stages (derivative of the RK4 step)
        j1 = A1 @ J
        j2 = A2 @ (J + 0.5 * h * j1)
        j3 = A3 @ (J + 0.5 * h * j2)
        j4 = A4 @ (J + h * j3)
        return xn, J + (h / 6.0) * (j1 + 2 * j2 + 2 * j3 + j4)

    def _schedule(self, t0, t1):
        """Substep list (start, h) from t0 to t1 aligned with the node grid."""
        T = self.steps
        dt = 1.0 / T
        sign = 1 if t1 >= t0 else -1
        out = []

        def node_of(t):
            s = t * T
            r = round(s)
            return r if abs(s - r) < 1e-9 else None

        if sign > 0:
            k0, k1 = node_of(t0), node_of(t1)
            k_start = k0 if k0 is not None else math.floor(t0 * T) + 1
            k_end = k1 if k1 is not None else math.floor(t1 * T)
            if k0 is None and k_start * dt <= t1:
                out.append((t0, k_start * dt - t0))
            cur = k_start
            while cur < k_end:
                h = dt / self.substeps
                for s in range(self.substeps):
                    out.append((cur * dt + s * h, h))
                cur += 1
            if k1 is None:
                start = max(k_end * dt, t0)
                if t1 > start:
                    out.append((start, t1 - start))
        else:
            fwd = self._schedule(t1, t0)
            for start, h in reversed(fwd):
                out.append((start + h, -h))
        return out

    def _integrate(self, pts, t0, t1, jacobian, J0=None):
        x = pts.copy()
        if J0 is not None:
            J = J0.copy()
        else:
            J = np.broadcast_to(np.eye(self.dim), (len(x), self.dim, self.dim)).copy() if jacobian else None
        inside = getattr(self.source, "support_contains", None)
        if inside is not None:
            # points outside a compact support never move
            mask = inside(x)
            if not mask.all():
                if mask.any():
                    sub = self._integrate_all(x[mask], None if J is None else J[mask], t0, t1)
                    x[mask] = sub[0]
                    if J is not None:
                        J[mask] = sub[1]
                return (x, J) if jacobian else x
        x, J = self._integrate_all(x, J, t0, t1)
        return (x, J) if jacobian else x

    def _integrate_all(self, x, J, t0, t1):
        for start, h in self._schedule(t0, t1):
            x, J = self._rk4(start, x, h, J)
        return x, J

    def _cached_integrate(self, pts, t0, t1, jacobian):
        pts = _as_points(pts, self.dim)
        key = (t0,) + _key(t1, pts) + (jacobian,)
        hit = self._memo.get(key)
        if hit is None and not jacobian:
            full = self._memo.get(key[:-1] + (True,))
            if full is not None:
                hit = full[0]
        if hit is None:
            hit = self._integrate(pts, t0, t1, jacobian)
            self._memo.put(key, hit)
        return hit

    def _grid_node(self, t, pts):
        """Time node index if (t, pts) can be served by a cached grid pass."""
        if self.grid.size > _GRID_PASS_LIMIT:
            return None
        if not (pts is self.grid.points_flat or (pts.shape == self.grid.points_flat.shape
                                                 and np.array_equal(pts, self.grid.points_flat))):
            return None
        k = t * self.steps
        return int(round(k)) if abs(k - round(k)) < 1e-12 else None

    def flow(self, t, pts, jacobian=False):
        pts = _as_points(pts, self.dim)
        k = self._grid_node(t, pts)
        if k is not None:
            imgs, jacs = self._grid_pass(forward=True)
            return (imgs[k], jacs[k]) if jacobian else imgs[k]
        return self._cached_integrate(pts, 0.0, float(t), jacobian)

    def inverse_flow(self, t, pts, jacobian=False):
        pts = _as_points(pts, self.dim)
        k = self._grid_node(t, pts)
        if k is not None and self.autonomous:
            # for an autonomous field, integrating back from t_k to 0 is k
            # applications of the negative-step map, shared by all k
            imgs, jacs = self._grid_pass(forward=False)
            return (imgs[k], jacs[k]) if jacobian else imgs[k]
        return self._cached_integrate(pts, float(t), 0.0, jacobian)

    def _grid_pass(self, forward=True):
        """Images and Jacobians of all grid nodes at every time node (one sweep)."""
        cache = self.__dict__.setdefault("_grid_pass_data", {})
        if forward not in cache:
            x = self.grid.points_flat.copy()
            J = np.broadcast_to(np.eye(self.dim), (len(x), self.dim, self.dim)).copy()
            imgs, jacs = [x.copy()], [J.copy()]
            dt = 1.0 / self.steps
            for k in range(self.steps):
                if forward:
                    x, J = self._integrate(x, k * dt, (k + 1) * dt, True, J)
                else:
                    x, J = self._integrate(x, (k + 1) * dt, k * dt, True, J)
                imgs.append(x.copy())
                jacs.append(J.copy())
            cache[forward] = (imgs, jacs)
        return cache[forward]

    def describe(self):
        d = dict(self.source.describe())
        if self.name:
            d["name"] = self.name
        return d


class InverseIsotopy(Isotopy):
    """t -> phi_t^{-1}; maps by backward integration, velocity -(phi_t^{-1})_* phi_dot_t."""

    def __init__(self, base: Isotopy):
        self.base = base
        self.grid = base.grid
        self.steps = base.steps

    @property
    def autonomous(self):
        # the inverse of a flow of a time-independent field is the flow of -X
        return isinstance(self.base, (IntegratedIsotopy, Rotation)) and self.base.autonomous

    def flow(self, t, pts, jacobian=False):
        return self.base.inverse_flow(t, pts, jacobian)

    def inverse_flow(self, t, pts, jacobian=False):
        return self.base.flow(t, pts, jacobian)

    def velocity(self, t, pts):
        # Y_t(w) = -(D phi_t(w))^{-1} X_t(phi_t(w)), which is -X(w) when X is autonomous
        if self.autonomous:
            return -self.base.velocity(t, pts)
        z, J = self.base.flow(t, pts, jacobian=True)
        X = self.base.velocity(t, z)
        return -np.linalg.solve(J, X[..., None])[..., 0]

    def describe(self):
        return {"kind": "composite", "op": "inverse", "children": [self.base.describe()]}


class ComposedIsotopy(Isotopy):
    """Pointwise composition t -> outer_t o inner_t."""

    def __init__(self, outer: Isotopy, inner: Isotopy):
        outer.check_compatible(inner)
        self.outer = outer
        self.inner = inner
        self.grid = outer.grid
        self.steps = outer.steps

    def flow(self, t, pts, jacobian=False):
        if not jacobian:
            return self.outer.flow(t, self.inner.flow(t, pts))
        y, Ji = self.inner.flow(t, pts, True)
        z, Jo = self.outer.flow(t, y, True)
        return z, Jo @ Ji

    def inverse_flow(self, t, pts, jacobian=False):
        if not jacobian:
            return self.inner.inverse_flow(t, self.outer.inverse_flow(t, pts))
        y, Jo = self.outer.inverse_flow(t, pts, True)
        z, Ji = self.inner.inverse_flow(t, y, True)
        return z, Ji @ Jo

    def velocity(self, t, pts):
        # Z_t(z) = X_t(z) + D outer_t(w) Y_t(w),  w = outer_t^{-1}(z)
        pts = _as_points(pts, self.dim)
        w, Jinv = self.outer.inverse_flow(t, pts, True)
        Y = self.inner.velocity(t, w)
        return self.outer.velocity(t, pts) + np.linalg.solve(Jinv, Y[..., None])[..., 0]

    def describe(self):
        return {"kind": "composite", "op": "compose",
                "children": [self.outer.describe(), self.inner.describe()]}


class ConjugatedIsotopy(Isotopy):
    """t -> phi o h_t o phi^{-1} for phi the time-one map of ``conj``."""

    def __init__(self, conj: Isotopy, base: Isotopy):
        conj.check_compatible(base)
        self.conj = conj
        self.base = base
        self.grid = base.grid
        self.steps = base.steps

    @property
    def autonomous(self):
        return self.base.autonomous

    def _phi(self, pts, jacobian):
        return self.conj.flow(1.0, pts, jacobian)

    def _phi_inv(self, pts, jacobian):
        return self.conj.inverse_flow(1.0, pts, jacobian)

    def _chain(self, t, pts, jacobian, inner):
        if not jacobian:
            return self._phi(inner(t, self._phi_inv(pts, False)), False)
        y, J1 = self._phi_inv(pts, True)
        z, J2 = inner(t, y, True)
        out, J3 = self._phi(z, True)
        return out, J3 @ J2 @ J1

    def flow(self, t, pts, jacobian=False):
        return self._chain(t, pts, jacobian, self.base.flow)

    def inverse_flow(self, t, pts, jacobian=False):
        return self._chain(t, pts, jacobian, self.base.inverse_flow)

    def velocity(self, t, pts):
        # phi_* h_dot_t:  D phi(w) X_t(w),  w = phi^{-1}(z)
        w, Jinv = self._phi_inv(_as_points(pts, self.dim), True)
        X = self.base.velocity(t, w)
        return np.linalg.solve(Jinv, X[..., None])[..., 0]

    def describe(self):
        return {"kind": "composite", "op": "conjugate",
                "children": [self.conj.describe(), self.base.describe()]}


# -- constructors -----------------------------------------------------------------


def identity(grid: GridSpec, steps: int = DEFAULT_STEPS) -> Rotation:
    return Rotation(grid, np.zeros(grid.dim), steps)


def make_rotation(grid: GridSpec, v, steps: int = DEFAULT_STEPS) -> Rotation:
    return Rotation(grid, v, steps)


def make_hamiltonian(F, steps: int = DEFAULT_STEPS, substeps: int = 1, name: str = "") -> Isotopy:
    """Hamiltonian isotopy with i(X_t) omega = dF_t.

    ``F`` is a :class:`ScalarField` (autonomous), a :class:`ScalarFamily`,
    or a list of T+1 fields sampled at the time nodes.
    """
    if isinstance(F, ScalarField):
        family = ScalarFamily.constant(F)
    elif isinstance(F, ScalarFamily):
        family = F
    else:
        fields = list(F)
        if len(fields) != steps + 1:
            raise ValueError(f"expected {steps + 1} time samples, got {len(fields)}")
        family = ScalarFamily.from_samples(fields)
    return IntegratedIsotopy(family.grid, HamiltonianSource(family), steps, substeps, name)


def make_explicit(components, steps: int = DEFAULT_STEPS, substeps: int = 1, name: str = "") -> Isotopy:
    comps = [c if isinstance(c, ScalarFamily) else ScalarFamily.constant(c) for c in components]
    return IntegratedIsotopy(comps[0].grid, ExplicitSource(comps), steps, substeps, name)


def invert(iso: Isotopy) -> Isotopy:
    if isinstance(iso, Rotation):
        return Rotation(iso.grid, -iso.v, iso.steps)
    if isinstance(iso, InverseIsotopy):
        return iso.base
    if isinstance(iso, ComposedIsotopy):
        return ComposedIsotopy(invert(iso.inner), invert(iso.outer))
    if isinstance(iso, ConjugatedIsotopy):
        return ConjugatedIsotopy(iso.conj, invert(iso.base))
    return InverseIsotopy(iso)


def _mutually_inverse(a: Isotopy, b: Isotopy) -> bool:
    """Structural check that a_t o b_t = id for all t (never numerical)."""
    if isinstance(a, InverseIsotopy) and a.base is b:
        return True
    if isinstance(b, InverseIsotopy) and b.base is a:
        return True
    if isinstance(a, Rotation) and isinstance(b, Rotation):
        return bool(np.array_equal(a.v, -b.v))
    if isinstance(a, ComposedIsotopy) and isinstance(b, ComposedIsotopy):
        return _mutually_inverse(a.inner, b.outer) and _mutually_inverse(a.outer, b.inner)
    if isinstance(a, ConjugatedIsotopy) and isinstance(b, ConjugatedIsotopy):
        return a.conj is b.conj and _mutually_inverse(a.base, b.base)
    return False


def compose_pointwise(outer: Isotopy, inner: Isotopy, validate: bool = True) -> Isotopy:
    """The isotopy t -> outer_t o inner_t."""
    outer.check_compatible(inner)
    if outer.is_identity:
        return inner
    if inner.is_identity:
        return outer
    if _mutually_inverse(outer, inner):
        return identity(outer.grid, outer.steps)
    # regroup (a o b) o b^{-1} = a and a^{-1} o (a o b) = b exactly
    if isinstance(outer, ComposedIsotopy) and _mutually_inverse(outer.inner, inner):
        return outer.outer
    if isinstance(inner, ComposedIsotopy) and _mutually_inverse(outer, inner.outer):
        return inner.inner
    if isinstance(outer, Rotation) and isinstance(inner, Rotation):
        return Rotation(outer.grid, outer.v + inner.v, outer.steps)
    out = ComposedIsotopy(outer, inner)
    if validate:
        err = velocity_consistency(out)
        if err > 1e-4:
            raise RuntimeError(f"composite velocity disagrees with finite differences of the flow: {err:.2e}")
    return out


def conjugate(conj: Isotopy, base: Isotopy) -> Isotopy:
    """phi o h_t o phi^{-1} where phi is the time-one map of ``conj``."""
    conj.check_compatible(base)
    if conj.is_identity or base.is_identity:
        return base
    return ConjugatedIsotopy(conj, base)


def conjugated_hamiltonian(conj: Isotopy, base: Isotopy) -> Isotopy:
    """Hamiltonian isotopy generated by F_t o phi^{-1} (phi = time-one map of ``conj``)."""
    if not base.is_hamiltonian:
        raise TypeError("base isotopy must be Hamiltonian")
    grid = base.grid
    pre = conj.inverse_flow(1.0, grid.points_flat)

    def at(t):
        return ScalarField(grid, base.hamiltonian(t).evaluate(pre).reshape(grid.shape))

    family = ScalarFamily(grid, at, autonomous=base.autonomous, description="conjugated")
    return IntegratedIsotopy(grid, HamiltonianSource(family), base.steps, getattr(base, "substeps", 1),
                             name="conjugated")


def flow(iso: Isotopy, t: float, p) -> np.ndarray:
    """phi_t(p), wrapped into [0, 1)."""
    p = np.asarray(p, dtype=float)
    out = iso.flow(t, p)
    return wrap(out[0] if p.ndim == 1 else out)


def generating_one_form(iso: Isotopy, k: int) -> OneForm:
    return iso.generating_one_form(k)


def velocity_consistency(iso: Isotopy, nodes=None, samples: int = 16, delta: float = 1e-4, seed: int = 0) -> float:
    """Max relative mismatch between velocity and time differences of the flow.

    Compares X_t(phi_t x) with (phi_{t+d} x - phi_{t-d} x) / 2d on random x.
    """
    rng = np.random.default_rng(seed)
    x = rng.random((samples, iso.dim))
    if nodes is None:
        nodes = sorted({1, iso.steps // 2, iso.steps - 1})
    worst = 0.0
    for k in nodes:
        t = iso.node_time(k)
        fd = (iso.flow(t + delta, x) - iso.flow(t - delta, x)) / (2 * delta)
        v = iso.velocity(t, iso.flow(t, x))
        err = np.abs(fd - v).max() / (1.0 + np.abs(v).max())
        worst = max(worst, float(err))
    return worst


# -- flow maps ---------------------------------------------------------------------


class FlowMap:
    """phi_t sampled on the grid: lifted node images plus off-node evaluation."""

    def __init__(self, iso: Isotopy, t: float, direction: str = "forward"):
        self.iso = iso
        self.t = float(t)
        self.direction = direction

    @property
    def grid(self):
        return self.iso.grid

    def _apply(self, pts, jacobian=False):
        if self.direction == "forward":
            return self.iso.flow(self.t, pts, jacobian)
        return self.iso.inverse_flow(self.t, pts, jacobian)

    @cached_property
    def image_grid(self) -> np.ndarray:
        return self._apply(self.grid.points_flat)

    @cached_property
    def jacobians(self) -> np.ndarray:
        return self._apply(self.grid.points_flat, True)[1]

    def __call__(self, pts) -> np.ndarray:
        return self._apply(pts)

    def inverse(self) -> "FlowMap":
        return FlowMap(self.iso, self.t, "backward" if self.direction == "forward" else "forward")

    def fd_jacobians(self) -> np.ndarray:
        """Centered differences of the lifted node images with spacing 1/N."""
        g = self.grid
        disp = (self.image_grid - g.points_flat).T.reshape((g.dim,) + g.shape)
        J = np.empty(g.shape + (g.dim, g.dim))
        for b in range(g.dim):
            diff = (np.roll(disp, -1, axis=b + 1) - np.roll(disp, 1, axis=b + 1)) * (g.points / 2.0)
            for a in range(g.dim):
                J[..., a, b] = diff[a] + (1.0 if a == b else 0.0)
        return J.reshape(-1, g.dim, g.dim)

    def sup_distance(self, other: "FlowMap", pts=None) -> float:
        pts = self.grid.points_flat if pts is None else pts
        return float(np.linalg.norm(wrap_delta(self(pts) - other(pts)), axis=1).max())


def symplectic_residual(m: FlowMap, method: str = "tangent") -> float:
    """max over nodes of |J^T W J - W| (on T^2 this is |det J - 1|)."""
    if method == "tangent":
        J = m.jacobians
    elif method == "fd":
        J = m.fd_jacobians()
    else:
        raise ValueError(f"unknown Jacobian method {method!r}")
    W = omega_matrix(m.grid.half_dim)
    pull = np.swapaxes(J, 1, 2) @ W @ J
    return float(np.abs(pull - W).max())
