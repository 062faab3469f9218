"""Periodic scalar fields on uniform grids over the unit torus T^{2n}.

Coordinates live in [0, 1) per axis.  Fields are stored as grid samples and
carry a lazily computed discrete Fourier transform used for trigonometric
interpolation and spectral differentiation.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Work budget (points x active modes) per chunk of interpolation.
_EVAL_BUDGET = 1 << 21


@dataclass(frozen=True)
class GridSpec:
    half_dim: int
    points: int = 64

    def __post_init__(self):
        if self.half_dim < 1:
            raise ValueError(f"half_dim must be positive, got {self.half_dim}")
        if self.points < 8 or self.points % 2:
            raise ValueError(f"points per axis must be even and >= 8, got {self.points}")

    @property
    def dim(self) -> int:
        return 2 * self.half_dim

    @property
    def spacing(self) -> float:
        return 1.0 / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points ** self.dim

    @cached_property
    def axes(self) -> list:
        return [np.arange(self.points) / self.points] * self.dim

    @cached_property
    def coords(self) -> np.ndarray:
        """Grid node coordinates, shape (dim, N, ..., N)."""
        c = np.stack(np.meshgrid(*self.axes, indexing="ij"))
        c.setflags(write=False)
        return c

    @cached_property
    def points_flat(self) -> np.ndarray:
        """Grid nodes as an (N^dim, dim) array in C order."""
        p = self.coords.reshape(self.dim, -1).T.copy()
        p.setflags(write=False)
        return p

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Signed integer frequencies per axis (Nyquist appears as -N/2)."""
        return np.fft.fftfreq(self.points, d=1.0 / self.points).round().astype(int)

    @cached_property
    def derivative_symbols(self) -> list:
        """Broadcastable 2*pi*i*k arrays per axis with the Nyquist mode zeroed."""
        k = self.wavenumbers.astype(float)
        k[self.points // 2] = 0.0
        out = []
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[a] = self.points
            out.append((2j * np.pi * k).reshape(shape))
        return out

    def sample(self, fn) -> "ScalarField":
        """Sample ``fn(*coords)`` on the grid."""
        return ScalarField(self, np.asarray(fn(*self.coords), dtype=float))


def wrap(x) -> np.ndarray:
    """Reduce coordinates into [0, 1) per axis."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"cannot wrap non-finite coordinates: {x}")
    w = np.mod(x, 1.0)
    # np.mod(-1e-17, 1.0) == 1.0 in floating point
    w[w >= 1.0] = 0.0
    return w


def wrap_delta(d) -> np.ndarray:
    """Map coordinate differences to the representative in [-1/2, 1/2)."""
    d = np.asarray(d, dtype=float)
    return d - np.floor(d + 0.5)


def torus_distance(x, y) -> np.ndarray:
    """Euclidean distance on the flat unit torus (wrap-around per axis)."""
    return np.linalg.norm(wrap_delta(np.asarray(x) - np.asarray(y)), axis=-1)


class ScalarField:
    """Real periodic function sampled on a :class:`GridSpec`.

    Values are immutable; the Fourier transform is computed once on demand.
    """

    def __init__(self, grid: GridSpec, values):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self._lock = threading.Lock()
        self._coeffs = None
        self._modes = None

    # -- basic statistics -------------------------------------------------

    def mean(self) -> float:
        return float(self.values.mean())

    def osc(self) -> float:
        """Oscillation max - min over grid nodes (a lower-biased estimate)."""
        return float(self.values.max() - self.values.min())

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def __add__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    # -- spectral representation ------------------------------------------

    @property
    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            with self._lock:
                if self._coeffs is None:
                    c = np.fft.fftn(self.values)
                    c.setflags(write=False)
                    self._coeffs = c
        return self._coeffs

    @classmethod
    def from_coeffs(cls, grid: GridSpec, coeffs) -> "ScalarField":
        return cls(grid, np.fft.ifftn(coeffs).real)

    def derivative(self, axis: int) -> "ScalarField":
        """Spectral partial derivative along ``axis`` (Nyquist mode dropped)."""
        return ScalarField.from_coeffs(self.grid, self.coeffs * self.grid.derivative_symbols[axis])

    def gradient(self) -> list:
        return [self.derivative(a) for a in range(self.grid.dim)]

    def _block(self):
        """Active wavenumber indices per axis and the coefficient sub-tensor they span.

        A field with few active modes (a shear, a sum of low harmonics) is
        evaluated on this small block instead of the full N^dim spectrum.
        """
        if self._modes is None:
            c = self.coeffs
            mag = np.abs(c)
            active = mag > 1e-14 * max(mag.max(), 1e-300)
            g = self.grid
            axes = []
            for a in range(g.dim):
                other = tuple(i for i in range(g.dim) if i != a)
                used = np.nonzero(active.any(axis=other) if other else active)[0]
                axes.append(used)
            sub = c[np.ix_(*axes)] / g.size if all(len(u) for u in axes) else None
            self._modes = (axes, sub)
        return self._modes

    # -- interpolation ----------------------------------------------------

    def evaluate(self, pts, scheme: str = "trig") -> np.ndarray:
        """Interpolated values at points of shape (dim,) or (M, dim).

        ``scheme`` is ``"trig"`` (trigonometric, default) or ``"linear"``
        (periodic multilinear).  Both reproduce grid values at grid nodes.
        """
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if scheme == "trig":
            out = self.evaluate_derivatives(pts, order=0)[0]
        elif scheme == "linear":
            out = self._linear(pts)
        else:
            raise ValueError(f"unknown interpolation scheme {scheme!r}")
        out = self._snap_nodes(pts, out)
        return out[0] if single else out

    def _snap_nodes(self, pts, out):
        scaled = np.mod(pts, 1.0) * self.grid.points
        idx = np.rint(scaled)
        on = np.all(scaled == idx, axis=1)
        if on.any():
            ii = idx[on].astype(int) % self.grid.points
            out = out.copy()
            out[on] = self.values[tuple(ii.T)]
        return out

    def evaluate_derivatives(self, pts, order: int = 1):
        """Trigonometric interpolant and its derivatives at points (M, dim).

        Returns ``(value,)``, ``(value, grad)`` or ``(value, grad, hess)`` for
        ``order`` 0, 1, 2 with shapes (M,), (M, dim), (M, dim, dim).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        axes, sub = self._block()
        if sub is None:
            M, d = pts.shape
            return (np.zeros(M), np.zeros((M, d)), np.zeros((M, d, d)))[: order + 1]
        # bound the size of the partially contracted tensor (chunk x rest of block)
        chunk = int(np.clip(_EVAL_BUDGET // max(sub.size // sub.shape[0], 1), 256, 1 << 16))
        chunks = [self._eval_block(pts[i:i + chunk], order, axes, sub)
                  for i in range(0, len(pts), chunk)]
        return tuple(np.concatenate(parts) for parts in zip(*chunks))

    def _axis_factors(self, x, idx, order=2):
        """exp(2 pi i k x) and two x-derivatives for the wavenumbers at ``idx``.

        The Nyquist mode is taken as cos(pi N x) so the interpolant is real and
        its derivative matches the spectral derivative at the nodes.
        """
        g = self.grid
        k = g.wavenumbers[idx]
        ny = np.nonzero(idx == g.points // 2)[0]
        f0 = np.exp(2j * np.pi * np.outer(x, k))
        f1 = 2j * np.pi * k[None, :] * f0 if order > 0 else None
        f2 = 2j * np.pi * k[None, :] * f1 if order > 1 else None
        if len(ny):
            w = np.pi * g.points
            f0[:, ny] = np.cos(w * x)[:, None]
            if order > 0:
                f1[:, ny] = -w * np.sin(w * x)[:, None]
            if order > 1:
                f2[:, ny] = -w * w * np.cos(w * x)[:, None]
        return f0, f1, f2

    @staticmethod
    def _contract(factors, sub):
        # sum_k c[k1..kd] prod_a F_a[m, k_a], one axis at a time
        tmp = np.tensordot(factors[0], sub, axes=([1], [0]))
        for F in factors[1:]:
            tmp = np.einsum("mk,mk...->m...", F, tmp)
        return tmp.real

    def _eval_block(self, pts, order, axes, sub):
        d = self.grid.dim
        fac = [self._axis_factors(pts[:, a], axes[a], order) for a in range(d)]
        base = [f[0] for f in fac]
        val = self._contract(base, sub)
        if order == 0:
            return (val,)
        grad = np.empty((len(pts), d))
        for a in range(d):
            fs = list(base)
            fs[a] = fac[a][1]
            grad[:, a] = self._contract(fs, sub)
        if order == 1:
            return val, grad
        hess = np.empty((len(pts), d, d))
        for a in range(d):
            fs = list(base)
            fs[a] = fac[a][2]
            hess[:, a, a] = self._contract(fs, sub)
            for b in range(a + 1, d):
                fs = list(base)
                fs[a] = fac[a][1]
                fs[b] = fac[b][1]
                hess[:, a, b] = hess[:, b, a] = self._contract(fs, sub)
        return val, grad, hess

    def _linear(self, pts):
        g = self.grid
        s = np.mod(pts, 1.0) * g.points
        i0 = np.floor(s).astype(int)
        frac = s - i0
        out = np.zeros(len(pts))
        for corner in range(2 ** g.dim):
            bits = [(corner >> a) & 1 for a in range(g.dim)]
            w = np.ones(len(pts))
            idx = []
            for a, bit in enumerate(bits):
                w *= frac[:, a] if bit else 1.0 - frac[:, a]
                idx.append((i0[:, a] + bit) % g.points)
            out += w * self.values[tuple(idx)]
        return out


def osc(field: ScalarField) -> float:
    return field.osc()


def mean(field: ScalarField) -> float:
    return field.mean()


def evaluate(field: ScalarField, p, scheme: str = "trig"):
    return field.evaluate(p, scheme=scheme)
