"""One-forms on the flat torus, spectral Hodge decomposition and flux.

On T^{2n} with the flat metric the harmonic one-forms are exactly the
constant-coefficient forms sum c_i dtheta_i, so the harmonic projection of a
closed form is the componentwise mean and the exact remainder is inverted
mode by mode in Fourier space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .torus import GridSpec, ScalarField

NORMS = ("l1", "l2", "linf")
CLOSED_TOL = 1e-6


class NotClosedError(ValueError):
    """Raised when a one-form fails the closedness check."""

    def __init__(self, residual: float, tol: float):
        super().__init__(f"one-form is not closed: d-residual {residual:.3e} > tolerance {tol:.1e}")
        self.residual = residual
        self.tol = tol


def vector_norm(v, kind: str = "l1") -> float:
    v = np.asarray(v, dtype=float)
    if kind == "l1":
        return float(np.abs(v).sum())
    if kind == "l2":
        return float(np.sqrt((v * v).sum()))
    if kind == "linf":
        return float(np.abs(v).max()) if v.size else 0.0
    raise ValueError(f"unknown norm {kind!r}; expected one of {NORMS}")


@dataclass(frozen=True)
class HarmonicForm:
    """Constant-coefficient one-form sum coeffs[i] dtheta_i."""

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float).copy())

    def norm(self, kind: str = "l1") -> float:
        return vector_norm(self.coeffs, kind)

    def to_oneform(self, grid: GridSpec) -> "OneForm":
        vals = np.broadcast_to(self.coeffs.reshape((-1,) + (1,) * grid.dim), (grid.dim,) + grid.shape)
        return OneForm(grid, vals)

    def __add__(self, other):
        return HarmonicForm(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return HarmonicForm(self.coeffs - other.coeffs)

    def __neg__(self):
        return HarmonicForm(-self.coeffs)

    def __mul__(self, c):
        return HarmonicForm(self.coeffs * c)

    __rmul__ = __mul__


def harmonic_norm(H: HarmonicForm, kind: str = "l1") -> float:
    return H.norm(kind)


class OneForm:
    """Sum a_i dtheta_i with components sampled on one grid, shape (dim, N, ..., N)."""

    def __init__(self, grid: GridSpec, components):
        comps = np.array(components, dtype=float)
        if comps.shape != (grid.dim,) + grid.shape:
            raise ValueError(f"components shape {comps.shape} does not match grid {(grid.dim,) + grid.shape}")
        comps.setflags(write=False)
        self.grid = grid
        self.components = comps
        self._hat = None

    @classmethod
    def exact(cls, f: ScalarField) -> "OneForm":
        """The differential df computed spectrally."""
        return cls(f.grid, [g.values for g in f.gradient()])

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.components[i])

    def sup(self) -> float:
        return float(np.abs(self.components).max())

    def __add__(self, other):
        return OneForm(self.grid, self.components + other.components)

    def __sub__(self, other):
        return OneForm(self.grid, self.components - other.components)

    def __mul__(self, c):
        return OneForm(self.grid, self.components * c)

    __rmul__ = __mul__

    def _fft(self):
        if self._hat is None:
            axes = tuple(range(1, self.grid.dim + 1))
            self._hat = np.fft.fftn(self.components, axes=axes)
        return self._hat

    def d_residual(self) -> float:
        """max |d_i a_j - d_j a_i| over grid nodes and pairs i < j."""
        g = self.grid
        hat = self._fft()
        D = g.derivative_symbols
        worst = 0.0
        for i in range(g.dim):
            for j in range(i + 1, g.dim):
                curl = np.fft.ifftn(D[i] * hat[j] - D[j] * hat[i]).real
                worst = max(worst, float(np.abs(curl).max()))
        return worst


def d_residual(alpha: OneForm) -> float:
    return alpha.d_residual()


@dataclass(frozen=True)
class HodgeDecomposition:
    harmonic: HarmonicForm
    potential: ScalarField
    residual_norm: float
    d_residual: float

    def reconstruct(self) -> OneForm:
        return self.harmonic.to_oneform(self.potential.grid) + OneForm.exact(self.potential)


def hodge(alpha: OneForm, closed_tol: float = CLOSED_TOL) -> HodgeDecomposition:
    """Split a closed form into constant harmonic part plus du with mean(u) = 0."""
    g = alpha.grid
    dres = alpha.d_residual()
    if dres > closed_tol:
        raise NotClosedError(dres, closed_tol)
    hat = alpha._fft()
    H = HarmonicForm(alpha.components.reshape(g.dim, -1).mean(axis=1))
    D = g.derivative_symbols
    num = np.zeros(g.shape, dtype=complex)
    den = np.zeros(g.shape)
    for i in range(g.dim):
        num = num + np.conj(D[i]) * hat[i]
        den = den + np.abs(D[i]) ** 2
    # least-squares inverse of the gradient symbol; unresolved modes are zero
    uhat = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    u = ScalarField.from_coeffs(g, uhat)
    u = u - u.mean()
    res = alpha - (H.to_oneform(g) + OneForm.exact(u))
    return HodgeDecomposition(H, u, res.sup(), dres)


def flux(iso, closed_tol: float = CLOSED_TOL) -> HarmonicForm:
    """Cohomology class of the time-integrated generating form (harmonic representative)."""
    parts = np.array([hodge(iso.generating_one_form(k), closed_tol).harmonic.coeffs
                      for k in range(iso.steps + 1)])
    return HarmonicForm(trapezoid(parts, iso.steps))


def flux_by_displacement(iso, samples=None) -> HarmonicForm:
    """Flux from the mean lifted displacement of the time-one map.

    For a volume-preserving isotopy the space-time mean of the velocity equals
    the mean displacement of the lift, so this is an independent route to the
    flux that never touches generating forms.
    """
    from .isotopy import contract_omega

    pts = iso.grid.points_flat if samples is None else samples
    disp = (iso.flow(1.0, pts) - pts).mean(axis=0)
    return HarmonicForm(contract_omega(disp[None, :], iso.grid.half_dim)[0])


def trapezoid(values, steps: int):
    """Composite trapezoid rule over T+1 uniform nodes of [0, 1]."""
    v = np.asarray(values, dtype=float)
    if steps == 0:
        return v[0]
    return (v[1:-1].sum(axis=0) + 0.5 * (v[0] + v[-1])) / steps
