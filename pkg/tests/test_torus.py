import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoferlab.torus import GridSpec, ScalarField, torus_distance, wrap, wrap_delta

coords = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)


def direct_trig(field: ScalarField, pts):
    """Reference interpolant: explicit sum over frequencies -N/2..N/2 per axis,
    with the Nyquist coefficient split evenly between +N/2 and -N/2."""
    g = field.grid
    N = g.points
    c = np.fft.fftn(field.values) / g.size
    ks = np.arange(-N // 2, N // 2 + 1)
    w = np.where(np.abs(ks) == N // 2, 0.5, 1.0)
    out = np.zeros(len(pts), dtype=complex)
    for combo in np.ndindex(*([len(ks)] * g.dim)):
        kv = ks[list(combo)]
        weight = np.prod(w[list(combo)])
        out += weight * c[tuple(kv % N)] * np.exp(2j * np.pi * pts @ kv)
    return out.real


def test_grid_rejects_bad_sizes():
    with pytest.raises(ValueError):
        GridSpec(1, 7)
    with pytest.raises(ValueError):
        GridSpec(0, 16)


def test_grid_nodes_and_shape():
    g = GridSpec(1, 8)
    assert g.shape == (8, 8)
    assert g.points_flat.shape == (64, 2)
    assert g.spacing == 0.125
    assert np.allclose(g.points_flat[9], [0.125, 0.125])


def test_wrap_handles_negative_zero_edge():
    assert wrap(np.array([-1e-17]))[0] == 0.0
    assert np.allclose(wrap([1.25, -0.25]), [0.25, 0.75])
    with pytest.raises(ValueError):
        wrap([np.nan])


def test_torus_distance_wraps():
    assert torus_distance(np.array([0.05, 0.0]), np.array([0.95, 0.0])) == pytest.approx(0.1)
    assert torus_distance(np.array([0.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(np.sqrt(0.5))


@given(st.lists(coords, min_size=2, max_size=6))
def test_wrap_range_and_idempotent(xs):
    w = wrap(np.array(xs))
    assert np.all((w >= 0) & (w < 1))
    assert np.array_equal(wrap(w), w)


@given(coords, coords)
def test_wrap_delta_is_representative(a, b):
    d = wrap_delta(np.array(a - b))
    assert -0.5 <= d < 0.5
    assert abs((a - b - d) - round(a - b - d)) < 1e-9


def test_interpolation_reproduces_nodes():
    g = GridSpec(1, 16)
    rng = np.random.default_rng(0)
    f = ScalarField(g, rng.normal(size=g.shape))
    assert np.array_equal(f.evaluate(g.points_flat), f.values.ravel())
    assert np.allclose(f.evaluate(g.points_flat + 1.0), f.values.ravel())


def test_interpolation_matches_direct_fourier_sum():
    g = GridSpec(1, 8)
    rng = np.random.default_rng(1)
    f = ScalarField(g, rng.normal(size=g.shape))
    pts = rng.random((40, 2))
    assert np.allclose(f.evaluate(pts), direct_trig(f, pts), atol=1e-12)


def test_band_limited_derivatives_are_exact():
    g = GridSpec(1, 16)
    f = g.sample(lambda x, y: np.sin(2 * np.pi * x) * np.cos(4 * np.pi * y))
    pts = np.random.default_rng(2).random((25, 2))
    val, grad, hess = f.evaluate_derivatives(pts, order=2)
    x, y = pts.T
    s, c = np.sin(2 * np.pi * x), np.cos(2 * np.pi * x)
    s2, c2 = np.sin(4 * np.pi * y), np.cos(4 * np.pi * y)
    assert np.allclose(val, s * c2, atol=1e-12)
    assert np.allclose(grad[:, 0], 2 * np.pi * c * c2, atol=1e-10)
    assert np.allclose(grad[:, 1], -4 * np.pi * s * s2, atol=1e-10)
    assert np.allclose(hess[:, 0, 1], -8 * np.pi ** 2 * c * s2, atol=1e-9)
    assert np.allclose(hess[:, 0, 1], hess[:, 1, 0])


def test_spectral_derivative_field():
    g = GridSpec(1, 32)
    f = g.sample(lambda x, y: np.cos(2 * np.pi * (x + 2 * y)))
    d = f.derivative(1)
    ref = -4 * np.pi * np.sin(2 * np.pi * (g.coords[0] + 2 * g.coords[1]))
    assert np.allclose(d.values, ref, atol=1e-10)


def test_four_dimensional_evaluation():
    g = GridSpec(2, 8)
    f = g.sample(lambda a, b, c, d: np.sin(2 * np.pi * (a - c)) + 0.5 * np.cos(2 * np.pi * d))
    pts = np.random.default_rng(3).random((10, 4))
    ref = np.sin(2 * np.pi * (pts[:, 0] - pts[:, 2])) + 0.5 * np.cos(2 * np.pi * pts[:, 3])
    assert np.allclose(f.evaluate(pts), ref, atol=1e-12)


def test_zero_field_and_statistics():
    g = GridSpec(1, 8)
    z = ScalarField(g, np.zeros(g.shape))
    val, grad = z.evaluate_derivatives(np.zeros((3, 2)))
    assert not val.any() and not grad.any()
    f = g.sample(lambda x, y: np.sin(2 * np.pi * x))
    assert f.osc() == pytest.approx(2.0)
    assert abs(f.mean()) < 1e-15


def test_linear_scheme_reproduces_nodes():
    g = GridSpec(1, 8)
    f = g.sample(lambda x, y: x * (1 - x) + y)
    assert np.allclose(f.evaluate(g.points_flat, scheme="linear"), f.values.ravel())
    with pytest.raises(ValueError):
        f.evaluate(g.points_flat, scheme="cubic")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_interpolant_is_periodic(seed):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, 8)
    f = ScalarField(g, rng.normal(size=g.shape))
    p = rng.random((5, 2))
    shift = rng.integers(-3, 4, size=(5, 2))
    assert np.allclose(f.evaluate(p), f.evaluate(p + shift), atol=1e-10)
