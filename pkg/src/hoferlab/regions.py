"""Subsets of the unit torus used as displacement targets."""

from __future__ import annotations

import math

import numpy as np

from .torus import wrap_delta

# boundary samples sit this far inside half-open upper edges
_EDGE = 1e-12


def _lattice(m: int, dim: int) -> np.ndarray:
    ax = np.arange(m) / m
    return np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1).reshape(-1, dim)


def _axis_gap(u, width):
    """Distance from u in [0, 1) to the half-open interval [0, width) on the circle."""
    if width >= 1.0:
        return np.zeros_like(u)
    return np.where(u < width, 0.0, np.minimum(u - width, 1.0 - u))


def _axis_depth(u, width):
    if width >= 1.0:
        return np.full_like(u, np.inf)
    return np.where(u < width, np.minimum(u, width - u), -np.minimum(u - width, 1.0 - u))


class Region:
    dim: int

    def distance(self, pts) -> np.ndarray:
        """Wrap-around Euclidean distance to the region (0 inside)."""
        raise NotImplementedError

    def depth(self, pts) -> np.ndarray:
        """Positive inside: a lower bound on the distance to the complement."""
        raise NotImplementedError

    def contains(self, pts) -> np.ndarray:
        return self.distance(np.atleast_2d(pts)) == 0.0

    def samples(self, spacing: float) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def is_whole(self) -> bool:
        return False


class Strip(Region):
    """{ lower <= theta_axis < lower + width } (mod 1)."""

    def __init__(self, axis: int, lower: float, width: float, dim: int = 2):
        if not 0 <= axis < dim:
            raise ValueError(f"axis {axis} out of range for dimension {dim}")
        if width <= 0:
            raise ValueError("strip width must be positive")
        self.axis, self.lower, self.width, self.dim = axis, float(lower), float(width), dim

    def _u(self, pts):
        return np.mod(np.atleast_2d(pts)[:, self.axis] - self.lower, 1.0)

    def distance(self, pts):
        return _axis_gap(self._u(pts), self.width)

    def depth(self, pts):
        return _axis_depth(self._u(pts), self.width)

    def is_whole(self):
        return self.width >= 1.0

    def samples(self, spacing):
        m = math.ceil(1.0 / spacing)
        w = min(self.width, 1.0)
        along = np.arange(0.0, w, 1.0 / m)
        if self.width < 1.0:
            along = np.append(along, w - _EDGE)
        others = _lattice(m, self.dim - 1)
        grid = np.repeat(others, len(along), axis=0)
        col = np.tile(along, len(others)) + self.lower
        pts = np.insert(grid, self.axis, col, axis=1)
        return np.mod(pts, 1.0)

    def describe(self):
        return {"kind": "strip", "axis": self.axis + 1, "lower": self.lower, "width": self.width}


class Ball(Region):
    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.dim = len(self.center)
        if not 0 < self.radius < 0.5:
            raise ValueError("ball radius must lie in (0, 1/2)")

    def _r(self, pts):
        return np.linalg.norm(wrap_delta(np.atleast_2d(pts) - self.center), axis=1)

    def distance(self, pts):
        return np.maximum(self._r(pts) - self.radius, 0.0)

    def depth(self, pts):
        return self.radius - self._r(pts)

    def samples(self, spacing):
        m = math.ceil(1.0 / spacing)
        lat = _lattice(m, self.dim)
        inside = lat[self._r(lat) <= self.radius]
        R = self.radius * (1.0 - _EDGE)
        if self.dim == 2:
            count = max(64, 4 * math.ceil(2 * math.pi * self.radius / spacing))
            ang = 2 * math.pi * np.arange(count) / count
            shell = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            rng = np.random.default_rng(12345)
            shell = rng.normal(size=(256 * self.dim, self.dim))
            shell /= np.linalg.norm(shell, axis=1, keepdims=True)
        shell = self.center + R * shell
        return np.mod(np.concatenate([inside, shell]), 1.0)

    def describe(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


class RectUnion(Region):
    """Union of axis-aligned half-open boxes [lo, lo + size) (mod 1)."""

    def __init__(self, boxes):
        self.boxes = [(np.asarray(lo, dtype=float), np.asarray(size, dtype=float)) for lo, size in boxes]
        if not self.boxes:
            raise ValueError("RectUnion needs at least one box")
        self.dim = len(self.boxes[0][0])
        for lo, size in self.boxes:
            if len(lo) != self.dim or len(size) != self.dim or np.any(size <= 0):
                raise ValueError("malformed box")

    def _per_box(self, pts, fn):
        pts = np.atleast_2d(pts)
        return [fn(np.mod(pts - lo, 1.0), size) for lo, size in self.boxes]

    def distance(self, pts):
        def one(u, size):
            gaps = np.stack([_axis_gap(u[:, a], size[a]) for a in range(self.dim)], axis=1)
            return np.linalg.norm(gaps, axis=1)
        return np.min(self._per_box(pts, one), axis=0)

    def depth(self, pts):
        def one(u, size):
            return np.min([_axis_depth(u[:, a], size[a]) for a in range(self.dim)], axis=0)
        return np.max(self._per_box(pts, one), axis=0)

    def is_whole(self):
        return any(np.all(size >= 1.0) for _, size in self.boxes)

    def samples(self, spacing):
        m = math.ceil(1.0 / spacing)
        out = []
        for lo, size in self.boxes:
            axes = []
            for a in range(self.dim):
                w = min(size[a], 1.0)
                ax = np.arange(0.0, w, 1.0 / m)
                if size[a] < 1.0:
                    ax = np.append(ax, w - _EDGE)
                axes.append(ax)
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
            out.append(pts + lo)
        return np.mod(np.concatenate(out), 1.0)

    def describe(self):
        return {"kind": "rects", "boxes": [[lo.tolist(), size.tolist()] for lo, size in self.boxes]}


def whole_torus(dim: int = 2) -> RectUnion:
    return RectUnion([(np.zeros(dim), np.ones(dim))])


def region_from_dict(spec: dict, dim: int = 2) -> Region:
    kind = spec.get("kind")
    if kind == "strip":
        # scenario files number axes from 1 like theta_1, ..., theta_2n
        return Strip(int(spec.get("axis", 1)) - 1, float(spec.get("lower", 0.0)), float(spec["width"]), dim)
    if kind == "ball":
        return Ball(spec["center"], float(spec["radius"]))
    if kind == "rects":
        return RectUnion([(lo, size) for lo, size in spec["boxes"]])
    if kind == "whole":
        return whole_torus(dim)
    raise ValueError(f"unknown region kind {kind!r}")
