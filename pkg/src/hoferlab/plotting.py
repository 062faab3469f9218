"""Figures for CLI reports (Agg backend, written straight to files)."""

from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path):
    # same atomic pattern as the text outputs
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=os.path.splitext(path)[1], dir=d)
    os.close(fd)
    try:
        fig.savefig(tmp, metadata={"Software": None, "CreationDate": None} if path.endswith(".pdf") else {"Software": None})
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def _torus_axes(ax):
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_aspect("equal")
    ax.set_xlabel(r"$\theta_1$")
    ax.set_ylabel(r"$\theta_2$")


def field_image(values, path, title="", label=""):
    """A scalar field on the T^2 grid (first two axes of higher tori are sliced at 0)."""
    vals = np.asarray(values)
    while vals.ndim > 2:
        vals = vals[..., 0]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        im = ax.imshow(vals.T, origin="lower", extent=(0, 1, 0, 1), cmap="RdBu_r")
        fig.colorbar(im, ax=ax, label=label)
        _torus_axes(ax)
        ax.set_title(title)
        return _save(fig, path)


def integrand_plot(times, series: dict, path, ylabel="integrand", title=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, ys in series.items():
            ax.plot(times, ys, label=name)
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def bar_plot(labels, values, path, ylabel="", title="", colors=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(labels))
        ax.bar(x, values, color=colors or "#4a7ab5")
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def displacement_plot(samples, images, path, title=""):
    """Region samples and their images under a map (T^2 projection)."""
    s = np.mod(np.asarray(samples), 1.0)
    im = np.mod(np.asarray(images), 1.0)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.scatter(s[:, 0], s[:, 1], s=2, color="#4a7ab5", label="region")
        ax.scatter(im[:, 0], im[:, 1], s=2, color="#d95f02", label="image")
        _torus_axes(ax)
        ax.set_title(title)
        ax.legend(frameon=False, loc="upper right", markerscale=4)
        return _save(fig, path)


def energy_plot(rs, bounds, slack, path):
    rs, bounds = np.asarray(rs), np.asarray(bounds)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(rs, bounds, "o-", label="upper bound")
        ax.plot(rs, rs, "k--", lw=0.8, label="r")
        ax.plot(rs, rs + slack, ":", color="gray", label="r + margin + 2/N")
        ax.set_xlabel("strip width r")
        ax.set_ylabel("displacement energy bound")
        ax.legend(frameon=False)
        return _save(fig, path)


def commutator_plot(region_samples, tubes, points, path, title=""):
    """Region, bump supports and the marked points a, b, c."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        r = np.asarray(region_samples)
        ax.scatter(r[:, 0], r[:, 1], s=1, color="#cccccc", label="region")
        for tube, color in zip(tubes, ("#4a7ab5", "#d95f02")):
            mask = tube["mask"]
            grid = tube["points"]
            ax.scatter(grid[mask, 0], grid[mask, 1], s=2, color=color, label=tube["label"])
        for name, p in points.items():
            ax.plot(p[0], p[1], "k.", ms=6)
            ax.annotate(name, p, textcoords="offset points", xytext=(4, 4))
        _torus_axes(ax)
        ax.set_title(title)
        ax.legend(frameon=False, loc="upper right", markerscale=4)
        return _save(fig, path)


def convergence_plot(eps, series: dict, path, title=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        n = np.arange(1, len(eps) + 1)
        for name, ys in series.items():
            ys = np.asarray(ys, dtype=float)
            ax.semilogy(n, np.where(ys > 0, ys, np.nan), "o-", label=name)
        ax.semilogy(n, np.where(np.asarray(eps) > 0, eps, np.nan), "k--", lw=0.8, label=r"$\epsilon_n$")
        ax.set_xlabel("n")
        ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)
