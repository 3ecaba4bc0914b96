"""The four panel renderers: pure file-to-file transforms.

Every function reads from a run directory and writes a single image; the
input directory is never modified. Matplotlib is forced onto the Agg
backend so the renderers work headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib import cm
from matplotlib.colors import Normalize

from .formats import (
    PlotInputError,
    list_snapshots,
    radius_profile,
    read_manifest,
    read_series_csv,
    read_snapshot,
    run_geometry,
    snapshot_for_time,
)

U1_CLAMP = (-0.2, 1.2)
HEATMAP_MAX_COLUMNS = 400


def _axial_nodes(in_dir, n: int):
    """Node coordinates x_i = i L / N; unit spacing when no manifest."""
    try:
        _, length, n_cfg = run_geometry(in_dir)
    except PlotInputError:
        return np.arange(n, dtype=float), "axial node"
    if n_cfg != n:
        raise PlotInputError(
            f"snapshot has {n} axial nodes but the manifest says {n_cfg}"
        )
    return (length / n) * np.arange(n), "x"


def _finish(fig, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    if not out_path.is_file() or out_path.stat().st_size == 0:
        raise PlotInputError(f"failed to write {out_path}")
    return out_path


def profile_curves(in_dir, times=None):
    """(label, x, angular-mean u1) per requested time.

    With no times, every snapshot in the directory is used in time
    order. A requested time with no matching snapshot is an error.
    """
    if times is None:
        snaps = list_snapshots(in_dir)
        if not snaps:
            raise PlotInputError(f"no snapshots in {in_dir}")
        paths = [p for _, p in snaps]
    else:
        paths = [snapshot_for_time(in_dir, t) for t in times]
    curves = []
    for p in paths:
        u1, _, t = read_snapshot(p)
        x, _ = _axial_nodes(in_dir, u1.shape[0])
        curves.append((f"t = {t:g}", x, u1.mean(axis=1)))
    return curves


def profile_curve_labels(in_dir, times=None):
    return [label for label, _, _ in profile_curves(in_dir, times)]


def render_profile_panel(in_dir, out_path, times=None) -> Path:
    curves = profile_curves(in_dir, times)
    _, xlabel = _axial_nodes(in_dir, curves[0][1].size)
    fig, ax = plt.subplots(figsize=(8.0, 4.0))
    for label, x, mean in curves:
        ax.plot(x, mean, label=label, linewidth=1.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("angular mean of u1")
    ax.set_ylim(*U1_CLAMP)
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _finish(fig, out_path)


def render_cylinder_heatmap(in_dir, out_path, time=None) -> Path:
    """Surface (x, rho(x) cos theta, rho(x) sin theta) colored by u1."""
    if time is None:
        snaps = list_snapshots(in_dir)
        if not snaps:
            raise PlotInputError(f"no snapshots in {in_dir}")
        path = snaps[-1][1]
    else:
        path = snapshot_for_time(in_dir, time)
    u1, _, t = read_snapshot(path)
    n, m = u1.shape
    geo, length, n_cfg = run_geometry(in_dir)
    if n_cfg != n:
        raise PlotInputError(
            f"snapshot has {n} axial nodes but the manifest says {n_cfg}"
        )
    x = (length / n) * np.arange(n)

    stride = max(1, n // HEATMAP_MAX_COLUMNS)
    x = x[::stride]
    u1 = u1[::stride]
    rho = radius_profile(geo, x)

    # close the angular seam so the surface has no slit
    thetas = 2.0 * np.pi * np.arange(m + 1) / m
    u1c = np.concatenate([u1, u1[:, :1]], axis=1)
    xx = np.broadcast_to(x[:, None], u1c.shape)
    yy = rho[:, None] * np.cos(thetas)[None, :]
    zz = rho[:, None] * np.sin(thetas)[None, :]

    norm = Normalize(*U1_CLAMP, clip=True)
    cmap = matplotlib.colormaps["viridis"]
    fig = plt.figure(figsize=(10.0, 3.6))
    ax = fig.add_subplot(projection="3d")
    ax.plot_surface(
        xx, yy, zz,
        facecolors=cmap(norm(u1c)),
        rstride=1, cstride=1,
        shade=False, antialiased=False, linewidth=0,
    )
    span = 1.1 * float(rho.max())
    ax.set_ylim(-span, span)
    ax.set_zlim(-span, span)
    ax.set_box_aspect((5.0, 1.0, 1.0))
    ax.set_axis_off()
    ax.set_title(f"u1 at t = {t:g}")
    mappable = cm.ScalarMappable(norm=norm, cmap=cmap)
    fig.colorbar(mappable, ax=ax, shrink=0.7, pad=0.02, label="u1")
    return _finish(fig, out_path)


def render_spectrum_scatter(in_dir, out_path, eta=None) -> Path:
    """Eigenvalue scatter with the damping lines and essential branches.

    Reads spectrum.csv; overlays essential.csv when present (closed-form
    branch samples exported by the producer; nothing is recomputed
    here). eta defaults to eps * gamma from the manifest's model echo.
    """
    in_dir = Path(in_dir)
    _, cols = read_series_csv(in_dir / "spectrum.csv")
    for need in ("re", "im", "localized_flag"):
        if need not in cols:
            raise PlotInputError(f"spectrum.csv lacks the {need!r} column")
    if eta is None:
        model = read_manifest(in_dir).get("config", {}).get("model", {})
        if "eps" not in model or "gamma" not in model:
            raise PlotInputError(
                "eta not given and the manifest has no model echo to derive it"
            )
        eta = float(model["eps"]) * float(model["gamma"])

    loc = cols["localized_flag"].astype(bool)
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    ax.scatter(
        cols["re"][~loc], cols["im"][~loc],
        s=12, marker=".", color="tab:gray", label="extended",
    )
    ax.scatter(
        cols["re"][loc], cols["im"][loc],
        s=30, marker="o", color="tab:red", label="localized",
    )
    ax.axvline(0.0, color="k", linewidth=0.8)
    ax.axvline(-eta, color="tab:blue", linewidth=0.8, linestyle="--",
               label=f"Re = -eta = {-eta:g}")

    essential = in_dir / "essential.csv"
    if essential.is_file():
        _, ecols = read_series_csv(essential)
        branch = np.asarray(ecols["branch"])
        root = np.asarray(ecols["root"])
        first = True
        for b in ("+", "-"):
            for r in ("slow", "fast"):
                sel = (branch == b) & (root == r)
                if not np.any(sel):
                    continue
                ax.plot(
                    ecols["re"][sel], ecols["im"][sel],
                    color="tab:green", linewidth=1.0, alpha=0.8,
                    label="essential branches" if first else None,
                )
                first = False

    ax.set_xlabel("Re lambda")
    ax.set_ylabel("Im lambda")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _finish(fig, out_path)


def render_distance_series(in_dir, out_path) -> Path:
    _, cols = read_series_csv(Path(in_dir) / "distance.csv")
    for need in ("t", "dist"):
        if need not in cols:
            raise PlotInputError(f"distance.csv lacks the {need!r} column")
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(cols["t"], cols["dist"], marker="o", linewidth=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("distance to the front family")
    if np.all(cols["dist"] > 0.0):
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _finish(fig, out_path)
