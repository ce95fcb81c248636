"""SVG figures rendered from the CSV artifacts.

Each function reads only the CSV files it is given, so a figure is a pure
function of the table contents. SVG output is made byte-stable by fixing
the hash salt and dropping the date metadata.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import pyplot as plt

from .io import read_csv, read_numeric_csv

TRAIN_COLOR = "#2ca02c"
TEST_COLOR = "#9467bd"


def _style():
    plt.rcParams.update(
        {
            "svg.hashsalt": "aeshape",
            "svg.fonttype": "none",
            "font.size": 8,
            "axes.spines.top": False,
            "axes.spines.right": False,
            "figure.dpi": 100,
        }
    )


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_run(run_csv, out_svg) -> Path:
    """Train/test RMSE against iteration (solid green / dashed purple)."""
    _style()
    _, header, arr = read_numeric_csv(run_csv)
    col = {h: i for i, h in enumerate(header)}
    fig, ax = plt.subplots(figsize=(3.2, 2.2))
    it = arr[:, col["iteration"]]
    ax.plot(it, arr[:, col["train_rmse"]], color=TRAIN_COLOR, lw=1.2, label="train")
    test = arr[:, col["test_rmse"]]
    if np.isfinite(test).any():
        ax.plot(it, test, color=TEST_COLOR, lw=1.2, ls="--", label="test")
    ax.set_xlabel("iteration")
    ax.set_ylabel("RMSE")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, out_svg)


def plot_fit(recon_csv, grid_csv, out_svg) -> Path:
    """Data, reconstructions, and the polar grid before/after mapping."""
    _style()
    _, header, rows = read_csv(recon_csv)
    pts = np.array([[float(v) for v in r[:4]] for r in rows]).reshape(-1, 4)
    fig, ax = plt.subplots(figsize=(3.2, 3.2))
    if grid_csv is not None:
        _, gh, grows = read_csv(grid_csv)
        lines: dict[int, list] = {}
        for r in grows:
            lines.setdefault(int(r[0]), []).append([float(v) for v in r[2:6]])
        for seg in lines.values():
            seg = np.array(seg)
            ax.plot(seg[:, 0], seg[:, 1], color="0.8", lw=0.5)
            ax.plot(seg[:, 2], seg[:, 3], color="black", lw=0.5)
    ax.scatter(pts[:, 0], pts[:, 1], s=2, color="0.6", lw=0)
    ax.scatter(pts[:, 2], pts[:, 3], s=2, color=TEST_COLOR, lw=0)
    ax.set_aspect("equal")
    fig.tight_layout()
    return _save(fig, out_svg)


def plot_shapes(shapes_csv, out_svg) -> Path:
    _style()
    meta, header, arr = read_numeric_csv(shapes_csv)
    col = {h: i for i, h in enumerate(header)}
    t = arr[:, col["t"]]
    fig, axes = plt.subplots(1, 2, figsize=(6.4, 2.4), sharex=True)
    for name in ("squared_residual", "ortho_penalty", "normalized_penalty"):
        axes[0].plot(t, arr[:, col[name]], lw=1.2, label=name.replace("_", " "))
    axes[0].set_title("terms")
    for name in ("squared_residual", "total_ortho", "total_normalized"):
        axes[1].plot(t, arr[:, col[name]], lw=1.2, label=name.replace("_", " "))
    axes[1].set_title(f"totals, alpha={meta.get('alpha')}")
    for ax in axes:
        ax.set_xlabel("t  (0: identity, 1: principal manifold)")
        ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, out_svg)


def plot_trajectory(traj_csv, out_svg) -> Path:
    _style()
    meta, header, arr = read_numeric_csv(traj_csv)
    col = {h: i for i, h in enumerate(header)}
    fig, axes = plt.subplots(1, 2, figsize=(6.4, 2.4))
    xs = [h for h in header if h.startswith("x")]
    if len(xs) >= 2:
        axes[0].plot(arr[:, col[xs[0]]], arr[:, col[xs[1]]], ".-", ms=2, lw=0.8)
        axes[0].set_xlabel(xs[0])
        axes[0].set_ylabel(xs[1])
    else:
        axes[0].plot(arr[:, col["k"]], arr[:, col[xs[0]]], lw=0.8)
        axes[0].set_xlabel("iteration")
        axes[0].set_ylabel(xs[0])
    axes[0].set_title(f"{meta.get('function')} / {meta.get('method')}")
    gn = np.maximum(arr[:, col["grad_norm"]], 1e-300)
    axes[1].semilogy(arr[:, col["k"]], gn, lw=0.8)
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("|grad f|")
    fig.tight_layout()
    return _save(fig, out_svg)
