"""Figures rendered next to the CSV outputs.  The CSVs stay the primary record."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_shapes(shapes: dict, path, title="rest shapes"):
    fig, ax = plt.subplots(figsize=(5, 5))
    for label, pos in shapes.items():
        ax.plot(pos[:, 0], pos[:, 1], lw=1, label=label)
    ax.set_aspect("equal")
    ax.set_xlabel("x / L")
    ax.set_ylabel("y / L")
    ax.set_title(title)
    if len(shapes) <= 8:
        ax.legend(fontsize=7)
    return _save(fig, path)


def plot_snapshots(snapshots, times, target, path, length=1.0, count=8):
    fig, ax = plt.subplots(figsize=(5, 5))
    idx = np.unique(np.linspace(0, len(snapshots) - 1, min(count, len(snapshots))).astype(int))
    colors = plt.cm.viridis(np.linspace(0, 1, len(idx)))
    for c, k in zip(colors, idx):
        p = snapshots[k] / length
        ax.plot(p[:, 0], p[:, 1], color=c, lw=1.2, label=f"t = {times[k]:.2f} s")
    ax.plot(*target, "r*", ms=12)
    ax.set_aspect("equal")
    ax.set_xlabel("x / L")
    ax.set_ylabel("y / L")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_traces(rows, columns, path, log=False, title=None):
    t = np.array([r["t"] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for col in columns:
        y = np.array([r[col] for r in rows], dtype=float)
        (ax.semilogy if log else ax.plot)(t, np.abs(y) if log else y, label=col)
    ax.set_xlabel("t (s)")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_polar(units, path):
    """Estimated and true (rho/L, alpha) along the arm."""
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="polar")
    a = np.array([u["alpha"] for u in units])
    ah = np.array([u["alpha_hat"] for u in units])
    r = np.array([u["rho"] for u in units])
    rh = np.array([u["rho_hat"] for u in units])
    ax.plot(a, r, "k-", label="true")
    ax.plot(ah, rh, "o--", ms=3, label="estimate")
    ax.legend(fontsize=8, loc="lower left")
    return _save(fig, path)


def plot_stats(rows, path, title="final sensing error"):
    x = np.array([r["target_x"] for r in rows])
    y = np.array([r["target_y"] for r in rows])
    e = np.array([r["error"] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    sc = ax.scatter(x, y, c=np.log10(np.maximum(e, 1e-12)), cmap="magma", s=40)
    fig.colorbar(sc, label="log10 error / L")
    ax.set_aspect("equal")
    ax.set_xlabel("target x / L")
    ax.set_ylabel("target y / L")
    ax.set_title(title)
    return _save(fig, path)


def plot_pursuit(rows, path):
    s = np.array([r["s"] for r in rows])
    fig, axes = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    for ax, (a, b) in zip(axes, (("zeta", "rho"), ("phi", "alpha"))):
        ax.plot(s, [r[a] for r in rows], label=f"{a} (unicycle)")
        ax.plot(s, [r[b] for r in rows], "--", label=f"{b} (arm)")
        ax.legend(fontsize=8)
    axes[-1].set_xlabel("s / L = t")
    return _save(fig, path)
