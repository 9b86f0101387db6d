"""PNG figures for the CLI reports (matplotlib, non-interactive backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .demo2d import sample_grid  # noqa: E402

# Fixed metadata so repeated runs write identical bytes.
_META = {"Software": None}


def _outline(ax, shape):
    a, b = shape.segments
    for p, q in zip(a, b):
        ax.plot([p[0], q[0]], [p[1], q[1]], color="0.6", lw=0.6, zorder=0)


def plot_demo2d(result, path) -> None:
    """Two rows (repulsion off/on): initial survivors, final points, UDF potential with gradients."""
    grid_res = result.config.grid_resolution
    grid = sample_grid(result.shape, grid_res, result.config.query_range)
    fig, axes = plt.subplots(2, 3, figsize=(12, 8))
    for row, (label, res) in enumerate((("repulsion off", result.off), ("repulsion on", result.on))):
        ax0, ax1, ax2 = axes[row]
        ax0.scatter(res.survivors_initial[:, 0], res.survivors_initial[:, 1], s=0.5, c="tab:blue")
        ax0.set_title(f"{label}: initial queries")
        pts = res.cloud.positions
        ax1.scatter(pts[:, 0], pts[:, 1], s=0.5, c="tab:red")
        ax1.set_title(f"{label}: final points ({len(pts)})")
        udf = grid[:, 2].reshape(grid_res, grid_res)
        ext = result.config.query_range
        ax2.imshow(udf, origin="lower", extent=(-ext, ext, -ext, ext), cmap="viridis")
        step = max(1, grid_res // 16)
        sub = grid.reshape(grid_res, grid_res, -1)[::step, ::step].reshape(-1, grid.shape[1])
        ax2.quiver(sub[:, 0], sub[:, 1], -sub[:, 3], -sub[:, 4], color="w", scale=30)
        ax2.set_title("UDF and descent direction")
        for ax in (ax0, ax1, ax2):
            _outline(ax, result.shape)
            ax.set_aspect("equal")
            ax.set_xlim(-ext, ext)
            ax.set_ylim(-ext, ext)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_losses(history, path) -> None:
    steps = np.arange(1, len(history) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in ("total", "udf", "rgb", "anchor"):
        ax.plot(steps, [getattr(r, name) for r in history], label=name, lw=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_cloud(cloud, path, title: str = "") -> None:
    pts = cloud.positions
    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="3d")
    colors = cloud.colors if cloud.colors is not None else "tab:blue"
    if len(pts):
        ax.scatter(pts[:, 0], pts[:, 1], pts[:, 2], s=0.3, c=colors)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
