"""Figures for selection runs and affinity matrices.

Everything renders off-screen (Agg) straight to a file.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _plan_axes(positions):
    # top-down view: the two axes with the largest spread
    spread = np.ptp(positions, axis=0)
    a, b = sorted(np.argsort(spread)[-2:])
    return int(a), int(b)


def plot_selection(traj, result, path, dpi=150):
    """Top-down trajectory with the chosen frames, plus the per-step gain
    curve when the strategy records gains."""
    pos = traj.positions
    a, b = _plan_axes(pos)
    names = "xyz"
    with plt.rc_context(STYLE):
        ncols = 2 if result.gains else 1
        fig, axes = plt.subplots(1, ncols, figsize=(4.2 * ncols, 3.8), squeeze=False)
        ax = axes[0, 0]
        ax.plot(pos[:, a], pos[:, b], color="0.75", lw=0.8, zorder=1, label="trajectory")
        sel = np.asarray(result.indices)
        ax.scatter(pos[sel, a], pos[sel, b], s=14, c=np.arange(len(sel)), cmap="viridis",
                   zorder=2, label=f"selected ({len(sel)})")
        # viewing direction (-z column of camera-to-world) for the picks
        fwd = -traj.rotations[sel][:, :, 2]
        scale = 0.04 * max(np.ptp(pos[:, a]), np.ptp(pos[:, b]), 1e-9)
        ax.quiver(pos[sel, a], pos[sel, b], fwd[:, a], fwd[:, b], angles="xy",
                  scale_units="xy", scale=1.0 / scale, width=0.004, color="C3", zorder=3)
        ax.set_xlabel(names[a])
        ax.set_ylabel(names[b])
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_title(f"{result.strategy}, k={result.k}, seed={result.seed}")
        ax.legend(loc="best", frameon=False)
        if result.gains:
            ax2 = axes[0, 1]
            g = np.asarray(result.gains, dtype=float)
            finite = np.isfinite(g)
            steps = np.arange(1, len(g) + 1)
            ax2.plot(steps[finite], g[finite], marker=".", ms=3, lw=1)
            ax2.set_xlabel("step")
            ax2.set_ylabel("marginal gain")
            ax2.set_title("greedy gains")
        fig.tight_layout()
        fig.savefig(path, dpi=dpi)
        plt.close(fig)


def plot_matrix(entries, path, dpi=150):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.4, 3.8))
        im = ax.imshow(entries, vmin=0.0, vmax=1.0, cmap="magma", interpolation="nearest")
        fig.colorbar(im, ax=ax, label="affinity")
        ax.set_xlabel("frame")
        ax.set_ylabel("frame")
        fig.tight_layout()
        fig.savefig(path, dpi=dpi)
        plt.close(fig)
