"""Figure rendering for the report path.

Every CLI subcommand that writes delimited output also renders matplotlib
figures next to it (PNG, Agg backend, never shown interactively).  The CSV
files remain the primary, plot-ready output; figures are a convenience view
of the same data and can be disabled with report.plots = false.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .grid import Field


def _plt():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    return plt


_COMPONENT_LABELS = {
    "scalar_ou": ("u",),
    "acoustics2d": ("p", "u", "v"),
    "induction2d": ("U_x", "U_y"),
}


def component_labels(model_name: str, m: int) -> tuple[str, ...]:
    return _COMPONENT_LABELS.get(model_name, tuple(f"c{c}" for c in range(m)))


def render_field(field: Field, path: Path, title: str, labels=None) -> Path:
    """One panel per component: line plot for 1-D meshes, pseudocolor map
    for 2-D meshes."""
    plt = _plt()
    m = field.components
    labels = labels or tuple(f"c{c}" for c in range(m))
    mesh = field.mesh
    two_d = len(mesh.active_axes) >= 2
    fig, axes = plt.subplots(1, m, figsize=(4.2 * m, 3.6), squeeze=False)
    for c in range(m):
        ax = axes[0][c]
        if two_d:
            x0, y0 = mesh.origin[0], mesh.origin[1]
            extent = (x0, x0 + mesh.dims[0] * mesh.spacing[0],
                      y0, y0 + mesh.dims[1] * mesh.spacing[1])
            im = ax.imshow(field.data[c, 0], origin="lower", extent=extent,
                           cmap="viridis", interpolation="nearest")
            fig.colorbar(im, ax=ax, fraction=0.046)
            ax.set_xlabel("x")
            ax.set_ylabel("y")
        else:
            ax.plot(mesh.axis_centers(0), field.data[c, 0, 0], lw=1.2)
            ax.set_xlabel("x")
            ax.grid(alpha=0.3)
        ax.set_title(f"{title}: {labels[c]}")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def render_oracle(x: np.ndarray, mean: np.ndarray, variance: np.ndarray, path: Path) -> Path:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    sd = np.sqrt(np.maximum(variance, 0.0))
    ax.plot(x, mean, lw=1.4, label="mean")
    ax.fill_between(x, mean - sd, mean + sd, alpha=0.25, label="mean +- sd")
    ax.set_xlabel("x")
    ax.grid(alpha=0.3)
    ax.legend()
    ax.set_title("closed-form moments")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def render_convergence(table, path: Path, labels=None) -> Path:
    plt = _plt()
    m = table.components
    labels = labels or tuple(f"c{c}" for c in range(m))
    dxs = [r.dx for r in table.rows]
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.8))
    for ax, moment, title in ((axes[0], "mean_err_pct", "mean"),
                              (axes[1], "var_err_pct", "variance")):
        for c in range(m):
            errs = [getattr(r, moment)[c] for r in table.rows]
            ax.loglog(dxs, errs, "o-", lw=1.2, label=labels[c])
        ref = [e for e in (getattr(r, moment)[0] for r in table.rows) if e > 0]
        if len(ref) >= 1 and len(dxs) >= 2:
            anchor = ref[0]
            ax.loglog(dxs, [anchor * d / dxs[0] for d in dxs], "k--", lw=0.8,
                      alpha=0.6, label="slope 1")
        ax.set_xlabel("dx")
        ax.set_ylabel("relative L2 error (%)")
        ax.set_title(f"{title} vs {table.reference}")
        ax.grid(which="both", alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path
