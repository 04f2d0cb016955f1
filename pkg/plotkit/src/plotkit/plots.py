"""Static figures from parsed run outputs.

All rendering uses the Agg backend so that a given set of inputs always
produces the same image bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402
import numpy as np  # noqa: E402

from .io import GaugeSeries, PatchBox, XtData

# One fill color per overlaid mask; overlaps blend via alpha.
MASK_COLORS = ("tab:blue", "tab:red", "tab:green")
LEVEL_COLORS = ("0.85", "tab:orange", "tab:red", "tab:purple", "tab:brown")

_SAVE_OPTS = dict(dpi=120, metadata={"Software": None})


class PlotError(Exception):
    """Raised when inputs cannot be rendered together."""


def plot_xt(masks: list[XtData], labels: list[str], out_path,
            title: str = "") -> None:
    """Overlay up to three x-t masks on shared space-time axes."""
    if not 1 <= len(masks) <= len(MASK_COLORS):
        raise PlotError(f"need 1..{len(MASK_COLORS)} masks, got {len(masks)}")
    shape = masks[0].values.shape
    extent = (masks[0].x_lo / 1e3, masks[0].x_hi / 1e3,
              masks[0].times[0], masks[0].times[-1])
    for m in masks[1:]:
        if m.values.shape != shape:
            raise PlotError(
                f"mask shapes differ: {shape} vs {m.values.shape}")
    fig, ax = plt.subplots(figsize=(6, 4))
    handles = []
    for m, label, color in zip(masks, labels, MASK_COLORS):
        rgba = np.zeros(shape + (4,))
        rgba[m.values != 0] = matplotlib.colors.to_rgba(color, alpha=0.45)
        ax.imshow(rgba, origin="lower", aspect="auto", extent=extent,
                  interpolation="nearest")
        handles.append(Rectangle((0, 0), 1, 1, facecolor=color, alpha=0.45,
                                 label=label))
    ax.set_xlabel("x [km]")
    ax.set_ylabel("t [s]")
    if title:
        ax.set_title(title)
    ax.legend(handles=handles, loc="upper left", fontsize=8)
    fig.savefig(out_path, **_SAVE_OPTS)
    plt.close(fig)


def plot_gauges(series: list[GaugeSeries], out_path, title: str = "") -> None:
    """Overlay gauge time series, with time converted to hours."""
    if not series:
        raise PlotError("no gauge series to plot")
    fig, ax = plt.subplots(figsize=(6, 4))
    for s in series:
        ax.plot(s.times / 3600.0, s.eta, label=s.label, linewidth=1.2)
    ax.set_xlabel("t [h]")
    ax.set_ylabel("surface elevation [m]")
    ax.axhline(0.0, color="0.7", linewidth=0.6, zorder=0)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.savefig(out_path, **_SAVE_OPTS)
    plt.close(fig)


def plot_levels(boxes: list[PatchBox], time: float, out_path,
                field: XtData | None = None, title: str = "") -> None:
    """Draw the patch layout closest to `time` as colored level rectangles.

    Boxes are in level-local cell indices; each level is drawn in its own
    color on a common index plane (coarse cells), so finer boxes are scaled
    down by assuming a refinement ratio of 2 per level.  If `field` is given,
    its row nearest `time` is shown underneath as a heat strip (1D runs).
    """
    if not boxes:
        raise PlotError("no patch boxes to plot")
    times = sorted({b.time for b in boxes})
    t_pick = min(times, key=lambda t: abs(t - time))
    picked = [b for b in boxes if b.time == t_pick]
    for b in picked:
        if b.level > len(LEVEL_COLORS):
            raise PlotError(f"unknown level id {b.level}")
    fig, ax = plt.subplots(figsize=(6, 4))
    if field is not None:
        k = int(np.argmin(np.abs(field.times - time)))
        ax.imshow(field.values[k][None, :], origin="lower", aspect="auto",
                  extent=(0, field.nx, -0.5, 0.0), cmap="coolwarm",
                  interpolation="nearest")
    nlev = max(b.level for b in picked)
    for b in picked:
        scale = 2.0 ** (b.level - 1)
        color = LEVEL_COLORS[b.level - 1]
        if len(b.box) == 2:
            i0, i1 = b.box
            rect = Rectangle((i0 / scale, b.level - 0.9),
                             (i1 - i0) / scale, 0.8,
                             facecolor=color, edgecolor="k", linewidth=0.5)
        else:
            i0, i1, j0, j1 = b.box
            rect = Rectangle((i0 / scale, j0 / scale),
                             (i1 - i0) / scale, (j1 - j0) / scale,
                             facecolor=color, edgecolor="k", linewidth=0.5,
                             alpha=0.6)
        ax.add_patch(rect)
    ax.autoscale_view()
    ax.set_xlabel("coarse cell index")
    dim = len(picked[0].box)
    ax.set_ylabel("level" if dim == 2 else "coarse cell index (y)")
    ax.set_title(title or f"patch layout at t = {t_pick:.0f} s "
                 f"({nlev} level{'s' if nlev > 1 else ''})")
    fig.savefig(out_path, **_SAVE_OPTS)
    plt.close(fig)
