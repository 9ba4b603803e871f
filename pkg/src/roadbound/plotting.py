"""Static SVG figures: top-down scene view and MAE against time.

The top-down view puts the radar y axis (right) horizontally and x
(forward) vertically.  Detections are grey one-sigma ellipses, the left
boundary is blue, the right red and ground-truth points are green squares.
Grid lines sit on whole metres.
"""

from __future__ import annotations

import io
import math
import os
from typing import Dict, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Ellipse  # noqa: E402

from . import conic  # noqa: E402
from .conic import FieldOfView  # noqa: E402
from .errors import ImaginaryRadius  # noqa: E402
from .fileio import atomic_write_text  # noqa: E402

SIDE_COLORS = {"left": "tab:blue", "right": "tab:red"}
_SVG_RC = {"svg.hashsalt": "roadbound", "svg.fonttype": "none"}


def view_box(fov: FieldOfView):
    """(x_min, x_max, y_min, y_max) enclosing the field of view."""
    half = fov.r_max * max(abs(math.sin(fov.theta_min)), abs(math.sin(fov.theta_max)), 0.0)
    if fov.theta_max - fov.theta_min >= math.pi:
        half = fov.r_max
    x_min = min(0.0, fov.r_max * min(math.cos(fov.theta_min), math.cos(fov.theta_max))) - 1.0
    return x_min, fov.r_max + 1.0, -half - 1.0, half + 1.0


def curve_points(beta, box, n=400) -> np.ndarray:
    """Points of the conic inside ``box``; NaN rows separate disjoint pieces."""
    x0, x1, y0, y1 = box
    beta = np.asarray(beta, dtype=float)
    if conic.is_line(beta):
        _, b2, b3, b4 = beta
        if abs(b3) >= abs(b2):
            x = np.linspace(x0, x1, n)
            y = -(b2 * x + b4) / b3
        else:
            y = np.linspace(y0, y1, n)
            x = -(b3 * y + b4) / b2
        pts = np.column_stack([x, y])
    else:
        (cx, cy), rad = conic.circle_params(beta)
        t = np.linspace(0.0, 2.0 * math.pi, 8 * n)
        pts = np.column_stack([cx + rad * np.cos(t), cy + rad * np.sin(t)])
    inside = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
    out = pts.copy()
    out[~inside] = np.nan
    return out


def _save_svg(fig, path):
    buf = io.StringIO()
    with plt.rc_context(_SVG_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_text(path, buf.getvalue())


def plot_frame(path, z=None, estimate=None, truth=None, fov: FieldOfView = FieldOfView(),
               title: Optional[str] = None):
    """Render one frame to an SVG file.

    ``z`` is a Datagram, ``estimate`` a BoundaryEstimate and ``truth`` a
    FrameTruth; each may be ``None``.
    """
    box = view_box(fov)
    x0, x1, y0, y1 = box
    fig, ax = plt.subplots(figsize=(6.0, 6.0 * (x1 - x0) / (y1 - y0)))
    for gx in range(math.ceil(x0), math.floor(x1) + 1):
        ax.axhline(gx, color="0.9", lw=0.5, zorder=0, gid=f"grid-x-{gx}")
    for gy in range(math.ceil(y0), math.floor(y1) + 1):
        ax.axvline(gy, color="0.9", lw=0.5, zorder=0, gid=f"grid-y-{gy}")

    # field-of-view outline
    th = np.linspace(fov.theta_min, fov.theta_max, 100)
    edge = np.concatenate([[[0.0, 0.0]], np.column_stack([fov.r_max * np.cos(th), fov.r_max * np.sin(th)]),
                           [[0.0, 0.0]]])
    ax.plot(edge[:, 1], edge[:, 0], color="0.6", lw=0.6, ls="--", gid="fov")

    if z is not None and len(z):
        xy = z.xy()
        for k in range(len(z)):
            # radial axis along the ray, tangential axis r*sigma_theta; angle measured in plot axes
            ang = math.degrees(math.atan2(math.cos(z.theta[k]), math.sin(z.theta[k])))
            ax.add_patch(Ellipse((xy[k, 1], xy[k, 0]), 2.0 * z.sigma_r[k],
                                 2.0 * max(z.r[k] * z.sigma_theta[k], 1e-3), angle=ang,
                                 facecolor="0.55", edgecolor="0.35", lw=0.3, alpha=0.7,
                                 gid=f"detection-{k}"))

    if truth is not None:
        for b in truth.boundaries:
            pts = np.asarray(b.points).reshape(-1, 2)
            if pts.size:
                ax.plot(pts[:, 1], pts[:, 0], ls="none", marker="s", ms=3, color="tab:green",
                        gid=f"truth-{b.side}")

    if estimate is not None:
        for side in ("left", "right"):
            est = getattr(estimate, side)
            if est is None:
                continue
            try:
                pts = curve_points(est.beta, box)
            except ImaginaryRadius:
                continue
            ax.plot(pts[:, 1], pts[:, 0], color=SIDE_COLORS[side], lw=1.5, gid=f"boundary-{side}")

    ax.plot([0.0], [0.0], marker="^", color="k", ms=6, gid="radar")
    ax.set_xlim(y0, y1)
    ax.set_ylim(x0, x1)
    ax.set_aspect("equal")
    ax.set_xlabel("y (m)")
    ax.set_ylabel("x (m)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save_svg(fig, path)


def plot_mae(path, series: Dict[str, Tuple[Sequence[float], Sequence[float]]], title: Optional[str] = None):
    """Per-frame MAE against time, in centimetres.

    ``series`` maps a side to ``(times, mae)`` with MAE in metres and NaN
    for failed frames (drawn as gaps).
    """
    fig, ax = plt.subplots(figsize=(7.0, 3.0))
    for side, (times, values) in series.items():
        t = np.asarray(times, dtype=float)
        v = 100.0 * np.asarray(values, dtype=float)
        ax.plot(t, v, color=SIDE_COLORS.get(side, "k"), lw=1.0, label=side, gid=f"mae-{side}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("MAE (cm)")
    ax.grid(True, color="0.9", lw=0.5)
    ax.legend(loc="upper right")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save_svg(fig, path)


def frame_filename(folder, k: int) -> str:
    return os.path.join(folder, f"frame_{k:04d}.svg")
