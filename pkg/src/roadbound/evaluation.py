"""Trajectory-level accuracy metrics for boundary estimates.

Per frame the signed distances of the associated ground-truth points to
the estimated curve are collected.  Over the trajectory the mean signed
error is treated as a bias (ground truth / GPS offsets) and removed;
frames whose mean error deviates by more than three standard deviations,
or that have no estimate, count as failures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import conic
from .errors import ImaginaryRadius, NoTruth


def frame_error(beta, truth_points):
    """Mean signed distance of truth points to the estimate, plus the distances."""
    pts = np.asarray(truth_points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise NoTruth("no ground truth points for this frame")
    d = np.asarray(conic.geometric_distance(beta, pts), dtype=float)
    return float(d.mean()), d


@dataclass
class TrajectoryMetrics:
    frame_error: np.ndarray  # mean signed error per frame, NaN when absent
    frame_mae: np.ndarray  # e_MAE per frame, NaN for failures
    failed: np.ndarray  # bool per frame
    bias: float
    sigma: float
    mean_mae: float
    std_mae: float
    failure_rate: float

    @property
    def n_frames(self) -> int:
        return int(self.failed.size)


def trajectory_metrics(distances: Sequence[Optional[np.ndarray]]) -> TrajectoryMetrics:
    """Metrics over a trajectory.

    ``distances[k]`` holds the signed truth-point distances of frame ``k``,
    or ``None`` when the frame produced no estimate.
    """
    n = len(distances)
    present = np.array([d is not None and len(d) > 0 for d in distances], dtype=bool)
    e = np.full(n, np.nan)
    for k, d in enumerate(distances):
        if present[k]:
            e[k] = float(np.mean(d))
    if present.any():
        bias = float(np.mean(e[present]))
        sigma = float(np.std(e[present]))
    else:
        bias = sigma = float("nan")
    failed = ~present
    # a zero-width band fails every frame that deviates beyond roundoff
    slack = 1e-12 * max(1.0, abs(bias)) if present.any() else 0.0
    failed[present] = np.abs(e[present] - bias) > 3.0 * sigma + slack
    mae = np.full(n, np.nan)
    for k, d in enumerate(distances):
        if not failed[k]:
            mae[k] = float(np.mean(np.abs(np.asarray(d) - bias)))
    ok = ~failed
    mean_mae = float(np.mean(mae[ok])) if ok.any() else float("nan")
    std_mae = float(np.std(mae[ok])) if ok.any() else float("nan")
    return TrajectoryMetrics(e, mae, failed, bias, sigma, mean_mae, std_mae,
                             float(failed.sum()) / n if n else float("nan"))


def side_distances(estimates, truths, side) -> List[Optional[np.ndarray]]:
    """Per-frame truth distances for one side; ``None`` when the estimate is missing or unusable."""
    out = []
    for est, truth in zip(estimates, truths):
        beta = est.get(side) if isinstance(est, dict) else est
        pts = truth.get(side) if isinstance(truth, dict) else truth
        if beta is None or pts is None or len(pts) == 0:
            out.append(None)
            continue
        try:
            _, d = frame_error(beta, pts)
        except ImaginaryRadius:
            out.append(None)
            continue
        out.append(d)
    return out


def summary_rows(metrics: Dict[str, TrajectoryMetrics]):
    """Rows of (side, mean e_MAE cm, std e_MAE cm, % failure)."""
    return [(side, 100.0 * m.mean_mae, 100.0 * m.std_mae, 100.0 * m.failure_rate)
            for side, m in metrics.items()]


def format_table(metrics: Dict[str, TrajectoryMetrics]) -> str:
    head = f"{'Boundary':<10}{'mean e_MAE (cm)':>17}{'std e_MAE (cm)':>16}{'% Failure':>11}"
    lines = [head, "-" * len(head)]
    for side, mean, std, fail in summary_rows(metrics):
        lines.append(f"{side:<10}{mean:>17.2f}{std:>16.2f}{fail:>11.2f}")
    return "\n".join(lines)


@dataclass
class RunMetrics:
    sides: Dict[str, TrajectoryMetrics]
    times: Dict[str, np.ndarray]  # per side, timestamps of the frames that entered the metrics


def evaluate_run(estimates, truths, skip_provisional=True, sides=("left", "right")) -> RunMetrics:
    """Apply the trajectory protocol to aligned estimates and ground truth.

    ``estimates[k]`` is the BoundaryEstimate for ``truths[k]`` or ``None``
    when the frame has no record (counted as a failure).  Frames flagged
    provisional are left out unless ``skip_provisional`` is false; frames
    without truth points for a side are left out of that side.
    """
    if len(estimates) != len(truths):
        raise ValueError("estimates and truths must be aligned")
    keep = [k for k, est in enumerate(estimates)
            if not (skip_provisional and est is not None and est.provisional)]
    out, times = {}, {}
    for side in sides:
        frames, ts = [], []
        for k in keep:
            tb = truths[k].side(side)
            if tb is None or len(tb.points) == 0:
                continue
            est = estimates[k]
            side_est = getattr(est, side) if est is not None else None
            frames.append((side_est.beta if side_est is not None else None, tb.points))
            ts.append(truths[k].timestamp)
        times[side] = np.array(ts, dtype=float)
        d = side_distances([f[0] for f in frames], [f[1] for f in frames], side)
        out[side] = trajectory_metrics(d)
    return RunMetrics(out, times)


def metrics_record(run: RunMetrics) -> dict:
    """Machine-readable summary; per-frame values are NaN-free (``None`` for failures)."""
    rec = {"sides": {}}
    for side, m in run.sides.items():
        rec["sides"][side] = {
            "mean_mae_cm": 100.0 * m.mean_mae, "std_mae_cm": 100.0 * m.std_mae,
            "failure_pct": 100.0 * m.failure_rate, "bias_m": m.bias, "sigma_m": m.sigma,
            "n_frames": m.n_frames, "t": run.times[side], "frame_error_m": m.frame_error, "frame_mae_m": m.frame_mae,
            "failed": m.failed.astype(bool).tolist(),
        }
    return rec
