"""Synthetic road scenes with known boundaries.

A road is a centerline made of straight and constant-curvature pieces;
each boundary is a lateral offset of the centerline, so every boundary
piece is itself a line or a circular arc.  A vehicle drives the
centerline (optionally in a lane offset) at constant speed and a forward
radar reports boundary returns with polar Gaussian noise plus clutter
drawn uniformly over the field of view.

Frame ``k`` uses its own generator seeded from ``(seed, k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import conic
from .bingham import MotionDelta
from .conic import FieldOfView
from .errors import InvalidSpec
from .mixture import Datagram

SIDES = ("left", "right")
# centerline resolution used to draw boundary returns
_GRID_STEP = 0.05


@dataclass(frozen=True)
class Segment:
    """Centerline piece: ``kind`` is "line" or "arc"; arcs turn right when ``curvature > 0``."""

    kind: str
    length: float
    curvature: float = 0.0

    @classmethod
    def arc(cls, length, radius, turn="right"):
        sign = 1.0 if turn == "right" else -1.0
        return cls("arc", length, sign / radius)


@dataclass(frozen=True)
class BoundarySpec:
    side: str
    offset: float


@dataclass(frozen=True)
class Occlusion:
    """Suppress returns from one boundary inside an azimuth window for a time interval."""

    side: str
    t_start: float
    t_end: float
    theta_min: float = -math.pi
    theta_max: float = math.pi


@dataclass(frozen=True)
class SceneSpec:
    segments: Tuple[Segment, ...]
    boundaries: Tuple[BoundarySpec, ...] = (BoundarySpec("left", -3.5), BoundarySpec("right", 3.5))
    lane_offset: float = 0.0
    speed: float = 10.0
    frame_rate: float = 10.0
    n_frames: int = 100
    detections_per_frame: int = 60
    clutter_fraction: float = 0.4
    sigma_r: float = 0.15
    sigma_theta: float = math.radians(0.5)
    fov: FieldOfView = FieldOfView()
    lambertian: bool = True
    occlusions: Tuple[Occlusion, ...] = ()
    start: float = 0.0
    truth_spacing: float = 1.0
    seed: int = 0

    @property
    def road_length(self) -> float:
        return sum(s.length for s in self.segments)

    def validate(self):
        if not self.segments:
            raise InvalidSpec("scene needs at least one segment")
        for i, seg in enumerate(self.segments):
            if seg.kind not in ("line", "arc"):
                raise InvalidSpec(f"segments[{i}].kind must be 'line' or 'arc'")
            if not seg.length > 0:
                raise InvalidSpec(f"segments[{i}].length must be positive")
            if seg.kind == "line" and seg.curvature != 0.0:
                raise InvalidSpec(f"segments[{i}] is a line with nonzero curvature")
            if seg.kind == "arc":
                if seg.curvature == 0.0:
                    raise InvalidSpec(f"segments[{i}] is an arc without curvature")
                for b in self.boundaries:
                    if 1.0 - seg.curvature * b.offset <= 0.0:
                        raise InvalidSpec(f"segments[{i}] radius is smaller than boundary offset {b.offset}")
        if not 0.0 <= self.clutter_fraction <= 1.0:
            raise InvalidSpec("clutter_fraction must lie in [0, 1]")
        for b in self.boundaries:
            if b.side not in SIDES:
                raise InvalidSpec(f"boundary side must be 'left' or 'right', got {b.side!r}")
            if (b.side == "left") != (b.offset < self.lane_offset):
                raise InvalidSpec(f"{b.side} boundary at offset {b.offset} is on the wrong side of the lane")
        for o in self.occlusions:
            if o.side not in SIDES:
                raise InvalidSpec(f"occlusion side must be 'left' or 'right', got {o.side!r}")
        if self.speed < 0 or self.frame_rate <= 0 or self.n_frames < 1:
            raise InvalidSpec("speed, frame_rate and n_frames must be positive")
        if self.detections_per_frame < 0 or self.sigma_r <= 0 or self.sigma_theta <= 0:
            raise InvalidSpec("detection budget and noise levels must be positive")
        if self.truth_spacing <= 0:
            raise InvalidSpec("truth_spacing must be positive")
        end = self.start + self.speed * (self.n_frames - 1) / self.frame_rate
        if self.start < 0 or end > self.road_length:
            raise InvalidSpec(f"trajectory [{self.start}, {end:.1f}] m leaves the road of length {self.road_length} m")


@dataclass
class BoundaryTruth:
    side: str
    beta: np.ndarray
    points: np.ndarray  # (M, 2) radar-frame Cartesian points within the field of view


@dataclass
class FrameTruth:
    timestamp: float
    pose: Tuple[float, float, float]  # world x, y, heading
    boundaries: List[BoundaryTruth]
    # per detection: boundary index, or -1 for clutter
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def side(self, name) -> Optional[BoundaryTruth]:
        for b in self.boundaries:
            if b.side == name:
                return b
        return None


class Road:
    """Arc-length parameterized centerline with lateral offsets."""

    def __init__(self, segments):
        self.segments = list(segments)
        self.starts = [0.0]
        self.states = []  # (x, y, psi) at the start of each segment
        x = y = psi = 0.0
        for seg in self.segments:
            self.states.append((x, y, psi))
            x, y, psi = self._advance(x, y, psi, seg.curvature, seg.length)
            self.starts.append(self.starts[-1] + seg.length)
        self.length = self.starts[-1]

    @staticmethod
    def _advance(x, y, psi, kappa, ds):
        ds = np.asarray(ds, dtype=float)
        if kappa == 0.0:
            return x + ds * np.cos(psi), y + ds * np.sin(psi), psi + 0.0 * ds
        psi1 = psi + kappa * ds
        return (x + (np.sin(psi1) - np.sin(psi)) / kappa,
                y - (np.cos(psi1) - np.cos(psi)) / kappa,
                psi1)

    def segment_index(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.starts, s, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def centerline(self, s):
        """Position, heading and segment index at arc length ``s``."""
        s = np.asarray(s, dtype=float)
        idx = self.segment_index(s)
        x = np.empty(s.shape)
        y = np.empty(s.shape)
        psi = np.empty(s.shape)
        for i in np.unique(idx):
            sel = idx == i
            x0, y0, p0 = self.states[i]
            x[sel], y[sel], psi[sel] = self._advance(x0, y0, p0, self.segments[i].curvature,
                                                     s[sel] - self.starts[i])
        return x, y, psi, idx

    def offset_point(self, s, d):
        x, y, psi, idx = self.centerline(s)
        return np.stack([x - d * np.sin(psi), y + d * np.cos(psi)], axis=-1), psi, idx

    def piece_coefficients(self, seg_index, d, pose) -> np.ndarray:
        """True coefficients of the boundary piece at offset ``d`` in the radar frame of ``pose``."""
        seg = self.segments[seg_index]
        x0, y0, p0 = self.states[seg_index]
        base = np.array([x0 - d * math.sin(p0), y0 + d * math.cos(p0)])
        normal = np.array([-math.sin(p0), math.cos(p0)])
        if seg.kind == "line" or seg.curvature == 0.0:
            return conic.line_coefficients(world_to_radar(base, pose), rotate_to_radar(normal, pose))
        center = np.array([x0, y0]) + normal / seg.curvature
        radius = abs(1.0 / seg.curvature - d)
        return conic.circle_coefficients(world_to_radar(center, pose), radius)


def world_to_radar(p, pose):
    x, y, psi = pose
    p = np.asarray(p, dtype=float)
    dx, dy = p[..., 0] - x, p[..., 1] - y
    c, s = math.cos(psi), math.sin(psi)
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)


def rotate_to_radar(v, pose):
    c, s = math.cos(pose[2]), math.sin(pose[2])
    v = np.asarray(v, dtype=float)
    return np.stack([c * v[..., 0] + s * v[..., 1], -s * v[..., 0] + c * v[..., 1]], axis=-1)


def motion_between(pose0, pose1) -> MotionDelta:
    d = world_to_radar(np.array(pose1[:2]), pose0)
    return MotionDelta(float(d[0]), float(d[1]), math.remainder(pose1[2] - pose0[2], 2.0 * math.pi))


def vehicle_pose(road: Road, spec: SceneSpec, k: int):
    s = spec.start + spec.speed * k / spec.frame_rate
    p, psi, _ = road.offset_point(np.array([s]), spec.lane_offset)
    return (float(p[0, 0]), float(p[0, 1]), float(psi[0])), s


def _boundary_returns(road, spec, pose, s_vehicle, t, rng):
    """Draw inlier returns from all boundaries; returns radar-frame points and boundary labels."""
    fov = spec.fov
    s_lo = max(0.0, s_vehicle - 10.0)
    s_hi = min(road.length, s_vehicle + 1.5 * fov.r_max + 10.0)
    n_in = spec.detections_per_frame - int(round(spec.detections_per_frame * spec.clutter_fraction))
    if s_hi <= s_lo or n_in <= 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=int)
    grid = np.arange(s_lo, s_hi, _GRID_STEP)
    cells, weights = [], []
    for bi, b in enumerate(spec.boundaries):
        pts, psi, idx = road.offset_point(grid, b.offset)
        local = world_to_radar(pts, pose)
        r, th = conic.cartesian_to_polar(local)
        kappa = np.array([road.segments[i].curvature for i in idx])
        w = np.abs(1.0 - kappa * b.offset) * _GRID_STEP
        if spec.lambertian:
            normal = rotate_to_radar(np.stack([-np.sin(psi), np.cos(psi)], axis=-1), pose)
            ray = local / np.maximum(r, 1e-9)[:, None]
            w = w * np.abs(np.sum(ray * normal, axis=-1))
        w = np.where(fov.contains(r, th), w, 0.0)
        for o in spec.occlusions:
            if o.side == b.side and o.t_start <= t <= o.t_end:
                w = np.where((th >= o.theta_min) & (th <= o.theta_max), 0.0, w)
        cells.append(np.full(grid.size, bi))
        weights.append(w)
    cells = np.concatenate(cells)
    weights = np.concatenate(weights)
    total = weights.sum()
    if total <= 0.0:
        return np.zeros((0, 2)), np.zeros(0, dtype=int)
    pick = rng.choice(weights.size, size=n_in, p=weights / total)
    s = np.tile(grid, len(spec.boundaries))[pick] + rng.uniform(-0.5, 0.5, n_in) * _GRID_STEP
    s = np.clip(s, 0.0, road.length)
    labels = cells[pick]
    pts = np.empty((n_in, 2))
    for bi, b in enumerate(spec.boundaries):
        sel = labels == bi
        if np.any(sel):
            p, _, _ = road.offset_point(s[sel], b.offset)
            pts[sel] = world_to_radar(p, pose)
    return pts, labels


def _truth_points(road, spec, pose, s_vehicle, offset):
    fov = spec.fov
    lo = max(0.0, s_vehicle - 10.0)
    hi = min(road.length, s_vehicle + 1.5 * fov.r_max + 10.0)
    k0 = math.ceil(lo / spec.truth_spacing)
    k1 = math.floor(hi / spec.truth_spacing)
    s = np.arange(k0, k1 + 1) * spec.truth_spacing
    p, _, _ = road.offset_point(s, offset)
    local = world_to_radar(p, pose)
    r, th = conic.cartesian_to_polar(local)
    return local[fov.contains(r, th)]


def generate(spec: SceneSpec, noise: bool = True):
    """Simulate a drive.

    Returns ``(frames, truth)`` where ``frames`` is a list of
    ``(Datagram, MotionDelta)`` pairs and ``truth`` a list of
    :class:`FrameTruth`.  ``noise=False`` keeps boundary returns exactly on
    the curves.
    """
    spec.validate()
    road = Road(spec.segments)
    fov = spec.fov
    frames, truth = [], []
    prev_pose = None
    for k in range(spec.n_frames):
        rng = np.random.default_rng([spec.seed, k])
        t = k / spec.frame_rate
        pose, s_vehicle = vehicle_pose(road, spec, k)
        pts, labels = _boundary_returns(road, spec, pose, s_vehicle, t, rng)
        r, th = conic.cartesian_to_polar(pts)
        if noise:
            r = r + rng.normal(0.0, spec.sigma_r, r.size)
            th = th + rng.normal(0.0, spec.sigma_theta, th.size)
        keep = fov.contains(r, th)
        r, th, labels = r[keep], th[keep], labels[keep]
        n_clutter = int(round(spec.detections_per_frame * spec.clutter_fraction))
        cr = rng.uniform(0.0, fov.r_max, n_clutter)
        ct = rng.uniform(fov.theta_min, fov.theta_max, n_clutter)
        r = np.concatenate([r, cr])
        th = np.concatenate([th, ct])
        labels = np.concatenate([labels, np.full(n_clutter, -1)])
        order = rng.permutation(r.size)
        z = Datagram(t, r[order], th[order], spec.sigma_r, spec.sigma_theta)
        m = MotionDelta() if prev_pose is None else motion_between(prev_pose, pose)
        seg_here = int(road.segment_index(s_vehicle))
        bts = [BoundaryTruth(b.side, road.piece_coefficients(seg_here, b.offset, pose),
                             _truth_points(road, spec, pose, s_vehicle, b.offset))
               for b in spec.boundaries]
        frames.append((z, m))
        truth.append(FrameTruth(t, pose, bts, labels[order]))
        prev_pose = pose
    return frames, truth
