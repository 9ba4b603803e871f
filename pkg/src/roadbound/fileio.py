"""File formats and configuration documents.

Every data file is JSON Lines: one self-describing object per line.

* datagrams: ``{"t", "motion": [dx, dy, dpsi], "detections": [[r, theta, sigma_r, sigma_theta], ...]}``
* truth: ``{"t", "pose": [x, y, psi], "boundaries": [{"side", "beta", "points"}], "labels": [...]}``
* estimates: ``{"t", "frame", "left", "right", "K", "iterations", "outlier_mass", "accepted", "provisional", "flags"}``
  with each side either ``null`` or ``{"beta", "y_intercept", "id"}``

Scene specs and run configs are single JSON objects.  Floats are written
with ``repr`` precision, so a write/read/write cycle is byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .bingham import DEFAULT_PROCESS_NOISE, MotionDelta
from .conic import FieldOfView
from .errors import ConfigError, DataError, InvalidSpec
from .mixture import Datagram, MFVIConfig
from .proposal import ProposerConfig
from .simulator import BoundarySpec, BoundaryTruth, FrameTruth, Occlusion, SceneSpec, Segment
from .tracker import BoundaryEstimate, SideEstimate, TrackerConfig


def _plain(x):
    """Convert numpy scalars/arrays into JSON-ready Python values."""
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) else x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_plain(obj), allow_nan=False, separators=(",", ":"))


def atomic_write_text(path, text: str):
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path, records: Iterable[Any]):
    atomic_write_text(path, "".join(dumps(r) + "\n" for r in records))


def read_jsonl(path) -> List[Tuple[int, Any]]:
    """``(line_number, object)`` for every non-blank line."""
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(exc.strerror or str(exc), path) from exc
    out = []
    for no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append((no, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid JSON ({exc.msg})", path, no) from exc
    return out


def _require(rec, key, path, line):
    if not isinstance(rec, dict):
        raise DataError("record is not an object", path, line)
    if key not in rec:
        raise DataError(f"missing key {key!r}", path, line)
    return rec[key]


def _floats(value, n, what, path, line) -> List[float]:
    if not isinstance(value, list) or len(value) != n:
        raise DataError(f"{what} must be a list of {n} numbers", path, line)
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise DataError(f"{what} must be a list of {n} numbers", path, line) from exc
    if not all(math.isfinite(v) for v in out):
        raise DataError(f"{what} holds a non-finite value", path, line)
    return out


def _float(value, what, path, line) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise DataError(f"{what} must be a finite number", path, line)
    return float(value)


# --- datagrams -------------------------------------------------------------

def datagram_record(z: Datagram, m: MotionDelta) -> Dict[str, Any]:
    dets = np.column_stack([z.r, z.theta, z.sigma_r, z.sigma_theta]) if len(z) else np.zeros((0, 4))
    return {"t": float(z.timestamp), "motion": [m.dx, m.dy, m.dpsi], "detections": dets}


def write_datagrams(path, frames):
    write_jsonl(path, (datagram_record(z, m) for z, m in frames))


def parse_datagram(rec, path=None, line=None, fov: Optional[FieldOfView] = None):
    t = _float(_require(rec, "t", path, line), "t", path, line)
    motion = _floats(_require(rec, "motion", path, line), 3, "motion", path, line)
    dets = _require(rec, "detections", path, line)
    if not isinstance(dets, list):
        raise DataError("detections must be a list", path, line)
    rows = [_floats(d, 4, f"detections[{i}]", path, line) for i, d in enumerate(dets)]
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    if np.any(arr[:, 2:] <= 0):
        raise DataError("detection noise must be positive", path, line)
    if np.any(arr[:, 0] < 0):
        raise DataError("negative range in detections", path, line)
    if fov is not None and arr.size:
        out = ~fov.contains(arr[:, 0], arr[:, 1])
        if np.any(out):
            i = int(np.flatnonzero(out)[0])
            raise DataError(f"detections[{i}] lies outside the field of view", path, line)
    try:
        m = MotionDelta(*motion)
    except ValueError as exc:
        raise DataError(str(exc), path, line) from exc
    return Datagram(t, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]), m


def read_datagrams(path, fov: Optional[FieldOfView] = None):
    frames = []
    last = -math.inf
    for no, rec in read_jsonl(path):
        z, m = parse_datagram(rec, path, no, fov)
        if not z.timestamp > last:
            raise DataError(f"timestamp {z.timestamp} does not increase", path, no)
        last = z.timestamp
        frames.append((z, m))
    return frames


# --- ground truth ----------------------------------------------------------

def truth_record(ft: FrameTruth) -> Dict[str, Any]:
    return {"t": float(ft.timestamp), "pose": list(ft.pose),
            "boundaries": [{"side": b.side, "beta": b.beta, "points": np.asarray(b.points).reshape(-1, 2)}
                           for b in ft.boundaries],
            "labels": np.asarray(ft.labels, dtype=int)}


def write_truth(path, truth):
    write_jsonl(path, (truth_record(ft) for ft in truth))


def parse_truth(rec, path=None, line=None) -> FrameTruth:
    t = _float(_require(rec, "t", path, line), "t", path, line)
    pose = _floats(rec.get("pose", [0.0, 0.0, 0.0]), 3, "pose", path, line)
    bounds = _require(rec, "boundaries", path, line)
    if not isinstance(bounds, list):
        raise DataError("boundaries must be a list", path, line)
    out = []
    for i, b in enumerate(bounds):
        side = _require(b, "side", path, line)
        if side not in ("left", "right"):
            raise DataError(f"boundaries[{i}].side must be 'left' or 'right'", path, line)
        beta = _floats(_require(b, "beta", path, line), 4, f"boundaries[{i}].beta", path, line)
        pts = _require(b, "points", path, line)
        if not isinstance(pts, list):
            raise DataError(f"boundaries[{i}].points must be a list", path, line)
        xy = np.array([_floats(p, 2, f"boundaries[{i}].points", path, line) for p in pts],
                      dtype=float).reshape(-1, 2)
        out.append(BoundaryTruth(side, np.array(beta), xy))
    labels = rec.get("labels", [])
    if not isinstance(labels, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in labels):
        raise DataError("labels must be a list of integers", path, line)
    return FrameTruth(t, tuple(pose), out, np.array(labels, dtype=int))


def read_truth(path) -> List[FrameTruth]:
    return [parse_truth(rec, path, no) for no, rec in read_jsonl(path)]


# --- estimates -------------------------------------------------------------

def _side_record(s: Optional[SideEstimate]):
    if s is None:
        return None
    return {"beta": s.beta, "y_intercept": s.y_intercept, "id": s.candidate_id}


def estimate_record(est: BoundaryEstimate, frame: int) -> Dict[str, Any]:
    return {"t": float(est.timestamp), "frame": int(frame),
            "left": _side_record(est.left), "right": _side_record(est.right),
            "K": est.K, "iterations": est.iterations, "outlier_mass": est.outlier_mass,
            "accepted": est.accepted, "provisional": bool(est.provisional), "flags": list(est.flags)}


def write_estimates(path, estimates):
    write_jsonl(path, (estimate_record(e, k) for k, e in enumerate(estimates)))


def _parse_side(value, side, path, line) -> Optional[SideEstimate]:
    if value is None:
        return None
    beta = _floats(_require(value, "beta", path, line), 4, f"{side}.beta", path, line)
    y = _float(_require(value, "y_intercept", path, line), f"{side}.y_intercept", path, line)
    cid = _require(value, "id", path, line)
    if not isinstance(cid, int) or isinstance(cid, bool):
        raise DataError(f"{side}.id must be an integer", path, line)
    return SideEstimate(np.array(beta), y, cid)


def parse_estimate(rec, path=None, line=None) -> Tuple[int, BoundaryEstimate]:
    t = _float(_require(rec, "t", path, line), "t", path, line)
    frame = rec.get("frame", None)
    left = _parse_side(rec.get("left"), "left", path, line)
    right = _parse_side(rec.get("right"), "right", path, line)
    flags = rec.get("flags", [])
    if not isinstance(flags, list) or not all(isinstance(f, str) for f in flags):
        raise DataError("flags must be a list of strings", path, line)
    try:
        est = BoundaryEstimate(t, left, right, int(rec.get("K", 0)), int(rec.get("iterations", 0)),
                               float(rec.get("outlier_mass", 0.0)), int(rec.get("accepted", 0)),
                               bool(rec.get("provisional", False)), flags)
    except (TypeError, ValueError) as exc:
        raise DataError(f"malformed diagnostics ({exc})", path, line) from exc
    return frame, est


def read_estimates(path) -> List[BoundaryEstimate]:
    return [parse_estimate(rec, path, no)[1] for no, rec in read_jsonl(path)]


def read_estimates_with_lines(path) -> List[Tuple[int, BoundaryEstimate]]:
    return [(no, parse_estimate(rec, path, no)[1]) for no, rec in read_jsonl(path)]


# --- JSON documents --------------------------------------------------------

def read_json(path) -> Any:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc


def _check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _num(doc, key, where, default, kind=float):
    if key not in doc:
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: {key!r} must be a number")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{where}: {key!r} must be an integer")
        return int(v)
    if not math.isfinite(v):
        raise ConfigError(f"{where}: {key!r} must be finite")
    return float(v)


@dataclass(frozen=True)
class RunConfig:
    """Flat tracker configuration.  Angles are radians, lengths metres."""

    r_max: float = FieldOfView.r_max
    theta_min: float = FieldOfView.theta_min
    theta_max: float = FieldOfView.theta_max
    smoothing: float = TrackerConfig.smoothing
    prune_threshold: float = TrackerConfig.prune_threshold
    process_noise: Tuple[float, ...] = DEFAULT_PROCESS_NOISE
    alpha_outlier: float = TrackerConfig.alpha_outlier
    max_rounds: int = TrackerConfig.max_rounds
    warmup_frames: int = TrackerConfig.warmup_frames
    prior_eps: float = TrackerConfig.prior_eps
    confidence_threshold: float = ProposerConfig.confidence_threshold
    acceptance_threshold: float = ProposerConfig.acceptance_threshold
    max_iterations: int = ProposerConfig.max_iterations
    seed: int = ProposerConfig.rng_seed
    tol_gamma: float = MFVIConfig.tol_gamma
    max_iters: int = MFVIConfig.max_iters
    weight_mode: str = MFVIConfig.weight_mode

    @property
    def fov(self) -> FieldOfView:
        return FieldOfView(self.r_max, self.theta_min, self.theta_max)

    def tracker_config(self) -> TrackerConfig:
        """Build (and thereby validate) the tracker configuration."""
        try:
            return TrackerConfig(
                fov=self.fov, smoothing=self.smoothing, prune_threshold=self.prune_threshold,
                process_noise=tuple(self.process_noise),
                proposer=ProposerConfig(self.confidence_threshold, self.acceptance_threshold,
                                        self.max_iterations, self.seed),
                mfvi=MFVIConfig(self.tol_gamma, self.max_iters, self.weight_mode),
                alpha_outlier=self.alpha_outlier, max_rounds=self.max_rounds,
                warmup_frames=self.warmup_frames, prior_eps=self.prior_eps)
        except ValueError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["process_noise"] = list(self.process_noise)
        return d


_INT_KEYS = {"max_rounds", "warmup_frames", "max_iterations", "seed", "max_iters"}


def parse_run_config(doc, where="config") -> RunConfig:
    names = [f.name for f in dataclasses.fields(RunConfig)]
    _check_keys(doc, names, where)
    kw = {}
    for key, value in doc.items():
        if key == "process_noise":
            if (not isinstance(value, list) or len(value) != 4
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
                raise ConfigError(f"{where}: 'process_noise' must be a list of 4 numbers")
            kw[key] = tuple(float(v) for v in value)
        elif key == "weight_mode":
            if not isinstance(value, str):
                raise ConfigError(f"{where}: 'weight_mode' must be a string")
            kw[key] = value
        else:
            kw[key] = _num(doc, key, where, None, int if key in _INT_KEYS else float)
    cfg = RunConfig(**kw)
    cfg.tracker_config()
    return cfg


def load_run_config(path) -> RunConfig:
    return parse_run_config(read_json(path), os.fspath(path))


# --- scene specs -----------------------------------------------------------

_SCENE_KEYS = {"segments", "boundaries", "lane_offset", "speed", "frame_rate", "n_frames",
               "detections_per_frame", "clutter_fraction", "sigma_r", "sigma_theta",
               "r_max", "theta_min", "theta_max", "lambertian", "occlusions", "start",
               "truth_spacing", "seed"}


def parse_scene(doc, where="scene") -> SceneSpec:
    _check_keys(doc, _SCENE_KEYS, where)
    if "segments" not in doc or not isinstance(doc["segments"], list):
        raise ConfigError(f"{where}: 'segments' must be a list")
    segments = []
    for i, s in enumerate(doc["segments"]):
        w = f"{where}: segments[{i}]"
        _check_keys(s, {"kind", "length", "radius", "turn"}, w)
        kind = s.get("kind")
        length = _num(s, "length", w, None)
        if length is None:
            raise ConfigError(f"{w}: missing key 'length'")
        if kind == "line":
            if "radius" in s or "turn" in s:
                raise ConfigError(f"{w}: a line takes no 'radius' or 'turn'")
            segments.append(Segment("line", length))
        elif kind == "arc":
            radius = _num(s, "radius", w, None)
            if radius is None or not radius > 0:
                raise ConfigError(f"{w}: 'radius' must be a positive number")
            turn = s.get("turn", "right")
            if turn not in ("left", "right"):
                raise ConfigError(f"{w}: 'turn' must be 'left' or 'right'")
            segments.append(Segment.arc(length, radius, turn))
        else:
            raise ConfigError(f"{w}: 'kind' must be 'line' or 'arc'")
    kw: Dict[str, Any] = {"segments": tuple(segments)}
    if "boundaries" in doc:
        bl = doc["boundaries"]
        if not isinstance(bl, list):
            raise ConfigError(f"{where}: 'boundaries' must be a list")
        out = []
        for i, b in enumerate(bl):
            w = f"{where}: boundaries[{i}]"
            _check_keys(b, {"side", "offset"}, w)
            off = _num(b, "offset", w, None)
            if off is None or "side" not in b:
                raise ConfigError(f"{w}: needs 'side' and 'offset'")
            out.append(BoundarySpec(b["side"], off))
        kw["boundaries"] = tuple(out)
    if "occlusions" in doc:
        ol = doc["occlusions"]
        if not isinstance(ol, list):
            raise ConfigError(f"{where}: 'occlusions' must be a list")
        out = []
        for i, o in enumerate(ol):
            w = f"{where}: occlusions[{i}]"
            _check_keys(o, {"side", "t_start", "t_end", "theta_min", "theta_max"}, w)
            if "side" not in o or "t_start" not in o or "t_end" not in o:
                raise ConfigError(f"{w}: needs 'side', 't_start' and 't_end'")
            out.append(Occlusion(o["side"], _num(o, "t_start", w, 0.0), _num(o, "t_end", w, 0.0),
                                 _num(o, "theta_min", w, -math.pi), _num(o, "theta_max", w, math.pi)))
        kw["occlusions"] = tuple(out)
    for key in ("lane_offset", "speed", "frame_rate", "clutter_fraction", "sigma_r", "sigma_theta",
                "start", "truth_spacing"):
        if key in doc:
            kw[key] = _num(doc, key, where, None)
    for key in ("n_frames", "detections_per_frame", "seed"):
        if key in doc:
            kw[key] = _num(doc, key, where, None, int)
    if "lambertian" in doc:
        if not isinstance(doc["lambertian"], bool):
            raise ConfigError(f"{where}: 'lambertian' must be true or false")
        kw["lambertian"] = doc["lambertian"]
    fov_kw = {k: _num(doc, k, where, None) for k in ("r_max", "theta_min", "theta_max") if k in doc}
    try:
        if fov_kw:
            kw["fov"] = FieldOfView(**fov_kw)
        spec = SceneSpec(**kw)
        spec.validate()
    except (ValueError, InvalidSpec) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return spec


def load_scene(path) -> SceneSpec:
    return parse_scene(read_json(path), os.fspath(path))


def scene_to_dict(spec: SceneSpec) -> Dict[str, Any]:
    segs = []
    for s in spec.segments:
        if s.kind == "line":
            segs.append({"kind": "line", "length": s.length})
        else:
            segs.append({"kind": "arc", "length": s.length, "radius": 1.0 / abs(s.curvature),
                         "turn": "right" if s.curvature > 0 else "left"})
    return {"segments": segs,
            "boundaries": [{"side": b.side, "offset": b.offset} for b in spec.boundaries],
            "lane_offset": spec.lane_offset, "speed": spec.speed, "frame_rate": spec.frame_rate,
            "n_frames": spec.n_frames, "detections_per_frame": spec.detections_per_frame,
            "clutter_fraction": spec.clutter_fraction, "sigma_r": spec.sigma_r,
            "sigma_theta": spec.sigma_theta, "r_max": spec.fov.r_max,
            "theta_min": spec.fov.theta_min, "theta_max": spec.fov.theta_max,
            "lambertian": spec.lambertian,
            "occlusions": [dataclasses.asdict(o) for o in spec.occlusions],
            "start": spec.start, "truth_spacing": spec.truth_spacing, "seed": spec.seed}
