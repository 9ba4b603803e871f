"""Per-frame boundary tracking.

Each frame: predict every candidate under the radar motion, alternate
MFVI and RANSAC proposals until no proposal is accepted, smooth the
Dirichlet concentrations, prune weak candidates and pick the left/right
boundaries by their y-intercepts.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import bingham, conic
from .bingham import DEFAULT_PROCESS_NOISE, MotionDelta
from .conic import FieldOfView
from .errors import EigenFailure, ImaginaryRadius, NoIntercept, SingularState
from .mixture import (Candidate, Datagram, MFVIConfig, MixtureState, SIGMA2_FLOOR, run_mfvi)
from .proposal import NEW_CANDIDATE_ALPHA, ProposerConfig, propose

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackerConfig:
    fov: FieldOfView = FieldOfView()
    smoothing: float = 0.3
    prune_threshold: float = 2.0
    process_noise: Tuple[float, ...] = DEFAULT_PROCESS_NOISE
    proposer: ProposerConfig = ProposerConfig()
    mfvi: MFVIConfig = MFVIConfig()
    alpha_outlier: float = 10.0
    max_rounds: int = 5
    warmup_frames: int = 3
    prior_eps: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.smoothing <= 1.0:
            raise ValueError("smoothing must lie in [0, 1]")
        if self.prune_threshold < 0:
            raise ValueError("prune_threshold must be non-negative")
        if self.alpha_outlier <= 0:
            raise ValueError("alpha_outlier must be positive")
        if self.max_rounds < 0 or self.warmup_frames < 0:
            raise ValueError("max_rounds and warmup_frames must be non-negative")
        if self.prior_eps <= 0:
            raise ValueError("prior_eps must be positive")
        bingham.process_noise(self.process_noise)


@dataclass(frozen=True)
class SideEstimate:
    beta: np.ndarray
    y_intercept: float
    candidate_id: int


@dataclass
class BoundaryEstimate:
    timestamp: float
    left: Optional[SideEstimate]
    right: Optional[SideEstimate]
    K: int = 0
    iterations: int = 0
    outlier_mass: float = 0.0
    accepted: int = 0
    provisional: bool = False
    flags: List[str] = field(default_factory=list)


@dataclass
class TrackerState:
    mixture: MixtureState
    frame_index: int = 0
    next_id: int = 1
    last_timestamp: Optional[float] = None

    @classmethod
    def initial(cls, cfg: TrackerConfig) -> "TrackerState":
        return cls(MixtureState([cfg.alpha_outlier], []))


def update_concentrations(alpha_prev, gamma, c) -> np.ndarray:
    """Moving average of expected per-class point counts."""
    alpha_prev = np.asarray(alpha_prev, dtype=float)
    counts = np.asarray(gamma, dtype=float).sum(axis=0)
    if counts.shape != alpha_prev.shape:
        raise ValueError("gamma columns do not match alpha")
    if not 0.0 <= c <= 1.0:
        raise ValueError("c must lie in [0, 1]")
    return (1.0 - c) * alpha_prev + c * counts


def predict_all(mixture: MixtureState, m: MotionDelta, q) -> Tuple[MixtureState, List[int]]:
    """Predict every candidate; candidates whose state cannot be inverted are dropped."""
    f = bingham.motion_matrix(m)
    keep_alpha = [mixture.alpha[0]]
    out, dropped = [], []
    for k, cand in enumerate(mixture.candidates, start=1):
        try:
            prior = bingham.predict(cand.cinv, m, q)
            ref = conic.normalize(f @ cand.mode)
            new = Candidate.from_prior(cand.id, prior, ref)
        except (SingularState, EigenFailure) as exc:
            log.info("dropping candidate %d during prediction: %s", cand.id, exc)
            dropped.append(cand.id)
            continue
        out.append(new)
        keep_alpha.append(mixture.alpha[k])
    return MixtureState(np.array(keep_alpha), out), dropped


def effective_intercept(beta) -> float:
    """The y-intercept nearest the radar origin."""
    ys = conic.y_intercepts(beta)
    return min(ys, key=abs)


def select_boundaries(candidates) -> Tuple[Optional[SideEstimate], Optional[SideEstimate]]:
    """Nearest-intercept candidate on each side of the radar.

    Negative intercepts are on the left, positive on the right.  Candidates
    that never cross the y-axis are ignored.
    """
    left = right = None
    for cand in candidates:
        if not getattr(cand, "valid", True):
            continue
        try:
            y = effective_intercept(cand.mode)
        except NoIntercept:
            continue
        est = SideEstimate(np.asarray(cand.mode, dtype=float), float(y), cand.id)
        if y < 0:
            if left is None or abs(y) < abs(left.y_intercept):
                left = est
        elif y > 0:
            if right is None or y < right.y_intercept:
                right = est
    return left, right


def _new_candidate(cid, z: Datagram, weights, beta, eps) -> Candidate:
    prior = eps * np.eye(4)
    s2 = np.maximum(conic.pseudo_variance_diag(beta, z.r, z.theta, z.sigma_r, z.sigma_theta),
                    SIGMA2_FLOOR)
    start = bingham.update(prior, np.clip(weights, 0.0, 1.0), z.phi, s2)
    mode, _ = bingham.mode(start, beta)
    return Candidate(cid, prior, start, mode)


def _prune(mixture: MixtureState, threshold) -> Tuple[MixtureState, List[int]]:
    alpha = [mixture.alpha[0]]
    keep, removed = [], []
    for k, cand in enumerate(mixture.candidates, start=1):
        ok = cand.valid and mixture.alpha[k] >= threshold and conic.is_real(cand.mode)
        if ok:
            keep.append(cand)
            alpha.append(mixture.alpha[k])
        else:
            removed.append(cand.id)
    return MixtureState(np.array(alpha), keep), removed


def step(state: TrackerState, z: Datagram, m: MotionDelta,
         cfg: TrackerConfig = TrackerConfig()) -> Tuple[BoundaryEstimate, TrackerState]:
    """Process one datagram; returns the estimate and the next tracker state."""
    if state.last_timestamp is not None and not z.timestamp > state.last_timestamp:
        raise ValueError(f"timestamp {z.timestamp} does not increase past {state.last_timestamp}")
    flags = []
    q = bingham.process_noise(cfg.process_noise)
    mixture, dropped = predict_all(state.mixture, m, q)
    if dropped:
        flags.append("dropped_singular")
    provisional = state.frame_index < cfg.warmup_frames
    next_id = state.next_id

    if len(z) == 0:
        flags.append("empty_datagram")
        # carry the predictions forward unchanged
        carried = MixtureState(mixture.alpha, [dataclasses.replace(c, cinv=c.prior) for c in mixture.candidates])
        left, right = select_boundaries(carried.candidates)
        new_state = TrackerState(carried, state.frame_index + 1, next_id, z.timestamp)
        return BoundaryEstimate(z.timestamp, left, right, carried.K, 0, 0.0, 0, provisional, flags), new_state

    rng = np.random.default_rng([cfg.proposer.rng_seed, state.frame_index])
    result = run_mfvi(z, mixture, cfg.fov, cfg.mfvi)
    iterations = result.iterations
    accepted = 0
    while accepted < cfg.max_rounds:
        prop = propose(z, result.mixture, result.gamma, cfg.fov, cfg.proposer, rng)
        if prop is None:
            break
        accepted += 1
        try:
            cand = _new_candidate(next_id, z, prop.gamma[:, -1], prop.beta, cfg.prior_eps)
        except EigenFailure:
            flags.append("proposal_eigen_failure")
            break
        next_id += 1
        grown = MixtureState(np.append(result.mixture.alpha, NEW_CANDIDATE_ALPHA),
                             result.mixture.candidates + [cand])
        result = run_mfvi(z, grown, cfg.fov, cfg.mfvi)
        iterations += result.iterations
    if accepted == cfg.max_rounds:
        flags.append("max_rounds")
    if not result.converged:
        flags.append("mfvi_not_converged")

    mixture = result.mixture
    alpha = update_concentrations(mixture.alpha, result.gamma, cfg.smoothing)
    alpha[0] = max(alpha[0], 1e-12)
    # posterior becomes the prior for the next frame
    carried = MixtureState(alpha, [dataclasses.replace(c, prior=c.cinv) for c in mixture.candidates])
    carried, removed = _prune(carried, cfg.prune_threshold)
    left, right = select_boundaries(carried.candidates)
    est = BoundaryEstimate(z.timestamp, left, right, carried.K, iterations,
                           float(result.gamma[:, 0].sum()), accepted, provisional, flags)
    return est, TrackerState(carried, state.frame_index + 1, next_id, z.timestamp)


class BoundaryTracker:
    """Stateful convenience wrapper around :func:`step`."""

    def __init__(self, cfg: TrackerConfig = TrackerConfig()):
        self.cfg = cfg
        self.state = TrackerState.initial(cfg)

    def step(self, z: Datagram, m: MotionDelta = MotionDelta()) -> BoundaryEstimate:
        est, self.state = step(self.state, z, m, self.cfg)
        return est

    def run(self, frames):
        return [self.step(z, m) for z, m in frames]
