"""RANSAC-style proposer for unseen boundary candidates.

Minimal samples of three detections are drawn with probability
proportional to their outlier responsibility, turned into an exact conic,
and scored by how much expected outlier mass one E-step with the
augmented mixture moves into the new class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import conic
from .conic import FieldOfView
from .errors import DegenerateSample, InsufficientOutliers
from .mixture import Datagram, MixtureState, candidate_log_density, log_rho, normalize_log_rows

log = logging.getLogger(__name__)

# Dirichlet pseudo-count given to a freshly proposed candidate
NEW_CANDIDATE_ALPHA = 3.0


@dataclass(frozen=True)
class ProposerConfig:
    confidence_threshold: float = 0.99
    # uniform clutter at 24 points per frame scores up to about 8 on its own
    acceptance_threshold: float = 10.0
    max_iterations: int = 500
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.confidence_threshold < 1.0:
            raise ValueError("confidence_threshold must lie in (0, 1)")
        if not self.acceptance_threshold > 3.0:
            raise ValueError("acceptance_threshold must exceed the minimal sample size 3")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class Proposal:
    beta: np.ndarray
    score: float
    sample_indices: Tuple[int, int, int]
    iterations: int
    confidence: float
    # responsibilities of the augmented mixture from the scoring E-step
    gamma: np.ndarray


def weighted_sample(weights, k, rng) -> np.ndarray:
    """Weighted sampling without replacement (Efraimidis-Spirakis A-ES).

    Each positive-weight item gets key ``u ** (1 / w)``; the ``k`` largest
    keys win.  Keys are compared in log space.
    """
    w = np.asarray(weights, dtype=float)
    pos = np.flatnonzero(w > 0)
    if pos.size < k:
        raise InsufficientOutliers(f"need {k} positive weights, have {pos.size}")
    u = rng.random(w.size)
    keys = np.full(w.size, -np.inf)
    with np.errstate(divide="ignore"):
        keys[pos] = np.log(u[pos]) / w[pos]
    order = np.argsort(-keys, kind="stable")
    return order[:k]


def confidence(ratio, j) -> float:
    """Probability that an all-inlier minimal sample has been drawn after ``j`` tries."""
    ratio = min(max(float(ratio), 0.0), 1.0)
    return 1.0 - (1.0 - ratio ** 3) ** j


class _Scorer:
    """Caches the existing classes' log-likelihoods under the augmented weights."""

    def __init__(self, z: Datagram, mixture: MixtureState, gamma, fov: FieldOfView):
        self.z = z
        alpha = np.append(mixture.alpha, NEW_CANDIDATE_ALPHA)
        pi = alpha / alpha.sum()
        self.base = log_rho(z, mixture, pi[:-1], fov)
        self.log_pi_new = np.log(pi[-1])
        self.outlier_mass = np.asarray(gamma)[:, 0]

    def __call__(self, beta):
        lr = np.column_stack([self.base, self.log_pi_new + candidate_log_density(self.z, beta)])
        g = normalize_log_rows(lr)
        return float(np.sum(self.outlier_mass - g[:, 0])), g


def score(beta_prime, z: Datagram, mixture: MixtureState, gamma, fov: FieldOfView) -> float:
    """Expected number of detections a proposal removes from the outlier class.

    Positive when the proposal explains previously unexplained detections.
    """
    if len(z) == 0:
        return 0.0
    xi, _ = _Scorer(z, mixture, gamma, fov)(np.asarray(beta_prime, dtype=float))
    return xi


def propose(z: Datagram, mixture: MixtureState, gamma, fov: FieldOfView,
            cfg: ProposerConfig, rng) -> Optional[Proposal]:
    """Search for a new candidate; ``None`` unless the best score beats the acceptance threshold."""
    gamma = np.asarray(gamma, dtype=float)
    if len(z) < 3:
        return None
    w = gamma[:, 0]
    total = float(w.sum())
    if total < 3.0 or np.count_nonzero(w > 0) < 3:
        return None
    scorer = _Scorer(z, mixture, gamma, fov)
    best = None
    best_xi = -np.inf
    conf = 0.0
    j = 0
    for j in range(1, cfg.max_iterations + 1):
        idx = weighted_sample(w, 3, rng)
        try:
            beta = conic.fit_exact(z.r[idx], z.theta[idx])
        except DegenerateSample:
            continue
        xi, g = scorer(beta)
        if xi > best_xi:
            best_xi = xi
            best = (beta, tuple(int(i) for i in idx), g)
        conf = confidence(best_xi / total, j)
        if conf > cfg.confidence_threshold:
            break
    if best is None or not best_xi > cfg.acceptance_threshold:
        log.debug("no proposal accepted (best score %.2f after %d iterations)", best_xi, j)
        return None
    beta, idx, g = best
    return Proposal(beta, best_xi, idx, j, conf, g)
