"""Mean-field variational inference for the boundary mixture.

Class 0 is the outlier class (uniform over the field of view); classes
``1..K`` are boundary candidates whose implicit residual is Gaussian with
the propagated pseudo-variance.  The loop alternates responsibilities,
Dirichlet weight expectations and Bingham concentration updates.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import digamma

from . import bingham, conic
from .conic import FieldOfView, PolarPoint
from .errors import AllZeroRow, EigenFailure

log = logging.getLogger(__name__)

# lower bound on residual variances; guards against a zero-gradient point
SIGMA2_FLOOR = 1e-12
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Detection:
    point: PolarPoint
    sigma_r: float
    sigma_theta: float

    def __post_init__(self):
        if not (self.sigma_r > 0 and self.sigma_theta > 0):
            raise ValueError("detection noise must be positive")


@dataclass
class Datagram:
    """One radar frame stored column-wise."""

    timestamp: float
    r: np.ndarray
    theta: np.ndarray
    sigma_r: np.ndarray
    sigma_theta: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float).reshape(-1)
        n = self.r.size
        self.theta = np.asarray(self.theta, dtype=float).reshape(-1)
        self.sigma_r = np.broadcast_to(np.asarray(self.sigma_r, dtype=float), (n,)).copy()
        self.sigma_theta = np.broadcast_to(np.asarray(self.sigma_theta, dtype=float), (n,)).copy()
        if self.theta.size != n:
            raise ValueError("r and theta lengths differ")
        if np.any(self.sigma_r <= 0) or np.any(self.sigma_theta <= 0):
            raise ValueError("detection noise must be positive")
        if np.any(self.r < 0):
            raise ValueError("negative range")

    @classmethod
    def from_detections(cls, timestamp, detections):
        detections = list(detections)
        return cls(timestamp,
                   [d.point.r for d in detections],
                   [d.point.theta for d in detections],
                   [d.sigma_r for d in detections],
                   [d.sigma_theta for d in detections])

    def __len__(self):
        return self.r.size

    @property
    def detections(self) -> List[Detection]:
        return [Detection(PolarPoint(r, t), sr, st) for r, t, sr, st in
                zip(self.r, self.theta, self.sigma_r, self.sigma_theta)]

    @property
    def phi(self) -> np.ndarray:
        return conic.basis(self.r, self.theta)

    def xy(self) -> np.ndarray:
        return conic.polar_to_cartesian(self.r, self.theta)

    def subset(self, idx) -> "Datagram":
        return Datagram(self.timestamp, self.r[idx], self.theta[idx],
                        self.sigma_r[idx], self.sigma_theta[idx])


@dataclass
class Candidate:
    """One boundary hypothesis.

    ``prior`` is the concentration before the current frame's data and
    ``cinv`` the posterior after the latest M-step.
    """

    id: int
    prior: np.ndarray
    cinv: np.ndarray
    mode: np.ndarray
    valid: bool = True

    @classmethod
    def from_prior(cls, id, prior, reference=None):
        beta, _ = bingham.mode(prior, reference)
        return cls(id, prior, prior.copy(), beta)


@dataclass
class MixtureState:
    alpha: np.ndarray
    candidates: List[Candidate] = field(default_factory=list)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if self.alpha.size != len(self.candidates) + 1:
            raise ValueError("alpha must have one entry per candidate plus the outlier class")
        if np.any(self.alpha <= 0):
            raise ValueError("concentrations must be positive")

    @property
    def K(self) -> int:
        return len(self.candidates)

    @property
    def modes(self) -> np.ndarray:
        return np.array([c.mode for c in self.candidates]).reshape(-1, 4)


@dataclass(frozen=True)
class MFVIConfig:
    tol_gamma: float = 1e-4
    max_iters: int = 50
    # "mean" uses E[pi_k] inside rho; "geometric" uses exp(E[log pi_k])
    weight_mode: str = "mean"

    def __post_init__(self):
        if self.weight_mode not in ("mean", "geometric"):
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if self.tol_gamma <= 0 or self.max_iters < 1:
            raise ValueError("tol_gamma must be positive and max_iters >= 1")


@dataclass
class MFVIResult:
    mixture: MixtureState
    gamma: np.ndarray
    pi: np.ndarray
    iterations: int
    converged: bool


def expected_pi(alpha, gamma=None) -> np.ndarray:
    """Posterior mean of the Dirichlet mixture weights."""
    post = np.asarray(alpha, dtype=float).copy()
    if gamma is not None:
        post = post + np.asarray(gamma).sum(axis=0)
    return post / post.sum()


def geometric_pi(alpha, gamma=None) -> np.ndarray:
    """``exp(E[log pi_k])`` under the Dirichlet posterior, rescaled to sum to one."""
    post = np.asarray(alpha, dtype=float).copy()
    if gamma is not None:
        post = post + np.asarray(gamma).sum(axis=0)
    logw = digamma(post)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def mixture_weights(alpha, gamma, cfg: MFVIConfig) -> np.ndarray:
    if cfg.weight_mode == "geometric":
        return geometric_pi(alpha, gamma)
    return expected_pi(alpha, gamma)


def candidate_log_density(z: Datagram, beta) -> np.ndarray:
    """Log Normal density of each detection's residual under ``beta``."""
    h = conic.basis(z.r, z.theta) @ beta
    s2 = np.maximum(conic.pseudo_variance_diag(beta, z.r, z.theta, z.sigma_r, z.sigma_theta),
                    SIGMA2_FLOOR)
    return -0.5 * (_LOG_2PI + np.log(s2) + h * h / s2)


def log_rho(z: Datagram, mixture: MixtureState, pi, fov: FieldOfView) -> np.ndarray:
    """Unnormalized log responsibilities, shape ``(N, K+1)``."""
    pi = np.asarray(pi, dtype=float)
    n = len(z)
    out = np.empty((n, mixture.K + 1))
    with np.errstate(divide="ignore"):
        logpi = np.log(pi)
    out[:, 0] = logpi[0] - np.log(fov.area)
    for k, cand in enumerate(mixture.candidates, start=1):
        if not cand.valid:
            out[:, k] = -np.inf
            continue
        out[:, k] = logpi[k] + candidate_log_density(z, cand.mode)
    return out


def normalize_log_rows(lr: np.ndarray) -> np.ndarray:
    top = lr.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        bad = int(np.flatnonzero(~np.isfinite(top[:, 0]))[0])
        raise AllZeroRow(f"detection {bad} has no class with finite likelihood")
    w = np.exp(lr - top)
    return w / w.sum(axis=1, keepdims=True)


def e_step(z: Datagram, mixture: MixtureState, pi, fov: FieldOfView) -> np.ndarray:
    """Responsibilities ``gamma`` of every class for every detection."""
    pi = np.asarray(pi, dtype=float)
    if pi.size != mixture.K + 1:
        raise ValueError("pi length does not match the mixture")
    if len(z) == 0:
        return np.zeros((0, mixture.K + 1))
    return normalize_log_rows(log_rho(z, mixture, pi, fov))


def m_step(z: Datagram, gamma, mixture: MixtureState) -> MixtureState:
    """Bingham update of every candidate from its prior concentration.

    Pseudo-variances are frozen at the current modes.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (len(z), mixture.K + 1):
        raise ValueError("gamma shape does not match datagram and mixture")
    phi = z.phi
    out = []
    for k, cand in enumerate(mixture.candidates, start=1):
        if not cand.valid:
            out.append(cand)
            continue
        s2 = np.maximum(conic.pseudo_variance_diag(cand.mode, z.r, z.theta, z.sigma_r, z.sigma_theta),
                        SIGMA2_FLOOR)
        cinv = bingham.update(cand.prior, gamma[:, k], phi, s2)
        try:
            beta, _ = bingham.mode(cinv, cand.mode)
        except EigenFailure:
            log.warning("candidate %d: eigen-decomposition failed, marking invalid", cand.id)
            out.append(dataclasses.replace(cand, cinv=cinv, valid=False))
            continue
        out.append(dataclasses.replace(cand, cinv=cinv, mode=beta))
    return MixtureState(mixture.alpha.copy(), out)


def run_mfvi(z: Datagram, mixture: MixtureState, fov: FieldOfView,
             cfg: MFVIConfig = MFVIConfig(), pi: Optional[np.ndarray] = None) -> MFVIResult:
    """Iterate E- and M-steps until responsibilities stop moving.

    ``pi`` seeds the first E-step; by default the prior expectation of the
    weights.  Hitting ``max_iters`` is reported through ``converged``.
    """
    if pi is None:
        pi = mixture_weights(mixture.alpha, None, cfg)
    prev = None
    gamma = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gamma = e_step(z, mixture, pi, fov)
        pi = mixture_weights(mixture.alpha, gamma, cfg)
        if mixture.K == 0:
            converged = True
            break
        mixture = m_step(z, gamma, mixture)
        if prev is not None and (gamma.size == 0 or np.abs(gamma - prev).max() < cfg.tol_gamma):
            converged = True
            break
        prev = gamma
    if not converged:
        log.debug("MFVI stopped at max_iters=%d without converging", cfg.max_iters)
    return MFVIResult(mixture, gamma, pi, it, converged)
