"""Bingham coefficient state: mode extraction, motion prediction, information update.

A candidate's coefficient distribution is kept as the symmetric 4x4
concentration matrix ``cinv`` (information form).  Its mode is the
eigenvector of the smallest eigenvalue.  Prediction goes through the
underlying covariance ``C = inv(cinv)``; measurement updates are additive
in ``cinv``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import conic
from .errors import EigenFailure, SingularState

MAX_SWEEPS = 50
RIDGE_SCALE = 1e-9
MAX_CONDITION = 1e12
# Isotropic: per-coefficient scales such as UNIT_SCALED_PROCESS_NOISE tilt the
# predicted mode toward the noisier coefficients and the boundary drifts.
DEFAULT_PROCESS_NOISE = (1e-6, 1e-6, 1e-6, 1e-6)
UNIT_SCALED_PROCESS_NOISE = (1e-8, 1e-4, 1e-4, 1e-2)


@dataclass(frozen=True)
class MotionDelta:
    """Planar rigid motion of the radar between two frames.

    ``dx, dy`` is the new origin expressed in the previous radar frame and
    ``dpsi`` the heading change.
    """

    dx: float = 0.0
    dy: float = 0.0
    dpsi: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dpsi)):
            raise ValueError("motion delta must be finite")
        if abs(self.dpsi) >= math.pi:
            raise ValueError(f"|dpsi| must be below pi, got {self.dpsi}")

    def then(self, other: "MotionDelta") -> "MotionDelta":
        """Motion ``self`` followed by ``other`` as a single delta."""
        c, s = math.cos(self.dpsi), math.sin(self.dpsi)
        dpsi = math.remainder(self.dpsi + other.dpsi, 2.0 * math.pi)
        return MotionDelta(self.dx + c * other.dx - s * other.dy,
                           self.dy + s * other.dx + c * other.dy,
                           dpsi)

    def to_previous(self, xy):
        """Map points from the new radar frame into the previous one."""
        xy = np.asarray(xy, dtype=float)
        c, s = math.cos(self.dpsi), math.sin(self.dpsi)
        x, y = xy[..., 0], xy[..., 1]
        return np.stack([c * x - s * y + self.dx, s * x + c * y + self.dy], axis=-1)

    def to_current(self, xy):
        """Map static points from the previous radar frame into the new one."""
        xy = np.asarray(xy, dtype=float)
        c, s = math.cos(self.dpsi), math.sin(self.dpsi)
        x, y = xy[..., 0] - self.dx, xy[..., 1] - self.dy
        return np.stack([c * x + s * y, -s * x + c * y], axis=-1)


def process_noise(diag=DEFAULT_PROCESS_NOISE) -> np.ndarray:
    q = np.diag(np.asarray(diag, dtype=float))
    if q.shape != (4, 4) or np.any(np.diag(q) < 0):
        raise ValueError("process noise needs four non-negative diagonal entries")
    return q


def check_state(cinv, tol=1e-10) -> np.ndarray:
    cinv = np.asarray(cinv, dtype=float)
    if cinv.shape != (4, 4):
        raise ValueError(f"state must be 4x4, got {cinv.shape}")
    if not np.all(np.isfinite(cinv)):
        raise ValueError("state has non-finite entries")
    scale = max(1.0, np.abs(cinv).max())
    if np.abs(cinv - cinv.T).max() > tol * scale:
        raise ValueError("state is not symmetric")
    return cinv


def jacobi_eigh(a, max_sweeps=MAX_SWEEPS):
    """Cyclic Jacobi eigen-decomposition of a small symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as columns,
    unsorted.
    """
    a = [list(map(float, row)) for row in np.asarray(a, dtype=float)]
    n = len(a)
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    total = math.fsum(a[i][j] * a[i][j] for i in range(n) for j in range(n))
    if total == 0.0:
        return np.zeros(n), np.eye(n)
    for _ in range(max_sweeps):
        off = math.fsum(a[i][j] * a[i][j] for i in range(n) for j in range(i + 1, n))
        if off <= 1e-30 * total:
            return np.array([a[i][i] for i in range(n)]), np.array(v)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p] = c * akp - s * akq
                    a[k][q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k] = c * apk - s * aqk
                    a[q][k] = s * apk + c * aqk
                a[p][q] = a[q][p] = 0.0
                for k in range(n):
                    vkp, vkq = v[k][p], v[k][q]
                    v[k][p] = c * vkp - s * vkq
                    v[k][q] = s * vkp + c * vkq
    raise EigenFailure(f"no convergence after {max_sweeps} sweeps")


def mode(cinv, reference=None):
    """Mode of the Bingham state and its eigenvalue.

    The mode is the unit eigenvector of the smallest eigenvalue of ``cinv``,
    sign-aligned with ``reference`` when one is given.
    """
    w, v = jacobi_eigh(cinv)
    k = int(np.argmin(w))
    return conic.normalize(v[:, k], reference), float(w[k])


def motion_matrix(m: MotionDelta) -> np.ndarray:
    """Coefficient transition matrix for a radar motion.

    ``motion_matrix(m) @ beta`` evaluated at a point of the new frame equals
    ``beta`` evaluated at the same static point in the previous frame.
    """
    c, s = math.cos(m.dpsi), math.sin(m.dpsi)
    dx, dy = m.dx, m.dy
    return np.array([
        [1.0, 0.0, 0.0, 0.0],
        [2.0 * (dx * c + dy * s), c, s, 0.0],
        [2.0 * (dy * c - dx * s), -s, c, 0.0],
        [dx * dx + dy * dy, dx, dy, 1.0],
    ])


def _invert(mat, what):
    mat = 0.5 * (mat + mat.T)
    if np.linalg.cond(mat) > MAX_CONDITION:
        ridge = RIDGE_SCALE * np.trace(mat) / 4.0
        mat = mat + ridge * np.eye(4)
    try:
        out = np.linalg.inv(mat)
    except np.linalg.LinAlgError as exc:
        raise SingularState(f"{what} is singular") from exc
    if not np.all(np.isfinite(out)):
        raise SingularState(f"{what} inverse is not finite")
    return 0.5 * (out + out.T)


def predict(cinv, m: MotionDelta, q=None) -> np.ndarray:
    """Push a state through radar motion: ``inv(F C F^T + Q)``."""
    cinv = check_state(cinv)
    f = motion_matrix(m)
    cov = _invert(cinv, "concentration matrix")
    cov = f @ cov @ f.T
    if q is not None:
        cov = cov + np.asarray(q, dtype=float)
    return _invert(cov, "predicted covariance")


def update(cinv, gamma, phi, sigma2) -> np.ndarray:
    """Add weighted outer products ``sum_i gamma_i phi_i phi_i^T / sigma2_i``."""
    cinv = np.asarray(cinv, dtype=float)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    sigma2 = np.asarray(sigma2, dtype=float).reshape(-1)
    if gamma.size == 0:
        return cinv.copy()
    phi = np.asarray(phi, dtype=float).reshape(-1, 4)
    if np.any(sigma2 <= 0.0) or not np.all(np.isfinite(sigma2)):
        raise ValueError("pseudo-variances must be positive and finite")
    if np.any(gamma < 0.0) or np.any(gamma > 1.0):
        raise ValueError("weights must lie in [0, 1]")
    w = gamma / sigma2
    # fixed index order keeps the sum deterministic
    return cinv + (phi * w[:, None]).T @ phi
