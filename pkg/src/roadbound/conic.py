"""Homogeneous constant-curvature conic boundary model.

A boundary is the zero set of

    beta_1 (x^2 + y^2) + beta_2 x + beta_3 y + beta_4 = 0

written in radar polar coordinates through the basis
``phi(r, theta) = (r^2, r cos(theta), r sin(theta), 1)``.  ``beta_1 != 0``
is a circle, ``beta_1 == 0`` a line.  Coefficients are only defined up to
scale and are kept at unit norm.

Radar frame convention: x forward, y to the right, theta = 0 forward and
theta < 0 to the left.

Most functions broadcast over arrays of ``r``/``theta`` so the inference
code can evaluate a whole datagram at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateSample, ImaginaryRadius, NoIntercept, ZeroVector

# |beta_1| below this (after unit normalization) is treated as a line
LINE_EPS = 1e-8
# smallest/largest singular value ratio below which a 3-point sample is degenerate
RANK_TOL = 1e-10


class PolarPoint(NamedTuple):
    r: float
    theta: float


@dataclass(frozen=True)
class FieldOfView:
    r_max: float = 20.0
    theta_min: float = -np.pi / 3
    theta_max: float = np.pi / 3

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be smaller than theta_max")

    @property
    def area(self) -> float:
        """Measure of the (r, theta) rectangle used by the outlier density."""
        return self.r_max * (self.theta_max - self.theta_min)

    def contains(self, r, theta):
        r = np.asarray(r)
        theta = np.asarray(theta)
        return (r >= 0) & (r <= self.r_max) & (theta >= self.theta_min) & (theta <= self.theta_max)


def polar_to_cartesian(r, theta):
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def cartesian_to_polar(xy):
    xy = np.asarray(xy, dtype=float)
    return np.hypot(xy[..., 0], xy[..., 1]), np.arctan2(xy[..., 1], xy[..., 0])


def basis(r, theta) -> np.ndarray:
    """Basis vector ``(r^2, r cos, r sin, 1)``; shape ``(..., 4)``."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r, theta = np.broadcast_arrays(r, theta)
    return np.stack([r * r, r * np.cos(theta), r * np.sin(theta), np.ones_like(r)], axis=-1)


def basis_jacobian(r, theta) -> np.ndarray:
    """Partial derivatives of the basis with respect to ``(r, theta)``; shape ``(..., 4, 2)``."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r, theta = np.broadcast_arrays(r, theta)
    c, s = np.cos(theta), np.sin(theta)
    jac = np.zeros(r.shape + (4, 2))
    jac[..., 0, 0] = 2.0 * r
    jac[..., 1, 0] = c
    jac[..., 1, 1] = -r * s
    jac[..., 2, 0] = s
    jac[..., 2, 1] = r * c
    return jac


def evaluate(beta, r, theta):
    """Implicit residual ``beta . phi(r, theta)``; zero on the curve."""
    return basis(r, theta) @ np.asarray(beta, dtype=float)


def _residual_gradient(beta, r, theta):
    # beta^T Phi, i.e. d(residual)/d(r, theta), computed without building Phi
    b1, b2, b3, _ = np.asarray(beta, dtype=float)
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    g_r = 2.0 * b1 * r + b2 * c + b3 * s
    g_t = r * (b3 * c - b2 * s)
    return g_r, g_t


def pseudo_variance(beta, r, theta, noise) -> float:
    """Variance of the implicit residual propagated from a polar noise covariance.

    ``noise`` is a 2x2 covariance over ``(r, theta)``.
    """
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (2, 2):
        raise ValueError(f"noise must be 2x2, got shape {noise.shape}")
    if not np.allclose(noise, noise.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(noise).max())):
        raise ValueError("noise covariance must be symmetric")
    if np.linalg.eigvalsh(noise).min() < -1e-12 * max(1.0, np.abs(noise).max()):
        raise ValueError("noise covariance must be positive semidefinite")
    g = np.stack(_residual_gradient(beta, r, theta), axis=-1)
    return np.einsum("...i,ij,...j->...", g, noise, g)


def pseudo_variance_diag(beta, r, theta, sigma_r, sigma_theta):
    """Vectorized pseudo-variance for independent range/azimuth noise."""
    g_r, g_t = _residual_gradient(beta, r, theta)
    return g_r * g_r * np.square(sigma_r) + g_t * g_t * np.square(sigma_theta)


def normalize(beta_raw, reference: Optional[np.ndarray] = None) -> np.ndarray:
    """Scale to unit norm and fix the antipodal sign.

    With a reference the sign makes ``beta . reference >= 0``; otherwise the
    first nonzero component is made positive.
    """
    beta = np.asarray(beta_raw, dtype=float)
    norm = np.linalg.norm(beta)
    if norm == 0.0 or not np.isfinite(norm):
        raise ZeroVector("cannot normalize a zero or non-finite coefficient vector")
    beta = beta / norm
    if reference is not None:
        if float(np.dot(beta, reference)) < 0.0:
            beta = -beta
    else:
        nz = np.flatnonzero(beta)
        if beta[nz[0]] < 0.0:
            beta = -beta
    return beta


def fit_exact(r, theta) -> np.ndarray:
    """Conic through three polar points (null space of the 3x4 basis matrix)."""
    rows = basis(r, theta)
    if rows.shape != (3, 4):
        raise ValueError("fit_exact needs exactly three points")
    _, sv, vt = np.linalg.svd(rows)
    if not np.all(np.isfinite(sv)) or sv[0] == 0.0 or sv[2] / sv[0] < RANK_TOL:
        raise DegenerateSample("sample rows are rank deficient")
    return normalize(vt[-1])


def is_line(beta) -> bool:
    beta = np.asarray(beta, dtype=float)
    return abs(beta[0]) / np.linalg.norm(beta) < LINE_EPS


def circle_params(beta):
    """Center ``(cx, cy)`` and radius of a circle model."""
    b1, b2, b3, b4 = np.asarray(beta, dtype=float)
    disc = b2 * b2 + b3 * b3 - 4.0 * b1 * b4
    if disc < 0.0:
        raise ImaginaryRadius(f"negative radius discriminant {disc:.3g}")
    return np.array([-b2 / (2.0 * b1), -b3 / (2.0 * b1)]), np.sqrt(disc) / (2.0 * abs(b1))


def is_real(beta) -> bool:
    """False when the model has no real points at all."""
    b1, b2, b3, b4 = np.asarray(beta, dtype=float)
    if is_line(beta):
        return np.hypot(b2, b3) > 0.0
    return b2 * b2 + b3 * b3 - 4.0 * b1 * b4 >= 0.0


def y_intercepts(beta) -> list:
    """Real crossings of the radar y-axis (x = 0), sorted ascending."""
    beta = np.asarray(beta, dtype=float)
    beta = beta / np.linalg.norm(beta)
    a, _, b, c = beta
    if abs(a) < LINE_EPS:
        if abs(b) < LINE_EPS:
            raise NoIntercept("model is parallel to the y-axis")
        return [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        raise NoIntercept("model does not reach the y-axis")
    q = -0.5 * (b + np.copysign(np.sqrt(disc), b))
    if q == 0.0:
        return [0.0, 0.0]
    return sorted([q / a, c / q])


def geometric_distance(beta, xy):
    """Signed Euclidean distance from Cartesian points to the boundary.

    Positive on the side of the curve that contains the radar origin.  When
    the curve passes through the origin, positive is outside a circle and,
    for a line, on the side its normal points to after fixing the sign of
    the first nonzero of ``beta2, beta3``.
    """
    beta = np.asarray(beta, dtype=float)
    beta = beta / np.linalg.norm(beta)
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    b1, b2, b3, b4 = beta
    if is_line(beta):
        n = np.hypot(b2, b3)
        if n == 0.0:
            raise ImaginaryRadius("line model has no normal")
        if b4 != 0.0:
            side = 1.0 if b4 > 0.0 else -1.0
        else:
            side = 1.0 if (b2 if b2 != 0.0 else b3) > 0.0 else -1.0
        return side * (b2 * x + b3 * y + b4) / n
    center, radius = circle_params(beta)
    d = np.hypot(x - center[0], y - center[1]) - radius
    # the origin is inside exactly when beta1 and beta4 have opposite signs; this
    # stays exact for circles through the origin, where comparing radii does not
    if b1 * b4 < 0.0:
        d = -d
    return d


def angular_distance(a, b) -> float:
    """Angle between two coefficient vectors, ignoring sign and scale."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cos = abs(float(np.dot(a, b))) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(min(1.0, cos)))


def line_coefficients(point, normal) -> np.ndarray:
    """Unit coefficients of the line through ``point`` with the given normal."""
    n = np.asarray(normal, dtype=float)
    return normalize([0.0, n[0], n[1], -float(np.dot(n, point))])


def circle_coefficients(center, radius) -> np.ndarray:
    cx, cy = center
    return normalize([1.0, -2.0 * cx, -2.0 * cy, cx * cx + cy * cy - radius * radius])
