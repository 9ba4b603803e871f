import math
import os

import numpy as np
import pytest

from roadbound import conic
from roadbound.mixture import Datagram

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name):
    return os.path.join(FIXTURES, name)


def points_on_circle(center, radius, angles):
    angles = np.asarray(angles, dtype=float)
    xy = np.column_stack([center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)])
    return xy


def polar(xy):
    return conic.cartesian_to_polar(np.asarray(xy, dtype=float))


def planted_datagram(beta, n_in, n_clutter, rng, fov=conic.FieldOfView(), sigma_r=0.15,
                     sigma_theta=math.radians(0.5), noise=True, t=0.0):
    """Inliers drawn along the planted curve inside the field of view plus uniform clutter."""
    beta = np.asarray(beta, dtype=float)
    pts = []
    while len(pts) < n_in:
        # sample candidate points on the curve by intersecting random rays with it
        th = rng.uniform(fov.theta_min, fov.theta_max)
        c, s = math.cos(th), math.sin(th)
        # beta1 r^2 + (beta2 c + beta3 s) r + beta4 = 0
        a, b, cc = beta[0], beta[1] * c + beta[2] * s, beta[3]
        roots = [-cc / b] if abs(a) < 1e-12 else np.roots([a, b, cc]).tolist()
        for r in roots:
            if np.isreal(r) and 0 < np.real(r) < fov.r_max:
                pts.append((float(np.real(r)), th))
                break
    r, th = np.array(pts[:n_in]).T
    if noise:
        r = r + rng.normal(0, sigma_r, r.size)
        th = th + rng.normal(0, sigma_theta, th.size)
        keep = fov.contains(r, th)
        r, th = r[keep], th[keep]
    cr = rng.uniform(0, fov.r_max, n_clutter)
    ct = rng.uniform(fov.theta_min, fov.theta_max, n_clutter)
    return Datagram(t, np.concatenate([r, cr]), np.concatenate([th, ct]), sigma_r, sigma_theta), r.size


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
