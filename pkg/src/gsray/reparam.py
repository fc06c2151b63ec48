"""Camera-sphere reparameterization of primitive positions.

A position mu is rewritten as (mu_P, r): its projection onto the sphere of
radius f around the camera center o, plus the radial distance.  The loss
gradient splits into a tangential part (r/f)(I - u u^T) grad and a radial
part u . grad; for purely tangential gradients the tangential norm is
exactly (r/f) times the world-space norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCenter


@dataclass(frozen=True)
class SphereParam:
    mu_p: np.ndarray  # point on the sphere S^2(o, f)
    r: float          # radial distance of the original point
    center: np.ndarray
    focal: float


def project(mu, center, focal: float) -> SphereParam:
    """Project mu onto the sphere of radius `focal` around `center`."""
    mu = np.asarray(mu, dtype=float)
    o = np.asarray(center, dtype=float)
    if focal <= 0:
        raise ValueError("focal must be positive")
    v = mu - o
    r = float(np.linalg.norm(v))
    if r < 1e-12:
        raise DegenerateCenter("point coincides with the camera center")
    return SphereParam(o + focal * v / r, r, o, float(focal))


def reproject(p: SphereParam) -> np.ndarray:
    """Invert project: o + (r/f)(mu_P - o)."""
    return p.center + (p.r / p.focal) * (p.mu_p - p.center)


def sphere_gradient(grad_mu, mu, center, focal: float):
    """Split a world-space position gradient into sphere coordinates.

    Returns (tangential, radial): tangential = (r/f)(I - u u^T) grad is the
    gradient w.r.t. mu_P (orthogonal to u); radial = (1/f)(mu_P - o).grad
    = u.grad is the gradient w.r.t. r.
    """
    g = np.asarray(grad_mu, dtype=float)
    mu = np.asarray(mu, dtype=float)
    o = np.asarray(center, dtype=float)
    if focal <= 0:
        raise ValueError("focal must be positive")
    v = mu - o
    r = float(np.linalg.norm(v))
    if r < 1e-12:
        raise DegenerateCenter("point coincides with the camera center")
    u = v / r
    radial = float(np.dot(u, g))
    tangential = (r / focal) * (g - radial * u)
    return tangential, radial
