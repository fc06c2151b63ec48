"""Closed-form ellipsoid geometry for truncated Gaussian primitives.

A primitive's density is sigma_tilde * exp(-0.5 (x-mu)^T Sigma^-1 (x-mu))
with Sigma = R S S^T R^T.  Everything here is derived from the level set
where that density equals the scene threshold sigma_eps: the bounding
ellipsoid, its minimal AABB, the AABB/ellipsoid volume ratio, the
rotation-invariant upper bound on that ratio, and the regularizer built
on the bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyIsosurface, EmptyScene

# Scales below this are clamped before any geometry op to keep ratios finite.
S_MIN = 1e-7

SPHERE_RATIO = 6.0 / math.pi  # AABB/ellipsoid volume ratio of a sphere


def quat_to_rotation(q) -> np.ndarray:
    """Rotation matrix from a scalar-first (w, x, y, z) quaternion.

    The quaternion is normalized here; a zero quaternion raises ValueError.
    """
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero quaternion")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_to_quat(r: np.ndarray) -> np.ndarray:
    """Scalar-first unit quaternion for a rotation matrix (Shepperd's method)."""
    r = np.asarray(r, dtype=float)
    t = np.trace(r)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s,
             (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(1.0 + r[i, i] - r[j, j] - r[k, k]) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class GaussianShape:
    """One elliptical basis function: mean, orientation, scales, amplitude."""

    mean: np.ndarray
    quat: np.ndarray  # scalar-first (w, x, y, z), normalized on ingestion
    scales: np.ndarray  # per-axis std deviations, world units, > 0
    sigma: float  # density amplitude sigma_tilde, >= 0
    rotation: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(3)
        quat = np.asarray(self.quat, dtype=float).reshape(4)
        quat = quat / np.linalg.norm(quat)
        scales = np.maximum(np.asarray(self.scales, dtype=float).reshape(3), S_MIN)
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "quat", quat)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "rotation", quat_to_rotation(quat))


@dataclass(frozen=True)
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if np.any(lo > hi):
            raise ValueError("AABB min corner exceeds max corner")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))


@dataclass(frozen=True)
class IsoLossConfig:
    """Weight and threshold for the anisotropy regularizer.

    r0 below 6/pi would penalize even perfect spheres, so that is the floor.
    """

    lambda_s: float = 0.00025
    r0: float = 10.0

    def __post_init__(self):
        if self.lambda_s < 0:
            raise ValueError("lambda_s must be nonnegative")
        if self.r0 < SPHERE_RATIO:
            raise ValueError(f"r0 must be >= 6/pi ({SPHERE_RATIO:.6f})")


def iso_scale(shape: GaussianShape, sigma_eps: float) -> np.ndarray:
    """Semi-axes of the bounding ellipsoid in the primitive's local frame.

    The level set sigma(x) = sigma_eps is the ellipsoid with semi-axes
    sqrt(2 ln(sigma_tilde / sigma_eps)) * scales.
    """
    if sigma_eps <= 0:
        raise ValueError("sigma_eps must be positive")
    if shape.sigma <= sigma_eps:
        raise EmptyIsosurface(
            f"amplitude {shape.sigma} <= threshold {sigma_eps}: empty isosurface"
        )
    k = 2.0 * math.log(shape.sigma / sigma_eps)
    return math.sqrt(k) * shape.scales


def aabb_of(shape: GaussianShape, sigma_eps: float) -> Aabb:
    """Minimal axis-aligned box of the bounding ellipsoid.

    Half-length along world axis i is the norm of row i of R * diag(s_tilde)
    (Cauchy-Schwarz equality case), so the box touches the ellipsoid on
    every face.
    """
    st = iso_scale(shape, sigma_eps)
    half = np.linalg.norm(shape.rotation * st[None, :], axis=1)
    return Aabb(shape.mean - half, shape.mean + half)


def aabb_contact_points(shape: GaussianShape, sigma_eps: float) -> np.ndarray:
    """One boundary point of the ellipsoid on each +face of its AABB.

    Returns a (3, 3) array; row i is the witness for the face x_i = hi_i,
    namely mu + R (s_tilde o z*) with z* the unit vector along
    row_i(R) o s_tilde.
    """
    st = iso_scale(shape, sigma_eps)
    pts = np.empty((3, 3))
    for i in range(3):
        z = shape.rotation[i] * st
        z = z / np.linalg.norm(z)
        pts[i] = shape.mean + shape.rotation @ (st * z)
    return pts


def ellipsoid_volume(shape: GaussianShape, sigma_eps: float) -> float:
    """Volume of the bounding ellipsoid: (4 pi / 3) k^{3/2} s1 s2 s3."""
    if sigma_eps <= 0:
        raise ValueError("sigma_eps must be positive")
    if shape.sigma <= sigma_eps:
        raise EmptyIsosurface(
            f"amplitude {shape.sigma} <= threshold {sigma_eps}: empty isosurface"
        )
    k = 2.0 * math.log(shape.sigma / sigma_eps)
    return (4.0 * math.pi / 3.0) * k ** 1.5 * float(np.prod(shape.scales))


def volume_ratio(shape: GaussianShape, sigma_eps: float | None = None) -> float:
    """AABB volume over ellipsoid volume.

    Independent of sigma_eps and sigma_tilde (the threshold scales both
    volumes by the same k^{3/2} factor); the argument is accepted for
    signature symmetry and ignored.
    """
    r2 = shape.rotation ** 2
    s2 = shape.scales ** 2
    prod = float(np.prod(r2 @ s2))
    return SPHERE_RATIO * math.sqrt(prod) / float(np.prod(shape.scales))


def ratio_upper_bound(scales) -> float:
    """Rotation-independent upper bound on volume_ratio.

    (2 / (pi sqrt 3)) (s1^2+s2^2+s3^2)^{3/2} / (s1 s2 s3); equals 6/pi for
    isotropic scales and is invariant to uniform scaling.
    """
    s = np.maximum(np.asarray(scales, dtype=float).reshape(3), S_MIN)
    return (2.0 / (math.pi * math.sqrt(3.0))) * float(
        np.sum(s ** 2) ** 1.5 / np.prod(s)
    )


def ratio_upper_bound_gradient(scales) -> np.ndarray:
    """Gradient of ratio_upper_bound w.r.t. the scales.

    d r_max / d s_k = r_max * (3 s_k / sum(s^2) - 1 / s_k).
    """
    s = np.maximum(np.asarray(scales, dtype=float).reshape(3), S_MIN)
    r = ratio_upper_bound(s)
    return r * (3.0 * s / np.sum(s ** 2) - 1.0 / s)


def isotropic_loss(
    shapes: list[GaussianShape], cfg: IsoLossConfig
) -> tuple[float, np.ndarray]:
    """Mean hinge penalty on ratio_upper_bound and its gradient w.r.t. scales.

    Returns (L_s, grads) with grads of shape (N, 3).  The max is inactive at
    r_max == r0 exactly, so the gradient there is zero.
    """
    if len(shapes) == 0:
        raise EmptyScene("isotropic loss of an empty primitive list")
    n = len(shapes)
    total = 0.0
    grads = np.zeros((n, 3))
    for i, shape in enumerate(shapes):
        r = ratio_upper_bound(shape.scales)
        if r > cfg.r0:
            total += r - cfg.r0
            grads[i] = ratio_upper_bound_gradient(shape.scales) / n
    return total / n, grads


def batch_volume_ratio(rotations: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Vectorized volume_ratio for (N,3,3) rotations and (N,3) scales."""
    s2 = np.maximum(scales, S_MIN) ** 2
    sums = np.einsum("nij,nj->ni", rotations ** 2, s2)
    return SPHERE_RATIO * np.sqrt(np.prod(sums, axis=1)) / np.prod(
        np.maximum(scales, S_MIN), axis=1
    )


def batch_ratio_upper_bound(scales: np.ndarray) -> np.ndarray:
    """Vectorized ratio_upper_bound for (N,3) scales."""
    s = np.maximum(scales, S_MIN)
    return (2.0 / (math.pi * math.sqrt(3.0))) * np.sum(s ** 2, axis=1) ** 1.5 / np.prod(
        s, axis=1
    )


def random_rotations(n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, 3, 3) rotation matrices uniform over SO(3) via random quaternions."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    out = np.empty((n, 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def bound_audit(trials: int, seed: int) -> dict:
    """Monte-Carlo audit that volume_ratio never exceeds ratio_upper_bound.

    Scales are log-uniform in [1e-3, 1e1], rotations uniform.  Returns the
    max signed violation (ratio - bound, must be <= 0) and the max deviation
    of isotropic shapes from 6/pi.
    """
    rng = np.random.default_rng(seed)
    scales = 10.0 ** rng.uniform(-3, 1, size=(trials, 3))
    rots = random_rotations(trials, rng)
    ratios = batch_volume_ratio(rots, scales)
    bounds = batch_ratio_upper_bound(scales)
    max_violation = float(np.max(ratios - bounds))

    iso = 10.0 ** rng.uniform(-3, 1, size=trials)
    iso_scales = np.repeat(iso[:, None], 3, axis=1)
    iso_rots = random_rotations(trials, rng)
    iso_ratio = batch_volume_ratio(iso_rots, iso_scales)
    iso_bound = batch_ratio_upper_bound(iso_scales)
    max_iso_dev = float(
        max(np.max(np.abs(iso_ratio - SPHERE_RATIO)), np.max(np.abs(iso_bound - SPHERE_RATIO)))
    )
    return {
        "trials": trials,
        "max_violation": max_violation,
        "max_isotropic_deviation": max_iso_dev,
    }
