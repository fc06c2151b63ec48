"""The render-time world: primitive arrays, per-primitive AABBs, and the BVH.

A Scene is immutable during rendering.  Reordering (Morton) rebuilds the
derived arrays and the BVH; `uids` are stable identifiers assigned at
construction so that per-sample summation order (ascending uid) is
independent of storage order.  That is what makes renders bitwise
identical before and after reordering.
"""

from __future__ import annotations

import math

import numpy as np

from . import geometry, spatial
from .appearance import AppearanceCoeffs
from .errors import EmptyScene, ValidationError
from .geometry import GaussianShape

DEFAULT_SIGMA_EPS = 0.01


class Scene:
    def __init__(
        self,
        shapes: list[GaussianShape],
        coeffs: list[AppearanceCoeffs],
        sigma_eps: float = DEFAULT_SIGMA_EPS,
    ):
        if len(shapes) == 0:
            raise EmptyScene("scene needs at least one primitive")
        if len(shapes) != len(coeffs):
            raise ValidationError("shape/appearance count mismatch")
        if sigma_eps <= 0:
            raise ValidationError("sigma_eps must be positive")
        for i, s in enumerate(shapes):
            if s.sigma <= sigma_eps:
                raise ValidationError(
                    f"amplitude {s.sigma} <= sigma_eps {sigma_eps}", record=i
                )
        self.shapes = list(shapes)
        self.coeffs = list(coeffs)
        self.sigma_eps = float(sigma_eps)
        self.uids = np.arange(len(shapes), dtype=np.int64)
        self._rebuild()

    def _rebuild(self):
        n = len(self.shapes)
        self.means = np.array([s.mean for s in self.shapes])
        self.rotations = np.array([s.rotation for s in self.shapes])
        self.scales = np.array([s.scales for s in self.shapes])
        self.sigmas = np.array([s.sigma for s in self.shapes])
        # k = 2 ln(sigma~ / sigma_eps); iso semi-axes are sqrt(k) * scales
        self.log_ratio = 2.0 * np.log(self.sigmas / self.sigma_eps)
        self.iso_scales = np.sqrt(self.log_ratio)[:, None] * self.scales
        # maps world offsets into the unit-sphere frame of the iso ellipsoid
        self.iso_inv = (
            self.rotations.transpose(0, 2, 1) / self.iso_scales[:, :, None]
        )
        half = np.linalg.norm(
            self.rotations * self.iso_scales[:, None, :], axis=2
        )
        self.aabb_lo = self.means - half
        self.aabb_hi = self.means + half
        self.bounds_lo = self.aabb_lo.min(axis=0)
        self.bounds_hi = self.aabb_hi.max(axis=0)
        self.bvh = spatial.Bvh(self.aabb_lo, self.aabb_hi)
        assert n == len(self.coeffs)

    def __len__(self) -> int:
        return len(self.shapes)

    def apply_permutation(self, perm: np.ndarray):
        """Permute primitive storage and rebuild all derived structures."""
        perm = np.asarray(perm, dtype=np.int64)
        self.shapes = [self.shapes[i] for i in perm]
        self.coeffs = [self.coeffs[i] for i in perm]
        self.uids = self.uids[perm]
        self._rebuild()

    def with_mean(self, index: int, mean) -> "Scene":
        """Copy of the scene with one primitive's mean replaced."""
        old = self.shapes[index]
        shapes = list(self.shapes)
        shapes[index] = GaussianShape(
            mean=np.asarray(mean, dtype=float),
            quat=old.quat,
            scales=old.scales,
            sigma=old.sigma,
        )
        out = Scene(shapes, self.coeffs, self.sigma_eps)
        out.uids = self.uids.copy()
        return out


def reorder_by_morton(scene: Scene) -> np.ndarray:
    """Sort primitive storage by ascending Z-order code of the means.

    Quantization domain is the scene AABB, 21 bits per axis.  Returns the
    permutation that was applied; the BVH and derived arrays are rebuilt.
    """
    perm = spatial.morton_order(scene.means, scene.bounds_lo, scene.bounds_hi)
    scene.apply_permutation(perm)
    return perm
