"""Densification analytics: gradient accumulation, the unweighted and
distance-weighted criteria, the neighbor-count density metric, and the
image loss with a finite-difference position-gradient oracle.

The weighted criterion multiplies each observed gradient norm by
alpha = ||mu - o_i|| / f before averaging, which removes the bias against
primitives far from the cameras.  No cloning or splitting happens here;
the module only reports decisions and statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree

from .renderer import RenderConfig, render_image

_SSIM_SIGMA = 1.5
_SSIM_WIN = 11  # gaussian_filter radius 5 at truncate below
_SSIM_TRUNCATE = 3.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


@dataclass(frozen=True)
class DensifyConfig:
    tau: float = 0.00015
    window: int = 100  # iterations between criterion evaluations
    radius: float = 0.125  # neighbor-count radius

    def __post_init__(self):
        if self.tau <= 0 or self.radius <= 0 or self.window < 1:
            raise ValueError("tau and radius must be positive, window >= 1")


@dataclass(frozen=True)
class LossConfig:
    mix: float = 0.2  # DSSIM weight; L1 weight is 1 - mix
    lambda_s: float = 0.00025

    def __post_init__(self):
        if not (0.0 <= self.mix <= 1.0):
            raise ValueError("mix must be in [0, 1]")


class GradAccumulator:
    """Per-primitive sums of raw and alpha-weighted gradient norms."""

    def __init__(self, n_primitives: int):
        self.sum_raw = np.zeros(n_primitives)
        self.sum_weighted = np.zeros(n_primitives)
        self.counts = np.zeros(n_primitives, dtype=np.int64)

    def observe(self, index: int, grad_norm: float, alpha: float):
        if grad_norm < 0 or alpha < 0:
            raise ValueError("norms and weights must be nonnegative")
        self.sum_raw[index] += grad_norm
        self.sum_weighted[index] += alpha * grad_norm
        self.counts[index] += 1

    def merge(self, other: "GradAccumulator"):
        self.sum_raw += other.sum_raw
        self.sum_weighted += other.sum_weighted
        self.counts += other.counts


def criterion_old(acc: GradAccumulator, cfg: DensifyConfig) -> np.ndarray:
    """Mean unweighted gradient norm exceeds tau; False with no observations."""
    seen = acc.counts >= 1
    out = np.zeros(len(acc.counts), dtype=bool)
    out[seen] = acc.sum_raw[seen] / acc.counts[seen] > cfg.tau
    return out


def criterion_new(acc: GradAccumulator, cfg: DensifyConfig) -> np.ndarray:
    """Mean alpha-weighted gradient norm exceeds tau."""
    seen = acc.counts >= 1
    out = np.zeros(len(acc.counts), dtype=bool)
    out[seen] = acc.sum_weighted[seen] / acc.counts[seen] > cfg.tau
    return out


def neighbor_density(means, radius: float) -> np.ndarray:
    """Number of other points within the closed ball of the given radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = np.asarray(means, dtype=float).reshape(-1, 3)
    tree = cKDTree(pts)
    counts = np.array(
        [len(idx) - 1 for idx in tree.query_ball_point(pts, r=radius)],
        dtype=np.int64,
    )
    return counts


def _ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), data range 1.

    Computed per channel on (H, W, C) images and averaged; borders within
    the window radius are cropped from the mean, matching the standard
    reference implementation.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    pad = (_SSIM_WIN - 1) // 2
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2

    def filt(img):
        return gaussian_filter(img, _SSIM_SIGMA, truncate=_SSIM_TRUNCATE)

    vals = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        ux, uy = filt(x), filt(y)
        uxx, uyy, uxy = filt(x * x), filt(y * y), filt(x * y)
        vx = uxx - ux * ux
        vy = uyy - uy * uy
        cov = uxy - ux * uy
        s = ((2 * ux * uy + c1) * (2 * cov + c2)) / (
            (ux * ux + uy * uy + c1) * (vx + vy + c2)
        )
        vals.append(s[pad:-pad, pad:-pad].mean())
    return float(np.mean(vals))


def dssim(a: np.ndarray, b: np.ndarray) -> float:
    return (1.0 - _ssim(a, b)) / 2.0


def image_loss(rendered, target, cfg: LossConfig, iso_loss: float = 0.0) -> float:
    """(1 - mix) * L1 + mix * DSSIM + lambda_s * iso_loss.

    The isotropy term does not depend on primitive positions, so it drops
    out of any position gradient.
    """
    rendered = np.asarray(rendered, dtype=float)
    target = np.asarray(target, dtype=float)
    if rendered.shape != target.shape:
        raise ValueError("image shapes differ")
    l1 = float(np.mean(np.abs(rendered - target)))
    total = (1.0 - cfg.mix) * l1
    if cfg.mix > 0.0:
        total += cfg.mix * dssim(rendered, target)
    return total + cfg.lambda_s * iso_loss


def fd_position_gradient(
    scene,
    camera,
    target: np.ndarray,
    index: int,
    h: float | None = None,
    loss_cfg: LossConfig | None = None,
    render_cfg: RenderConfig | None = None,
    iso_loss: float = 0.0,
) -> np.ndarray:
    """Central-difference gradient of the image loss w.r.t. one primitive mean.

    Renders run in uniform mode for a deterministic sample grid.  The step
    defaults to 1e-4 times the scene diagonal.
    """
    if loss_cfg is None:
        loss_cfg = LossConfig()
    if render_cfg is None:
        render_cfg = RenderConfig(mode="uniform")
    if h is None:
        h = 1e-4 * float(np.linalg.norm(scene.bounds_hi - scene.bounds_lo))
    mu = scene.means[index]
    grad = np.zeros(3)
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = h
        img_p, _ = render_image(scene.with_mean(index, mu + step), camera, render_cfg)
        img_m, _ = render_image(scene.with_mean(index, mu - step), camera, render_cfg)
        lp = image_loss(img_p, target, loss_cfg, iso_loss)
        lm = image_loss(img_m, target, loss_cfg, iso_loss)
        grad[axis] = (lp - lm) / (2.0 * h)
    return grad


def observe_scene(
    acc: GradAccumulator,
    scene,
    camera,
    target: np.ndarray,
    indices=None,
    **fd_kwargs,
):
    """Record one camera observation: fd gradients + distance weights."""
    if indices is None:
        indices = range(len(scene))
    for i in indices:
        g = fd_position_gradient(scene, camera, target, i, **fd_kwargs)
        alpha = float(np.linalg.norm(scene.means[i] - camera.center)) / camera.focal
        acc.observe(i, float(np.linalg.norm(g)), alpha)
