"""Segment-buffered volume ray marching with empty-space skipping and
adaptive sampling, plus a dense reference integrator used as the oracle.

Discrete compositing: C = sum_i (1 - exp(-sigma_i dt)) c_i T_i with
T_i = exp(-sum_{j<i} sigma_j dt).  Samples sit at midpoints of their dt
sub-intervals; samples beyond t_f are discarded.  Per-sample primitive
contributions are accumulated in ascending uid order, which keeps images
bitwise stable across Morton reordering, tile sizes, and thread counts.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import spatial
from .appearance import eval_radiance
from .errors import BufferOverflow
from .geometry import quat_to_rotation
from .spatial import HitBuffer


@dataclass(frozen=True)
class RenderConfig:
    dt: float = 0.0025
    n_s: int = 16
    t_eps: float = 1e-4
    mode: str = "uniform"  # "uniform" or "adaptive"
    beta: float = 1024.0
    dt_min: float = 0.005
    dt_max: float = 0.02  # 4 * dt_min
    ess: bool = True
    tile_size: int = 16
    background: tuple = (0.0, 0.0, 0.0)
    buffer_capacity: int = 64

    def __post_init__(self):
        if not (0.0 < self.t_eps < 1.0):
            raise ValueError("t_eps must be in (0, 1)")
        if self.n_s < 1:
            raise ValueError("n_s must be >= 1")
        if self.dt_min > self.dt_max:
            raise ValueError("dt_min must be <= dt_max")
        if self.mode not in ("uniform", "adaptive"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit
    t_near: float
    t_far: float

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            d = d / n
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass
class RenderStats:
    rays: int = 0
    samples: int = 0
    segments: int = 0
    segments_skipped: int = 0
    closest_hit_calls: int = 0
    node_visits: int = 0
    aabb_hits: int = 0
    ellipsoid_hits: int = 0
    transmittance: float = 1.0  # of the most recent ray (not merged)

    @property
    def false_positives(self) -> int:
        return self.aabb_hits - self.ellipsoid_hits

    def merge(self, other: "RenderStats"):
        self.rays += other.rays
        self.samples += other.samples
        self.segments += other.segments
        self.segments_skipped += other.segments_skipped
        self.closest_hit_calls += other.closest_hit_calls
        self.node_visits += other.node_visits
        self.aabb_hits += other.aabb_hits
        self.ellipsoid_hits += other.ellipsoid_hits

    def to_dict(self) -> dict:
        return {
            "rays": self.rays,
            "samples": self.samples,
            "segments": self.segments,
            "segments_skipped": self.segments_skipped,
            "closest_hit_calls": self.closest_hit_calls,
            "node_visits": self.node_visits,
            "aabb_hits": self.aabb_hits,
            "ellipsoid_hits": self.ellipsoid_hits,
            "false_positives": self.false_positives,
        }


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; rays go through pixel centers.

    `quat` is the scalar-first camera-to-world rotation; the camera looks
    along its local +z axis.
    """

    center: np.ndarray
    quat: np.ndarray
    focal: float  # pixels
    width: int
    height: int
    t_near: float = 1e-4
    t_far: float = 1e6

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        q = np.asarray(self.quat, dtype=float).reshape(4)
        object.__setattr__(self, "quat", q / np.linalg.norm(q))
        object.__setattr__(self, "rotation", quat_to_rotation(self.quat))

    def ray(self, px: int, py: int) -> Ray:
        d_cam = np.array(
            [
                (px + 0.5 - 0.5 * self.width) / self.focal,
                (py + 0.5 - 0.5 * self.height) / self.focal,
                1.0,
            ]
        )
        d = self.rotation @ d_cam
        d = d / np.linalg.norm(d)
        return Ray(self.center, d, self.t_near, self.t_far)


def segment_step(cfg: RenderConfig, d_i: float, t_i: float) -> float:
    """Adaptive segment size: n_s * min(max(d_i/beta, dt_min) * T^(-1/3), dt_max).

    T^(-1/3) is computed as exp(-ln(T)/3) with T clamped below at t_eps, so
    the result never overflows as T -> 0.
    """
    t = max(t_i, cfg.t_eps)
    boost = math.exp(-math.log(t) / 3.0)
    step = min(max(d_i / cfg.beta, cfg.dt_min) * boost, cfg.dt_max)
    return cfg.n_s * step


def clip_ray_to_scene(scene, ray: Ray) -> Ray | None:
    """Shrink integration bounds to the ray's overlap with the scene AABB.

    Applied identically in every pipeline mode, so it never breaks
    toggle-equivalence guarantees.  Returns None when the ray misses the
    scene entirely or its bounds are degenerate.
    """
    if ray.t_near >= ray.t_far:
        return None
    inv = np.where(ray.direction == 0.0, np.inf, 1.0 / np.where(ray.direction == 0.0, 1.0, ray.direction))
    a, b = spatial._box_slab(scene.bounds_lo, scene.bounds_hi, ray.origin, ray.direction, inv)
    t0 = max(ray.t_near, a)
    t1 = min(ray.t_far, b)
    if t0 >= t1:
        return None
    return Ray(ray.origin, ray.direction, t0, t1)


class _RayState:
    """Accumulators shared by the uniform and adaptive marching loops."""

    __slots__ = (
        "scene", "cfg", "o", "d", "buf", "stats", "color", "od", "color_cache",
    )

    def __init__(self, scene, cfg, ray, stats):
        self.scene = scene
        self.cfg = cfg
        self.o = ray.origin
        self.d = ray.direction
        self.buf = HitBuffer(cfg.buffer_capacity)
        self.stats = stats
        self.color = np.zeros(3)
        self.od = 0.0  # accumulated optical depth; T = exp(-od)
        self.color_cache = {}

    @property
    def transmittance(self) -> float:
        return math.exp(-self.od)

    def radiance(self, idx: int) -> np.ndarray:
        c = self.color_cache.get(idx)
        if c is None:
            c = eval_radiance(self.scene.coeffs[idx], self.d)
            self.color_cache[idx] = c
        return c

    def composite(self, active: np.ndarray, ts: np.ndarray, dt: float):
        """Evaluate the mixture at sample positions and composite front to back.

        `active` must already be sorted by uid; per-primitive contributions
        are accumulated sequentially in that order.
        """
        scene = self.scene
        m = len(ts)
        x = self.o[None, :] + ts[:, None] * self.d[None, :]
        sigma = np.zeros(m)
        weighted = np.zeros((m, 3))
        for i in active:
            y = (x - scene.means[i]) @ scene.iso_inv[i].T
            q = np.einsum("ij,ij->i", y, y)
            inside = q <= 1.0
            if not inside.any():
                continue
            dens = np.where(
                inside, scene.sigmas[i] * np.exp(-0.5 * scene.log_ratio[i] * q), 0.0
            )
            sigma += dens
            weighted += dens[:, None] * self.radiance(int(i))[None, :]

        od_step = sigma * dt
        # running per-sample accumulation keeps the addition order identical
        # whether or not the segment was split, so splits stay bitwise exact
        od = self.od
        for j in range(m):
            if sigma[j] > 0.0:
                w = -math.expm1(-od_step[j]) * math.exp(-od)
                self.color += (w / sigma[j]) * weighted[j]
            od += od_step[j]
        self.od = od
        self.stats.samples += m

    def count_hits(self, active: np.ndarray, t0: float, t1: float):
        self.stats.aabb_hits += len(active)
        for i in active:
            ol = self.scene.iso_inv[i] @ (self.o - self.scene.means[i])
            dl = self.scene.iso_inv[i] @ self.d
            if spatial.ray_ellipsoid_interval(ol, dl, t0, t1) is not None:
                self.stats.ellipsoid_hits += 1

    def collect_sorted(self, t0: float, t1: float, buf: HitBuffer | None = None):
        """Hit-buffer indices for [t0, t1] in ascending uid order."""
        if buf is None:
            buf = self.buf
        n = self.scene.bvh.segment_overlaps(
            self.o, self.d, t0, t1, buf, stats=self.stats
        )
        if n == 0:
            return None
        active = buf.active().copy()
        return active[np.argsort(self.scene.uids[active], kind="stable")]


def march_ray(scene, ray: Ray, cfg: RenderConfig, stats: RenderStats | None = None):
    """Integrate one ray; returns (rgb, stats).

    Degenerate rays (t_near >= t_far) return the background.  The final
    transmittance is left in stats.transmittance.
    """
    if stats is None:
        stats = RenderStats()
    stats.rays += 1
    bg = np.asarray(cfg.background, dtype=float)
    if ray.t_near >= ray.t_far:
        stats.transmittance = 1.0
        return bg.copy(), stats

    st = _RayState(scene, cfg, ray, stats)
    if cfg.mode == "uniform":
        _march_uniform(st, ray.t_near, ray.t_far)
    else:
        _march_adaptive(st, ray.t_near, ray.t_far)

    t_exit = st.transmittance
    stats.transmittance = t_exit
    return st.color + t_exit * bg, stats


def _march_uniform(st: _RayState, t_n: float, t_f: float):
    cfg = st.cfg
    ds = cfg.dt * cfg.n_s
    n_seg = max(int(math.ceil((t_f - t_n) / ds)), 1)
    k = 0
    if cfg.ess:
        hit = spatial.closest_hit(
            st.scene.bvh, st.scene, st.o, st.d, t_n, t_f, stats=st.stats
        )
        if hit is None:
            return
        k = max(int((hit - t_n) / ds), 0)
    while k < n_seg and st.transmittance > cfg.t_eps:
        t0 = t_n + k * ds
        t1 = min(t0 + ds, t_f)
        # sample midpoints on the global grid; clip past t_f
        j0 = k * cfg.n_s
        ts = t_n + (np.arange(j0, j0 + cfg.n_s) + 0.5) * cfg.dt
        ts = ts[ts < t_f]
        active = _collect_split(st, t0, t1, ts, cfg.dt)
        if active is None:
            if cfg.ess:
                st.stats.segments_skipped += 1
                hit = spatial.closest_hit(
                    st.scene.bvh, st.scene, st.o, st.d, t1, t_f, stats=st.stats
                )
                if hit is None:
                    return
                k = max(int((hit - t_n) / ds), k + 1)
            else:
                # baseline evaluates the empty segment's samples (all zero)
                st.stats.samples += len(ts)
                st.stats.segments_skipped += 1
                k += 1
            continue
        k += 1


def _march_adaptive(st: _RayState, t_n: float, t_f: float):
    cfg = st.cfg
    t_s = t_n
    if cfg.ess:
        hit = spatial.closest_hit(
            st.scene.bvh, st.scene, st.o, st.d, t_n, t_f, stats=st.stats
        )
        if hit is None:
            return
        t_s = hit
    while t_s < t_f and st.transmittance > cfg.t_eps:
        # rays originate at the camera center, so distance-from-origin is t_s
        ds = segment_step(cfg, t_s, st.transmittance)
        dt = ds / cfg.n_s
        t1 = min(t_s + ds, t_f)
        ts = t_s + (np.arange(cfg.n_s) + 0.5) * dt
        ts = ts[ts < t_f]
        active = _collect_split(st, t_s, t1, ts, dt)
        if active is None:
            if cfg.ess:
                st.stats.segments_skipped += 1
                hit = spatial.closest_hit(
                    st.scene.bvh, st.scene, st.o, st.d, t1, t_f, stats=st.stats
                )
                if hit is None:
                    return
                t_s = hit  # adaptive mode has no global grid: restart here
            else:
                st.stats.samples += len(ts)
                st.stats.segments_skipped += 1
                t_s = t_s + ds
            continue
        t_s = t_s + ds


def _collect_split(st: _RayState, t0: float, t1: float, ts: np.ndarray, dt: float):
    """Collect + composite one segment; splits in half on buffer overflow.

    Segments that cannot be split further (a single sample interval can
    still be overlapped by more boxes than the buffer holds) fall back to
    a one-off full-capacity buffer.  Contributions outside a sub-segment
    are exact zeros, so splitting never changes the image.

    Returns the active index array of the top-level collect, or None when
    the segment is empty.
    """
    try:
        active = st.collect_sorted(t0, t1)
    except BufferOverflow:
        if len(ts) <= 1:
            big = HitBuffer(len(st.scene.means))
            active = st.collect_sorted(t0, t1, buf=big)
        else:
            mid = 0.5 * (t0 + t1)
            left = ts[ts < mid]
            right = ts[ts >= mid]
            a = _collect_split(st, t0, mid, left, dt)
            b = _collect_split(st, mid, t1, right, dt)
            if a is None and b is None:
                return None
            return np.zeros(0, dtype=np.int64)
    if active is None:
        return None
    st.stats.segments += 1
    st.count_hits(active, t0, t1)
    if len(ts):
        st.composite(active, ts, dt)
    return active


def render_image(scene, camera: Camera, cfg: RenderConfig, threads: int | None = None):
    """Render all pixels tile by tile; returns (image (H,W,3), stats).

    Pixel values are pure per-ray computations, so the image is independent
    of tile size and thread count.  Thread count defaults to the
    GSRAY_THREADS environment variable, then 1.
    """
    if threads is None:
        threads = int(os.environ.get("GSRAY_THREADS", "1"))
    h, w = camera.height, camera.width
    img = np.zeros((h, w, 3))
    stats = RenderStats()
    tiles = []
    step = max(cfg.tile_size, 1)
    for ty in range(0, h, step):
        for tx in range(0, w, step):
            tiles.append((tx, ty, min(tx + step, w), min(ty + step, h)))

    def do_tile(tile):
        tx, ty, ex, ey = tile
        local = RenderStats()
        block = np.zeros((ey - ty, ex - tx, 3))
        for py in range(ty, ey):
            for px in range(tx, ex):
                ray = clip_ray_to_scene(scene, camera.ray(px, py))
                if ray is None:
                    local.rays += 1
                    block[py - ty, px - tx] = cfg.background
                    continue
                rgb, _ = march_ray(scene, ray, cfg, stats=local)
                block[py - ty, px - tx] = rgb
        return tile, block, local

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(do_tile, tiles))
    else:
        results = [do_tile(t) for t in tiles]
    for (tx, ty, ex, ey), block, local in results:
        img[ty:ey, tx:ex] = block
        stats.merge(local)
    return img, stats


def reference_integrate(scene, ray: Ray, fine_dt: float, background=(0.0, 0.0, 0.0)):
    """Dense uniform quadrature over [t_near, t_far]: no BVH, no skipping.

    The oracle for all renderer tests; same midpoint discretization and
    compositing as march_ray, evaluated over the full primitive list.
    """
    bg = np.asarray(background, dtype=float)
    if ray.t_near >= ray.t_far:
        return bg.copy()
    n = int(math.ceil((ray.t_far - ray.t_near) / fine_dt))
    ts = ray.t_near + (np.arange(n) + 0.5) * fine_dt
    ts = ts[ts < ray.t_far]
    m = len(ts)
    if m == 0:
        return bg.copy()
    x = ray.origin[None, :] + ts[:, None] * ray.direction[None, :]
    order = np.argsort(scene.uids, kind="stable")
    sigma = np.zeros(m)
    weighted = np.zeros((m, 3))
    for i in order:
        y = (x - scene.means[i]) @ scene.iso_inv[i].T
        q = np.einsum("ij,ij->i", y, y)
        inside = q <= 1.0
        if not inside.any():
            continue
        dens = np.where(
            inside, scene.sigmas[i] * np.exp(-0.5 * scene.log_ratio[i] * q), 0.0
        )
        sigma += dens
        c = eval_radiance(scene.coeffs[i], ray.direction)
        weighted += dens[:, None] * c[None, :]

    od = sigma * fine_dt
    cum = np.concatenate(([0.0], np.cumsum(od[:-1])))
    w = -np.expm1(-od) * np.exp(-cum)
    color = np.zeros(3)
    nz = sigma > 0.0
    if nz.any():
        color = ((w[nz] / sigma[nz])[:, None] * weighted[nz]).sum(axis=0)
    t_exit = math.exp(-(cum[-1] + od[-1]))
    return color + t_exit * bg


def reference_render(scene, camera: Camera, fine_dt: float, background=(0.0, 0.0, 0.0)):
    """Per-pixel reference_integrate with the same ray clipping as render_image."""
    img = np.zeros((camera.height, camera.width, 3))
    bg = np.asarray(background, dtype=float)
    for py in range(camera.height):
        for px in range(camera.width):
            ray = clip_ray_to_scene(scene, camera.ray(px, py))
            img[py, px] = bg if ray is None else reference_integrate(
                scene, ray, fine_dt, background
            )
    return img


def psnr(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(data_range ** 2 / mse)
