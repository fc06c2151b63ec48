"""Desk-scale ablation harness: pipeline comparison rows, the
anisotropy/false-positive sweep, and the storage-locality proxy metric.

Everything except wall time is deterministic under a fixed seed; wall
time is reported but never asserted.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .renderer import (
    RenderConfig,
    RenderStats,
    march_ray,
    reference_render,
    render_image,
)
from .scene import Scene

PIPELINES = ("uniform", "ess", "ess+adaptive")

CSV_COLUMNS = [
    "pipeline",
    "samples_per_ray",
    "node_visits_per_ray",
    "aabb_hits",
    "ellipsoid_hits",
    "false_positive_fraction",
    "wall_time_s",
    "psnr_vs_reference",
    "max_abs_diff_vs_uniform",
]


def pipeline_config(name: str, base: RenderConfig) -> RenderConfig:
    if name == "uniform":
        return replace(base, mode="uniform", ess=False)
    if name == "ess":
        return replace(base, mode="uniform", ess=True)
    if name == "ess+adaptive":
        return replace(base, mode="adaptive", ess=True)
    raise ValueError(f"unknown pipeline {name!r}")


@dataclass
class BenchRow:
    pipeline: str
    samples_per_ray: float
    node_visits_per_ray: float
    aabb_hits: int
    ellipsoid_hits: int
    false_positive_fraction: float
    wall_time_s: float
    psnr_vs_reference: float
    max_abs_diff_vs_uniform: float | None

    def as_list(self):
        return [
            self.pipeline,
            f"{self.samples_per_ray:.3f}",
            f"{self.node_visits_per_ray:.3f}",
            self.aabb_hits,
            self.ellipsoid_hits,
            f"{self.false_positive_fraction:.6f}",
            f"{self.wall_time_s:.4f}",
            f"{self.psnr_vs_reference:.3f}",
            "" if self.max_abs_diff_vs_uniform is None
            else f"{self.max_abs_diff_vs_uniform:.3e}",
        ]


@dataclass
class BenchReport:
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_list())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            [
                {k: getattr(r, k) for k in (
                    "pipeline", "samples_per_ray", "node_visits_per_ray",
                    "aabb_hits", "ellipsoid_hits", "false_positive_fraction",
                    "wall_time_s", "psnr_vs_reference", "max_abs_diff_vs_uniform",
                )}
                for r in self.rows
            ],
            indent=2,
        )


def run_pipeline_matrix(
    scene: Scene,
    cameras,
    pipelines=PIPELINES,
    cfg: RenderConfig | None = None,
    repeats: int = 1,
    reference_images=None,
    threads: int | None = None,
) -> BenchReport:
    """One BenchRow per pipeline over all cameras.

    PSNR is computed in linear RGB against the dt/8 dense reference (pass
    `reference_images` to reuse precomputed ones).  Rows for pipelines that
    share the uniform sample grid carry the max abs pixel difference
    against the `uniform` row, asserting the quality-preservation claim.
    """
    if not pipelines:
        raise ValueError("need at least one pipeline")
    if cfg is None:
        cfg = RenderConfig()
    if reference_images is None:
        reference_images = [
            reference_render(scene, cam, cfg.dt / 8.0, cfg.background)
            for cam in cameras
        ]
    rows = []
    uniform_images = None
    for name in pipelines:
        pcfg = pipeline_config(name, cfg)
        times = []
        images = None
        stats = None
        for rep in range(max(repeats, 1) + (1 if repeats > 1 else 0)):
            t0 = time.perf_counter()
            images = []
            stats = RenderStats()
            for cam in cameras:
                img, s = render_image(scene, cam, pcfg, threads=threads)
                images.append(img)
                stats.merge(s)
            times.append(time.perf_counter() - t0)
        if repeats > 1:
            times = times[1:]  # drop warmup
        if name == "uniform":
            uniform_images = images
        err = float(
            np.mean([
                np.mean((a - b) ** 2) for a, b in zip(images, reference_images)
            ])
        )
        row_psnr = float("inf") if err == 0 else 10.0 * np.log10(1.0 / err)
        diff = None
        if name == "ess" and uniform_images is not None:
            diff = float(
                max(np.max(np.abs(a - b)) for a, b in zip(images, uniform_images))
            )
        fp_frac = (
            stats.false_positives / stats.aabb_hits if stats.aabb_hits else 0.0
        )
        rows.append(
            BenchRow(
                pipeline=name,
                samples_per_ray=stats.samples / max(stats.rays, 1),
                node_visits_per_ray=stats.node_visits / max(stats.rays, 1),
                aabb_hits=stats.aabb_hits,
                ellipsoid_hits=stats.ellipsoid_hits,
                false_positive_fraction=fp_frac,
                wall_time_s=float(np.median(times)),
                psnr_vs_reference=row_psnr,
                max_abs_diff_vs_uniform=diff,
            )
        )
    return BenchReport(rows)


def false_positive_fraction(scene: Scene, rays, cfg: RenderConfig | None = None):
    """AABB-hit-but-ellipsoid-miss fraction over a batch of rays.

    Returns (fractions_per_ray, overall_fraction); rays with no AABB hits
    contribute no per-ray entry.
    """
    if cfg is None:
        cfg = RenderConfig()
    per_ray = []
    total = RenderStats()
    for ray in rays:
        s = RenderStats()
        march_ray(scene, ray, cfg, stats=s)
        if s.aabb_hits:
            per_ray.append(s.false_positives / s.aabb_hits)
        total.merge(s)
    overall = total.false_positives / total.aabb_hits if total.aabb_hits else 0.0
    return np.array(per_ray), overall


def isotropy_sweep(
    levels,
    rays_fn,
    scene_fn,
    cfg: RenderConfig | None = None,
    bootstrap: int = 200,
    seed: int = 0,
):
    """False-positive fraction per anisotropy level.

    `scene_fn(level)` builds the scene, `rays_fn(scene)` the ray batch.
    Returns a list of dicts with the fraction and a bootstrap 95% interval
    over per-ray fractions.
    """
    if len(levels) == 0:
        raise ValueError("need at least one level")
    rng = np.random.default_rng(seed)
    out = []
    for level in levels:
        scene = scene_fn(level)
        per_ray, overall = false_positive_fraction(scene, rays_fn(scene), cfg)
        lo = hi = overall
        if len(per_ray) > 1 and bootstrap > 0:
            means = np.array([
                np.mean(rng.choice(per_ray, size=len(per_ray), replace=True))
                for _ in range(bootstrap)
            ])
            lo, hi = np.percentile(means, [2.5, 97.5])
        out.append(
            {"level": level, "fraction": overall,
             "ci_lo": float(lo), "ci_hi": float(hi)}
        )
    return out


def locality_metric(means: np.ndarray, permutation=None, k: int = 8) -> float:
    """Mean |storage index distance| over k spatial nearest-neighbor pairs.

    `permutation[p]` is the primitive stored at position p (the same
    convention as `morton_order`); identity when omitted.  Lower means
    spatial neighbors sit closer in memory.
    """
    means = np.asarray(means, dtype=float).reshape(-1, 3)
    n = len(means)
    if n < 2:
        return 0.0
    if permutation is None:
        pos = np.arange(n)
    else:
        perm = np.asarray(permutation, dtype=np.int64)
        pos = np.empty(n, dtype=np.int64)
        pos[perm] = np.arange(n)
    kk = min(k + 1, n)
    tree = cKDTree(means)
    _, nbrs = tree.query(means, k=kk)
    dists = []
    for i in range(n):
        for j in np.atleast_1d(nbrs[i])[1:]:
            dists.append(abs(int(pos[i]) - int(pos[j])))
    return float(np.mean(dists))
