"""Command line entry points: render, bench, geom-check, densify-analyze, gen.

Exit codes: 0 success, 2 usage error (click's default), 1 runtime error.
All randomness goes through --seed; GSRAY_THREADS sets the default thread
count for rendering.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import bench as bench_mod
from . import densify as densify_mod
from . import scene_io
from .errors import GsrayError
from .geometry import bound_audit
from .renderer import RenderConfig, render_image
from .imgio import write_pfm, write_png, read_pfm
from .scene import reorder_by_morton


@click.group()
def main():
    """Renderer and analysis toolkit for truncated Gaussian radiance fields."""


def _render_config(mode, ess, dt, n_s, t_eps, tile_size, background):
    return RenderConfig(
        dt=dt, n_s=n_s, t_eps=t_eps, mode=mode, ess=ess,
        tile_size=tile_size, background=tuple(background),
    )


def _fail(err: Exception):
    click.echo(f"error: {err}", err=True)
    sys.exit(1)


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--cameras", "cameras_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["uniform", "adaptive"]), default="uniform")
@click.option("--ess/--no-ess", default=True)
@click.option("--dt", type=float, default=0.0025, show_default=True)
@click.option("--n-s", type=int, default=16, show_default=True)
@click.option("--t-eps", type=float, default=1e-4, show_default=True)
@click.option("--tile-size", type=int, default=16, show_default=True)
@click.option("--background", nargs=3, type=float, default=(0.0, 0.0, 0.0))
@click.option("--threads", type=int, default=None)
@click.option("--morton/--no-morton", default=False, help="Reorder primitives first.")
@click.option("--seed", type=int, default=0)
def render(scene_path, cameras_path, out_dir, mode, ess, dt, n_s, t_eps,
           tile_size, background, threads, morton, seed):
    """Render every camera view to PNG + PFM plus a stats JSON."""
    try:
        np.random.default_rng(seed)  # seed accepted for interface symmetry
        scene = scene_io.load_scene(scene_path, reorder=morton)
        cameras = scene_io.load_cameras(cameras_path)
        cfg = _render_config(mode, ess, dt, n_s, t_eps, tile_size, background)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        all_stats = []
        for i, cam in enumerate(cameras):
            t0 = time.perf_counter()
            img, stats = render_image(scene, cam, cfg, threads=threads)
            wall = time.perf_counter() - t0
            write_png(out / f"view_{i:03d}.png", img)
            write_pfm(out / f"view_{i:03d}.pfm", img)
            record = {"view": i, "wall_time_s": wall, **stats.to_dict()}
            all_stats.append(record)
            (out / f"view_{i:03d}.stats.json").write_text(
                json.dumps(record) + "\n"
            )
        (out / "render_stats.json").write_text(json.dumps(all_stats) + "\n")
        click.echo(f"rendered {len(cameras)} views to {out}")
    except (GsrayError, OSError, ValueError) as e:
        _fail(e)


@main.command("bench")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--cameras", "cameras_path", required=True, type=click.Path())
@click.option("--pipelines", default="uniform,ess,ess+adaptive", show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="CSV output path; stdout when omitted.")
@click.option("--json", "as_json", is_flag=True, default=False)
@click.option("--dt", type=float, default=0.0025, show_default=True)
@click.option("--repeats", type=int, default=5, show_default=True)
@click.option("--threads", type=int, default=None)
@click.option("--seed", type=int, default=0)
def bench_cmd(scene_path, cameras_path, pipelines, out_path, as_json, dt,
              repeats, threads, seed):
    """Compare pipelines (samples/ray, node visits, false positives, PSNR)."""
    try:
        np.random.default_rng(seed)
        scene = scene_io.load_scene(scene_path)
        cameras = scene_io.load_cameras(cameras_path)
        names = [p.strip() for p in pipelines.split(",") if p.strip()]
        report = bench_mod.run_pipeline_matrix(
            scene, cameras, names, cfg=RenderConfig(dt=dt),
            repeats=repeats, threads=threads,
        )
        text = report.to_json() if as_json else report.to_csv()
        if out_path:
            Path(out_path).write_text(text)
            click.echo(f"wrote {out_path}")
        else:
            click.echo(text, nl=False)
    except (GsrayError, OSError, ValueError) as e:
        _fail(e)


@main.command("geom-check")
@click.option("--trials", type=int, default=100000, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
def geom_check(trials, seed):
    """Monte-Carlo audit of the anisotropy volume-ratio bound."""
    try:
        report = bound_audit(trials, seed)
        click.echo(json.dumps(report))
        if report["max_violation"] > 0:
            click.echo("bound violated", err=True)
            sys.exit(1)
    except (GsrayError, ValueError) as e:
        _fail(e)


@main.command("densify-analyze")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--cameras", "cameras_path", required=True, type=click.Path())
@click.option("--targets", "targets_dir", type=click.Path(), default=None,
              help="Directory of view_###.pfm target images; defaults to "
                   "re-rendered views (gradients ~ 0).")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--ply-out", type=click.Path(), default=None,
              help="Optional density point cloud export.")
@click.option("--tau", type=float, default=0.00015, show_default=True)
@click.option("--radius", type=float, default=0.125, show_default=True)
@click.option("--dt", type=float, default=0.0025, show_default=True)
@click.option("--primitives", type=int, default=None,
              help="Analyze only the first N primitives.")
@click.option("--seed", type=int, default=0)
def densify_analyze(scene_path, cameras_path, targets_dir, out_path, ply_out,
                    tau, radius, dt, primitives, seed):
    """Per-primitive gradient statistics, densify decisions, neighbor counts."""
    try:
        np.random.default_rng(seed)
        scene = scene_io.load_scene(scene_path)
        cameras = scene_io.load_cameras(cameras_path)
        dcfg = densify_mod.DensifyConfig(tau=tau, radius=radius)
        rcfg = RenderConfig(dt=dt, mode="uniform")
        n = len(scene) if primitives is None else min(primitives, len(scene))
        acc = densify_mod.GradAccumulator(len(scene))
        for i, cam in enumerate(cameras):
            if targets_dir:
                target = read_pfm(Path(targets_dir) / f"view_{i:03d}.pfm")
            else:
                target, _ = render_image(scene, cam, rcfg)
            densify_mod.observe_scene(
                acc, scene, cam, target, indices=range(n), render_cfg=rcfg
            )
        old = densify_mod.criterion_old(acc, dcfg)
        new = densify_mod.criterion_new(acc, dcfg)
        counts = densify_mod.neighbor_density(scene.means, radius)
        with open(out_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["primitive", "mean_grad_norm", "mean_weighted_grad_norm",
                        "old_decision", "new_decision", "neighbor_count"])
            for i in range(n):
                c = max(int(acc.counts[i]), 1)
                w.writerow([
                    i,
                    f"{acc.sum_raw[i] / c:.6e}",
                    f"{acc.sum_weighted[i] / c:.6e}",
                    int(old[i]), int(new[i]), int(counts[i]),
                ])
        if ply_out:
            scene_io.export_density_ply(ply_out, scene.means, counts)
        click.echo(f"wrote {out_path}")
    except (GsrayError, OSError, ValueError) as e:
        _fail(e)


@main.command()
@click.option("--kind", type=click.Choice(
    ["single-gaussian", "grid", "random-cloud", "shell"]), default="random-cloud")
@click.option("--count", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--anisotropy", type=float, default=1.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--cameras-out", type=click.Path(), default=None)
@click.option("--views", type=int, default=4, show_default=True)
@click.option("--width", type=int, default=64)
@click.option("--height", type=int, default=64)
@click.option("--morton/--no-morton", default=False)
def gen(kind, count, seed, anisotropy, out_path, cameras_out, views, width,
        height, morton):
    """Generate a deterministic test scene (and optionally orbit cameras)."""
    try:
        scene = scene_io.gen_test_scene(
            kind=kind, count=count, seed=seed, anisotropy=anisotropy
        )
        if morton:
            reorder_by_morton(scene)
        scene_io.save_scene(scene, out_path)
        click.echo(f"wrote {out_path} ({len(scene)} primitives)")
        if cameras_out:
            cams = scene_io.orbit_cameras(
                views, radius=3.0, focal=float(width), width=width, height=height
            )
            scene_io.save_cameras(cams, cameras_out)
            click.echo(f"wrote {cameras_out} ({views} cameras)")
    except (GsrayError, OSError, ValueError) as e:
        _fail(e)


if __name__ == "__main__":
    main()
