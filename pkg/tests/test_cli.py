import csv
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from gsray.cli import main
from gsray.imgio import read_pfm


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workspace(tmp_path, runner):
    """A small generated scene plus cameras in a temp directory."""
    scene = tmp_path / "scene.gsx"
    cams = tmp_path / "cams.json"
    res = runner.invoke(main, [
        "gen", "--kind", "random-cloud", "--count", "8", "--seed", "1",
        "--anisotropy", "2.0", "--out", str(scene),
        "--cameras-out", str(cams), "--views", "2",
        "--width", "12", "--height", "12",
    ])
    assert res.exit_code == 0, res.output
    return tmp_path


class TestGen:
    def test_writes_scene_and_cameras(self, workspace):
        assert (workspace / "scene.gsx").exists()
        assert (workspace / "scene.gsx.json").exists()
        cams = json.loads((workspace / "cams.json").read_text())
        assert len(cams["cameras"]) == 2

    def test_bad_kind_is_usage_error(self, runner, tmp_path):
        res = runner.invoke(main, ["gen", "--kind", "donut",
                                   "--out", str(tmp_path / "s.gsx")])
        assert res.exit_code == 2


class TestRender:
    def test_outputs(self, runner, workspace):
        out = workspace / "render"
        res = runner.invoke(main, [
            "render", "--scene", str(workspace / "scene.gsx"),
            "--cameras", str(workspace / "cams.json"),
            "--out", str(out), "--dt", "0.02",
        ])
        assert res.exit_code == 0, res.output
        for i in range(2):
            assert (out / f"view_{i:03d}.png").exists()
            assert (out / f"view_{i:03d}.pfm").exists()
            assert (out / f"view_{i:03d}.stats.json").exists()
        stats = json.loads((out / "render_stats.json").read_text())
        assert len(stats) == 2
        assert stats[0]["rays"] == 12 * 12
        img = read_pfm(out / "view_000.pfm")
        assert img.shape == (12, 12, 3)

    def test_morton_and_flags_bitwise(self, runner, workspace):
        args = ["render", "--scene", str(workspace / "scene.gsx"),
                "--cameras", str(workspace / "cams.json"), "--dt", "0.02"]
        runner.invoke(main, args + ["--out", str(workspace / "a")])
        runner.invoke(main, args + ["--out", str(workspace / "b"), "--morton",
                                    "--tile-size", "3", "--threads", "2"])
        a = read_pfm(workspace / "a" / "view_000.pfm")
        b = read_pfm(workspace / "b" / "view_000.pfm")
        assert np.array_equal(a, b)

    def test_missing_scene_fails(self, runner, workspace):
        res = runner.invoke(main, [
            "render", "--scene", str(workspace / "nope.gsx"),
            "--cameras", str(workspace / "cams.json"),
            "--out", str(workspace / "x"),
        ])
        assert res.exit_code == 1
        assert "error:" in res.output


class TestBench:
    def test_csv_stdout(self, runner, workspace):
        res = runner.invoke(main, [
            "bench", "--scene", str(workspace / "scene.gsx"),
            "--cameras", str(workspace / "cams.json"),
            "--dt", "0.02", "--repeats", "1",
        ])
        assert res.exit_code == 0, res.output
        rows = list(csv.reader(res.output.splitlines()))
        assert rows[0][0] == "pipeline"
        assert [r[0] for r in rows[1:]] == ["uniform", "ess", "ess+adaptive"]

    def test_json_file(self, runner, workspace):
        out = workspace / "bench.json"
        res = runner.invoke(main, [
            "bench", "--scene", str(workspace / "scene.gsx"),
            "--cameras", str(workspace / "cams.json"),
            "--dt", "0.02", "--repeats", "1", "--json",
            "--pipelines", "uniform,ess", "--out", str(out),
        ])
        assert res.exit_code == 0, res.output
        data = json.loads(out.read_text())
        assert [d["pipeline"] for d in data] == ["uniform", "ess"]


class TestGeomCheck:
    def test_passes(self, runner):
        res = runner.invoke(main, ["geom-check", "--trials", "2000"])
        assert res.exit_code == 0, res.output
        report = json.loads(res.output.splitlines()[0])
        # signed max of (ratio - bound); nonpositive means the bound held
        assert report["max_violation"] <= 0.0


class TestDensifyAnalyze:
    def test_csv_and_ply(self, runner, workspace):
        out = workspace / "densify.csv"
        ply = workspace / "density.ply"
        res = runner.invoke(main, [
            "densify-analyze", "--scene", str(workspace / "scene.gsx"),
            "--cameras", str(workspace / "cams.json"),
            "--out", str(out), "--ply-out", str(ply),
            "--dt", "0.02", "--primitives", "2",
        ])
        assert res.exit_code == 0, res.output
        rows = list(csv.reader(out.read_text().splitlines()))
        assert rows[0] == ["primitive", "mean_grad_norm",
                           "mean_weighted_grad_norm", "old_decision",
                           "new_decision", "neighbor_count"]
        assert len(rows) == 3
        assert ply.read_text().startswith("ply")

    def test_targets_dir(self, runner, workspace):
        render_out = workspace / "targets"
        runner.invoke(main, [
            "render", "--scene", str(workspace / "scene.gsx"),
            "--cameras", str(workspace / "cams.json"),
            "--out", str(render_out), "--dt", "0.02",
        ])
        out = workspace / "densify2.csv"
        res = runner.invoke(main, [
            "densify-analyze", "--scene", str(workspace / "scene.gsx"),
            "--cameras", str(workspace / "cams.json"),
            "--targets", str(render_out),
            "--out", str(out), "--dt", "0.02", "--primitives", "1",
        ])
        assert res.exit_code == 0, res.output
        assert out.exists()


class TestTopLevel:
    def test_help(self, runner):
        res = runner.invoke(main, ["--help"])
        assert res.exit_code == 0
        for cmd in ("render", "bench", "geom-check", "densify-analyze", "gen"):
            assert cmd in res.output
