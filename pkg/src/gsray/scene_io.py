"""Scene and camera file I/O plus procedural test-scene generation.

Native scene format `.gsx`: little-endian float32 records with a JSON
sidecar header (`<path>.json`) carrying version, the density threshold,
and the record count.  Bit-exact roundtrips.  3DGS-style PLY files can be
ingested; splat opacity maps to a density amplitude via
sigma~ = -ln(1 - alpha) / dt_ref with dt_ref = 0.01, an approximation
documented in the README.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .appearance import N_SG, N_SH, AppearanceCoeffs
from .errors import ParseError, ValidationError
from .geometry import GaussianShape, ratio_upper_bound, rotation_to_quat
from .renderer import Camera
from .scene import DEFAULT_SIGMA_EPS, Scene, reorder_by_morton

GSX_VERSION = 1
# mean 3 + quat 4 + scales 3 + sigma 1 + sh 27 + sg axes 21 + sharp 7 + amp 21
FLOATS_PER_RECORD = 3 + 4 + 3 + 1 + 3 * N_SH + 3 * N_SG + N_SG + 3 * N_SG

PLY_DT_REF = 0.01


def _record(shape: GaussianShape, coeffs: AppearanceCoeffs) -> np.ndarray:
    return np.concatenate(
        [
            shape.mean,
            shape.quat,
            shape.scales,
            [shape.sigma],
            coeffs.sh.ravel(),
            coeffs.sg_axis.ravel(),
            coeffs.sg_sharp,
            coeffs.sg_amp.ravel(),
        ]
    ).astype("<f4")


def save_scene(scene: Scene, path):
    path = Path(path)
    records = np.stack(
        [_record(s, c) for s, c in zip(scene.shapes, scene.coeffs)]
    )
    path.write_bytes(records.tobytes())
    header = {
        "format": "gsx",
        "version": GSX_VERSION,
        "sigma_eps": scene.sigma_eps,
        "count": len(scene),
        "floats_per_record": FLOATS_PER_RECORD,
    }
    Path(str(path) + ".json").write_text(json.dumps(header, indent=2) + "\n")


def load_scene(path, reorder: bool = False) -> Scene:
    path = Path(path)
    sidecar = Path(str(path) + ".json")
    if not path.exists() or not sidecar.exists():
        raise ParseError(f"missing scene file or sidecar header for {path}")
    try:
        header = json.loads(sidecar.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"bad sidecar header: {e}") from e
    if header.get("format") != "gsx" or header.get("version") != GSX_VERSION:
        raise ParseError(f"unsupported scene format header: {header}")
    count = int(header.get("count", -1))
    if count <= 0:
        raise ValidationError("scene must contain at least one primitive")
    if int(header.get("floats_per_record", -1)) != FLOATS_PER_RECORD:
        raise ParseError("record layout mismatch")
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size != count * FLOATS_PER_RECORD:
        raise ParseError(
            f"expected {count * FLOATS_PER_RECORD} floats, found {raw.size}"
        )
    records = raw.reshape(count, FLOATS_PER_RECORD).astype(np.float64)

    shapes = []
    coeffs = []
    for i, rec in enumerate(records):
        try:
            shapes.append(
                GaussianShape(mean=rec[0:3], quat=rec[3:7], scales=rec[7:10],
                              sigma=float(rec[10]))
            )
            o = 11
            sh = rec[o : o + 3 * N_SH].reshape(N_SH, 3)
            o += 3 * N_SH
            axes = rec[o : o + 3 * N_SG].reshape(N_SG, 3)
            o += 3 * N_SG
            sharp = rec[o : o + N_SG]
            o += N_SG
            amp = rec[o : o + 3 * N_SG].reshape(N_SG, 3)
            coeffs.append(AppearanceCoeffs(sh, axes, sharp, amp))
        except ValueError as e:
            raise ValidationError(str(e), record=i) from e
    scene = Scene(shapes, coeffs, sigma_eps=float(header["sigma_eps"]))
    if reorder:
        reorder_by_morton(scene)
    return scene


# -- cameras -------------------------------------------------------------


def save_cameras(cameras: list[Camera], path):
    out = {
        "cameras": [
            {
                "center": list(map(float, c.center)),
                "quat": list(map(float, c.quat)),
                "focal_px": c.focal,
                "width": c.width,
                "height": c.height,
                "t_near": c.t_near,
                "t_far": c.t_far,
            }
            for c in cameras
        ]
    }
    Path(path).write_text(json.dumps(out, indent=2) + "\n")


def load_cameras(path) -> list[Camera]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read camera file: {e}") from e
    cams = []
    for i, c in enumerate(data.get("cameras", [])):
        try:
            cams.append(
                Camera(
                    center=np.asarray(c["center"], dtype=float),
                    quat=np.asarray(c["quat"], dtype=float),
                    focal=float(c["focal_px"]),
                    width=int(c["width"]),
                    height=int(c["height"]),
                    t_near=float(c.get("t_near", 1e-4)),
                    t_far=float(c.get("t_far", 1e6)),
                )
            )
        except (KeyError, ValueError) as e:
            raise ValidationError(str(e), record=i) from e
    if not cams:
        raise ValidationError("camera file lists no cameras")
    return cams


def look_at_camera(center, target, focal: float, width: int, height: int,
                   up=(0.0, 1.0, 0.0), **kwargs) -> Camera:
    """Camera at `center` looking toward `target` (+z forward, +y down)."""
    center = np.asarray(center, dtype=float)
    fwd = np.asarray(target, dtype=float) - center
    fwd = fwd / np.linalg.norm(fwd)
    up = np.asarray(up, dtype=float)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(fwd, [1.0, 0.0, 0.0])
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd], axis=1)  # camera-to-world columns
    return Camera(center=center, quat=rotation_to_quat(rot), focal=focal,
                  width=width, height=height, **kwargs)


def orbit_cameras(n: int, radius: float, focal: float, width: int, height: int,
                  elevation: float = 0.35, target=(0.0, 0.0, 0.0)) -> list[Camera]:
    """n cameras on a circle around the target, all looking at it."""
    cams = []
    target = np.asarray(target, dtype=float)
    for i in range(n):
        a = 2.0 * math.pi * i / n
        center = target + radius * np.array(
            [math.cos(a) * math.cos(elevation), math.sin(elevation),
             math.sin(a) * math.cos(elevation)]
        )
        cams.append(look_at_camera(center, target, focal, width, height))
    return cams


# -- procedural test scenes ---------------------------------------------


def _random_appearance(rng: np.random.Generator) -> AppearanceCoeffs:
    coeffs = AppearanceCoeffs.constant(rng.uniform(0.2, 0.8, size=3))
    sh = coeffs.sh.copy()
    sh[1:] = rng.uniform(-0.1, 0.1, size=(N_SH - 1, 3))
    axes = rng.standard_normal((N_SG, 3))
    return AppearanceCoeffs(
        sh=sh,
        sg_axis=axes,
        sg_sharp=rng.uniform(0.0, 20.0, size=N_SG),
        sg_amp=rng.uniform(0.0, 0.15, size=(N_SG, 3)),
    )


def gen_test_scene(
    kind: str = "random-cloud",
    count: int = 32,
    seed: int = 0,
    anisotropy: float = 1.0,
    sigma_eps: float = DEFAULT_SIGMA_EPS,
    extent: float = 1.0,
    base_scale: float = 0.08,
) -> Scene:
    """Deterministic desk-scale scenes: single-gaussian, grid, random-cloud,
    or shell.

    For random-cloud, every primitive's scales are base * (1, 1, anisotropy)
    under a random rotation, so the max anisotropy bound of the scene equals
    ratio_upper_bound((1, 1, anisotropy)) exactly.
    """
    rng = np.random.default_rng(seed)
    shapes = []
    coeffs = []
    if kind == "single-gaussian" or kind == "single":
        shapes.append(
            GaussianShape(mean=np.zeros(3), quat=[1, 0, 0, 0],
                          scales=np.full(3, base_scale), sigma=2.0)
        )
        coeffs.append(_random_appearance(rng))
    elif kind == "grid":
        side = max(int(round(count ** (1.0 / 3.0))), 1)
        xs = np.linspace(-extent, extent, side) if side > 1 else np.array([0.0])
        for ix in xs:
            for iy in xs:
                for iz in xs:
                    shapes.append(
                        GaussianShape(
                            mean=[ix, iy, iz], quat=[1, 0, 0, 0],
                            scales=np.full(3, base_scale),
                            sigma=float(rng.uniform(1.0, 4.0)),
                        )
                    )
                    coeffs.append(_random_appearance(rng))
    elif kind == "random-cloud":
        for _ in range(count):
            q = rng.standard_normal(4)
            b = base_scale * rng.uniform(0.6, 1.4)
            shapes.append(
                GaussianShape(
                    mean=rng.uniform(-extent, extent, size=3),
                    quat=q,
                    scales=np.array([b, b, b * anisotropy]),
                    sigma=float(rng.uniform(1.0, 4.0)),
                )
            )
            coeffs.append(_random_appearance(rng))
    elif kind == "shell":
        for _ in range(count):
            u = rng.standard_normal(3)
            u = u / np.linalg.norm(u)
            q = rng.standard_normal(4)
            shapes.append(
                GaussianShape(
                    mean=extent * u, quat=q,
                    scales=np.full(3, base_scale),
                    sigma=float(rng.uniform(1.0, 4.0)),
                )
            )
            coeffs.append(_random_appearance(rng))
    else:
        raise ValueError(f"unknown scene kind {kind!r}")
    return Scene(shapes, coeffs, sigma_eps=sigma_eps)


def max_anisotropy_bound(scene: Scene) -> float:
    return max(ratio_upper_bound(s.scales) for s in scene.shapes)


# -- PLY -----------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def load_ply_scene(path, sigma_eps: float = DEFAULT_SIGMA_EPS) -> Scene:
    """Ingest a 3DGS-style PLY point cloud.

    Expects x/y/z, rot_0..3 (scalar first), scale_0..2 (log scales),
    opacity (pre-sigmoid), f_dc_0..2 (SH DC).  Density amplitude follows
    sigma~ = -ln(1 - sigmoid(opacity)) / dt_ref.
    """
    names, data = _read_ply_vertices(Path(path))
    col = {n: data[:, i] for i, n in enumerate(names)}
    required = ["x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
                "scale_0", "scale_1", "scale_2", "opacity",
                "f_dc_0", "f_dc_1", "f_dc_2"]
    for r in required:
        if r not in col:
            raise ParseError(f"PLY missing property {r!r}")
    n = data.shape[0]
    shapes = []
    coeffs = []
    for i in range(n):
        alpha = float(np.clip(_sigmoid(col["opacity"][i]), 1e-6, 1.0 - 1e-6))
        sigma = -math.log1p(-alpha) / PLY_DT_REF
        if sigma <= sigma_eps:
            raise ValidationError(
                f"opacity maps to amplitude {sigma:.3g} <= sigma_eps", record=i
            )
        try:
            shapes.append(
                GaussianShape(
                    mean=[col["x"][i], col["y"][i], col["z"][i]],
                    quat=[col[f"rot_{k}"][i] for k in range(4)],
                    scales=np.exp([col[f"scale_{k}"][i] for k in range(3)]),
                    sigma=sigma,
                )
            )
        except ValueError as e:
            raise ValidationError(str(e), record=i) from e
        c = AppearanceCoeffs.constant([0.0, 0.0, 0.0])
        sh = c.sh.copy()
        sh[0] = [col[f"f_dc_{k}"][i] for k in range(3)]
        coeffs.append(AppearanceCoeffs(sh, c.sg_axis, c.sg_sharp, c.sg_amp))
    return Scene(shapes, coeffs, sigma_eps=sigma_eps)


def _read_ply_vertices(path: Path):
    """Minimal PLY reader: float vertex properties, ascii or binary LE."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise ParseError("not a PLY file")
        fmt = None
        n_vertex = None
        names = []
        sizes = {b"float": 4, b"float32": 4, b"double": 8, b"float64": 8}
        prop_types = []
        while True:
            line = f.readline()
            if not line:
                raise ParseError("unexpected end of PLY header")
            parts = line.split()
            if not parts:
                continue
            if parts[0] == b"format":
                fmt = parts[1]
            elif parts[0] == b"element":
                if parts[1] == b"vertex":
                    n_vertex = int(parts[2])
                elif n_vertex is not None and parts[1] != b"vertex":
                    break  # only vertex element supported before data
            elif parts[0] == b"property" and n_vertex is not None:
                if parts[1] not in sizes:
                    raise ParseError(f"unsupported property type {parts[1]!r}")
                prop_types.append(parts[1])
                names.append(parts[2].decode())
            elif parts[0] == b"end_header":
                break
        if fmt not in (b"ascii", b"binary_little_endian"):
            raise ParseError(f"unsupported PLY format {fmt!r}")
        if n_vertex is None or not names:
            raise ParseError("PLY has no vertex element")
        if fmt == b"ascii":
            rows = []
            for _ in range(n_vertex):
                vals = f.readline().split()
                if len(vals) != len(names):
                    raise ParseError("short PLY vertex row")
                rows.append([float(v) for v in vals])
            data = np.array(rows, dtype=np.float64)
        else:
            dtype = np.dtype(
                [(nm, "<f4" if t in (b"float", b"float32") else "<f8")
                 for nm, t in zip(names, prop_types)]
            )
            raw = np.frombuffer(f.read(dtype.itemsize * n_vertex), dtype=dtype)
            data = np.stack([raw[nm].astype(np.float64) for nm in names], axis=1)
    return names, data


def export_density_ply(path, means: np.ndarray, counts: np.ndarray):
    """ASCII PLY point cloud with a per-point neighbor-count scalar."""
    means = np.asarray(means, dtype=float).reshape(-1, 3)
    counts = np.asarray(counts).reshape(-1)
    lines = [
        "ply", "format ascii 1.0",
        f"element vertex {len(means)}",
        "property float x", "property float y", "property float z",
        "property float density",
        "end_header",
    ]
    for m, c in zip(means, counts):
        lines.append(f"{m[0]} {m[1]} {m[2]} {float(c)}")
    Path(path).write_text("\n".join(lines) + "\n")
