"""Renderer and analysis toolkit for radiance fields of truncated
elliptical Gaussians: accelerated volume ray marching (empty-space
skipping, adaptive sampling, Z-order reordering), anisotropy
regularization, and distance-weighted densification analytics."""

from .appearance import AppearanceCoeffs, FieldSample, eval_fields, eval_radiance
from .errors import (
    BufferOverflow,
    DegenerateCenter,
    EmptyIsosurface,
    EmptyScene,
    GsrayError,
    ParseError,
    ValidationError,
)
from .geometry import (
    Aabb,
    GaussianShape,
    IsoLossConfig,
    aabb_of,
    ellipsoid_volume,
    iso_scale,
    isotropic_loss,
    ratio_upper_bound,
    volume_ratio,
)
from .renderer import (
    Camera,
    Ray,
    RenderConfig,
    RenderStats,
    march_ray,
    psnr,
    reference_integrate,
    reference_render,
    render_image,
    segment_step,
)
from .scene import Scene, reorder_by_morton
from .scene_io import gen_test_scene, load_cameras, load_scene, save_cameras, save_scene

__all__ = [
    "Aabb", "AppearanceCoeffs", "BufferOverflow", "Camera", "DegenerateCenter",
    "EmptyIsosurface", "EmptyScene", "FieldSample", "GaussianShape",
    "GsrayError", "IsoLossConfig", "ParseError", "Ray", "RenderConfig",
    "RenderStats", "Scene", "ValidationError", "aabb_of", "ellipsoid_volume",
    "eval_fields", "eval_radiance", "gen_test_scene", "iso_scale",
    "isotropic_loss", "load_cameras", "load_scene", "march_ray", "psnr",
    "ratio_upper_bound", "reference_integrate", "reference_render",
    "render_image", "reorder_by_morton", "save_cameras", "save_scene",
    "segment_step", "volume_ratio",
]
