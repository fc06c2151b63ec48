"""View-dependent radiance and the density/radiance mixture fields.

Per-primitive radiance is a degree-2 real spherical harmonics expansion
(9 RGB coefficients) plus 7 spherical Gaussian lobes a * exp(lam (d.nu - 1)),
clamped to be nonnegative after summation.  The mixture fields sum
truncated Gaussian densities and take the density-weighted average color.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

N_SH = 9
N_SG = 7

_C0 = 0.5 * math.sqrt(1.0 / math.pi)
_C1 = math.sqrt(3.0 / (4.0 * math.pi))
_C2A = 0.5 * math.sqrt(15.0 / math.pi)   # xy, yz, xz
_C2B = 0.25 * math.sqrt(5.0 / math.pi)   # 3z^2 - 1
_C2C = 0.25 * math.sqrt(15.0 / math.pi)  # x^2 - y^2


def sh_basis(d) -> np.ndarray:
    """Orthonormal real SH basis values up to degree 2 at unit direction(s).

    Band order: Y00; Y1,-1, Y10, Y11; Y2,-2 .. Y2,2.  Accepts (3,) or (N, 3);
    returns (9,) or (N, 9).
    """
    d = np.asarray(d, dtype=float)
    single = d.ndim == 1
    d = np.atleast_2d(d)
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    out = np.stack(
        [
            np.full_like(x, _C0),
            _C1 * y,
            _C1 * z,
            _C1 * x,
            _C2A * x * y,
            _C2A * y * z,
            _C2B * (3.0 * z * z - 1.0),
            _C2A * x * z,
            _C2C * (x * x - y * y),
        ],
        axis=-1,
    )
    return out[0] if single else out


@dataclass(frozen=True)
class AppearanceCoeffs:
    """SH + SG appearance parameters of one primitive."""

    sh: np.ndarray        # (9, 3) RGB coefficients
    sg_axis: np.ndarray   # (7, 3) unit lobe axes
    sg_sharp: np.ndarray  # (7,) sharpness >= 0
    sg_amp: np.ndarray    # (7, 3) RGB amplitudes

    def __post_init__(self):
        sh = np.asarray(self.sh, dtype=float).reshape(N_SH, 3)
        axis = np.asarray(self.sg_axis, dtype=float).reshape(N_SG, 3)
        norms = np.linalg.norm(axis, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError("SG lobe axis must be nonzero")
        axis = axis / norms[:, None]
        sharp = np.asarray(self.sg_sharp, dtype=float).reshape(N_SG)
        if np.any(sharp < 0):
            raise ValueError("SG sharpness must be nonnegative")
        amp = np.asarray(self.sg_amp, dtype=float).reshape(N_SG, 3)
        object.__setattr__(self, "sh", sh)
        object.__setattr__(self, "sg_axis", axis)
        object.__setattr__(self, "sg_sharp", sharp)
        object.__setattr__(self, "sg_amp", amp)

    @classmethod
    def constant(cls, rgb) -> "AppearanceCoeffs":
        """Direction-independent radiance: DC coefficient only, zero lobes."""
        sh = np.zeros((N_SH, 3))
        sh[0] = np.asarray(rgb, dtype=float) / _C0
        return cls(
            sh=sh,
            sg_axis=np.tile([0.0, 0.0, 1.0], (N_SG, 1)),
            sg_sharp=np.zeros(N_SG),
            sg_amp=np.zeros((N_SG, 3)),
        )


def eval_radiance(coeffs: AppearanceCoeffs, d) -> np.ndarray:
    """Radiance emitted toward unit direction d, clamped at 0."""
    basis = sh_basis(d)
    rgb = basis @ coeffs.sh
    cos = coeffs.sg_axis @ np.asarray(d, dtype=float)
    lobes = np.exp(coeffs.sg_sharp * (cos - 1.0))
    rgb = rgb + lobes @ coeffs.sg_amp
    return np.maximum(rgb, 0.0)


@dataclass(frozen=True)
class FieldSample:
    sigma: float
    color: np.ndarray


def eval_fields(scene, x, d, active=None) -> FieldSample:
    """Density and radiance of the mixture at point x, direction d.

    `active` narrows evaluation to the given primitive indices (e.g. a hit
    buffer); omitted, the full list is used.  Truncation zeroes primitives
    whose bounding ellipsoid does not contain x, so both give equal
    results.  Zero density maps to black by convention.
    """
    x = np.asarray(x, dtype=float)
    if active is None:
        active = np.arange(len(scene.means))
    else:
        active = np.asarray(active, dtype=np.int64)
    active = active[np.argsort(scene.uids[active], kind="stable")]

    sigma = 0.0
    weighted = np.zeros(3)
    for i in active:
        y = scene.iso_inv[i] @ (x - scene.means[i])
        q = float(np.dot(y, y))
        if q > 1.0:
            continue
        dens = scene.sigmas[i] * math.exp(-0.5 * scene.log_ratio[i] * q)
        sigma += dens
        weighted = weighted + dens * eval_radiance(scene.coeffs[i], d)
    if sigma == 0.0:
        return FieldSample(0.0, np.zeros(3))
    return FieldSample(sigma, weighted / sigma)
