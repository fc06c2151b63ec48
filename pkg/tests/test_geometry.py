import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsray.errors import EmptyIsosurface, EmptyScene
from gsray.geometry import (
    SPHERE_RATIO,
    Aabb,
    GaussianShape,
    IsoLossConfig,
    aabb_contact_points,
    aabb_of,
    ellipsoid_volume,
    iso_scale,
    isotropic_loss,
    quat_to_rotation,
    random_rotations,
    ratio_upper_bound,
    ratio_upper_bound_gradient,
    rotation_to_quat,
    volume_ratio,
)

from conftest import random_shape


def shape_with(quat=(1, 0, 0, 0), scales=(1, 1, 1), sigma=2.0, mean=(0, 0, 0)):
    return GaussianShape(mean=mean, quat=quat, scales=scales, sigma=sigma)


def density(shape, x):
    y = np.diag(1.0 / shape.scales) @ shape.rotation.T @ (np.asarray(x) - shape.mean)
    return shape.sigma * math.exp(-0.5 * float(y @ y))


class TestQuaternions:
    def test_identity(self):
        assert np.allclose(quat_to_rotation([1, 0, 0, 0]), np.eye(3))

    def test_z_rotation(self):
        c = math.cos(math.pi / 4)
        r = quat_to_rotation([c, 0, 0, c])  # 90 degrees about z
        assert np.allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-12)

    @given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
    def test_orthonormal(self, q):
        if np.linalg.norm(q) < 1e-6:
            return
        r = quat_to_rotation(q)
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)

    def test_matrix_roundtrip(self, rng):
        for _ in range(50):
            q = rng.standard_normal(4)
            q /= np.linalg.norm(q)
            r = quat_to_rotation(q)
            q2 = rotation_to_quat(r)
            assert np.allclose(quat_to_rotation(q2), r, atol=1e-9)


class TestIsoScale:
    def test_unit(self):
        s = shape_with(sigma=0.01 * math.exp(0.5))
        assert np.allclose(iso_scale(s, 0.01), [1, 1, 1])

    def test_boundary_empty(self):
        with pytest.raises(EmptyIsosurface):
            iso_scale(shape_with(sigma=0.01), 0.01)

    def test_factor_and_surface_density(self):
        s = shape_with(scales=(0.1, 0.2, 0.3), sigma=0.02)
        st_ = iso_scale(s, 0.01)
        assert np.allclose(st_, math.sqrt(2 * math.log(2)) * np.array([0.1, 0.2, 0.3]))
        # the point mu + st_1 * R e1 sits on the sigma_eps level set
        x = s.mean + st_[0] * s.rotation[:, 0]
        assert density(s, x) == pytest.approx(0.01, rel=1e-12)


class TestAabb:
    def test_axis_aligned(self):
        s = shape_with(scales=(1, 2, 3), sigma=0.01 * math.exp(0.5))
        box = aabb_of(s, 0.01)
        assert np.allclose(box.hi - box.lo, [2, 4, 6])

    def test_permutation_under_z_rotation(self):
        c = math.cos(math.pi / 4)
        s = shape_with(quat=(c, 0, 0, c), scales=(1, 2, 3),
                       sigma=0.01 * math.exp(0.5))
        box = aabb_of(s, 0.01)
        assert np.allclose(box.hi - box.lo, [4, 2, 6], atol=1e-9)

    def test_brute_force_boundary(self, rng):
        # half-lengths match the max over sampled boundary points
        dirs = rng.standard_normal((100_000, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for _ in range(20):
            s = random_shape(rng)
            st_ = iso_scale(s, 0.01)
            pts = (dirs * st_) @ s.rotation.T
            sampled = np.max(np.abs(pts), axis=0)
            half = 0.5 * (aabb_of(s, 0.01).hi - aabb_of(s, 0.01).lo)
            assert np.all(sampled <= half + 1e-12)
            assert np.allclose(sampled, half, rtol=1e-3)

    def test_contact_witnesses(self, rng):
        for _ in range(50):
            s = random_shape(rng)
            box = aabb_of(s, 0.01)
            for i, p in enumerate(aabb_contact_points(s, 0.01)):
                assert abs(p[i] - box.hi[i]) < 1e-6
                assert density(s, p) == pytest.approx(0.01, rel=1e-6)

    def test_invalid_corners(self):
        with pytest.raises(ValueError):
            Aabb(lo=[1, 0, 0], hi=[0, 1, 1])


class TestVolume:
    def test_unit_sphere(self):
        s = shape_with(sigma=0.01 * math.exp(0.5))
        assert ellipsoid_volume(s, 0.01) == pytest.approx(4 * math.pi / 3)

    def test_one_two_three(self):
        s = shape_with(scales=(1, 2, 3), sigma=0.01 * math.exp(0.5))
        assert ellipsoid_volume(s, 0.01) == pytest.approx(8 * math.pi)

    def test_monte_carlo(self, rng):
        s = shape_with(scales=(1, 2, 3), sigma=0.01 * math.exp(0.5))
        box = aabb_of(s, 0.01)
        pts = rng.uniform(box.lo, box.hi, size=(200_000, 3))
        y = (pts - s.mean) @ s.rotation / iso_scale(s, 0.01)
        frac = np.mean(np.sum(y * y, axis=1) <= 1.0)
        assert frac * box.volume() == pytest.approx(8 * math.pi, rel=0.01)

    def test_empty(self):
        with pytest.raises(EmptyIsosurface):
            ellipsoid_volume(shape_with(sigma=0.005), 0.01)


class TestVolumeRatio:
    def test_sphere(self, rng):
        s = shape_with(quat=rng.standard_normal(4))
        assert volume_ratio(s) == pytest.approx(SPHERE_RATIO, abs=1e-12)

    def test_axis_aligned(self):
        s = shape_with(scales=(0.3, 2.0, 7.0))
        assert volume_ratio(s) == pytest.approx(SPHERE_RATIO, abs=1e-12)

    def test_composition_oracle(self, rng):
        for _ in range(50):
            s = GaussianShape(mean=[0, 0, 0], quat=rng.standard_normal(4),
                              scales=[1, 1, 10], sigma=2.0)
            composed = aabb_of(s, 0.01).volume() / ellipsoid_volume(s, 0.01)
            assert volume_ratio(s) == pytest.approx(composed, abs=1e-9)

    def test_invariances(self, rng):
        q = rng.standard_normal(4)
        a = GaussianShape(mean=[0, 0, 0], quat=q, scales=[0.1, 0.2, 0.7], sigma=2.0)
        b = GaussianShape(mean=[0, 0, 0], quat=q, scales=[0.5, 1.0, 3.5], sigma=2.0)
        assert volume_ratio(a) == pytest.approx(volume_ratio(b), rel=1e-12)


class TestRatioUpperBound:
    def test_isotropy_equality(self):
        assert ratio_upper_bound([1, 1, 1]) == pytest.approx(SPHERE_RATIO)
        assert ratio_upper_bound([2, 2, 2]) == pytest.approx(
            ratio_upper_bound([1, 1, 1])
        )

    def test_value(self):
        expected = (2 / (math.pi * math.sqrt(3))) * 102 ** 1.5 / 10
        assert ratio_upper_bound([1, 1, 10]) == pytest.approx(expected)

    def test_dominates_rotations(self, rng):
        scales = np.array([1.0, 1.0, 10.0])
        bound = ratio_upper_bound(scales)
        rots = random_rotations(10_000, rng)
        for r in rots[:200]:
            s = GaussianShape(mean=[0, 0, 0], quat=rotation_to_quat(r),
                              scales=scales, sigma=2.0)
            assert volume_ratio(s) <= bound + 1e-12

    @given(st.lists(st.floats(1e-3, 1e3), min_size=3, max_size=3),
           st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_bound_property(self, scales, seed):
        q = np.random.default_rng(seed).standard_normal(4)
        s = GaussianShape(mean=[0, 0, 0], quat=q, scales=scales, sigma=2.0)
        assert volume_ratio(s) <= ratio_upper_bound(scales) * (1 + 1e-12)


class TestIsotropicLoss:
    def test_isotropic_zero(self):
        shapes = [shape_with(scales=(c, c, c)) for c in (0.1, 1.0, 3.0)]
        loss, grads = isotropic_loss(shapes, IsoLossConfig())
        assert loss == 0.0
        assert np.all(grads == 0.0)

    def test_single_anisotropic(self):
        s = shape_with(scales=(1, 1, 10))
        loss, grads = isotropic_loss([s], IsoLossConfig(r0=10.0))
        assert loss == pytest.approx(ratio_upper_bound([1, 1, 10]) - 10.0)
        assert np.any(grads[0] != 0.0)

    def test_empty(self):
        with pytest.raises(EmptyScene):
            isotropic_loss([], IsoLossConfig())

    def test_threshold_floor(self):
        with pytest.raises(ValueError):
            IsoLossConfig(r0=1.0)

    def test_gradient_finite_difference(self, rng):
        cfg = IsoLossConfig(r0=2.5)
        h = 1e-5
        for _ in range(100):
            scales = rng.uniform(0.05, 0.5, 3) * np.array([1, 1, rng.uniform(3, 8)])
            shape = GaussianShape(mean=[0, 0, 0], quat=rng.standard_normal(4),
                                  scales=scales, sigma=2.0)
            _, grads = isotropic_loss([shape], cfg)
            for k in range(3):
                d = np.zeros(3)
                d[k] = h * scales[k]
                lp, _ = isotropic_loss(
                    [shape_with(scales=scales + d, quat=shape.quat)], cfg)
                lm, _ = isotropic_loss(
                    [shape_with(scales=scales - d, quat=shape.quat)], cfg)
                fd = (lp - lm) / (2 * h * scales[k])
                assert grads[0][k] == pytest.approx(fd, rel=1e-4, abs=1e-10)

    def test_gradient_matches_bound_derivative(self):
        g = ratio_upper_bound_gradient([1.0, 1.0, 10.0])
        h = 1e-6
        for k in range(3):
            s = np.array([1.0, 1.0, 10.0])
            d = np.zeros(3)
            d[k] = h
            fd = (ratio_upper_bound(s + d) - ratio_upper_bound(s - d)) / (2 * h)
            assert g[k] == pytest.approx(fd, rel=1e-6)
