import numpy as np
import pytest

from gsray.densify import (
    DensifyConfig,
    GradAccumulator,
    LossConfig,
    criterion_new,
    criterion_old,
    dssim,
    fd_position_gradient,
    image_loss,
    neighbor_density,
    observe_scene,
)
from gsray.renderer import RenderConfig, render_image
from gsray.scene_io import gen_test_scene, orbit_cameras


class TestAccumulator:
    def test_observe_and_merge(self):
        a = GradAccumulator(3)
        a.observe(0, 1.0, 2.0)
        a.observe(0, 3.0, 1.0)
        b = GradAccumulator(3)
        b.observe(2, 0.5, 4.0)
        a.merge(b)
        assert a.sum_raw[0] == 4.0
        assert a.sum_weighted[0] == 5.0
        assert a.counts[0] == 2
        assert a.sum_weighted[2] == 2.0

    def test_validation(self):
        a = GradAccumulator(1)
        with pytest.raises(ValueError):
            a.observe(0, -1.0, 1.0)
        with pytest.raises(ValueError):
            a.observe(0, 1.0, -1.0)


class TestCriteria:
    def test_unseen_is_false(self):
        acc = GradAccumulator(2)
        acc.observe(0, 1.0, 1.0)
        cfg = DensifyConfig(tau=0.5)
        assert list(criterion_old(acc, cfg)) == [True, False]
        assert list(criterion_new(acc, cfg)) == [True, False]

    def test_threshold_is_strict(self):
        acc = GradAccumulator(1)
        acc.observe(0, 0.5, 1.0)
        assert not criterion_old(acc, DensifyConfig(tau=0.5))[0]
        assert criterion_old(acc, DensifyConfig(tau=0.5 - 1e-12))[0]

    def test_weighting_separates_far_primitives(self):
        # same raw norms; the far primitive gets alpha = 10 and crosses tau
        acc = GradAccumulator(2)
        acc.observe(0, 1e-4, 1.0)
        acc.observe(1, 1e-4, 10.0)
        cfg = DensifyConfig(tau=0.00015)
        assert list(criterion_old(acc, cfg)) == [False, False]
        assert list(criterion_new(acc, cfg)) == [False, True]

    def test_mean_over_window(self):
        acc = GradAccumulator(1)
        for g in (0.1, 0.2, 0.3):
            acc.observe(0, g, 1.0)
        assert criterion_old(acc, DensifyConfig(tau=0.19))[0]
        assert not criterion_old(acc, DensifyConfig(tau=0.21))[0]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DensifyConfig(tau=0.0)
        with pytest.raises(ValueError):
            DensifyConfig(radius=-1.0)


class TestNeighborDensity:
    def test_matches_brute_force(self, rng):
        pts = rng.uniform(-1, 1, size=(300, 3))
        r = 0.3
        counts = neighbor_density(pts, r)
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        want = (d <= r).sum(axis=1) - 1
        assert np.array_equal(counts, want)

    def test_closed_ball(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.5, 0, 0]])
        assert list(neighbor_density(pts, 1.0)) == [1, 1, 0]

    def test_validation(self):
        with pytest.raises(ValueError):
            neighbor_density(np.zeros((2, 3)), 0.0)


class TestSsim:
    def test_identical(self, rng):
        img = rng.uniform(size=(32, 32, 3))
        assert dssim(img, img) == pytest.approx(0.0, abs=1e-12)

    def test_matches_reference_implementation(self, rng):
        skimage = pytest.importorskip("skimage.metrics")
        for _ in range(5):
            a = rng.uniform(size=(40, 36))
            b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
            want = skimage.structural_similarity(
                a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                use_sample_covariance=False,
            )
            got = 1.0 - 2.0 * dssim(a, b)
            assert got == pytest.approx(want, abs=1e-10)

    def test_channels_averaged(self, rng):
        a = rng.uniform(size=(24, 24, 3))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        per = [1 - 2 * dssim(a[..., c], b[..., c]) for c in range(3)]
        assert 1 - 2 * dssim(a, b) == pytest.approx(np.mean(per), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dssim(np.zeros((16, 16)), np.zeros((16, 17)))


class TestImageLoss:
    def test_pure_l1(self, rng):
        a = rng.uniform(size=(16, 16, 3))
        b = rng.uniform(size=(16, 16, 3))
        cfg = LossConfig(mix=0.0, lambda_s=0.0)
        assert image_loss(a, b, cfg) == pytest.approx(np.mean(np.abs(a - b)))

    def test_mix_and_regularizer(self, rng):
        a = rng.uniform(size=(16, 16, 3))
        b = rng.uniform(size=(16, 16, 3))
        cfg = LossConfig(mix=0.2, lambda_s=0.00025)
        want = 0.8 * np.mean(np.abs(a - b)) + 0.2 * dssim(a, b) + 0.00025 * 3.0
        assert image_loss(a, b, cfg, iso_loss=3.0) == pytest.approx(want)

    def test_validation(self):
        with pytest.raises(ValueError):
            LossConfig(mix=1.5)


class TestFdGradient:
    def test_small_at_optimum(self):
        # L1 is nonsmooth at zero residual, so the central difference does
        # not vanish exactly; it must still be far below an off-optimum one
        scene = gen_test_scene("random-cloud", count=5, seed=3)
        cam = orbit_cameras(1, radius=3.0, focal=16.0, width=12, height=12)[0]
        cfg = RenderConfig(dt=0.02)
        target, _ = render_image(scene, cam, cfg)
        g_opt = fd_position_gradient(scene, cam, target, 0, render_cfg=cfg,
                                     loss_cfg=LossConfig(mix=0.0))
        shifted = scene.with_mean(0, scene.means[0] + [0.05, 0, 0])
        g_off = fd_position_gradient(shifted, cam, target, 0, render_cfg=cfg,
                                     loss_cfg=LossConfig(mix=0.0))
        assert np.linalg.norm(g_opt) < 0.05 * np.linalg.norm(g_off)

    def test_nonzero_off_optimum_and_observe(self):
        scene = gen_test_scene("random-cloud", count=5, seed=3)
        shifted = scene.with_mean(0, scene.means[0] + [0.05, 0, 0])
        cam = orbit_cameras(1, radius=3.0, focal=16.0, width=12, height=12)[0]
        cfg = RenderConfig(dt=0.02)
        target, _ = render_image(scene, cam, cfg)
        acc = GradAccumulator(len(shifted))
        observe_scene(acc, shifted, cam, target, indices=[0],
                      render_cfg=cfg, loss_cfg=LossConfig(mix=0.0))
        assert acc.counts[0] == 1
        assert acc.sum_raw[0] > 0.0
        alpha = np.linalg.norm(shifted.means[0] - cam.center) / cam.focal
        assert acc.sum_weighted[0] == pytest.approx(alpha * acc.sum_raw[0])
