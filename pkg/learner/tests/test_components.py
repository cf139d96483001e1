"""Invariants of the model building blocks, independent of any training."""

import numpy as np
import pytest
import torch

from elastolearn import (
    RegistrationUNet,
    RegressionCNN,
    RegressionConfig,
    augment_fields,
    grad_cam,
    ncc_loss,
    normalize_fields,
    sigma_nu,
    smoothness_loss,
    warp_images,
)


class TestSigmaNu:
    def test_range_on_1e4_random_inputs(self, rng):
        # |x| <= 30 covers any realistic logit without float64 saturation
        x = torch.from_numpy(rng.uniform(-30.0, 30.0, size=10_000))
        y = sigma_nu(x)
        assert (y > 0).all() and (y < 0.5).all()

    def test_extreme_inputs_stay_inside_open_interval(self):
        y = sigma_nu(torch.tensor([-1e6, 0.0, 1e6]))
        assert y[0] >= 0.0 and y[2] <= 0.5
        assert y[1] == pytest.approx(0.25)

    def test_model_outputs_in_range(self, rng):
        model = RegressionCNN(base_filters=2, levels=2)
        x = torch.from_numpy(rng.normal(scale=5.0, size=(8, 2, 16, 16)).astype(np.float32))
        model.eval()
        with torch.no_grad():
            y = model(x)
        assert (y > 0).all() and (y < 0.5).all()


class TestNccLoss:
    def test_bounds(self, rng):
        for _ in range(20):
            a = torch.from_numpy(rng.normal(size=(3, 1, 12, 12)))
            b = torch.from_numpy(rng.normal(size=(3, 1, 12, 12)))
            v = ncc_loss(a, b).item()
            assert 0.0 - 1e-9 <= v <= 2.0 + 1e-9

    def test_identical_images_give_zero(self, rng):
        a = torch.from_numpy(rng.normal(size=(2, 1, 10, 10)))
        assert ncc_loss(a, a).item() == pytest.approx(0.0, abs=1e-9)

    def test_negated_image_gives_two(self, rng):
        a = torch.from_numpy(rng.normal(size=(1, 1, 10, 10)))
        assert ncc_loss(a, -a).item() == pytest.approx(2.0, abs=1e-9)

    def test_scale_invariance(self, rng):
        a = torch.from_numpy(rng.normal(size=(2, 1, 10, 10)))
        b = torch.from_numpy(rng.normal(size=(2, 1, 10, 10)))
        base = ncc_loss(a, b).item()
        for c in (1e-3, 7.5, 1e3):
            assert ncc_loss(c * a, b).item() == pytest.approx(base, abs=1e-6)
            assert ncc_loss(a, c * b).item() == pytest.approx(base, abs=1e-6)


class TestSmoothnessLoss:
    def test_nonnegative(self, rng):
        u = torch.from_numpy(rng.normal(size=(4, 2, 9, 9)))
        assert smoothness_loss(u).item() >= 0.0

    def test_constant_field_is_flat(self):
        u = torch.full((1, 2, 8, 8), 3.25)
        # the sqrt epsilon leaves ~1e-6 per pixel
        assert smoothness_loss(u).item() == pytest.approx(0.0, abs=1e-3)

    def test_steeper_field_costs_more(self, rng):
        u = torch.from_numpy(rng.normal(size=(1, 2, 8, 8)))
        assert smoothness_loss(3.0 * u).item() > smoothness_loss(u).item()


class TestWarpLayer:
    def test_zero_displacement_is_identity(self, rng):
        img = torch.from_numpy(rng.uniform(size=(3, 1, 11, 13)))
        u = torch.zeros(3, 2, 11, 13, dtype=img.dtype)
        out = warp_images(img, u)
        assert torch.allclose(out, img, atol=1e-6)

    def test_integer_shift_matches_roll(self, rng):
        img = torch.from_numpy(rng.uniform(size=(1, 1, 10, 10)))
        u = torch.zeros(1, 2, 10, 10, dtype=img.dtype)
        u[:, 0] = 2.0  # sample from x + 2
        out = warp_images(img, u)
        assert torch.allclose(out[..., :-2], img[..., 2:], atol=1e-6)

    def test_analytic_gradients_match_finite_differences(self, rng):
        img = torch.from_numpy(rng.uniform(size=(1, 1, 8, 8)))
        # non-integer offsets keep the sampler away from its kinks
        u0 = rng.uniform(-1.7, 1.7, size=(1, 2, 8, 8))
        u0 += np.where(np.abs(u0 - np.round(u0)) < 0.05, 0.11, 0.0)
        weights = torch.from_numpy(rng.normal(size=(1, 1, 8, 8)))

        u = torch.from_numpy(u0).clone().requires_grad_(True)
        loss = (warp_images(img, u) * weights).sum()
        loss.backward()
        analytic = u.grad.numpy()

        eps = 1e-5
        checks = [(c, y, x) for c in range(2) for y in (1, 4, 6) for x in (2, 5, 7)]
        for c, y, x in checks:
            up = torch.from_numpy(u0).clone()
            up[0, c, y, x] += eps
            um = torch.from_numpy(u0).clone()
            um[0, c, y, x] -= eps
            fd = (
                (warp_images(img, up) * weights).sum() - (warp_images(img, um) * weights).sum()
            ).item() / (2 * eps)
            assert analytic[0, c, y, x] == pytest.approx(fd, abs=1e-4)


class TestUNetShape:
    def test_displacement_matches_input_grid(self, rng):
        model = RegistrationUNet(base_filters=2, levels=3)
        s = torch.from_numpy(rng.uniform(size=(2, 1, 48, 48)).astype(np.float32))
        t = torch.from_numpy(rng.uniform(size=(2, 1, 48, 48)).astype(np.float32))
        model.eval()
        with torch.no_grad():
            u = model(s, t)
        assert u.shape == (2, 2, 48, 48)

    def test_warped_output_differentiable_wrt_parameters(self, rng):
        model = RegistrationUNet(base_filters=2, levels=2)
        s = torch.from_numpy(rng.uniform(size=(1, 1, 16, 16)).astype(np.float32))
        t = torch.from_numpy(rng.uniform(size=(1, 1, 16, 16)).astype(np.float32))
        loss = ncc_loss(warp_images(s, model(s, t)), t) + 0.001 * smoothness_loss(model(s, t))
        loss.backward()
        grads = [p.grad for p in model.parameters() if p.grad is not None]
        assert grads and all(torch.isfinite(g).all() for g in grads)


class TestFieldPreprocessing:
    def test_normalization_unit_peak(self, rng):
        f = rng.normal(scale=6.0, size=(5, 2, 12, 12))
        out = normalize_fields(f)
        mags = np.sqrt(out[:, 0] ** 2 + out[:, 1] ** 2).max(axis=(1, 2))
        assert np.allclose(mags, 1.0, atol=1e-5)

    def test_rotation_augmentation_preserves_magnitude(self, rng):
        cfg = RegressionConfig(rot_alpha_max=0.2, smooth_noise_max=0.0)
        x = torch.from_numpy(normalize_fields(rng.normal(size=(4, 2, 16, 16))))
        gen = torch.Generator().manual_seed(3)
        out = augment_fields(x, gen, cfg)
        m_out = torch.sqrt(out[:, 0] ** 2 + out[:, 1] ** 2).sort().values
        m_in = torch.sqrt(x[:, 0] ** 2 + x[:, 1] ** 2).sort().values
        # flips permute pixels, rotations keep each magnitude
        assert torch.allclose(
            m_out.flatten(1).sort(dim=1).values, m_in.flatten(1).sort(dim=1).values, atol=1e-5
        )

    def test_augmentation_disabled_is_flip_only(self, rng):
        cfg = RegressionConfig(rot_alpha_max=0.0, smooth_noise_max=0.0)
        x = torch.from_numpy(normalize_fields(rng.normal(size=(2, 2, 8, 8))))
        gen = torch.Generator().manual_seed(0)
        out = augment_fields(x, gen, cfg)
        assert out.shape == x.shape
        assert torch.isfinite(out).all()


class TestGradCam:
    def _model(self):
        torch.manual_seed(0)
        return RegressionCNN(base_filters=2, levels=2)

    def test_output_normalized(self, rng):
        field = rng.normal(size=(2, 16, 16)).astype(np.float32)
        cam = grad_cam(self._model(), field)
        assert cam.shape == (16, 16)
        assert cam.min() >= 0.0 and cam.max() <= 1.0
        assert cam.sum() >= 0.0

    def test_zero_field_is_near_uniform(self):
        cam = grad_cam(self._model(), np.zeros((2, 16, 16), dtype=np.float32))
        # no spatial signal: spread stays small compared to the [0, 1] range
        assert cam.std() <= 0.35

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError, match="2, height, width"):
            grad_cam(self._model(), np.zeros((3, 8, 8), dtype=np.float32))

    def test_rejects_non_spatial_layer(self):
        model = self._model()
        with pytest.raises(ValueError, match="convolution"):
            grad_cam(model, np.zeros((2, 16, 16), dtype=np.float32), layer=model.dense[1])
