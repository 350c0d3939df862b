import math

import numpy as np
import pytest
import torch
from scipy.signal import correlate2d

from src.errors import RejectedConfigurationError, RejectedInputError
from src.models.objective import confidence_loss, gaussian_window, plain_l1, psnr, ssim
from src.types import LossConfig


def reference_ssim(a: np.ndarray, b: np.ndarray) -> float:
    x = a.mean(axis=0)
    y = b.mean(axis=0)
    coords = np.arange(11) - 5.0
    g = np.exp(-(coords ** 2) / (2 * 1.5 ** 2))
    g /= g.sum()
    w = np.outer(g, g)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    mu_x = correlate2d(x, w, mode="valid")
    mu_y = correlate2d(y, w, mode="valid")
    s_x = correlate2d(x * x, w, mode="valid") - mu_x ** 2
    s_y = correlate2d(y * y, w, mode="valid") - mu_y ** 2
    s_xy = correlate2d(x * y, w, mode="valid") - mu_x * mu_y
    value = ((2 * mu_x * mu_y + c1) * (2 * s_xy + c2)) / ((mu_x ** 2 + mu_y ** 2 + c1) * (s_x + s_y + c2))
    return float(value.mean())


@pytest.fixture
def images():
    generator = torch.Generator().manual_seed(0)
    target = torch.rand(3, 16, 16, generator=generator, dtype=torch.float64)
    prediction = torch.rand(3, 16, 16, generator=generator, dtype=torch.float64)
    return target, prediction


class TestConfidenceLoss:
    def test_perfect_prediction_costs_nothing(self, images):
        target, _ = images
        assert confidence_loss(target, target, torch.ones(16, 16, dtype=torch.float64)).item() == 0.0

    def test_zero_confidence_costs_lambda(self, images):
        target, prediction = images
        loss = confidence_loss(target, prediction, torch.zeros(16, 16, dtype=torch.float64), LossConfig(lambda_=0.3))
        assert loss.item() == pytest.approx(0.3)

    def test_full_confidence_without_penalty_is_plain_l1(self, images):
        target, prediction = images
        loss = confidence_loss(target, prediction, torch.ones(16, 16, dtype=torch.float64), LossConfig(lambda_=0.0))
        assert loss.item() == pytest.approx(plain_l1(target, prediction).item())
        assert plain_l1(target, prediction).item() == pytest.approx((target - prediction).abs().mean().item())

    def test_squared_norm(self, images):
        target, _ = images
        q = torch.full((16, 16), 0.5, dtype=torch.float64)
        rms = confidence_loss(target, target, q, LossConfig(lambda_=1.0, norm="rms"))
        squared = confidence_loss(target, target, q, LossConfig(lambda_=1.0, norm="squared"))
        assert rms.item() == pytest.approx(0.5)
        assert squared.item() == pytest.approx(0.25)

    def test_unknown_norm_rejected(self):
        with pytest.raises(RejectedConfigurationError):
            LossConfig(norm="l1")

    def test_gradient_pushes_confidence(self, images):
        target, prediction = images
        q = torch.full((16, 16), 0.5, dtype=torch.float64, requires_grad=True)
        confidence_loss(target, prediction, q).backward()
        # Wrong pixels lower confidence; a perfect pixel raises it
        assert (q.grad > 0).any()
        q2 = torch.full((16, 16), 0.5, dtype=torch.float64, requires_grad=True)
        confidence_loss(target, target, q2).backward()
        assert (q2.grad < 0).all()

    def test_injected_error_raises_confidence_gradient(self, images):
        target, _ = images
        prediction = target.clone()
        prediction[:, :4, :4] = 1.0 - prediction[:, :4, :4]
        q = torch.full((16, 16), 0.5, dtype=torch.float64, requires_grad=True)
        confidence_loss(target, prediction, q).backward()
        clean = torch.full((16, 16), 0.5, dtype=torch.float64, requires_grad=True)
        confidence_loss(target, target, clean).backward()
        assert (q.grad[:4, :4] > clean.grad[:4, :4]).all()
        assert torch.allclose(q.grad[8:, 8:], clean.grad[8:, 8:])

    def test_gradient_matches_finite_differences(self, images):
        target, _ = images
        prediction = torch.rand(3, 4, 4, dtype=torch.float64, requires_grad=True)
        q = torch.rand(4, 4, dtype=torch.float64).mul(0.8).add(0.1).requires_grad_()
        assert torch.autograd.gradcheck(
            lambda p, c: confidence_loss(target[:, :4, :4], p, c), (prediction, q)
        )

    def test_shape_mismatch_rejected(self, images):
        target, prediction = images
        with pytest.raises(RejectedInputError):
            confidence_loss(target, prediction[:, :8], torch.ones(16, 16))
        with pytest.raises(RejectedInputError):
            confidence_loss(target, prediction, torch.ones(8, 16))


class TestPsnr:
    def test_known_value(self):
        target = torch.zeros(3, 4, 4)
        assert psnr(target, torch.full((3, 4, 4), 0.1)) == pytest.approx(20.0)

    def test_identical_is_infinite(self, images):
        target, _ = images
        assert psnr(target, target.clone()) == math.inf

    def test_matches_formula(self, images):
        target, prediction = images
        mse = ((target - prediction) ** 2).mean().item()
        assert psnr(target, prediction) == pytest.approx(-10.0 * math.log10(mse))


class TestSsim:
    def test_window_is_normalized(self):
        window = gaussian_window()
        assert window.shape == (11, 11)
        assert window.sum().item() == pytest.approx(1.0)

    def test_identical_images(self, images):
        target, _ = images
        assert ssim(target, target) == pytest.approx(1.0)

    def test_negative_image_scores_lower(self, images):
        target, _ = images
        assert ssim(target, 1.0 - target) < 1.0

    def test_matches_reference(self, images):
        target, prediction = images
        expected = reference_ssim(target.numpy(), prediction.numpy())
        assert ssim(target, prediction) == pytest.approx(expected, abs=1e-9)

    def test_small_images_rejected(self):
        with pytest.raises(RejectedInputError):
            ssim(torch.rand(3, 8, 16), torch.rand(3, 8, 16))
