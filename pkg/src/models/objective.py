"""
Reconstruction losses and image-quality metrics.

Images are (3, H, W) tensors in [0, 1]; confidence maps are (H, W).
"""
import math

import torch
import torch.nn.functional as F

from ..errors import RejectedInputError
from ..types import LossConfig
from ..utils.constants import SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW


def _check_shapes(target: torch.Tensor, prediction: torch.Tensor) -> None:
    if target.shape != prediction.shape:
        raise RejectedInputError(f"Shape mismatch: {tuple(target.shape)} vs {tuple(prediction.shape)}")


def confidence_loss(
    target: torch.Tensor, prediction: torch.Tensor, confidence: torch.Tensor, cfg: LossConfig = LossConfig()
) -> torch.Tensor:
    """L = mean|I - (I~ Q + I (1 - Q))| + lambda * ||1 - Q||, Q broadcast over channels."""
    _check_shapes(target, prediction)
    if confidence.shape != target.shape[-2:]:
        raise RejectedInputError(
            f"Confidence shape {tuple(confidence.shape)} does not match image {tuple(target.shape[-2:])}"
        )
    q = confidence[None]
    blended = prediction * q + target * (1.0 - q)
    reconstruction = (target - blended).abs().mean()
    penalty = ((1.0 - confidence) ** 2).mean()
    if cfg.norm == "rms":
        penalty = penalty.sqrt()
    return reconstruction + cfg.lambda_ * penalty


def plain_l1(target: torch.Tensor, prediction: torch.Tensor) -> torch.Tensor:
    _check_shapes(target, prediction)
    return (target - prediction).abs().mean()


def psnr(target: torch.Tensor, prediction: torch.Tensor, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images are identical."""
    _check_shapes(target, prediction)
    mse = ((target.double() - prediction.double()) ** 2).mean().item()
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA, dtype=torch.float64) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(target: torch.Tensor, prediction: torch.Tensor) -> float:
    """Mean SSIM of the channel-mean grayscale images over valid window positions."""
    _check_shapes(target, prediction)
    height, width = target.shape[-2:]
    if height < SSIM_WINDOW or width < SSIM_WINDOW:
        raise RejectedInputError(f"Image {width}x{height} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    x = target.double().reshape(-1, height, width).mean(dim=0)[None, None]
    y = prediction.double().reshape(-1, height, width).mean(dim=0)[None, None]
    window = gaussian_window().to(x.device)[None, None]
    mu_x = F.conv2d(x, window)
    mu_y = F.conv2d(y, window)
    sigma_x = F.conv2d(x * x, window) - mu_x ** 2
    sigma_y = F.conv2d(y * y, window) - mu_y ** 2
    sigma_xy = F.conv2d(x * y, window) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + SSIM_C1) * (2 * sigma_xy + SSIM_C2)
    denominator = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
    return (numerator / denominator).mean().item()
