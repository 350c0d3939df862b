import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import RejectedInputError
from ..types import FeatureMap, PosEncodingConfig
from ..utils.constants import FEATURE_DIM, UNET_CHANNELS


def positional_encode(x: torch.Tensor, cfg: PosEncodingConfig) -> torch.Tensor:
    """Sinusoidal encoding of the last dimension of `x`.

    Each coordinate p becomes [p?, sin(2^0 pi p), cos(2^0 pi p), ...,
    sin(2^(L-1) pi p), cos(2^(L-1) pi p)]; blocks are concatenated per coordinate.
    """
    frequencies = math.pi * 2.0 ** torch.arange(cfg.num_frequencies, dtype=x.dtype, device=x.device)
    angles = x[..., None] * frequencies  # (..., D, L)
    pairs = torch.stack([angles.sin(), angles.cos()], dim=-1).flatten(-2)  # (..., D, 2L)
    if cfg.include_input:
        pairs = torch.cat([x[..., None], pairs], dim=-1)
    return pairs.flatten(-2)


class PositionalEncoding(nn.Module):
    def __init__(self, cfg: PosEncodingConfig):
        super().__init__()
        self.cfg = cfg

    @property
    def output_dim(self) -> int:
        return self.cfg.output_dim(3)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return positional_encode(x, self.cfg)


class ConvBlock(nn.Module):
    """Two 3x3 convolutions with GELU."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(out_channels, out_channels, 3, padding=1),
            nn.GELU(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class UNetEncoder(nn.Module):
    """
    Shared per-pixel feature extractor.

    Three pooling levels (32 -> 64 -> 128 channels, plus a 128-channel
    bottleneck), mirrored decoder with skip connections and a final 1x1
    projection to `out_dim` channels at input resolution.
    """

    def __init__(self, out_dim: int = FEATURE_DIM, channels: tuple[int, ...] = UNET_CHANNELS):
        super().__init__()
        c1, c2, c3 = channels
        self.depth = 3
        self.inc = ConvBlock(3, c1)
        self.down1 = ConvBlock(c1, c2)
        self.down2 = ConvBlock(c2, c3)
        self.down3 = ConvBlock(c3, c3)
        self.up3 = ConvBlock(c3 + c3, c3)
        self.up2 = ConvBlock(c3 + c2, c2)
        self.up1 = ConvBlock(c2 + c1, c1)
        self.out = nn.Conv2d(c1, out_dim, 1)

    @staticmethod
    def _up(x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
        return torch.cat([x, skip], dim=1)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(N, 3, H, W) -> (N, out_dim, H, W)."""
        height, width = images.shape[-2:]
        stride = 2 ** self.depth
        if height % stride or width % stride:
            raise RejectedInputError(f"Image size {width}x{height} must be divisible by {stride}")
        x1 = self.inc(images)
        x2 = self.down1(F.avg_pool2d(x1, 2))
        x3 = self.down2(F.avg_pool2d(x2, 2))
        x4 = self.down3(F.avg_pool2d(x3, 2))
        y = self.up3(self._up(x4, x3))
        y = self.up2(self._up(y, x2))
        y = self.up1(self._up(y, x1))
        return self.out(y)


def extract_features(encoder: UNetEncoder, image: torch.Tensor, source_view_id: int = 0) -> FeatureMap:
    """Features of a single (3, H, W) image."""
    return FeatureMap(values=encoder(image[None])[0], source_view_id=source_view_id)
