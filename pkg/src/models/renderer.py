"""
Color stage: sample source colors and features at the marched surface and
blend them with learned per-view weights.
"""
from collections.abc import Sequence

import torch
import torch.nn as nn

from ..types import Camera
from ..utils.constants import BLEND_EPS, BLEND_FEATURE_DIM, BLEND_HIDDEN, COLOR_SAMPLE_DIM
from ..utils.decorators import count_calls
from .ray_marcher import sample_view_features, weighted_mean_var


def sample_color_features(
    surface_points: torch.Tensor,
    images: torch.Tensor,
    feature_maps: torch.Tensor,
    cameras: Sequence[Camera],
) -> torch.Tensor:
    """Source colors and features at the surface -> (V, H, W, 3 + d); zero outside a view's frustum."""
    maps = torch.cat([images.to(feature_maps.dtype), feature_maps], dim=1)
    return sample_view_features(surface_points, maps, cameras)


class BlendNetwork(nn.Module):
    """
    Learned multi-view blending.

    Barycentric mean/variance of the samples are appended to each view's
    sample; a shared MLP turns that into a view feature and a weight
    in [0, 1]. The weighted mean/variance of the view features feed a 3-layer MLP
    with two heads: RGB and confidence, both squashed to [0, 1].
    """

    def __init__(
        self,
        sample_dim: int = COLOR_SAMPLE_DIM,
        hidden_dim: int = BLEND_HIDDEN,
        feature_dim: int = BLEND_FEATURE_DIM,
    ):
        super().__init__()
        self.feature_dim = feature_dim
        self.view_mlp = nn.Sequential(
            nn.Linear(3 * sample_dim, hidden_dim),
            nn.GELU(),
            nn.Linear(hidden_dim, feature_dim + 1),
        )
        self.color_mlp = nn.Sequential(
            nn.Linear(2 * feature_dim, hidden_dim),
            nn.GELU(),
            nn.Linear(hidden_dim, hidden_dim),
            nn.GELU(),
            nn.Linear(hidden_dim, 4),
        )

    @count_calls
    def forward(self, samples: torch.Tensor, weights: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(V, H, W, sample_dim) samples and (V,) barycentric weights -> rgb (3, H, W), q (H, W)."""
        views = samples.shape[0]
        mu, var = weighted_mean_var(samples, weights)
        context = torch.cat([mu, var], dim=-1).expand(views, *mu.shape[:-1], 2 * mu.shape[-1])
        out = self.view_mlp(torch.cat([samples, context], dim=-1))
        view_features, raw_weight = out[..., : self.feature_dim], out[..., self.feature_dim :]
        w = torch.sigmoid(raw_weight)
        w = w / (w.sum(dim=0, keepdim=True) + BLEND_EPS)
        pooled_mean = (w * view_features).sum(dim=0)
        pooled_var = (w * (view_features - pooled_mean) ** 2).sum(dim=0)
        out = torch.sigmoid(self.color_mlp(torch.cat([pooled_mean, pooled_var], dim=-1)))
        return out[..., :3].permute(2, 0, 1), out[..., 3]


def blend(
    network: BlendNetwork, samples: torch.Tensor, weights: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    return network(samples, weights)
