"""
Differentiable coarse-to-fine sphere tracer.

At every step the current ray samples are projected into the working-set
views, their features are pooled into weighted mean/variance, refined by
convolutions over the ray image, and a per-pixel recurrent cell predicts the
signed jump along each ray.
"""
import logging
from collections.abc import Callable, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import RejectedInputError
from ..types import AggregatedFeature, Camera, MarchResult, MarchSchedule, MarchState, PosEncodingConfig
from ..utils.camera_geom import bilinear_sample, generate_rays, point_at, project_point
from ..utils.constants import (
    FEATURE_DIM,
    RECURRENT_HIDDEN,
    REFINED_DIM,
    T_INIT_FACTOR,
    T_MAX_FACTOR,
)
from ..utils.decorators import count_calls
from .encoders import PositionalEncoding

logger = logging.getLogger("neuralmvs.ray_marcher")

StepOracle = Callable[[torch.Tensor], torch.Tensor]


def weighted_mean_var(features: torch.Tensor, weights: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Weighted mean and variance over the leading (view) dimension."""
    w = weights.to(features.dtype).reshape(-1, *([1] * (features.dim() - 1)))
    mean = (w * features).sum(dim=0)
    var = (w * (features - mean) ** 2).sum(dim=0)
    return mean, var


def sample_view_features(
    points: torch.Tensor, maps: torch.Tensor, cameras: Sequence[Camera]
) -> torch.Tensor:
    """Sample (V, C, H, W) maps at world points (..., 3) seen from each camera -> (V, ..., C).

    Samples behind a camera or outside its image are zero.
    """
    sampled = []
    for view_map, camera in zip(maps, cameras):
        uv, in_frustum = project_point(points, camera.intrinsics, camera.pose)
        values = bilinear_sample(view_map, uv)
        sampled.append(values * in_frustum[..., None].to(values.dtype))
    return torch.stack(sampled)


def aggregate(
    x_map: torch.Tensor,
    weights: torch.Tensor,
    feature_maps: torch.Tensor,
    cameras: Sequence[Camera],
    encoding: PositionalEncoding | None = None,
    center: torch.Tensor | None = None,
    scale: float = 1.0,
) -> AggregatedFeature:
    """g = [mu, var, gamma(x)] at every ray sample of `x_map` (H', W', 3)."""
    features = sample_view_features(x_map, feature_maps, cameras)
    mu, var = weighted_mean_var(features, weights)
    posenc = None
    if encoding is not None:
        normalized = x_map if center is None else (x_map - center) * scale
        posenc = encoding(normalized)
    return AggregatedFeature(mu=mu, var=var, posenc=posenc)


class SpatialRefiner(nn.Module):
    """Two convolutions over the ray image; kernel 3 shares context between neighbouring rays."""

    def __init__(self, in_dim: int, out_dim: int = REFINED_DIM, kernel_size: int = 3):
        super().__init__()
        padding = kernel_size // 2
        self.net = nn.Sequential(
            nn.Conv2d(in_dim, out_dim, kernel_size, padding=padding),
            nn.GELU(),
            nn.Conv2d(out_dim, out_dim, kernel_size, padding=padding),
            nn.GELU(),
        )

    def forward(self, g_map: torch.Tensor) -> torch.Tensor:
        """(H', W', C) -> (H', W', out_dim)."""
        return self.net(g_map.permute(2, 0, 1)[None])[0].permute(1, 2, 0)


class StepPredictor(nn.Module):
    """Per-pixel LSTM cell followed by a linear head producing the jump delta."""

    def __init__(self, in_dim: int = REFINED_DIM, hidden_dim: int = RECURRENT_HIDDEN):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.cell = nn.LSTMCell(in_dim, hidden_dim)
        self.head = nn.Linear(hidden_dim, 1)

    @count_calls
    def forward(
        self, refined: torch.Tensor, hidden: torch.Tensor, cell: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        height, width, channels = refined.shape
        hidden, cell = self.cell(refined.reshape(height * width, channels), (hidden, cell))
        delta = self.head(hidden).reshape(height, width)
        return delta, hidden, cell


def predict_step(
    predictor: StepPredictor, refined: torch.Tensor, state: MarchState, t_min: float, t_max: float
) -> tuple[torch.Tensor, MarchState]:
    """One recurrent update: t <- clamp(t + delta, t_min, t_max)."""
    if refined.shape[:2] != state.t.shape:
        raise RejectedInputError(
            f"Refined features {tuple(refined.shape[:2])} do not match march level {tuple(state.t.shape)}"
        )
    delta, hidden, cell = predictor(refined, state.hidden, state.cell)
    t = (state.t + delta).clamp(t_min, t_max)
    return delta, MarchState(t=t, hidden=hidden, cell=cell, level=state.level)


def _upsample(values: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bilinear resize of a (N, C, H, W) tensor to `size`."""
    return F.interpolate(values, size=size, mode="bilinear", align_corners=False)


class RayMarcher(nn.Module):
    def __init__(
        self,
        schedule: MarchSchedule = MarchSchedule(),
        posenc: PosEncodingConfig | None = PosEncodingConfig(),
        conv_kernel: int = 3,
        reset_recurrent_between_levels: bool = False,
        feature_dim: int = FEATURE_DIM,
    ):
        super().__init__()
        self.schedule = schedule
        self.reset_recurrent = reset_recurrent_between_levels
        self.encoding = PositionalEncoding(posenc) if posenc is not None else None
        in_dim = 2 * feature_dim + (self.encoding.output_dim if self.encoding is not None else 0)
        self.refiner = SpatialRefiner(in_dim, REFINED_DIM, conv_kernel)
        self.stepper = StepPredictor(REFINED_DIM, RECURRENT_HIDDEN)

    def _initial_state(self, shape: tuple[int, int], t_init: float, like: torch.Tensor) -> MarchState:
        height, width = shape
        zeros = like.new_zeros(height * width, self.stepper.hidden_dim)
        return MarchState(t=like.new_full(shape, t_init), hidden=zeros, cell=zeros.clone(), level=0)

    def _next_level_state(self, state: MarchState, shape: tuple[int, int]) -> MarchState:
        height, width = state.t.shape
        t = _upsample(state.t[None, None], shape)[0, 0]
        if self.reset_recurrent:
            hidden = state.hidden.new_zeros(shape[0] * shape[1], state.hidden.shape[1])
            cell = hidden.clone()
        else:
            def resize(values):
                grid = values.T.reshape(1, -1, height, width)
                return _upsample(grid, shape)[0].reshape(values.shape[1], -1).T
            hidden, cell = resize(state.hidden), resize(state.cell)
        return MarchState(t=t, hidden=hidden, cell=cell, level=state.level + 1)

    def forward(
        self,
        target: Camera,
        weights: torch.Tensor,
        feature_maps: torch.Tensor | None,
        cameras: Sequence[Camera],
        near: float,
        far: float,
        center: torch.Tensor | None = None,
        scale: float = 1.0,
        step_oracle: StepOracle | None = None,
    ) -> MarchResult:
        """March every pixel of `target` through the schedule.

        With `step_oracle` the learned predictor is replaced by a callable
        returning the signed jump for world points (H', W', 3); feature maps
        may then be None.
        """
        intrinsics = target.intrinsics
        coarsest = self.schedule.coarsest_scale
        if intrinsics.width % coarsest or intrinsics.height % coarsest:
            raise RejectedInputError(
                f"Target {intrinsics.width}x{intrinsics.height} must be divisible by {coarsest}"
            )
        t_min, t_max, t_init = 0.0, T_MAX_FACTOR * far, T_INIT_FACTOR * far

        def features_at(x: torch.Tensor) -> AggregatedFeature:
            return aggregate(x, weights, feature_maps, cameras, self.encoding, center, scale)

        state = None
        rays = None
        for level, (level_scale, steps) in enumerate(self.schedule.levels):
            rays = generate_rays(intrinsics, target.pose, level_scale)
            shape = rays.resolution
            if state is None:
                state = self._initial_state(shape, t_init, rays.directions)
            else:
                state = self._next_level_state(state, shape)
            for _ in range(steps):
                x = point_at(rays.origins, rays.directions, state.t)
                if step_oracle is not None:
                    t = (state.t + step_oracle(x)).clamp(t_min, t_max)
                    state = MarchState(t=t, hidden=state.hidden, cell=state.cell, level=level)
                    continue
                refined = self.refiner(features_at(x).combined)
                _, state = predict_step(self.stepper, refined, state, t_min, t_max)
            logger.debug(f"Level {level}: {shape[1]}x{shape[0]} rays, {steps} steps")

        surface = point_at(rays.origins, rays.directions, state.t)
        features = features_at(surface) if feature_maps is not None else None
        return MarchResult(depth=state.t, features=features, state=state, surface_points=surface)


def sphere_sdf(center=(0.0, 0.0, 0.0), radius: float = 1.0) -> StepOracle:
    """Analytic signed distance of a sphere, usable as a step oracle."""
    def sdf(x: torch.Tensor) -> torch.Tensor:
        c = torch.as_tensor(center, dtype=x.dtype, device=x.device)
        return torch.linalg.norm(x - c, dim=-1) - radius
    return sdf


def union_sdf(*sdfs: StepOracle) -> StepOracle:
    def sdf(x: torch.Tensor) -> torch.Tensor:
        return torch.stack([f(x) for f in sdfs]).min(dim=0).values
    return sdf
