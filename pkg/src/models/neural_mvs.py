from collections.abc import Sequence

import torch
import torch.nn as nn

from ..types import Camera, MarchSchedule, PosEncodingConfig, RenderOutput
from .encoders import UNetEncoder
from .ray_marcher import RayMarcher, StepOracle
from .renderer import BlendNetwork, sample_color_features


class NeuralMVS(nn.Module):
    """
    Full single-pass pipeline for one target view: shared U-Net features of
    the working set, coarse-to-fine march, color sampling and blending.
    """

    def __init__(
        self,
        schedule: MarchSchedule = MarchSchedule(),
        posenc: PosEncodingConfig | None = PosEncodingConfig(),
        conv_kernel: int = 3,
        reset_recurrent_between_levels: bool = False,
    ):
        super().__init__()
        self.encoder = UNetEncoder()
        self.marcher = RayMarcher(
            schedule=schedule,
            posenc=posenc,
            conv_kernel=conv_kernel,
            reset_recurrent_between_levels=reset_recurrent_between_levels,
        )
        self.blender = BlendNetwork()

    @classmethod
    def from_config(cls, cfg) -> "NeuralMVS":
        """Build from a TrainConfig."""
        return cls(
            schedule=cfg.march_schedule,
            posenc=cfg.posenc_config if cfg.toggles.use_posenc else None,
            conv_kernel=cfg.toggles.conv_kernel,
            reset_recurrent_between_levels=cfg.toggles.reset_recurrent_between_levels,
        )

    def parameter_groups(self) -> dict[str, nn.Module]:
        return {
            "encoder": self.encoder,
            "refiner": self.marcher.refiner,
            "stepper": self.marcher.stepper,
            "view_mlp": self.blender.view_mlp,
            "color_mlp": self.blender.color_mlp,
        }

    def forward(
        self,
        target: Camera,
        images: torch.Tensor,
        cameras: Sequence[Camera],
        weights: Sequence[float] | torch.Tensor,
        near: float,
        far: float,
        center: torch.Tensor | None = None,
        scale: float = 1.0,
        step_oracle: StepOracle | None = None,
    ) -> RenderOutput:
        """
        Args:
            target: Camera of the view to synthesize.
            images: (3, 3, H, W) working-set images in [0, 1].
            cameras: Working-set cameras, same order as `images`.
            weights: Barycentric weights of the working set.
            near, far: Scene depth bounds.
            center, scale: Bounding-sphere normalisation applied before positional encoding.
            step_oracle: Optional analytic jump replacing the learned predictor.
        """
        weights = torch.as_tensor(weights, dtype=images.dtype, device=images.device)
        feature_maps = self.encoder(images)
        march = self.marcher(
            target, weights, feature_maps, cameras, near, far, center, scale, step_oracle=step_oracle
        )
        samples = sample_color_features(march.surface_points, images, feature_maps, cameras)
        color, confidence = self.blender(samples, weights)
        return RenderOutput(color=color, depth=march.depth, confidence=confidence)
