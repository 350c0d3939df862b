"""
Shared type definitions for NeuralMVS.
"""
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch

from .errors import RejectedConfigurationError, RejectedInputError
from .utils.constants import DEFAULT_SCHEDULE, ViewConfiguration


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise RejectedInputError(f"Focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise RejectedInputError(
                f"Principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    def scaled(self, scale: int) -> "CameraIntrinsics":
        """Intrinsics of the grid downsampled by an integer factor."""
        if self.width % scale or self.height % scale:
            raise RejectedInputError(f"Scale {scale} does not divide resolution {self.width}x{self.height}")
        return CameraIntrinsics(
            fx=self.fx / scale,
            fy=self.fy / scale,
            cx=self.cx / scale,
            cy=self.cy / scale,
            width=self.width // scale,
            height=self.height // scale,
        )


@dataclass
class CameraPose:
    """Camera-to-world rigid transform (x right, y down, z forward)."""
    rotation: torch.Tensor  # (3, 3)
    translation: torch.Tensor  # (3,) camera origin in world units

    def validate(self, tol: float = 1e-6) -> None:
        r = self.rotation.detach().double()
        eye = torch.eye(3, dtype=torch.float64, device=r.device)
        if not torch.allclose(r.T @ r, eye, atol=tol):
            raise RejectedInputError("Rotation is not orthonormal")
        det = torch.linalg.det(r).item()
        if abs(det - 1.0) > tol:
            raise RejectedInputError(f"Rotation determinant is {det:.6f}, expected +1")

    @property
    def center(self) -> torch.Tensor:
        return self.translation

    def to(self, dtype: torch.dtype | None = None, device: torch.device | str | None = None) -> "CameraPose":
        return CameraPose(self.rotation.to(device=device, dtype=dtype), self.translation.to(device=device, dtype=dtype))

    @classmethod
    def from_matrix(cls, values: list[float] | np.ndarray | torch.Tensor) -> "CameraPose":
        """Build from a 4x4 (or 16 row-major values) camera-to-world matrix."""
        m = torch.as_tensor(np.asarray(values, dtype=np.float64)).reshape(4, 4)
        return cls(rotation=m[:3, :3].clone(), translation=m[:3, 3].clone())

    def to_matrix(self) -> torch.Tensor:
        m = torch.eye(4, dtype=self.rotation.dtype, device=self.rotation.device)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass
class Camera:
    """Intrinsics paired with a pose."""
    intrinsics: CameraIntrinsics
    pose: CameraPose

    def to(self, dtype: torch.dtype | None = None, device: torch.device | str | None = None) -> "Camera":
        return Camera(self.intrinsics, self.pose.to(dtype=dtype, device=device))


@dataclass
class RayBundle:
    """Per-pixel rays of one resolution level."""
    origins: torch.Tensor  # (H', W', 3)
    directions: torch.Tensor  # (H', W', 3), unit norm

    @property
    def resolution(self) -> tuple[int, int]:
        return tuple(self.directions.shape[:2])


@dataclass
class WorkingSet:
    """Three source views and their barycentric weights."""
    view_ids: tuple[int, int, int]
    weights: tuple[float, float, float]


@dataclass
class ViewConstellation:
    """Camera centers, their 2D projection and Delaunay triangulation."""
    centers: np.ndarray  # (N, 3)
    configuration: ViewConfiguration
    projected: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (M, 3) indices into centers
    projector: Any  # callable mapping (K, 3) -> (K, 2)
    view_ids: tuple[int, ...] = ()  # dataset ids of the rows in centers


@dataclass
class FeatureMap:
    """Per-pixel features of one source view."""
    values: torch.Tensor  # (d, H, W)
    source_view_id: int


@dataclass(frozen=True)
class PosEncodingConfig:
    num_frequencies: int = 10
    include_input: bool = True

    def __post_init__(self):
        if self.num_frequencies < 0:
            raise RejectedConfigurationError("num_frequencies must be >= 0")

    def output_dim(self, input_dim: int = 3) -> int:
        return input_dim * (2 * self.num_frequencies + (1 if self.include_input else 0))


@dataclass
class MarchState:
    """Per-pixel sphere tracer state at one resolution level."""
    t: torch.Tensor  # (H', W')
    hidden: torch.Tensor  # (H'*W', hidden)
    cell: torch.Tensor  # (H'*W', hidden)
    level: int = 0


@dataclass
class AggregatedFeature:
    """Multi-view statistics at ray samples, g = [mu, var, posenc]."""
    mu: torch.Tensor  # (H', W', d)
    var: torch.Tensor  # (H', W', d)
    posenc: torch.Tensor | None = None  # (H', W', dim(posenc)); None when positional encoding is disabled

    @property
    def combined(self) -> torch.Tensor:
        parts = [self.mu, self.var]
        if self.posenc is not None:
            parts.append(self.posenc)
        return torch.cat(parts, dim=-1)


@dataclass(frozen=True)
class MarchSchedule:
    """Coarse-to-fine (scale, steps) levels."""
    levels: tuple[tuple[int, int], ...] = DEFAULT_SCHEDULE

    def __post_init__(self):
        levels = tuple((int(s), int(n)) for s, n in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise RejectedConfigurationError("Schedule needs at least one level")
        scales = [s for s, _ in levels]
        if any(a <= b for a, b in zip(scales, scales[1:])):
            raise RejectedConfigurationError(f"Schedule scales must strictly decrease, got {scales}")
        if scales[-1] != 1:
            raise RejectedConfigurationError(f"Schedule must end at scale 1, got {scales[-1]}")
        if any(n < 0 for _, n in levels):
            raise RejectedConfigurationError("Step counts must be non-negative")

    @property
    def total_steps(self) -> int:
        return sum(n for _, n in self.levels)

    @property
    def coarsest_scale(self) -> int:
        return self.levels[0][0]


@dataclass
class MarchResult:
    """Output of a full coarse-to-fine march."""
    depth: torch.Tensor  # (H, W)
    features: AggregatedFeature
    state: MarchState
    surface_points: torch.Tensor  # (H, W, 3)


@dataclass
class RenderOutput:
    """Synthesized view: color (3, H, W), depth (H, W), confidence (H, W)."""
    color: torch.Tensor
    depth: torch.Tensor
    confidence: torch.Tensor


@dataclass(frozen=True)
class LossConfig:
    lambda_: float = 0.1
    norm: str = "rms"  # "rms" | "squared"

    def __post_init__(self):
        if self.lambda_ < 0:
            raise RejectedConfigurationError(f"lambda must be >= 0, got {self.lambda_}")
        if self.norm not in ("rms", "squared"):
            raise RejectedConfigurationError(f"Unknown confidence norm: {self.norm}")


@dataclass
class SceneView:
    """One posed image, image in [0, 1] with shape (3, H, W)."""
    image: torch.Tensor
    camera: Camera
    name: str = ""


@dataclass(frozen=True)
class SceneDataset:
    """Posed images with depth bounds, splits and normalisation."""
    views: tuple[SceneView, ...]
    near: float
    far: float
    splits: dict[str, tuple[int, ...]] = field(default_factory=dict)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        if len(self.views) < 4:
            raise RejectedInputError(f"A scene needs at least 4 views, got {len(self.views)}")
        if not self.near < self.far:
            raise RejectedInputError(f"near ({self.near}) must be < far ({self.far})")
        shapes = {tuple(v.image.shape) for v in self.views}
        if len(shapes) != 1:
            raise RejectedInputError(f"All views must share resolution, got {sorted(shapes)}")

    @property
    def train_ids(self) -> tuple[int, ...]:
        return self.splits.get("train", tuple(range(len(self.views))))

    @property
    def test_ids(self) -> tuple[int, ...]:
        return self.splits.get("test", ())

    @property
    def resolution(self) -> tuple[int, int]:
        """(height, width)."""
        return tuple(self.views[0].image.shape[-2:])

    def centers(self, ids: tuple[int, ...] | list[int] | None = None) -> np.ndarray:
        ids = range(len(self.views)) if ids is None else ids
        return np.stack([self.views[i].camera.pose.center.detach().cpu().double().numpy() for i in ids])


@dataclass(frozen=True)
class ToySceneSpec:
    primitive: str = "sphere"  # sphere | plane | two-spheres
    cell_size: float = 0.25
    num_views: int = 20
    configuration: ViewConfiguration = ViewConfiguration.HEMISPHERE
    resolution: tuple[int, int] = (64, 64)  # (width, height)
    seed: int = 0

    def __post_init__(self):
        if self.primitive not in ("sphere", "plane", "two-spheres"):
            raise RejectedInputError(f"Unknown primitive: {self.primitive}")
        if self.num_views < 4:
            raise RejectedInputError(f"num_views must be >= 4, got {self.num_views}")
        width, height = self.resolution
        if width % 8 or height % 8 or width <= 0 or height <= 0:
            raise RejectedInputError(f"Resolution must be divisible by 8, got {width}x{height}")
        if self.cell_size <= 0:
            raise RejectedInputError("cell_size must be positive")


@dataclass
class Checkpoint:
    """Model and optimizer state with the config that produced them."""
    model_state: dict[str, Any]
    optimizer_state: dict[str, Any] | None
    step: int
    config: dict[str, Any]
    version: str


@dataclass
class TrainResult:
    """Final checkpoint plus the per-step history records."""
    checkpoint: Checkpoint
    history: list[dict[str, Any]] = field(default_factory=list)


@dataclass
class CommandResult:
    """Outcome of one CLI command."""
    exit_code: int = 0
    artifacts: list[str] = field(default_factory=list)
    message: str = ""
