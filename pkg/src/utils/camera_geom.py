"""
Pinhole camera model.

Conventions: camera-to-world poses, camera looks along +z with x right and
y down, pixel centers at integer coordinates.
"""
import numpy as np
import torch
import torch.nn.functional as F

from ..errors import RejectedInputError
from ..types import CameraIntrinsics, CameraPose, RayBundle
from .constants import Z_EPS


def pixel_rays(intrinsics: CameraIntrinsics, pose: CameraPose, pixels: torch.Tensor) -> RayBundle:
    """Rays through arbitrary continuous pixel coordinates.

    Args:
        intrinsics: Intrinsics of the grid the pixels live on.
        pose: Camera-to-world pose.
        pixels: (..., 2) tensor of (u, v) coordinates.

    Returns:
        RayBundle whose origins/directions have the leading shape of `pixels`.
    """
    rotation, translation = pose.rotation, pose.translation
    pixels = pixels.to(dtype=rotation.dtype, device=rotation.device)
    u, v = pixels[..., 0], pixels[..., 1]
    dirs_cam = torch.stack(
        [(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, torch.ones_like(u)],
        dim=-1,
    )
    directions = F.normalize(dirs_cam @ rotation.T, dim=-1)
    origins = translation.expand_as(directions)
    return RayBundle(origins=origins, directions=directions)


def generate_rays(intrinsics: CameraIntrinsics, pose: CameraPose, scale: int = 1) -> RayBundle:
    """One ray per pixel of the image downsampled by `scale`."""
    if scale < 1 or intrinsics.width % scale or intrinsics.height % scale:
        raise RejectedInputError(
            f"Scale {scale} does not divide resolution {intrinsics.width}x{intrinsics.height}"
        )
    scaled = intrinsics.scaled(scale)
    device = pose.rotation.device
    dtype = pose.rotation.dtype
    u, v = torch.meshgrid(
        torch.arange(scaled.width, dtype=dtype, device=device),
        torch.arange(scaled.height, dtype=dtype, device=device),
        indexing="xy",
    )
    return pixel_rays(scaled, pose, torch.stack([u, v], dim=-1))


def point_at(origins: torch.Tensor, directions: torch.Tensor, t: torch.Tensor | float) -> torch.Tensor:
    """r(t) = o + t d, broadcasting t over the trailing vector dimension."""
    t = torch.as_tensor(t, dtype=directions.dtype, device=directions.device)
    return origins + t[..., None] * directions


def project_point(
    x: torch.Tensor, intrinsics: CameraIntrinsics, pose: CameraPose
) -> tuple[torch.Tensor, torch.Tensor]:
    """Project world points into a camera.

    Returns:
        (uv, in_frustum): continuous pixel coordinates (..., 2) and a boolean
        mask that is False behind the camera or outside the image.
    """
    x_cam = (x - pose.translation) @ pose.rotation
    z = x_cam[..., 2]
    z_safe = z.clamp(min=Z_EPS)
    u = intrinsics.fx * x_cam[..., 0] / z_safe + intrinsics.cx
    v = intrinsics.fy * x_cam[..., 1] / z_safe + intrinsics.cy
    in_frustum = (z > Z_EPS) & (u >= 0) & (u < intrinsics.width) & (v >= 0) & (v < intrinsics.height)
    return torch.stack([u, v], dim=-1), in_frustum


def bilinear_sample(feature_map: torch.Tensor, coords: torch.Tensor) -> torch.Tensor:
    """Bilinearly sample a (C, H, W) map at (..., 2) pixel coordinates.

    Queries outside [0, W-1] x [0, H-1] return zeros. Differentiable with
    respect to both the map and the coordinates.
    """
    channels, height, width = feature_map.shape
    lead = coords.shape[:-1]
    flat = coords.reshape(1, 1, -1, 2).to(feature_map.dtype)
    u, v = flat[..., 0], flat[..., 1]
    grid = torch.stack(
        [2.0 * u / max(width - 1, 1) - 1.0, 2.0 * v / max(height - 1, 1) - 1.0], dim=-1
    )
    sampled = F.grid_sample(
        feature_map[None], grid, mode="bilinear", padding_mode="zeros", align_corners=True
    )  # (1, C, 1, K)
    inside = (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)  # (1, 1, K)
    sampled = sampled * inside[:, None].to(sampled.dtype)
    return sampled[0, :, 0].T.reshape(*lead, channels)


def look_at_pose(eye, target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0)) -> CameraPose:
    """Camera-to-world pose at `eye` looking at `target`, world `up` appearing up in the image."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise RejectedInputError("Viewing direction is parallel to the up vector")
    right /= norm
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=1)
    return CameraPose(rotation=torch.from_numpy(rotation), translation=torch.from_numpy(eye.copy()))
