"""
PNG encode/decode between Pillow images and (C, H, W) float tensors in [0, 1].
"""
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from ..errors import SceneLoadError


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] values with round(255 x)."""
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(path: str | Path, image: torch.Tensor | np.ndarray) -> None:
    """Save a (3, H, W) color or (H, W) grayscale image."""
    values = image.detach().cpu().double().numpy() if isinstance(image, torch.Tensor) else np.asarray(image)
    if values.ndim == 3:
        values = values.transpose(1, 2, 0)
    Image.fromarray(to_uint8(values)).save(path)


def load_png(path: str | Path, background: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> torch.Tensor:
    """Load an image as a (3, H, W) float32 tensor; alpha is composited over `background`."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("RGBA", "LA") or (img.mode == "P" and "transparency" in img.info):
                rgba = np.asarray(img.convert("RGBA"), dtype=np.float32) / 255.0
                alpha = rgba[..., 3:]
                rgb = rgba[..., :3] * alpha + np.asarray(background, dtype=np.float32) * (1.0 - alpha)
            else:
                rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise SceneLoadError(f"Image not found: {path}")
    except (UnidentifiedImageError, OSError) as e:
        raise SceneLoadError(f"Unreadable image {path}: {e}")
    return torch.from_numpy(np.ascontiguousarray(rgb.transpose(2, 0, 1)))
