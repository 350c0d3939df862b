"""
Portable Float Map codec for single-channel depth maps.
"""
import re
from pathlib import Path

import numpy as np

from ..errors import SceneLoadError

_DIMENSIONS = re.compile(rb"^\s*(\d+)\s+(\d+)\s*$")


def write_pfm(path: str | Path, values: np.ndarray) -> None:
    """Write an (H, W) map as little-endian float32, rows bottom-to-top."""
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError(f"PFM depth maps must be 2D, got shape {values.shape}")
    height, width = values.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(values[::-1]).tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a grayscale PFM into an (H, W) float32 array, top row first."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            header = f.readline().strip()
            dims = _DIMENSIONS.match(f.readline())
            scale_line = f.readline().strip()
            data = f.read()
    except OSError as e:
        raise SceneLoadError(f"Cannot read PFM {path}: {e}")

    if header != b"Pf":
        raise SceneLoadError(f"{path} is not a grayscale PFM (header {header!r})")
    if dims is None:
        raise SceneLoadError(f"{path} has a malformed dimension line")
    width, height = int(dims.group(1)), int(dims.group(2))
    try:
        scale = float(scale_line)
    except ValueError:
        raise SceneLoadError(f"{path} has a malformed scale line {scale_line!r}")

    dtype = "<f4" if scale < 0 else ">f4"
    expected = width * height * 4
    if len(data) < expected:
        raise SceneLoadError(f"{path} is truncated: {len(data)} of {expected} bytes")
    values = np.frombuffer(data[:expected], dtype=dtype).reshape(height, width)
    return values[::-1].astype(np.float32)
