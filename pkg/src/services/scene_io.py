"""
Scene loading, toy-scene generation and render artifact output.

Native layout::

    scene/
      cameras.json   {"near", "far", "views": [{"file", "fx", "fy", "cx", "cy", "pose"[, "split"]}]}
      images/        PNG files named by "file"
      depth_gt/      ground-truth PFMs (toy scenes only)
"""
import json
import logging
import math
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import RejectedInputError, SceneLoadError
from ..types import (
    Camera,
    CameraIntrinsics,
    CameraPose,
    RenderOutput,
    SceneDataset,
    SceneView,
    ToySceneSpec,
)
from ..utils.camera_geom import generate_rays, look_at_pose
from ..utils.constants import (
    BACKGROUND_COLOR,
    NERF_SYNTHETIC_FAR,
    NERF_SYNTHETIC_NEAR,
    PAD_MULTIPLE,
    ROTATION_TOLERANCE,
    TEST_EVERY,
    TOY_CAMERA_DISTANCE,
    TOY_FOV_DEGREES,
    TOY_SCENE_RADIUS,
    ViewConfiguration,
)
from ..utils.image_io import load_png, save_png, to_uint8
from ..utils.pfm import write_pfm

logger = logging.getLogger("neuralmvs.scene_io")

CAMERAS_FILE = "cameras.json"
IMAGES_DIR = "images"
DEPTH_DIR = "depth_gt"

NERF_TO_INTERNAL = np.diag([1.0, -1.0, -1.0])
TWO_SPHERES = (((-0.6, 0.0, 0.0), 0.6), ((0.7, 0.2, 0.3), 0.5))
CHECKER_COLORS = (np.array([0.9, 0.55, 0.2]), np.array([0.15, 0.35, 0.8]))
PLANE_HALF_SIZE = 1.0


# --- shared helpers ---

def _pad_to_multiple(
    image: torch.Tensor, source: str = "image", multiple: int = PAD_MULTIPLE
) -> tuple[torch.Tensor, int, int]:
    """Reflect-pad (3, H, W) symmetrically; returns the image and the (left, top) offsets."""
    height, width = image.shape[-2:]
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if not pad_h and not pad_w:
        return image, 0, 0
    left, top = pad_w // 2, pad_h // 2
    # Reflection cannot pad by as much as the side it mirrors
    if pad_w - left >= width or pad_h - top >= height:
        raise SceneLoadError(
            f"{source}: image {width}x{height} is too small to pad to a multiple of {multiple}"
        )
    padded = F.pad(image[None], (left, pad_w - left, top, pad_h - top), mode="reflect")[0]
    return padded, left, top


def _validated_pose(matrix, source: str) -> CameraPose:
    try:
        pose = CameraPose.from_matrix(matrix)
    except ValueError as e:
        raise SceneLoadError(f"{source}: pose must be 16 numbers: {e}")
    try:
        pose.validate(ROTATION_TOLERANCE)
    except RejectedInputError as e:
        raise SceneLoadError(f"{source}: {e}")
    return pose


def _auto_splits(num_views: int) -> dict[str, tuple[int, ...]]:
    test = tuple(i for i in range(num_views) if i % TEST_EVERY == 0)
    train = tuple(i for i in range(num_views) if i % TEST_EVERY != 0)
    return {"train": train, "test": test}


def bounding_normalization(cameras: list[Camera], near: float, far: float) -> tuple[tuple[float, ...], float]:
    """Center and scale mapping the region seen by the rig into the unit ball.

    The center is the mean of the mid-depth points along each optical axis;
    the scale is the inverse of the largest camera distance to it.
    """
    mid = 0.5 * (near + far)
    origins = np.stack([c.pose.translation.detach().double().numpy() for c in cameras])
    axes = np.stack([c.pose.rotation.detach().double().numpy()[:, 2] for c in cameras])
    center = (origins + mid * axes).mean(axis=0)
    radius = np.linalg.norm(origins - center, axis=1).max()
    scale = 1.0 / radius if radius > 1e-12 else 1.0
    return tuple(float(v) for v in center), float(scale)


def _build_dataset(views: list[SceneView], near: float, far: float, splits: dict) -> SceneDataset:
    center, scale = bounding_normalization([v.camera for v in views], near, far)
    return SceneDataset(views=tuple(views), near=near, far=far, splits=splits, center=center, scale=scale)


# --- native format ---

def load_native(directory: str | Path, split: str = "auto") -> SceneDataset:
    """
    Load a scene in the native cameras.json + images/ layout.

    Args:
        directory: Scene directory.
        split: "auto" uses per-view "split" fields when present, otherwise holds
            out every 8th view; "all" marks every view as training.
    """
    directory = Path(directory)
    cameras_path = directory / CAMERAS_FILE
    if not cameras_path.is_file():
        raise SceneLoadError(f"Missing {CAMERAS_FILE} in {directory}")
    try:
        meta = json.loads(cameras_path.read_text())
        near, far = float(meta["near"]), float(meta["far"])
        entries = meta["views"]
    except json.JSONDecodeError as e:
        raise SceneLoadError(f"{cameras_path} is not valid JSON: {e}")
    except (KeyError, TypeError, ValueError) as e:
        raise SceneLoadError(f"{cameras_path} is missing a required field: {e}")

    views = []
    declared_splits = {}
    padded_count = 0
    for index, entry in enumerate(entries):
        source = f"{cameras_path} view {index}"
        try:
            image = load_png(directory / IMAGES_DIR / entry["file"])
            fx, fy, cx, cy = (float(entry[k]) for k in ("fx", "fy", "cx", "cy"))
            pose = _validated_pose(entry["pose"], source)
        except (KeyError, TypeError) as e:
            raise SceneLoadError(f"{source} is missing a required field: {e}")
        raw_shape = image.shape
        image, left, top = _pad_to_multiple(image, source)
        padded_count += image.shape != raw_shape
        height, width = image.shape[-2:]
        try:
            intrinsics = CameraIntrinsics(fx, fy, cx + left, cy + top, width, height)
        except RejectedInputError as e:
            raise SceneLoadError(f"{source}: {e}")
        views.append(SceneView(image=image, camera=Camera(intrinsics, pose), name=Path(entry["file"]).stem))
        if "split" in entry:
            declared_splits[index] = entry["split"]

    if padded_count:
        logger.warning(f"Padded {padded_count} images of {directory} to a multiple of {PAD_MULTIPLE}")

    if split == "all":
        splits = {"train": tuple(range(len(views)))}
    elif split == "auto" and declared_splits and len(declared_splits) == len(views):
        splits = {
            "train": tuple(i for i, s in sorted(declared_splits.items()) if s == "train"),
            "test": tuple(i for i, s in sorted(declared_splits.items()) if s == "test"),
        }
    elif split == "auto":
        splits = _auto_splits(len(views))
    else:
        raise RejectedInputError(f"Unknown split mode: {split}")

    try:
        dataset = _build_dataset(views, near, far, splits)
    except RejectedInputError as e:
        raise SceneLoadError(f"{directory}: {e}")
    logger.info(f"Loaded {len(views)} views from {directory} ({len(dataset.train_ids)} train, {len(dataset.test_ids)} test)")
    return dataset


def _view_file(view: SceneView, index: int) -> str:
    return f"{view.name or f'view_{index:03d}'}.png"


def save_native(dataset: SceneDataset, directory: str | Path) -> list[str]:
    """Write `dataset` in the native layout; returns the written paths."""
    directory = Path(directory)
    (directory / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
    test_ids = set(dataset.test_ids)
    has_splits = bool(dataset.splits)

    written = []
    entries = []
    for index, view in enumerate(dataset.views):
        file_name = _view_file(view, index)
        path = directory / IMAGES_DIR / file_name
        save_png(path, view.image)
        written.append(str(path))
        k = view.camera.intrinsics
        entry = {
            "file": file_name,
            "fx": float(k.fx),
            "fy": float(k.fy),
            "cx": float(k.cx),
            "cy": float(k.cy),
            "pose": [float(v) for v in view.camera.pose.to_matrix().detach().double().reshape(-1).tolist()],
        }
        if has_splits:
            entry["split"] = "test" if index in test_ids else "train"
        entries.append(entry)

    cameras_path = directory / CAMERAS_FILE
    cameras_path.write_text(json.dumps({"near": dataset.near, "far": dataset.far, "views": entries}, indent=2))
    written.append(str(cameras_path))
    return written


# --- NeRF-synthetic format ---

def focal_from_fov(width: int, camera_angle_x: float) -> float:
    return 0.5 * width / math.tan(0.5 * camera_angle_x)


def _read_transforms(directory: Path, split: str) -> dict:
    path = directory / f"transforms_{split}.json"
    if not path.is_file():
        raise SceneLoadError(f"Missing {path.name} in {directory}")
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SceneLoadError(f"{path} is not valid JSON: {e}")
    for key in ("camera_angle_x", "frames"):
        if key not in meta:
            raise SceneLoadError(f"{path} is missing '{key}'")
    return meta


def _load_nerf_frames(directory: Path, meta: dict, split: str, downscale: int) -> list[SceneView]:
    views = []
    for index, frame in enumerate(meta["frames"]):
        source = f"transforms_{split}.json frame {index}"
        try:
            file_path = Path(frame["file_path"])
            matrix = np.asarray(frame["transform_matrix"], dtype=np.float64)
        except KeyError as e:
            raise SceneLoadError(f"{source} is missing {e}")
        if not file_path.suffix:
            file_path = file_path.with_suffix(".png")
        image = load_png(directory / file_path, background=(1.0, 1.0, 1.0))
        if downscale > 1:
            image = F.interpolate(image[None], scale_factor=1.0 / downscale, mode="area")[0]
        raw_height, raw_width = image.shape[-2:]
        focal = focal_from_fov(raw_width, float(meta["camera_angle_x"]))
        image, left, top = _pad_to_multiple(image, source)

        if matrix.shape != (4, 4):
            raise SceneLoadError(f"{source}: transform_matrix must be 4x4")
        internal = matrix.copy()
        internal[:3, :3] = matrix[:3, :3] @ NERF_TO_INTERNAL
        pose = _validated_pose(internal, source)

        height, width = image.shape[-2:]
        intrinsics = CameraIntrinsics(
            focal, focal, raw_width / 2.0 + left, raw_height / 2.0 + top, width, height
        )
        views.append(SceneView(image=image, camera=Camera(intrinsics, pose), name=f"{split}_{file_path.stem}"))
    return views


def load_nerf_synthetic(directory: str | Path, split: str = "test", downscale: int = 1) -> SceneDataset:
    """
    Load a scene in the NeRF-synthetic transforms_{split}.json layout.

    "train" loads only the training frames, all marked as train. "val" and
    "test" load the training frames as sources and the requested frames as
    the held-out split.
    """
    directory = Path(directory)
    if split not in ("train", "val", "test"):
        raise RejectedInputError(f"Unknown NeRF-synthetic split: {split}")
    if downscale < 1:
        raise RejectedInputError(f"downscale must be >= 1, got {downscale}")

    train_meta = _read_transforms(directory, "train")
    views = _load_nerf_frames(directory, train_meta, "train", downscale)
    splits = {"train": tuple(range(len(views)))}
    if split != "train":
        held_out = _load_nerf_frames(directory, _read_transforms(directory, split), split, downscale)
        splits["test"] = tuple(range(len(views), len(views) + len(held_out)))
        views.extend(held_out)

    try:
        dataset = _build_dataset(views, NERF_SYNTHETIC_NEAR, NERF_SYNTHETIC_FAR, splits)
    except RejectedInputError as e:
        raise SceneLoadError(f"{directory}: {e}")
    logger.info(f"Loaded NeRF-synthetic scene {directory} ({len(views)} views, split={split})")
    return dataset


# --- toy scenes ---

def _toy_intrinsics(width: int, height: int) -> CameraIntrinsics:
    focal = 0.5 * width / math.tan(0.5 * math.radians(TOY_FOV_DEGREES))
    return CameraIntrinsics(focal, focal, width / 2.0, height / 2.0, width, height)


def toy_camera_poses(spec: ToySceneSpec) -> list[CameraPose]:
    """Hemisphere: Fibonacci spiral of radius 3 looking at the origin. Fronto-parallel: jittered grid on z = -3."""
    rng = np.random.default_rng(spec.seed)
    n = spec.num_views
    if spec.configuration == ViewConfiguration.HEMISPHERE:
        golden_angle = math.pi * (3.0 - math.sqrt(5.0))
        phase = rng.uniform(0.0, 2.0 * math.pi)
        poses = []
        for i in range(n):
            y = 1.0 - (i + 0.5) / n
            ring = math.sqrt(1.0 - y * y)
            phi = phase + i * golden_angle
            eye = TOY_CAMERA_DISTANCE * np.array([ring * math.cos(phi), y, ring * math.sin(phi)])
            poses.append(look_at_pose(eye))
        return poses

    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    xs = np.linspace(-1.0, 1.0, cols)
    ys = np.linspace(-1.0, 1.0, rows) if rows > 1 else np.zeros(1)
    jitter = rng.uniform(-0.05, 0.05, size=(n, 2))
    poses = []
    for i in range(n):
        x, y = xs[i % cols] + jitter[i, 0], ys[i // cols] + jitter[i, 1]
        eye = np.array([x, y, -TOY_CAMERA_DISTANCE])
        poses.append(CameraPose(rotation=torch.eye(3, dtype=torch.float64), translation=torch.from_numpy(eye)))
    return poses


def toy_depth_bounds(poses: list[CameraPose]) -> tuple[float, float]:
    distances = [float(np.linalg.norm(p.translation.numpy())) for p in poses]
    near = max(min(distances) - TOY_SCENE_RADIUS - 0.5, 0.1)
    far = max(distances) + TOY_SCENE_RADIUS + 0.5
    return near, far


def intersect_sphere(origins: np.ndarray, directions: np.ndarray, center, radius: float) -> np.ndarray:
    """Closest positive hit distance along unit rays; inf on a miss."""
    oc = origins - np.asarray(center, dtype=np.float64)
    b = (directions * oc).sum(axis=-1)
    c = (oc * oc).sum(axis=-1) - radius * radius
    disc = b * b - c
    root = np.sqrt(np.where(disc >= 0, disc, 0.0))
    near_t, far_t = -b - root, -b + root
    t = np.where(near_t > 1e-9, near_t, far_t)
    return np.where((disc >= 0) & (t > 1e-9), t, np.inf)


def intersect_square(origins: np.ndarray, directions: np.ndarray, axis: int, half_size: float) -> np.ndarray:
    """Hit distance with the square |u|, |v| <= half_size on the plane x[axis] = 0."""
    denom = directions[..., axis]
    safe = np.where(np.abs(denom) > 1e-12, denom, 1.0)
    t = -origins[..., axis] / safe
    hit = origins + t[..., None] * directions
    others = [k for k in range(3) if k != axis]
    inside = np.all(np.abs(hit[..., others]) <= half_size, axis=-1)
    return np.where((np.abs(denom) > 1e-12) & (t > 1e-9) & inside, t, np.inf)


def _plane_axis(configuration: ViewConfiguration) -> int:
    return 1 if configuration == ViewConfiguration.HEMISPHERE else 2


def trace_primitive(
    origins: np.ndarray, directions: np.ndarray, spec: ToySceneSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic closest hit for the scene's primitive -> (t, hit points); t is inf on a miss."""
    if spec.primitive == "sphere":
        t = intersect_sphere(origins, directions, (0.0, 0.0, 0.0), 1.0)
    elif spec.primitive == "two-spheres":
        t = np.minimum(*(intersect_sphere(origins, directions, c, r) for c, r in TWO_SPHERES))
    else:
        t = intersect_square(origins, directions, _plane_axis(spec.configuration), PLANE_HALF_SIZE)
    hits = origins + np.where(np.isfinite(t), t, 0.0)[..., None] * directions
    if spec.primitive == "plane":
        # Texture the plane by its in-plane coordinates only
        hits[..., _plane_axis(spec.configuration)] = 0.5 * spec.cell_size
    return t, hits


def checker_color(points: np.ndarray, cell_size: float) -> np.ndarray:
    parity = np.floor(points / cell_size).astype(np.int64).sum(axis=-1) % 2
    return np.where(parity[..., None] == 0, CHECKER_COLORS[0], CHECKER_COLORS[1])


def render_toy_view(camera: Camera, spec: ToySceneSpec, far: float) -> tuple[np.ndarray, np.ndarray]:
    """Image (H, W, 3) and ray-distance depth (H, W) of one toy view; misses get background and far."""
    rays = generate_rays(camera.intrinsics, camera.pose.to(torch.float64))
    origins, directions = rays.origins.numpy(), rays.directions.numpy()
    t, hits = trace_primitive(origins, directions, spec)
    hit = np.isfinite(t)
    color = np.where(hit[..., None], checker_color(hits, spec.cell_size), np.asarray(BACKGROUND_COLOR))
    depth = np.where(hit, t, far)
    return color, depth


def generate_toy_scene(
    spec: ToySceneSpec, out_dir: str | Path | None = None
) -> tuple[SceneDataset, list[np.ndarray]]:
    """
    Render a toy scene with the analytic tracer.

    Images are quantized exactly as they are stored on disk, so the returned
    dataset equals what load_native reads back from `out_dir`.

    Returns:
        The dataset and one ground-truth depth map (H, W) per view.
    """
    width, height = spec.resolution
    intrinsics = _toy_intrinsics(width, height)
    poses = toy_camera_poses(spec)
    near, far = toy_depth_bounds(poses)

    views = []
    depths = []
    for index, pose in enumerate(poses):
        camera = Camera(intrinsics, pose)
        color, depth = render_toy_view(camera, spec, far)
        image = torch.from_numpy(to_uint8(color).transpose(2, 0, 1).astype(np.float32) / 255.0)
        views.append(SceneView(image=image, camera=camera, name=f"view_{index:03d}"))
        depths.append(depth)

    dataset = _build_dataset(views, near, far, _auto_splits(len(views)))

    if out_dir is not None:
        out_dir = Path(out_dir)
        save_native(dataset, out_dir)
        (out_dir / DEPTH_DIR).mkdir(parents=True, exist_ok=True)
        for view, depth in zip(views, depths):
            write_pfm(out_dir / DEPTH_DIR / f"{view.name}.pfm", depth)
        logger.info(f"Wrote toy {spec.primitive} scene with {len(views)} views to {out_dir}")
    return dataset, depths


# --- render artifacts ---

def write_render(output: RenderOutput, out_dir: str | Path, name: str) -> list[str]:
    """Write {name}_color.png, {name}_depth.pfm and {name}_conf.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    color_path = out_dir / f"{name}_color.png"
    depth_path = out_dir / f"{name}_depth.pfm"
    conf_path = out_dir / f"{name}_conf.png"
    save_png(color_path, output.color)
    write_pfm(depth_path, output.depth.detach().cpu().double().numpy())
    save_png(conf_path, output.confidence)
    return [str(color_path), str(depth_path), str(conf_path)]


def load_scene(directory: str | Path) -> SceneDataset:
    """Native layout when cameras.json exists, otherwise the NeRF-synthetic layout with its test split."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Scene directory not found: {directory}")
    if (directory / CAMERAS_FILE).is_file():
        return load_native(directory)
    if (directory / "transforms_train.json").is_file():
        return load_nerf_synthetic(directory, "test")
    raise SceneLoadError(f"{directory} has neither {CAMERAS_FILE} nor transforms_train.json")
