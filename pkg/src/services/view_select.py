"""
Working-set selection for a target pose.

Camera centers are projected to 2D (stereographic for hemisphere rigs,
orthographic for fronto-parallel rigs), triangulated with Delaunay, and the
triangle nearest to the projected target supplies three views weighted by
the target's barycentric coordinates.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError
from scipy.spatial.distance import pdist

from ..errors import RejectedInputError
from ..types import ViewConstellation, WorkingSet
from ..utils.constants import (
    BARYCENTRIC_TOLERANCE,
    PLANE_TOLERANCE,
    ViewConfiguration,
    ViewSelection,
)

logger = logging.getLogger("neuralmvs.view_select")


def _orthonormal_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors spanning the plane perpendicular to `normal`."""
    helper = np.eye(3)[np.argmin(np.abs(normal))]
    e1 = np.cross(normal, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    return e1, e2


def _fit_plane(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Least-squares plane: (centroid, in-plane basis (2, 3), normal)."""
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid)
    return centroid, vt[:2], vt[2]


def _diameter(points: np.ndarray) -> float:
    return float(pdist(points).max()) if len(points) > 1 else 0.0


@dataclass
class OrthographicProjector:
    origin: np.ndarray
    basis: np.ndarray  # (2, 3)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.origin) @ self.basis.T


@dataclass
class StereographicProjector:
    """Projects from the pole onto the plane tangent at the antipodal point."""
    center: np.ndarray
    radius: float
    axis: np.ndarray  # unit direction from sphere center to the tangent point
    basis: np.ndarray  # (2, 3), perpendicular to axis

    @property
    def pole(self) -> np.ndarray:
        return self.center - self.radius * self.axis

    @property
    def tangent_point(self) -> np.ndarray:
        return self.center + self.radius * self.axis

    def __call__(self, points: np.ndarray) -> np.ndarray:
        rel = np.atleast_2d(points) - self.pole
        along = rel @ self.axis
        along = np.where(np.abs(along) < 1e-12, 1e-12, along)
        s = 2.0 * self.radius / along
        hit = self.pole + s[:, None] * rel - self.tangent_point
        return hit @ self.basis.T


def classify_configuration(centers: np.ndarray, tolerance: float = PLANE_TOLERANCE) -> ViewConfiguration:
    centers = np.asarray(centers, dtype=np.float64)
    if len(centers) < 4:
        raise RejectedInputError(f"Configuration classification needs >= 4 views, got {len(centers)}")
    centroid, _, normal = _fit_plane(centers)
    residual = np.abs((centers - centroid) @ normal).max()
    diameter = _diameter(centers)
    if residual < tolerance * diameter:
        return ViewConfiguration.FRONTO_PARALLEL
    return ViewConfiguration.HEMISPHERE


def _fit_sphere(points: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Algebraic least-squares sphere; None when the fit is degenerate."""
    a = np.hstack([2.0 * points, np.ones((len(points), 1))])
    b = (points ** 2).sum(axis=1)
    if np.linalg.matrix_rank(a, tol=1e-9 * max(1.0, np.abs(a).max())) < 4:
        return None
    solution, *_ = np.linalg.lstsq(a, b, rcond=None)
    center = solution[:3]
    radius_sq = solution[3] + center @ center
    if not np.isfinite(radius_sq) or radius_sq <= 0:
        return None
    radius = float(np.sqrt(radius_sq))
    if radius > 1e6 * max(_diameter(points), 1e-12):
        return None
    return center, radius


def make_projector(centers: np.ndarray, configuration: ViewConfiguration):
    centers = np.asarray(centers, dtype=np.float64)
    if configuration == ViewConfiguration.HEMISPHERE:
        fit = _fit_sphere(centers)
        if fit is not None:
            center, radius = fit
            mean_dir = (centers - center).mean(axis=0)
            norm = np.linalg.norm(mean_dir)
            axis = mean_dir / norm if norm > 1e-12 else np.array([0.0, 0.0, 1.0])
            e1, e2 = _orthonormal_basis(axis)
            return StereographicProjector(center=center, radius=radius, axis=axis, basis=np.stack([e1, e2]))
        logger.warning("Degenerate sphere fit for hemisphere configuration, falling back to orthographic projection")
    centroid, basis, _ = _fit_plane(centers)
    return OrthographicProjector(origin=centroid, basis=basis)


def project_to_plane(centers: np.ndarray, configuration: ViewConfiguration) -> np.ndarray:
    return make_projector(centers, configuration)(np.asarray(centers, dtype=np.float64))


def triangulate(points2d: np.ndarray) -> np.ndarray:
    """Delaunay triangles (M, 3); zero-area triangles are dropped."""
    points2d = np.asarray(points2d, dtype=np.float64)
    if len(points2d) < 3:
        raise RejectedInputError(f"Triangulation needs >= 3 points, got {len(points2d)}")
    spread = np.linalg.svd(points2d - points2d.mean(axis=0), compute_uv=False)
    if spread[0] == 0 or spread[-1] <= 1e-12 * spread[0]:
        raise RejectedInputError("All points are collinear")
    try:
        triangles = Delaunay(points2d).simplices
    except QhullError as e:
        raise RejectedInputError(f"Delaunay triangulation failed: {e}")
    a, b, c = (points2d[triangles[:, k]] for k in range(3))
    area = 0.5 * np.abs((b - a)[:, 0] * (c - a)[:, 1] - (b - a)[:, 1] * (c - a)[:, 0])
    keep = area > 1e-12 * _diameter(points2d) ** 2
    return triangles[keep].astype(np.int64)


def build_constellation(centers: np.ndarray, view_ids: tuple[int, ...] | None = None) -> ViewConstellation:
    centers = np.asarray(centers, dtype=np.float64)
    if len(centers) == 3:
        # Three centers always span a plane
        configuration = ViewConfiguration.FRONTO_PARALLEL
    else:
        configuration = classify_configuration(centers)
    projector = make_projector(centers, configuration)
    projected = projector(centers)
    triangles = triangulate(projected)
    logger.debug(f"Constellation: {len(centers)} views, {configuration.value}, {len(triangles)} triangles")
    return ViewConstellation(
        centers=centers,
        configuration=configuration,
        projected=projected,
        triangles=triangles,
        projector=projector,
        view_ids=tuple(view_ids) if view_ids is not None else tuple(range(len(centers))),
    )


def barycentric(point: np.ndarray, triangle: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of a 2D point w.r.t. a (3, 2) triangle."""
    a, b, c = triangle
    m = np.column_stack([b - a, c - a])
    l1, l2 = np.linalg.solve(m, point - a)
    return np.array([1.0 - l1 - l2, l1, l2])


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    s = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + s * ab)))


def point_triangle_distance(point: np.ndarray, triangle: np.ndarray) -> float:
    if np.all(barycentric(point, triangle) >= -BARYCENTRIC_TOLERANCE):
        return 0.0
    return min(_segment_distance(point, triangle[i], triangle[(i + 1) % 3]) for i in range(3))


def _normalized(weights: np.ndarray) -> tuple[float, float, float]:
    weights = np.clip(weights, 0.0, None)
    weights = weights / weights.sum()
    return tuple(float(w) for w in weights)


def select_working_set(constellation: ViewConstellation, target_center: np.ndarray) -> WorkingSet:
    """Containing (else nearest) triangle; ties go to the lowest triangle index."""
    target2d = constellation.projector(np.asarray(target_center, dtype=np.float64))[0]
    corners = constellation.projected[constellation.triangles]  # (M, 3, 2)
    distances = np.array([point_triangle_distance(target2d, tri) for tri in corners])
    best = int(np.argmin(distances))
    weights = _normalized(barycentric(target2d, corners[best]))
    ids = tuple(constellation.view_ids[i] for i in constellation.triangles[best])
    return WorkingSet(view_ids=ids, weights=weights)


def select_proximity(
    centers: np.ndarray, target_center: np.ndarray, view_ids: tuple[int, ...] | None = None
) -> WorkingSet:
    """Three nearest centers weighted by inverse distance."""
    centers = np.asarray(centers, dtype=np.float64)
    if len(centers) < 3:
        raise RejectedInputError(f"Proximity selection needs >= 3 views, got {len(centers)}")
    view_ids = tuple(view_ids) if view_ids is not None else tuple(range(len(centers)))
    distances = np.linalg.norm(centers - np.asarray(target_center, dtype=np.float64), axis=1)
    nearest = np.argsort(distances, kind="stable")[:3]
    d = distances[nearest]
    if d[0] < 1e-12:
        weights = (1.0, 0.0, 0.0)
    else:
        weights = _normalized(1.0 / d)
    return WorkingSet(view_ids=tuple(view_ids[i] for i in nearest), weights=weights)


class ViewSelector:
    """Caches one constellation per set of source views and their centers."""

    def __init__(self):
        self._constellations: dict[tuple, ViewConstellation] = {}

    def constellation(self, centers: np.ndarray, view_ids: tuple[int, ...]) -> ViewConstellation:
        centers = np.ascontiguousarray(centers, dtype=np.float64)
        key = (tuple(view_ids), centers.tobytes())
        if key not in self._constellations:
            self._constellations[key] = build_constellation(centers, tuple(view_ids))
        return self._constellations[key]

    def select(
        self,
        centers: np.ndarray,
        view_ids: tuple[int, ...],
        target_center: np.ndarray,
        method: str = ViewSelection.DELAUNAY.value,
    ) -> WorkingSet:
        if ViewSelection(method) == ViewSelection.PROXIMITY:
            return select_proximity(centers, target_center, view_ids)
        return select_working_set(self.constellation(centers, view_ids), target_center)

    def clear(self) -> None:
        self._constellations.clear()


view_selector = ViewSelector()
