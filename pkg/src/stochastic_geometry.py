"""
Point processes for RRHs and users on circular observation windows.

Everything here is a pure function of (parameters, seed): the same call
returns bitwise-identical coordinates. Independent streams (RRHs, users,
marks, pilots) are keyed by derive_seed() so that user locations stay
identical across schemes compared on the same trial.
"""

import zlib
from pathlib import Path
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from config import get_logger, VERSION

logger = get_logger(__name__)

# Slack for the containment invariant (floating round-off on the rim)
_RIM_TOLERANCE = 1e-9


class GeometryError(Exception):
    """Raised for invalid windows, intensities, or marks."""
    pass


@dataclass(frozen=True)
class CircularWindow:
    """Closed disk of the given radius (meters) around center."""

    radius: float
    center: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise GeometryError(f"Window radius must be positive, got: {self.radius}")
        cx, cy = (float(c) for c in self.center)
        object.__setattr__(self, 'center', (cx, cy))
        object.__setattr__(self, 'radius', float(self.radius))

    @property
    def area(self) -> float:
        return np.pi * self.radius ** 2

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the closed disk."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        dist = np.hypot(points[:, 0] - self.center[0], points[:, 1] - self.center[1])
        return dist <= self.radius

    def translated(self, vector: Sequence[float]) -> "CircularWindow":
        return CircularWindow(
            radius=self.radius,
            center=(self.center[0] + float(vector[0]), self.center[1] + float(vector[1]))
        )


@dataclass(frozen=True)
class PointSet:
    """
    Ordered 2-D points inside a window, with optional marks in [0, 1].

    Arrays are stored read-only; operations return new sets.
    """

    points: np.ndarray
    window: CircularWindow
    marks: Optional[np.ndarray] = None
    seed: Optional[int] = None
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise GeometryError("Point coordinates must be finite")

        if pts.shape[0]:
            dist = np.hypot(pts[:, 0] - self.window.center[0], pts[:, 1] - self.window.center[1])
            if np.any(dist > self.window.radius * (1 + _RIM_TOLERANCE)):
                raise GeometryError(
                    f"{int(np.sum(dist > self.window.radius))} points lie outside "
                    f"the window of radius {self.window.radius}"
                )
        pts.flags.writeable = False
        object.__setattr__(self, 'points', pts)

        if self.marks is not None:
            marks = np.array(self.marks, dtype=float).reshape(-1)
            if marks.shape[0] != pts.shape[0]:
                raise GeometryError(
                    f"Got {marks.shape[0]} marks for {pts.shape[0]} points"
                )
            if np.any((marks < 0) | (marks > 1)):
                raise GeometryError("Marks must lie in [0, 1]")
            if np.unique(marks).shape[0] != marks.shape[0]:
                raise GeometryError("Marks must be distinct")
            marks.flags.writeable = False
            object.__setattr__(self, 'marks', marks)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_marks(self) -> bool:
        return self.marks is not None

    def with_marks(self, marks: Optional[np.ndarray]) -> "PointSet":
        return PointSet(self.points, self.window, marks, self.seed, dict(self.metadata))

    def subset(self, mask_or_index: np.ndarray) -> "PointSet":
        """Points selected by a boolean mask or index array, order preserved."""
        idx = np.asarray(mask_or_index)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        marks = self.marks[idx] if self.marks is not None else None
        return PointSet(self.points[idx], self.window, marks, self.seed, dict(self.metadata))

    def translated(self, vector: Sequence[float]) -> "PointSet":
        """Shift every point and the window by the same vector."""
        shift = np.asarray(vector, dtype=float).reshape(2)
        return PointSet(
            self.points + shift,
            self.window.translated(shift),
            self.marks,
            self.seed,
            dict(self.metadata)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "window": {"center": list(self.window.center), "radius": self.window.radius},
            "seed": self.seed,
            "points": self.points.tolist(),
            "marks": None if self.marks is None else self.marks.tolist(),
        }

    def to_csv(self, path: Path, metadata: Optional[Mapping[str, Any]] = None) -> Path:
        """Write `x_m,y_m,mark` rows (mark empty when absent)."""
        from export import write_dataset

        header = {
            "version": VERSION,
            "seed": self.seed,
            "window_radius": self.window.radius,
            "window_center": f"{self.window.center[0]!r} {self.window.center[1]!r}",
        }
        header.update(metadata or {})
        marks = self.marks if self.marks is not None else [None] * len(self)
        rows = [(x, y, m) for (x, y), m in zip(self.points, marks)]
        return write_dataset(path, ["x_m", "y_m", "mark"], rows, header)

    @classmethod
    def from_csv(cls, path: Path, window: Optional[CircularWindow] = None) -> "PointSet":
        """
        Read a point file.

        Without an explicit window, the smallest origin-centered disk that
        holds every point is used (or the header's window_radius if present).
        """
        from export import read_points_csv, read_table

        points, marks = read_points_csv(path)
        if window is None:
            header, _, _ = read_table(path)
            if 'window_radius' in header:
                window = CircularWindow(radius=float(header['window_radius']))
            else:
                extent = float(np.max(np.hypot(points[:, 0], points[:, 1]))) if len(points) else 1.0
                window = CircularWindow(radius=max(extent, 1.0))
        return cls(points, window, marks)


def derive_seed(seed: int, *keys: Union[int, str]) -> int:
    """
    Child seed for an independent stream.

    Keys may be integers (trial index) or names ('users', 'marks', ...).
    The result is a non-negative 63-bit integer.
    """
    words = [int(seed)]
    for key in keys:
        if isinstance(key, str):
            words.append(zlib.crc32(key.encode('utf-8')))
        else:
            words.append(int(key))
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return ((int(state[0]) << 32) | int(state[1])) & ((1 << 63) - 1)


def _uniform_disk(rng: np.random.Generator, count: int, window: CircularWindow) -> np.ndarray:
    # Inverse-CDF radius plus uniform angle
    radius = window.radius * np.sqrt(rng.random(count))
    angle = 2.0 * np.pi * rng.random(count)
    x = window.center[0] + radius * np.cos(angle)
    y = window.center[1] + radius * np.sin(angle)
    return np.column_stack((x, y))


def sample_ppp(intensity: float, window: CircularWindow, seed: int) -> PointSet:
    """
    Homogeneous Poisson point process on the window.

    Args:
        intensity: Points per square meter (>= 0)
        window: Observation disk
        seed: Stream seed

    Returns:
        PointSet with Poisson(intensity * area) uniform points

    Raises:
        GeometryError: If intensity is negative or not finite
    """
    if not np.isfinite(intensity) or intensity < 0:
        raise GeometryError(f"Intensity must be non-negative, got: {intensity}")

    rng = np.random.default_rng(seed)
    count = int(rng.poisson(intensity * window.area)) if intensity > 0 else 0
    logger.debug(f"PPP intensity={intensity} radius={window.radius}: {count} points")
    return PointSet(_uniform_disk(rng, count, window), window, seed=seed)


def sample_uniform(count: int, window: CircularWindow, seed: int) -> PointSet:
    """Binomial point process: exactly `count` uniform points on the window."""
    if count < 0:
        raise GeometryError(f"Point count must be non-negative, got: {count}")
    rng = np.random.default_rng(seed)
    return PointSet(_uniform_disk(rng, int(count), window), window, seed=seed)


def assign_marks(points: PointSet, seed: int) -> PointSet:
    """Attach independent U(0,1) marks (arrival times)."""
    if len(points) == 0:
        return points.with_marks(None)
    rng = np.random.default_rng(seed)
    return points.with_marks(rng.random(len(points)))


def crop(points: PointSet, window: CircularWindow) -> PointSet:
    """Subset inside the closed window, order preserved, re-homed to it."""
    mask = window.contains(points.points)
    marks = points.marks[mask] if points.marks is not None else None
    return PointSet(points.points[mask], window, marks, points.seed, dict(points.metadata))


def plant_typical_user(points: PointSet, mark: Optional[float] = None) -> PointSet:
    """
    Insert a user at the window center as index 0.

    Raises:
        GeometryError: If the set carries marks and no mark is given for
            the planted point
    """
    center = np.asarray(points.window.center, dtype=float).reshape(1, 2)
    stacked = np.vstack((center, points.points))
    marks = None
    if points.marks is not None:
        if mark is None:
            raise GeometryError("Marked point set needs a mark for the planted user")
        marks = np.concatenate(([float(mark)], points.marks))
    elif mark is not None:
        raise GeometryError("Cannot mark only the planted user")
    return PointSet(stacked, points.window, marks, points.seed, dict(points.metadata))


def pairwise_distances(a: Union[PointSet, np.ndarray], b: Union[PointSet, np.ndarray, None] = None) -> np.ndarray:
    """Euclidean distance matrix between two point sets (or within one)."""
    pa = a.points if isinstance(a, PointSet) else np.asarray(a, dtype=float).reshape(-1, 2)
    if b is None:
        pb = pa
    else:
        pb = b.points if isinstance(b, PointSet) else np.asarray(b, dtype=float).reshape(-1, 2)
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        return np.zeros((pa.shape[0], pb.shape[0]))
    return cdist(pa, pb)
