"""
Inhibition-based pilot assignment schemes.

- assign_rsa: users arrive in mark order and pick a random pilot not
  used by any earlier user closer than R_inh.
- assign_regenerative: pilot-by-pilot greedy packing.
- assign_distributed: the same rule driven by sensed pilot power
  instead of distances.
- assign_random: i.i.d. uniform pilots.

Two users conflict when their distance is strictly below R_inh.
"""

from pathlib import Path
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from config import get_logger, VERSION
from stochastic_geometry import PointSet
from channel_model import PathlossParams, DEFAULT_PATHLOSS, MIN_DISTANCE, large_scale_gain

logger = get_logger(__name__)

UNASSIGNED = 0


class AssignmentError(Exception):
    """Raised for invalid pilot counts or missing marks."""
    pass


@dataclass(frozen=True)
class PilotAssignment:
    """Per-user pilot index in 1..P, or UNASSIGNED (0)."""

    pilots: np.ndarray
    num_pilots: int
    inhibition_radius: Optional[float] = None
    scheme: str = ""
    seed: Optional[int] = None

    def __post_init__(self):
        pilots = np.array(self.pilots, dtype=int).reshape(-1)
        if self.num_pilots < 1:
            raise AssignmentError(f"Pilot count must be >= 1, got: {self.num_pilots}")
        if np.any((pilots < 0) | (pilots > self.num_pilots)):
            raise AssignmentError(f"Pilot indices must lie in 0..{self.num_pilots}")
        pilots.flags.writeable = False
        object.__setattr__(self, 'pilots', pilots)

    def __len__(self) -> int:
        return self.pilots.shape[0]

    @property
    def assigned(self) -> np.ndarray:
        """Boolean mask of users holding a pilot."""
        return self.pilots != UNASSIGNED

    @property
    def assigned_count(self) -> int:
        return int(np.count_nonzero(self.assigned))

    def copilot_groups(self) -> Dict[int, np.ndarray]:
        """Pilot -> user indices, for every pilot in use."""
        return {
            int(p): np.flatnonzero(self.pilots == p)
            for p in np.unique(self.pilots) if p != UNASSIGNED
        }

    def restricted_to(self, mask: np.ndarray, total: int) -> "PilotAssignment":
        """Embed an assignment of a subset back into `total` users."""
        pilots = np.zeros(total, dtype=int)
        pilots[np.asarray(mask, dtype=bool)] = self.pilots
        return PilotAssignment(pilots, self.num_pilots, self.inhibition_radius, self.scheme, self.seed)

    def to_csv(self, path: Path, users: PointSet, metadata: Optional[Mapping[str, Any]] = None) -> Path:
        """Write `user_index,x,y,pilot` rows."""
        from export import write_dataset

        header: Dict[str, Any] = {
            "version": VERSION,
            "scheme": self.scheme,
            "num_pilots": self.num_pilots,
            "inhibition_radius": self.inhibition_radius,
            "seed": self.seed,
        }
        header.update(metadata or {})
        rows = [(i, x, y, int(p)) for i, ((x, y), p) in enumerate(zip(users.points, self.pilots))]
        return write_dataset(path, ["user_index", "x", "y", "pilot"], rows, header)


@dataclass(frozen=True)
class SensingConfig:
    """Power threshold and pilot energy used by the distributed scheme."""

    p_inh: float
    pilot_energy: float

    def __post_init__(self):
        if not self.p_inh > 0:
            raise AssignmentError(f"Power threshold must be positive, got: {self.p_inh}")
        if not self.pilot_energy > 0:
            raise AssignmentError(f"Pilot energy must be positive, got: {self.pilot_energy}")


def threshold_for_radius(
    inhibition_radius: float,
    pilot_energy: float,
    params: PathlossParams = DEFAULT_PATHLOSS
) -> float:
    """Default threshold: the power one user at R_inh would produce."""
    return pilot_energy * large_scale_gain(inhibition_radius, params)


def _check_pilots(num_pilots: int):
    if num_pilots < 1:
        raise AssignmentError(f"Pilot count must be >= 1, got: {num_pilots}")


def _check_radius(inhibition_radius: float):
    if not inhibition_radius > 0:
        raise AssignmentError(f"Inhibition radius must be positive, got: {inhibition_radius}")


def arrival_order(users: PointSet) -> np.ndarray:
    """Mark order, ties broken by list index; list order when unmarked."""
    if users.marks is None:
        return np.arange(len(users))
    return np.argsort(users.marks, kind='stable')


class _ConflictGraph:
    """Neighbors strictly closer than the radius, built lazily per user."""

    def __init__(self, points: np.ndarray, radius: float):
        self.points = points
        self.radius = radius
        self.tree = cKDTree(points) if points.shape[0] else None
        self._cache: Dict[int, np.ndarray] = {}

    def neighbors(self, i: int) -> np.ndarray:
        cached = self._cache.get(i)
        if cached is not None:
            return cached
        candidates = np.asarray(self.tree.query_ball_point(self.points[i], r=self.radius), dtype=int)
        diff = self.points[candidates] - self.points[i]
        close = candidates[(np.hypot(diff[:, 0], diff[:, 1]) < self.radius) & (candidates != i)]
        self._cache[i] = close
        return close


def assign_rsa(users: PointSet, num_pilots: int, inhibition_radius: float, seed: int) -> PilotAssignment:
    """
    RSA-based randomized assignment.

    Users are processed in increasing mark order; each takes a uniformly
    random pilot among those not held by an earlier user within R_inh.

    Args:
        users: Marked user points
        num_pilots: P
        inhibition_radius: R_inh (meters)
        seed: Seed for the pilot draws

    Returns:
        PilotAssignment (UNASSIGNED when every pilot is blocked)

    Raises:
        AssignmentError: If P < 1, R_inh <= 0, or users carry no marks
    """
    _check_pilots(num_pilots)
    _check_radius(inhibition_radius)
    if users.marks is None and len(users):
        raise AssignmentError("RSA assignment needs marked users")

    n = len(users)
    pilots = np.zeros(n, dtype=int)
    if n == 0:
        return PilotAssignment(pilots, num_pilots, inhibition_radius, "rsa", seed)

    rng = np.random.default_rng(seed)
    graph = _ConflictGraph(users.points, inhibition_radius)
    blocked = np.zeros((n, num_pilots), dtype=bool)

    for i in arrival_order(users):
        free = np.flatnonzero(~blocked[i])
        if free.size == 0:
            continue
        pilot = int(free[rng.integers(free.size)])
        pilots[i] = pilot + 1
        blocked[graph.neighbors(i), pilot] = True

    result = PilotAssignment(pilots, num_pilots, inhibition_radius, "rsa", seed)
    logger.debug(f"RSA: {result.assigned_count}/{n} users assigned (P={num_pilots}, R_inh={inhibition_radius})")
    return result


def assign_regenerative(users: PointSet, num_pilots: int, inhibition_radius: float) -> PilotAssignment:
    """
    Regenerative sequential assignment.

    Pass p packs pilot p greedily over the users still unassigned, in
    mark order (list order when unmarked).
    """
    _check_pilots(num_pilots)
    _check_radius(inhibition_radius)

    n = len(users)
    pilots = np.zeros(n, dtype=int)
    if n == 0:
        return PilotAssignment(pilots, num_pilots, inhibition_radius, "regenerative")

    graph = _ConflictGraph(users.points, inhibition_radius)
    order = arrival_order(users)

    for pilot in range(1, num_pilots + 1):
        blocked = np.zeros(n, dtype=bool)
        placed = 0
        for i in order:
            if pilots[i] != UNASSIGNED or blocked[i]:
                continue
            pilots[i] = pilot
            blocked[graph.neighbors(i)] = True
            placed += 1
        if placed == 0:
            break

    result = PilotAssignment(pilots, num_pilots, inhibition_radius, "regenerative")
    logger.debug(f"Regenerative: {result.assigned_count}/{n} users assigned")
    return result


def assign_distributed(
    users: PointSet,
    num_pilots: int,
    sensing: SensingConfig,
    seed: int,
    params: PathlossParams = DEFAULT_PATHLOSS,
    inhibition_radius: Optional[float] = None
) -> PilotAssignment:
    """
    Distributed power-threshold assignment.

    Each arriving user senses P_k = sum over earlier holders j of pilot k
    of pilot_energy * beta(d_oj) and picks uniformly among pilots with
    P_k <= P_inh.

    Args:
        users: Marked user points (arrival = mark order)
        num_pilots: P
        sensing: Threshold and pilot energy
        seed: Seed for the pilot draws
        params: Path-loss parameters
        inhibition_radius: Recorded on the result only

    Returns:
        PilotAssignment
    """
    _check_pilots(num_pilots)
    if users.marks is None and len(users):
        raise AssignmentError("Distributed assignment needs marked users")

    n = len(users)
    pilots = np.zeros(n, dtype=int)
    if n == 0:
        return PilotAssignment(pilots, num_pilots, inhibition_radius, "distributed-rsa", seed)

    rng = np.random.default_rng(seed)
    sensed = np.zeros((n, num_pilots))
    points = users.points

    for i in arrival_order(users):
        candidates = np.flatnonzero(sensed[i] <= sensing.p_inh)
        if candidates.size == 0:
            continue
        pilot = int(candidates[rng.integers(candidates.size)])
        pilots[i] = pilot + 1
        dist = np.maximum(np.hypot(points[:, 0] - points[i, 0], points[:, 1] - points[i, 1]), MIN_DISTANCE)
        sensed[:, pilot] += sensing.pilot_energy * large_scale_gain(dist, params)

    result = PilotAssignment(pilots, num_pilots, inhibition_radius, "distributed-rsa", seed)
    logger.debug(f"Distributed: {result.assigned_count}/{n} users assigned (P_inh={sensing.p_inh:.3e})")
    return result


def assign_random(users: PointSet, num_pilots: int, seed: int) -> PilotAssignment:
    """I.i.d. uniform pilots; nobody is left unassigned."""
    _check_pilots(num_pilots)
    rng = np.random.default_rng(seed)
    pilots = rng.integers(1, num_pilots + 1, size=len(users))
    return PilotAssignment(pilots, num_pilots, None, "random", seed)


def is_hard_core(assignment: PilotAssignment, users: PointSet, inhibition_radius: Optional[float] = None) -> bool:
    """True if no two co-pilot users are closer than R_inh."""
    radius = inhibition_radius if inhibition_radius is not None else assignment.inhibition_radius
    if radius is None:
        raise AssignmentError("No inhibition radius to check against")
    for group in assignment.copilot_groups().values():
        if group.size > 1 and np.min(pdist(users.points[group])) < radius:
            return False
    return True


def is_maximal(assignment: PilotAssignment, users: PointSet) -> bool:
    """True if every unassigned user sees each pilot held within R_inh."""
    radius = assignment.inhibition_radius
    if radius is None:
        raise AssignmentError("No inhibition radius to check against")
    graph = _ConflictGraph(users.points, radius)
    for i in np.flatnonzero(~assignment.assigned):
        held = set(int(p) for p in assignment.pilots[graph.neighbors(i)] if p != UNASSIGNED)
        if len(held) < assignment.num_pilots:
            return False
    return True
