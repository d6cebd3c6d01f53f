"""
Centralized max-min distance pilot partitioning.

The users are split into P partitions (pilots) so that the smallest
distance between two users of the same partition is as large as possible.
The search bisects on that distance t; each step asks whether the
conflict graph (pairs closer than t) can be P-colored with every color
class holding at least size_floor users. That question is answered
exactly by backtracking.
"""

import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial.distance import pdist

from config import get_logger
from stochastic_geometry import PointSet, pairwise_distances

logger = get_logger(__name__)

STATUS_OPTIMAL = "optimal-within-epsilon"
STATUS_INFEASIBLE = "infeasible"

# Recursion depth of the exact search
MAX_EXACT_USERS = 400


class PartitionError(Exception):
    """Raised for invalid partition instances."""
    pass


class FeasibilityTimeout(PartitionError):
    """Raised when a feasibility search exceeds its time budget."""
    pass


@dataclass(frozen=True)
class PartitionInstance:
    """Users to split into P partitions of at least size_floor users."""

    points: np.ndarray
    num_partitions: int
    size_floor: int = 2
    epsilon: float = 1.0
    time_budget: float = 10.0
    diameter: Optional[float] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, 'points', pts)
        if self.num_partitions < 1:
            raise PartitionError(f"Partition count must be >= 1, got: {self.num_partitions}")
        if self.size_floor < 1:
            raise PartitionError(f"Size floor must be >= 1, got: {self.size_floor}")
        if not self.epsilon > 0:
            raise PartitionError(f"Epsilon must be positive, got: {self.epsilon}")
        if not self.time_budget > 0:
            raise PartitionError(f"Time budget must be positive, got: {self.time_budget}")

    @classmethod
    def from_points(cls, users: Union[PointSet, np.ndarray], num_partitions: int, **kwargs) -> "PartitionInstance":
        """Build from a PointSet (its window diameter bounds the search) or raw coordinates."""
        if isinstance(users, PointSet):
            kwargs.setdefault('diameter', 2.0 * users.window.radius)
            return cls(users.points, num_partitions, **kwargs)
        return cls(np.asarray(users, dtype=float), num_partitions, **kwargs)

    @property
    def num_users(self) -> int:
        return self.points.shape[0]

    @property
    def size_feasible(self) -> bool:
        return self.num_users >= self.num_partitions * self.size_floor


@dataclass
class PartitionResult:
    """Best membership found, its achieved co-pilot distance and search stats."""

    membership: np.ndarray
    t_star: float
    status: str
    approximate: bool = False
    lower_bound: float = 0.0
    upper_bound: float = float('inf')
    feasibility_calls: int = 0
    timeouts: int = 0
    num_partitions: int = 0
    search_nodes: int = 0
    history: List[tuple] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == STATUS_OPTIMAL

    def to_assignment(self, inhibition_radius: Optional[float] = None):
        """Partitions as pilots 1..P."""
        from rsa_assignment import PilotAssignment

        if not self.feasible:
            raise PartitionError("No feasible membership to convert")
        return PilotAssignment(self.membership, self.num_partitions, inhibition_radius, "maxmin")


def min_copilot_distance(membership: np.ndarray, points: Union[PointSet, np.ndarray]) -> float:
    """
    Smallest distance between two users sharing a partition.

    Returns:
        Meters, or +inf if every partition is a singleton
    """
    pts = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=float).reshape(-1, 2)
    membership = np.asarray(membership).reshape(-1)
    best = float('inf')
    for label in np.unique(membership):
        group = np.flatnonzero(membership == label)
        if group.size > 1:
            best = min(best, float(np.min(pdist(pts[group]))))
    return best


class _ColoringSearch:
    """Exact P-coloring with size floors by DSATUR backtracking."""

    def __init__(self, adjacency: np.ndarray, colors: int, floor: int, deadline: float):
        self.adj = adjacency
        self.n = adjacency.shape[0]
        self.colors = colors
        self.floor = floor
        self.deadline = deadline
        self.neighbors = [np.flatnonzero(adjacency[v]) for v in range(self.n)]
        self.degree = adjacency.sum(axis=1)

        self.color = np.full(self.n, -1, dtype=int)
        # blocked[v, k]: colored neighbors of v holding color k
        self.blocked = np.zeros((self.n, colors), dtype=int)
        self.sizes = np.zeros(colors, dtype=int)
        self.opened = 0
        self.nodes = 0

    def _available(self, v: int) -> np.ndarray:
        usable = np.flatnonzero(self.blocked[v, :self.opened] == 0)
        if self.opened < self.colors:
            usable = np.append(usable, self.opened)
        return usable

    def _pick_vertex(self) -> Optional[int]:
        uncolored = np.flatnonzero(self.color < 0)
        if uncolored.size == 0:
            return None
        free_counts = (self.blocked[uncolored, :self.opened] == 0).sum(axis=1)
        if self.opened < self.colors:
            free_counts = free_counts + 1
        # Fewest options first, then highest degree
        order = np.lexsort((-self.degree[uncolored], free_counts))
        return int(uncolored[order[0]])

    def _floors_reachable(self) -> bool:
        uncolored = np.flatnonzero(self.color < 0)
        deficits = np.maximum(self.floor - self.sizes, 0)
        total = int(deficits.sum())
        if total == 0:
            return True
        if total > uncolored.size:
            return False

        # can[v, k]: uncolored v may still join partition k
        can = np.ones((uncolored.size, self.colors), dtype=bool)
        can[:, :self.opened] = self.blocked[uncolored, :self.opened] == 0
        for k in np.flatnonzero(deficits):
            if np.count_nonzero(can[:, k]) < deficits[k]:
                return False

        # Every missing slot needs its own user
        slot_owner = np.repeat(np.arange(self.colors), deficits)
        incidence = csr_matrix(can[:, slot_owner].astype(np.int8))
        matched = maximum_bipartite_matching(incidence, perm_type='column')
        return int(np.count_nonzero(matched >= 0)) >= total

    def _assign(self, v: int, k: int):
        self.color[v] = k
        self.sizes[k] += 1
        self.blocked[self.neighbors[v], k] += 1
        if k == self.opened:
            self.opened += 1

    def _unassign(self, v: int, k: int, reopened: bool):
        self.color[v] = -1
        self.sizes[k] -= 1
        self.blocked[self.neighbors[v], k] -= 1
        if reopened:
            self.opened -= 1

    def solve(self) -> bool:
        self.nodes += 1
        if (self.nodes == 1 or self.nodes % 256 == 0) and time.monotonic() > self.deadline:
            raise FeasibilityTimeout("Feasibility search exceeded its time budget")

        if not self._floors_reachable():
            return False
        v = self._pick_vertex()
        if v is None:
            return bool(np.all(self.sizes >= self.floor))

        options = self._available(v)
        if options.size == 0:
            return False
        # Open partitions that still miss users come first
        existing = options[options < self.opened]
        existing = existing[np.argsort(self.sizes[existing], kind='stable')]
        options = np.concatenate((existing, options[options >= self.opened]))

        for k in options:
            k = int(k)
            reopened = k == self.opened
            self._assign(v, k)
            if self.solve():
                return True
            self._unassign(v, k, reopened)
        return False


def _search(
    instance: PartitionInstance,
    t: float,
    budget: float,
    dist: np.ndarray
) -> Tuple[Optional[np.ndarray], int]:
    adjacency = dist < t
    np.fill_diagonal(adjacency, False)
    search = _ColoringSearch(adjacency, instance.num_partitions, instance.size_floor, time.monotonic() + budget)
    found = search.solve()
    logger.debug(f"Feasibility t={t:.3f}: {'feasible' if found else 'infeasible'} after {search.nodes} nodes")
    return (search.color + 1 if found else None), search.nodes


def _check_search(instance: PartitionInstance, t: float):
    if t < 0:
        raise PartitionError(f"Distance threshold must be non-negative, got: {t}")
    if instance.num_users > MAX_EXACT_USERS:
        raise PartitionError(
            f"Exact search supports at most {MAX_EXACT_USERS} users, got {instance.num_users}"
        )


def feasibility(
    instance: PartitionInstance,
    t: float,
    time_budget: Optional[float] = None
) -> Optional[np.ndarray]:
    """
    Find a membership in which no two users closer than t share a partition
    and every partition has at least size_floor users.

    Args:
        instance: Partition instance
        t: Minimum co-partition distance (meters, >= 0)
        time_budget: Seconds (default: instance.time_budget)

    Returns:
        Membership in 1..P, or None if infeasible

    Raises:
        FeasibilityTimeout: If the budget runs out before a decision
    """
    _check_search(instance, t)
    if not instance.size_feasible:
        return None
    budget = time_budget if time_budget is not None else instance.time_budget
    membership, _ = _search(instance, t, budget, pairwise_distances(instance.points))
    return membership


def maxmin_assign(instance: PartitionInstance) -> PartitionResult:
    """
    Bisection on the co-partition distance with exact feasibility checks.

    Bounds start at [0, window diameter] (or max pairwise distance +
    epsilon when no window is known). A feasibility call that times out
    counts as infeasible and flags the result approximate.

    Returns:
        PartitionResult whose t_star is the achieved minimum co-partition
        distance of the returned membership
    """
    if not instance.size_feasible:
        logger.warning(
            f"{instance.num_users} users cannot fill {instance.num_partitions} partitions "
            f"of at least {instance.size_floor}"
        )
        return PartitionResult(np.zeros(0, dtype=int), float('nan'), STATUS_INFEASIBLE,
                               num_partitions=instance.num_partitions)

    _check_search(instance, 0.0)
    dist = pairwise_distances(instance.points)
    widest = float(dist.max()) if dist.size else 0.0
    upper = instance.diameter if instance.diameter is not None else widest + instance.epsilon
    lower = 0.0

    result = PartitionResult(np.zeros(0, dtype=int), float('nan'), STATUS_INFEASIBLE,
                             num_partitions=instance.num_partitions)

    def attempt(t: float) -> Optional[np.ndarray]:
        result.feasibility_calls += 1
        try:
            membership, nodes = _search(instance, t, instance.time_budget, dist)
            result.search_nodes += nodes
            return membership
        except FeasibilityTimeout:
            result.timeouts += 1
            result.approximate = True
            logger.warning(f"Feasibility at t={t:.3f} timed out; treated as infeasible")
            return None

    best = attempt(0.0)
    if best is None:
        return result

    lower = min_copilot_distance(best, instance.points)
    result.history.append((0.0, True))
    while upper - lower >= instance.epsilon:
        mid = 0.5 * (lower + upper)
        membership = attempt(mid)
        result.history.append((mid, membership is not None))
        if membership is None:
            upper = mid
        else:
            best = membership
            lower = max(mid, min_copilot_distance(membership, instance.points))
        logger.debug(f"Bisection bracket [{lower:.3f}, {upper:.3f}]")

    result.membership = best
    result.t_star = min_copilot_distance(best, instance.points)
    result.status = STATUS_OPTIMAL
    result.lower_bound = lower
    result.upper_bound = upper
    logger.info(
        f"Max-min partition: t*={result.t_star:.3f} m after {result.feasibility_calls} "
        f"feasibility calls{' (approximate)' if result.approximate else ''}"
    )
    return result
