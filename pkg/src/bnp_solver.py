"""
Branch-and-price for sum-SE pilot assignment.

The master problem picks P co-pilot sets (columns) that partition the
users and maximize the summed spectral efficiency. Its LP relaxation is
solved by column generation: the revised simplex gives duals, and an
exhaustive pricing search over cluster-respecting user sets adds the
column with the largest positive reduced cost. Integrality is enforced
by same/different branching on user pairs, explored best-bound first.

Column cost of a set S (|S| >= 2):
- sum of log2(1 + SINR) over its members, if every member reaches the
  SINR floor and no two members share a cluster
- -big_m otherwise
"""

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config import get_logger
from channel_model import copilot_sinrs
from revised_simplex import SimplexError, solve_standard_form

logger = get_logger(__name__)

REDUCED_COST_TOL = 1e-7
PRUNE_TOL = 1e-6
INTEGRAL_TOL = 1e-6
ARTIFICIAL_TOL = 1e-7

# Largest instance the solver accepts
MAX_USERS = 62

# Largest user count the exhaustive oracle accepts
ORACLE_MAX_USERS = 14


class BnpError(Exception):
    """Raised for invalid instances or contract violations in the solver."""
    pass


class StructuralInfeasibility(BnpError):
    """Raised when no partition into P non-singleton sets can exist."""
    pass


class _BudgetExceeded(Exception):
    pass


def _mask(members: Sequence[int]) -> int:
    value = 0
    for u in members:
        value |= 1 << int(u)
    return value


@dataclass
class BnpInstance:
    """Users, gains, clusters and the cost parameters of one master problem."""

    beta: np.ndarray
    num_pilots: int
    clusters: np.ndarray
    pilot_energy: float
    sinr_floor: float = 1.0
    big_m: float = 1e6
    _costs: Dict[int, float] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.clusters = np.asarray(self.clusters, dtype=int).reshape(-1)
        if self.clusters.shape[0] != self.num_users:
            raise BnpError(f"{self.clusters.shape[0]} cluster labels for {self.num_users} users")
        if self.clusters.size and self.clusters.min() < 0:
            raise BnpError(f"Cluster labels must be non-negative, got: {self.clusters.min()}")
        if self.num_pilots < 1:
            raise BnpError(f"Pilot count must be >= 1, got: {self.num_pilots}")
        if not self.big_m > 0:
            raise BnpError(f"big_m must be positive, got: {self.big_m}")
        if not self.pilot_energy > 0:
            raise BnpError(f"Pilot energy must be positive, got: {self.pilot_energy}")
        if self.num_users > MAX_USERS:
            raise BnpError(f"At most {MAX_USERS} users supported, got: {self.num_users}")
        sizes = np.bincount(self.clusters) if self.num_users else np.zeros(0, dtype=int)
        if sizes.size and sizes.max() > self.num_pilots:
            logger.warning(f"A cluster holds {sizes.max()} users but only {self.num_pilots} pilots exist")

    @property
    def num_users(self) -> int:
        return self.beta.shape[1]

    def cost(self, members: Sequence[int]) -> float:
        """Cached column cost of a user set."""
        members = tuple(sorted(int(u) for u in members))
        key = _mask(members)
        cached = self._costs.get(key)
        if cached is None:
            cached = column_cost(members, self)
            self._costs[key] = cached
        return cached


def column_cost(members: Sequence[int], instance: BnpInstance) -> float:
    """
    Sum SE of a co-pilot set, or -big_m if it breaks a cluster or the SINR floor.

    Raises:
        BnpError: If the set has fewer than two users
    """
    members = np.asarray(sorted(int(u) for u in members), dtype=int)
    if members.size < 2:
        raise BnpError("Columns need at least two users")
    labels = instance.clusters[members]
    if np.unique(labels).size < labels.size:
        return -instance.big_m
    sinr = copilot_sinrs(instance.beta[:, members], instance.pilot_energy, instance.num_pilots)
    if np.any(sinr < instance.sinr_floor):
        return -instance.big_m
    return float(np.sum(np.log2(1.0 + sinr)))


@dataclass(frozen=True)
class Column:
    members: Tuple[int, ...]
    cost: float

    @property
    def mask(self) -> int:
        return _mask(self.members)


@dataclass(frozen=True)
class BnbNode:
    """Branching state: user pairs forced together or apart."""

    same: FrozenSet[Tuple[int, int]] = frozenset()
    diff: FrozenSet[Tuple[int, int]] = frozenset()
    depth: int = 0
    bound: float = float('inf')

    def __post_init__(self):
        if self.same & self.diff:
            raise BnpError(f"Pairs both forced together and apart: {sorted(self.same & self.diff)}")

    def allows(self, members: Sequence[int]) -> bool:
        chosen = set(members)
        for p, r in self.same:
            if (p in chosen) != (r in chosen):
                return False
        for p, r in self.diff:
            if p in chosen and r in chosen:
                return False
        return True

    def child(self, pair: Tuple[int, int], together: bool, bound: float) -> "BnbNode":
        if together:
            return BnbNode(self.same | {pair}, self.diff, self.depth + 1, bound)
        return BnbNode(self.same, self.diff | {pair}, self.depth + 1, bound)


@dataclass(frozen=True)
class DualPrices:
    users: np.ndarray
    cardinality: float

    def reduced_cost(self, members: Sequence[int], cost: float) -> float:
        return cost - float(np.sum(self.users[list(members)])) - self.cardinality


@dataclass(frozen=True)
class RlmpSolution:
    """Restricted master LP optimum."""

    lambdas: np.ndarray
    duals: DualPrices
    objective: float
    artificial: float
    basis: np.ndarray

    @property
    def feasible(self) -> bool:
        return self.artificial <= ARTIFICIAL_TOL


def _master_matrix(columns: Sequence[Column], num_users: int) -> np.ndarray:
    # Variables: user artificials, surplus, then pool columns
    A = np.zeros((num_users + 1, num_users + 1 + len(columns)))
    A[:num_users, :num_users] = np.eye(num_users)
    A[num_users, :num_users] = 1.0
    A[num_users, num_users] = -1.0
    for j, column in enumerate(columns):
        A[list(column.members), num_users + 1 + j] = 1.0
        A[num_users, num_users + 1 + j] = 1.0
    return A


def solve_rlmp(
    columns: Sequence[Column],
    num_users: int,
    num_pilots: int,
    big_m: float,
    basis: Optional[np.ndarray] = None
) -> RlmpSolution:
    """
    Solve max sum c_s lambda_s s.t. every user covered once, sum lambda = P.

    Per-user artificial singletons and one surplus on the cardinality row
    (all costing -big_m) make the all-artificial basis feasible.

    Args:
        columns: Pool already filtered for the node's branching
        num_users: N_u
        num_pilots: P
        big_m: Artificial penalty
        basis: Warm-start basis from a previous solve on a prefix of this pool

    Returns:
        RlmpSolution with lambdas for `columns` in order
    """
    if num_users < num_pilots:
        raise StructuralInfeasibility(f"{num_users} users cannot fill {num_pilots} pilots")

    A = _master_matrix(columns, num_users)
    c = np.concatenate((np.full(num_users + 1, -big_m), [col.cost for col in columns]))
    b = np.concatenate((np.ones(num_users), [float(num_pilots)]))
    start = basis if basis is not None else np.arange(num_users + 1)

    try:
        result = solve_standard_form(c, A, b, start)
    except SimplexError:
        if basis is None:
            raise
        result = solve_standard_form(c, A, b, np.arange(num_users + 1))

    duals = DualPrices(result.duals[:num_users].copy(), float(result.duals[num_users]))
    artificial = float(np.sum(result.x[:num_users + 1]))
    return RlmpSolution(result.x[num_users + 1:].copy(), duals, result.objective, artificial, result.basis)


def enumerate_columns(instance: BnpInstance, node: Optional[BnbNode] = None) -> Iterator[Tuple[int, ...]]:
    """
    Every user set with at most one user per cluster, at least two users,
    and consistent with the node's branching.
    """
    node = node or BnbNode()
    groups = [np.flatnonzero(instance.clusters == label).tolist() for label in np.unique(instance.clusters)]
    partner_of: Dict[int, List[int]] = {}
    for p, r in node.diff:
        partner_of.setdefault(p, []).append(r)
        partner_of.setdefault(r, []).append(p)

    chosen: List[int] = []

    def walk(g: int) -> Iterator[Tuple[int, ...]]:
        if g == len(groups):
            if len(chosen) >= 2 and node.allows(chosen):
                yield tuple(sorted(chosen))
            return
        yield from walk(g + 1)
        for u in groups[g]:
            if any(v in chosen for v in partner_of.get(u, ())):
                continue
            chosen.append(u)
            yield from walk(g + 1)
            chosen.pop()

    yield from walk(0)


def pricing(
    instance: BnpInstance,
    duals: DualPrices,
    node: Optional[BnbNode] = None,
    exclude: Optional[set] = None,
    deadline: Optional[float] = None
) -> Optional[Column]:
    """
    Column with the largest reduced cost c(x) - Pi^T x - beta, if above 1e-7.

    Args:
        instance: Master problem instance
        duals: Duals of an optimal restricted master
        node: Branching restrictions
        exclude: Masks of columns already in the pool
        deadline: monotonic time after which the search is abandoned
    """
    best: Optional[Column] = None
    best_value = REDUCED_COST_TOL
    exclude = exclude or set()
    for count, members in enumerate(enumerate_columns(instance, node)):
        if deadline is not None and count % 512 == 0 and time.monotonic() > deadline:
            raise _BudgetExceeded()
        if _mask(members) in exclude:
            continue
        cost = instance.cost(members)
        value = duals.reduced_cost(members, cost)
        if value > best_value:
            best_value = value
            best = Column(members, cost)
    return best


def _pair_coverage(lambdas: np.ndarray, columns: Sequence[Column], num_users: int) -> np.ndarray:
    coverage = np.zeros((num_users, num_users))
    for weight, column in zip(lambdas, columns):
        if weight > INTEGRAL_TOL:
            idx = np.asarray(column.members)
            coverage[np.ix_(idx, idx)] += weight
    return coverage


def is_integral(lambdas: np.ndarray) -> bool:
    lambdas = np.asarray(lambdas)
    return bool(np.all((lambdas < INTEGRAL_TOL) | (lambdas > 1.0 - INTEGRAL_TOL)))


def branch_pair(lambdas: np.ndarray, columns: Sequence[Column], num_users: Optional[int] = None) -> Tuple[int, int]:
    """
    User pair whose joint coverage q is most fractional.

    Raises:
        BnpError: If lambdas are integral or no fractional pair exists
    """
    if is_integral(lambdas):
        raise BnpError("Cannot branch on an integral solution")
    if num_users is None:
        num_users = 1 + max(max(col.members) for col in columns)

    q = _pair_coverage(lambdas, columns, num_users)
    score = np.minimum(q, 1.0 - q)
    upper = np.triu(np.ones_like(q, dtype=bool), k=1)
    fractional = upper & (q > INTEGRAL_TOL) & (q < 1.0 - INTEGRAL_TOL)
    if not np.any(fractional):
        raise BnpError("No fractional user pair to branch on")
    score = np.where(fractional, score, -1.0)
    p, r = np.unravel_index(int(np.argmax(score)), score.shape)
    return int(p), int(r)


def round_robin_partition(instance: BnpInstance) -> List[Column]:
    """Users sorted by cluster, dealt onto the P pilots in turn."""
    order = np.argsort(instance.clusters, kind='stable')
    parts: List[List[int]] = [[] for _ in range(instance.num_pilots)]
    for i, u in enumerate(order):
        parts[i % instance.num_pilots].append(int(u))
    return [Column(tuple(sorted(part)), instance.cost(part)) for part in parts]


@dataclass
class TreeStats:
    nodes_processed: int = 0
    nodes_pruned: int = 0
    nodes_infeasible: int = 0
    lp_solves: int = 0
    pricing_calls: int = 0
    columns_generated: int = 0
    max_depth: int = 0
    incumbent_updates: int = 0
    root_bound: float = float('nan')

    def to_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)


@dataclass
class BnpResult:
    """Best partition found, as pilots 1..P, and how it was certified."""

    pilots: np.ndarray
    objective: float
    certified: bool
    columns: List[Column]
    stats: TreeStats

    def to_assignment(self):
        from rsa_assignment import PilotAssignment
        return PilotAssignment(self.pilots, len(self.columns), None, "bnp")


def _columns_to_pilots(columns: Sequence[Column], num_users: int) -> np.ndarray:
    pilots = np.zeros(num_users, dtype=int)
    for pilot, column in enumerate(columns, start=1):
        pilots[list(column.members)] = pilot
    return pilots


class _Solver:
    """Best-first branch-and-price over one instance."""

    def __init__(self, instance: BnpInstance, time_budget: float):
        self.instance = instance
        self.deadline = time.monotonic() + time_budget
        self.pool: List[Column] = []
        self.pool_masks: Dict[int, int] = {}
        self.stats = TreeStats()

        seed = round_robin_partition(instance)
        for column in seed:
            self._add(column)
        self.incumbent = [self.pool_masks[c.mask] for c in seed]
        self.incumbent_value = float(sum(c.cost for c in seed))

    def _add(self, column: Column) -> int:
        index = self.pool_masks.get(column.mask)
        if index is None:
            index = len(self.pool)
            self.pool.append(column)
            self.pool_masks[column.mask] = index
        return index

    def _check_time(self):
        if time.monotonic() > self.deadline:
            raise _BudgetExceeded()

    def process(self, node: BnbNode) -> Tuple[Optional[RlmpSolution], List[int]]:
        """Column generation at a node; returns the final LP and the pool indices it used."""
        basis = None
        while True:
            self._check_time()
            active = [i for i, col in enumerate(self.pool) if node.allows(col.members)]
            solution = solve_rlmp(
                [self.pool[i] for i in active],
                self.instance.num_users,
                self.instance.num_pilots,
                self.instance.big_m,
                basis
            )
            self.stats.lp_solves += 1
            self.stats.pricing_calls += 1
            column = pricing(self.instance, solution.duals, node, set(self.pool_masks), self.deadline)
            if column is None:
                return solution, active
            logger.debug(f"Pricing added {column.members} (cost {column.cost:.4f})")
            self._add(column)
            self.stats.columns_generated += 1
            basis = solution.basis

    def run(self) -> BnpResult:
        counter = itertools.count()
        heap: List[Tuple[float, int, BnbNode]] = [(-np.inf, next(counter), BnbNode())]
        certified = True

        try:
            while heap:
                _, _, node = heapq.heappop(heap)
                if node.bound <= self.incumbent_value + PRUNE_TOL:
                    self.stats.nodes_pruned += 1
                    continue

                self.stats.nodes_processed += 1
                self.stats.max_depth = max(self.stats.max_depth, node.depth)
                solution, active = self.process(node)
                if node.depth == 0:
                    self.stats.root_bound = solution.objective

                if not solution.feasible:
                    self.stats.nodes_infeasible += 1
                    continue
                bound = solution.objective
                if bound <= self.incumbent_value + PRUNE_TOL:
                    self.stats.nodes_pruned += 1
                    continue

                if is_integral(solution.lambdas):
                    chosen = [active[j] for j in np.flatnonzero(solution.lambdas > 0.5)]
                    self.incumbent = sorted(chosen)
                    self.incumbent_value = float(sum(self.pool[i].cost for i in chosen))
                    self.stats.incumbent_updates += 1
                    logger.debug(f"New incumbent {self.incumbent_value:.6f} at depth {node.depth}")
                    continue

                columns = [self.pool[i] for i in active]
                pair = branch_pair(solution.lambdas, columns, self.instance.num_users)
                for together in (True, False):
                    child = node.child(pair, together, bound)
                    heapq.heappush(heap, (-bound, next(counter), child))
        except _BudgetExceeded:
            certified = False
            logger.warning(
                f"Time budget exhausted after {self.stats.nodes_processed} nodes; "
                f"returning incumbent {self.incumbent_value:.6f} (not certified)"
            )

        columns = [self.pool[i] for i in sorted(self.incumbent)]
        return BnpResult(
            _columns_to_pilots(columns, self.instance.num_users),
            self.incumbent_value,
            certified,
            columns,
            self.stats
        )


def bnp_solve(instance: BnpInstance, time_budget: float = 10.0) -> BnpResult:
    """
    Branch-and-price for the sum-SE partition into exactly P co-pilot sets.

    Args:
        instance: Master problem instance
        time_budget: Seconds before returning the incumbent uncertified

    Returns:
        BnpResult (pilots numbered by column discovery order)

    Raises:
        StructuralInfeasibility: If N_u < 2P
    """
    if instance.num_users < 2 * instance.num_pilots:
        raise StructuralInfeasibility(
            f"{instance.num_users} users cannot form {instance.num_pilots} sets of at least two"
        )

    result = _Solver(instance, time_budget).run()
    stats = result.stats
    logger.info(
        f"BnP: objective {result.objective:.6f}, root bound {stats.root_bound:.6f}, "
        f"{stats.nodes_processed} nodes, {stats.columns_generated} columns"
        f"{'' if result.certified else ' (not certified)'}"
    )
    return result


def set_partitions(n: int, num_parts: int, min_size: int = 1) -> Iterator[np.ndarray]:
    """
    Partitions of range(n) into exactly num_parts blocks of >= min_size,
    as restricted-growth label arrays (block of the first element is 0).
    """
    labels = np.zeros(n, dtype=int)
    sizes = [0] * num_parts

    def fill(i: int, used: int) -> Iterator[np.ndarray]:
        remaining = n - i
        missing = sum(max(0, min_size - sizes[k]) for k in range(used)) + (num_parts - used) * min_size
        if missing > remaining:
            return
        if i == n:
            if used == num_parts:
                yield labels.copy()
            return
        for k in range(min(used + 1, num_parts)):
            labels[i] = k
            sizes[k] += 1
            yield from fill(i + 1, max(used, k + 1))
            sizes[k] -= 1

    if n == 0 or num_parts < 1:
        return
    yield from fill(0, 0)


def exhaustive_oracle(instance: BnpInstance) -> Tuple[np.ndarray, float]:
    """
    Best partition into P cluster-respecting sets of at least two users, by enumeration.

    Returns:
        (pilots 1..P in first-appearance order, objective)

    Raises:
        BnpError: If N_u exceeds ORACLE_MAX_USERS
        StructuralInfeasibility: If no such partition exists
    """
    n = instance.num_users
    if n > ORACLE_MAX_USERS:
        raise BnpError(f"Oracle refuses {n} users (max {ORACLE_MAX_USERS})")

    best_labels: Optional[np.ndarray] = None
    best_value = -np.inf
    for labels in set_partitions(n, instance.num_pilots, min_size=2):
        value = 0.0
        valid = True
        for k in range(instance.num_pilots):
            members = np.flatnonzero(labels == k)
            if np.unique(instance.clusters[members]).size < members.size:
                valid = False
                break
            value += instance.cost(members)
        if valid and value > best_value:
            best_value = value
            best_labels = labels

    if best_labels is None:
        raise StructuralInfeasibility("No cluster-respecting partition into non-singleton sets")
    return best_labels + 1, float(best_value)
