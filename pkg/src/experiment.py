"""
Monte Carlo experiment harness.

One trial samples RRHs and users on the generation disk, plants the
typical user at the origin, runs the configured pilot scheme and scores
the outcome: the typical user's SE and the sum SE over the measurement
disk. Every random stream of a trial is derived from (base_seed, trial),
so the same trial index gives the same realization for every scheme and
every R_inh. That pairing is what makes cross-scheme ratios meaningful.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import VERSION, ConfigError, ExperimentConfig, get_logger
from stochastic_geometry import (
    CircularWindow,
    PointSet,
    assign_marks,
    derive_seed,
    plant_typical_user,
    sample_ppp,
)
from channel_model import gain_matrix, se_metrics
from rsa_assignment import (
    PilotAssignment,
    SensingConfig,
    assign_distributed,
    assign_random,
    assign_regenerative,
    assign_rsa,
    threshold_for_radius,
)
from maxmin_partition import PartitionInstance, maxmin_assign
from spectral_clustering import cluster_users
from bnp_solver import BnpInstance, BnpResult, StructuralInfeasibility, bnp_solve
from export import write_dataset

logger = get_logger(__name__)

RESULT_COLUMNS = (
    "trial",
    "seed",
    "scheme",
    "inhibition_radius",
    "num_pilots",
    "user_density",
    "rrh_density",
    "typical_assigned",
    "typical_se",
    "sum_se",
    "assigned_density",
    "num_users",
    "runtime_ms",
)

SUMMARY_COLUMNS = (
    "scheme",
    "inhibition_radius",
    "trials",
    "mean_typical_se",
    "ci_typical_se",
    "mean_sum_se",
    "ci_sum_se",
    "assignment_rate",
    "mean_assigned_density",
)

# Normal-approximation 95% interval
Z_95 = 1.959963984540054


@dataclass(frozen=True)
class ResultRow:
    """One (trial, R_inh) outcome; the column set is the same for every scheme."""

    trial: int
    seed: int
    scheme: str
    inhibition_radius: Optional[float]
    num_pilots: int
    user_density: float
    rrh_density: float
    typical_assigned: bool
    typical_se: float
    sum_se: float
    assigned_density: float
    num_users: int
    runtime_ms: Optional[float] = None

    def values(self) -> Tuple:
        return tuple(getattr(self, name) for name in RESULT_COLUMNS)


@dataclass(frozen=True)
class Realization:
    """Sampled network of one trial: RRHs, users (typical user at index 0) and gains."""

    rrhs: PointSet
    users: PointSet
    beta: np.ndarray
    seed: int


def sample_realization(config: ExperimentConfig, trial: int) -> Realization:
    """
    Sample the network of a trial.

    The typical user is planted before marks are drawn, so its arrival
    order is as random as anyone else's.
    """
    seed = derive_seed(config.base_seed, trial)
    window = CircularWindow(config.generation_radius)
    rrhs = sample_ppp(config.rrh_density, window, derive_seed(seed, "rrhs"))
    users = sample_ppp(config.user_density, window, derive_seed(seed, "users"))
    users = assign_marks(plant_typical_user(users), derive_seed(seed, "marks"))
    beta = gain_matrix(rrhs, users, config.pathloss)
    return Realization(rrhs, users, beta, seed)


def _maxmin_pilots(config: ExperimentConfig, users: PointSet, diameter: float) -> PilotAssignment:
    n = len(users)
    P = config.num_pilots
    # Fewer users than P * size_floor: lower the floor to what the users allow
    floor = min(config.size_floor, n // P)
    if floor == 0:
        logger.debug(f"Max-min: {n} users for {P} pilots, every user gets its own pilot")
        return PilotAssignment(np.arange(1, n + 1), P, None, "maxmin")
    if floor < config.size_floor:
        logger.debug(f"Max-min: size floor lowered to {floor} for {n} users")

    instance = PartitionInstance(
        users.points,
        P,
        size_floor=floor,
        epsilon=config.epsilon,
        time_budget=config.time_budget,
        diameter=diameter,
    )
    result = maxmin_assign(instance)
    if not result.feasible:
        return PilotAssignment(np.zeros(n, dtype=int), P, None, "maxmin")
    return result.to_assignment()


def solve_bnp(
    config: ExperimentConfig,
    beta: np.ndarray,
    seed: int,
    clusters: Optional[np.ndarray] = None
) -> Optional[BnpResult]:
    """
    Cluster the users spectrally, then run branch-and-price.

    Args:
        config: Experiment configuration (P, SINR floor, bigM, time budget)
        beta: (RRHs, users) gains
        seed: Trial seed; the k-means stream is derived from it
        clusters: Per-user cluster ids to use instead of clustering

    Returns:
        BnpResult, or None when N_u < 2P leaves no feasible partition
    """
    if clusters is None:
        clusters = cluster_users(
            beta, config.num_pilots, config.num_clusters, seed=derive_seed(seed, "kmeans")
        ).user_membership
    instance = BnpInstance(
        beta,
        config.num_pilots,
        clusters,
        config.pilot_energy,
        sinr_floor=config.sinr_floor,
        big_m=config.big_m,
    )
    try:
        result = bnp_solve(instance, config.time_budget)
    except StructuralInfeasibility as e:
        logger.warning(f"BnP skipped: {e}")
        return None
    if not result.certified:
        logger.warning("BnP hit its time budget; using the best partition found")
    return result


def _bnp_pilots(config: ExperimentConfig, beta: np.ndarray, seed: int) -> PilotAssignment:
    result = solve_bnp(config, beta, seed)
    if result is None:
        return PilotAssignment(np.zeros(beta.shape[1], dtype=int), config.num_pilots, None, "bnp")
    return result.to_assignment()


def assign_pilots(
    config: ExperimentConfig,
    users: PointSet,
    beta: np.ndarray,
    inhibition_radius: float,
    seed: int,
    diameter: Optional[float] = None
) -> PilotAssignment:
    """
    Run the configured scheme on a user set.

    Args:
        config: Experiment configuration (scheme and its knobs)
        users: Marked users to assign
        beta: (RRHs, users) gains of exactly these users (BnP only)
        inhibition_radius: R_inh for the RSA family
        seed: Trial seed; the pilot stream is derived from it
        diameter: Search bound for max-min (default: the window diameter)

    Returns:
        PilotAssignment over `users`

    Raises:
        ConfigError: If the scheme is unknown
    """
    pilot_seed = derive_seed(seed, "pilots")
    scheme = config.scheme
    P = config.num_pilots

    if scheme == "rsa":
        return assign_rsa(users, P, inhibition_radius, pilot_seed)
    if scheme == "regenerative":
        return assign_regenerative(users, P, inhibition_radius)
    if scheme == "distributed-rsa":
        sensing = SensingConfig(
            threshold_for_radius(inhibition_radius, config.pilot_energy, config.pathloss),
            config.pilot_energy,
        )
        return assign_distributed(users, P, sensing, pilot_seed, config.pathloss, inhibition_radius)
    if scheme == "random":
        return assign_random(users, P, pilot_seed)
    if scheme == "maxmin":
        if diameter is None:
            diameter = 2.0 * users.window.radius
        return _maxmin_pilots(config, users, diameter)
    if scheme == "bnp":
        return _bnp_pilots(config, beta, seed)
    raise ConfigError(f"Unknown scheme: {scheme}")


def run_trial(config: ExperimentConfig, trial: int, inhibition_radius: Optional[float] = None) -> ResultRow:
    """
    One Monte Carlo trial.

    Users beyond system_radius take no part in the assignment (and stay
    unassigned); the typical user at the origin always does.

    Args:
        config: Experiment configuration
        trial: Trial index (selects the realization)
        inhibition_radius: R_inh override (default: config.inhibition_radius)

    Returns:
        ResultRow
    """
    radius = inhibition_radius if inhibition_radius is not None else config.inhibition_radius
    started = time.perf_counter()

    net = sample_realization(config, trial)
    users = net.users
    total = len(users)

    if config.system_radius is not None:
        system = CircularWindow(config.system_radius)
        in_system = system.contains(users.points)
    else:
        system = users.window
        in_system = np.ones(total, dtype=bool)

    measurement = CircularWindow(config.measurement_radius)
    in_window = measurement.contains(users.points)

    no_rrhs = len(net.rrhs) == 0
    if no_rrhs and config.scheme == "bnp":
        # Clustering needs gains
        pilots = np.zeros(total, dtype=int)
    else:
        served = PointSet(users.points[in_system], system, users.marks[in_system], users.seed)
        assignment = assign_pilots(
            config,
            served,
            net.beta[:, in_system],
            radius,
            net.seed,
            diameter=2.0 * system.radius,
        )
        pilots = assignment.restricted_to(in_system, total).pilots

    if no_rrhs:
        # Nobody is served
        logger.debug(f"Trial {trial}: no RRHs in the network")
        se = np.zeros(total)
        sum_se = 0.0
    else:
        report = se_metrics(net.beta, pilots, config.pilot_energy, config.num_pilots,
                            config.sinr_cap, in_window)
        se = report.se
        sum_se = report.sum_se

    # The planted typical user (index 0) is not part of the point process
    assigned_in_window = int(np.count_nonzero((pilots[1:] > 0) & in_window[1:]))
    runtime = (time.perf_counter() - started) * 1000.0 if config.record_runtime else None
    uses_radius = config.scheme in ("rsa", "regenerative", "distributed-rsa")

    return ResultRow(
        trial=trial,
        seed=net.seed,
        scheme=config.scheme,
        inhibition_radius=radius if uses_radius else None,
        num_pilots=config.num_pilots,
        user_density=config.user_density,
        rrh_density=config.rrh_density,
        typical_assigned=bool(pilots[0] > 0),
        typical_se=float(se[0]),
        sum_se=float(sum_se),
        assigned_density=assigned_in_window / measurement.area,
        num_users=int(np.count_nonzero(in_window)),
        runtime_ms=runtime,
    )


def _run_task(task: Tuple[ExperimentConfig, int, float]) -> ResultRow:
    config, trial, radius = task
    return run_trial(config, trial, radius)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> List[ResultRow]:
    """
    All trials of a configuration, for every R_inh of its sweep.

    Rows come back ordered by (R_inh, trial) whatever the worker count.

    Args:
        config: Experiment configuration
        workers: Process count (default: config.workers)

    Returns:
        List of ResultRow

    Raises:
        ConfigError: If the scheme cannot hold the expected user count
    """
    config.check_user_capacity()
    workers = workers or config.workers
    tasks = [(config, trial, radius) for radius in config.radii for trial in range(config.trials)]
    logger.info(
        f"Running {config.scheme}: {config.trials} trials x {len(config.radii)} radii "
        f"on {workers} worker(s)"
    )

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        rows = [_run_task(task) for task in tasks]

    logger.info(f"Finished {len(rows)} trials")
    return rows


@dataclass(frozen=True)
class SummaryRow:
    scheme: str
    inhibition_radius: Optional[float]
    trials: int
    mean_typical_se: float
    ci_typical_se: float
    mean_sum_se: float
    ci_sum_se: float
    assignment_rate: float
    mean_assigned_density: float

    def values(self) -> Tuple:
        return tuple(getattr(self, name) for name in SUMMARY_COLUMNS)


def mean_ci(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and 95% half-width (zero for a single value)."""
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        return float('nan'), float('nan')
    if data.size == 1:
        return float(data[0]), 0.0
    return float(np.mean(data)), float(Z_95 * np.std(data, ddof=1) / np.sqrt(data.size))


def summarize(rows: Sequence[ResultRow]) -> List[SummaryRow]:
    """Per (scheme, R_inh) means with normal-approximation 95% half-widths."""
    groups: Dict[Tuple[str, Optional[float]], List[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.scheme, row.inhibition_radius), []).append(row)

    summary = []
    for (scheme, radius), group in groups.items():
        typical, typical_ci = mean_ci([r.typical_se for r in group])
        total, total_ci = mean_ci([r.sum_se for r in group])
        summary.append(SummaryRow(
            scheme=scheme,
            inhibition_radius=radius,
            trials=len(group),
            mean_typical_se=typical,
            ci_typical_se=typical_ci,
            mean_sum_se=total,
            ci_sum_se=total_ci,
            assignment_rate=float(np.mean([r.typical_assigned for r in group])),
            mean_assigned_density=float(np.mean([r.assigned_density for r in group])),
        ))
    return summary


def dataset_metadata(config: ExperimentConfig) -> Dict[str, object]:
    """Header lines of a dataset: the config echo plus the version."""
    metadata: Dict[str, object] = dict(config.echo())
    metadata["version"] = VERSION
    metadata["pilot_length"] = config.pilot_length
    metadata.pop("workers", None)
    return metadata


def write_results(
    rows: Sequence[ResultRow],
    path: Path,
    config: ExperimentConfig,
    summary_path: Optional[Path] = None,
    json_mirror: bool = False
) -> Path:
    """
    Write the per-trial dataset (and optionally its summary).

    The worker count is left out of the header so that serial and
    parallel runs produce identical bytes.
    """
    metadata = dataset_metadata(config)
    write_dataset(path, RESULT_COLUMNS, [row.values() for row in rows], metadata, json_mirror)
    logger.info(f"Wrote {len(rows)} rows to {path}")
    if summary_path is not None:
        summary = summarize(rows)
        write_dataset(summary_path, SUMMARY_COLUMNS, [s.values() for s in summary], metadata, json_mirror)
        logger.info(f"Wrote summary to {summary_path}")
    return Path(path)


def mean_se_by_radius(rows: Sequence[ResultRow]) -> Dict[float, float]:
    """Mean typical-user SE per R_inh."""
    return {s.inhibition_radius: s.mean_typical_se for s in summarize(rows)}


def pick_best_radius(means: Dict[float, float]) -> float:
    """Radius with the largest mean; ties go to the smallest radius."""
    if not means:
        raise ConfigError("No radii to choose from")
    best = None
    for radius in sorted(means):
        if best is None or means[radius] > means[best]:
            best = radius
    return best


def best_rinh(
    rrh_density: float,
    user_density: float,
    num_pilots: int,
    grid: Sequence[float],
    trials: int = 100,
    base_seed: int = 1,
    config: Optional[ExperimentConfig] = None,
    **overrides
) -> float:
    """
    R_inh in the grid that maximizes the Monte Carlo mean user SE of RSA.

    All grid points are scored on the same realizations; ties go to the
    smallest R_inh.

    Args:
        rrh_density: lambda_r (per m^2)
        user_density: lambda_u (per m^2)
        num_pilots: P
        grid: Candidate radii (meters, nonempty)
        trials: Trials per radius
        base_seed: Base seed
        config: Base configuration for the remaining fields
        **overrides: Further field overrides

    Returns:
        A grid member (meters)

    Raises:
        ConfigError: If the grid is empty or the settings are invalid
    """
    grid = [float(r) for r in grid]
    if not grid:
        raise ConfigError("R_inh grid must not be empty")
    if len(grid) == 1:
        return grid[0]

    base = config or ExperimentConfig()
    search = base.with_overrides(
        scheme="rsa",
        rrh_density=rrh_density,
        user_density=user_density,
        num_pilots=num_pilots,
        inhibition_radii=grid,
        trials=trials,
        base_seed=base_seed,
        **overrides,
    )
    best = pick_best_radius(mean_se_by_radius(run_experiment(search)))
    logger.info(f"Best R_inh for lambda_r={rrh_density}, lambda_u={user_density}, P={num_pilots}: {best} m")
    return best
