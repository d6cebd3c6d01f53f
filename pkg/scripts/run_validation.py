#!/usr/bin/env python3
"""
Acceptance-Scale Validation Runner

Runs the long Monte Carlo and oracle checks that are too slow for the unit
tests: RSA density and assignment-probability theory against simulation,
jamming coverage, centralized vs regenerative densities, max-min and
branch-and-price optimality against enumeration, numerical kernels and
dataset determinism.

Usage:
    uv run python scripts/run_validation.py
    uv run python scripts/run_validation.py --quick --only jamming bnp
    uv run python scripts/run_validation.py --workers 8 >> logs/validation.log 2>&1

Environment:
    - PILOTGRID_LOG_DIR / PILOTGRID_LOG_LEVEL as for the CLI
    - Logs to the console and <log_dir>/pilotgrid.log
"""

import sys
import time
import shutil
import logging
import argparse
import tempfile
from pathlib import Path
from datetime import datetime
from typing import Any, Callable, Dict, List

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

import numpy as np

from config import ExperimentConfig, get_config
from export import setup_logging as setup_file_logging
from stochastic_geometry import CircularWindow, derive_seed, sample_uniform
from channel_model import channel_state, gain_matrix
from rsa_theory import (
    THETA_JAMMING, AssignmentProbabilityInputs, assignment_probability,
    kappa_for, sequential_densities, simulate_rsa
)
from experiment import mean_ci, run_experiment
from maxmin_partition import PartitionInstance, maxmin_assign, min_copilot_distance
from bnp_solver import BnpInstance, bnp_solve, exhaustive_oracle, set_partitions
from spectral_clustering import build_graph, cluster_users, normalized_spectral_embedding


def setup_logging() -> logging.Logger:
    """
    Setup logging for a validation run.

    Returns:
        Logger instance
    """
    config = get_config()
    setup_file_logging(config.log_dir, config.log_level)

    logger = logging.getLogger("run_validation")
    logger.info("=" * 70)
    logger.info("Starting pilotgrid validation")
    logger.info(f"Timestamp: {datetime.now().isoformat()}")
    logger.info("=" * 70)

    return logger


def _density_config(user_density: float, num_pilots: int, radius: float, trials: int, workers: int) -> ExperimentConfig:
    return ExperimentConfig(
        scheme="rsa",
        rrh_density=0.0,
        user_density=user_density,
        num_pilots=num_pilots,
        inhibition_radius=radius,
        trials=trials,
        workers=workers,
    )


def check_density(quick: bool, workers: int, logger: logging.Logger) -> Dict[str, Any]:
    """Assigned-user density: sequential kinetics vs centralized RSA, 5% relative."""
    trials = 20 if quick else 200
    densities = (1e-4, 1e-3) if quick else (1e-5, 1e-4, 1e-3)
    pilots = (1, 4, 16) if quick else (1, 2, 4, 8, 16)
    worst = 0.0
    for user_density in densities:
        for radius in (100.0, 200.0):
            for num_pilots in pilots:
                theory = sequential_densities(user_density, radius, num_pilots).total
                rows = run_experiment(_density_config(user_density, num_pilots, radius, trials, workers))
                sim, _ = mean_ci([r.assigned_density for r in rows])
                error = abs(sim - theory) / theory
                worst = max(worst, error)
                logger.info(f"  lambda_u={user_density:g} R={radius:g} P={num_pilots}: "
                            f"theory {theory:.4e}, sim {sim:.4e} ({100 * error:.2f}%)")
    return {'passed': worst <= 0.05, 'detail': f"worst relative error {100 * worst:.2f}%"}


def check_jamming(quick: bool, workers: int, logger: logging.Logger) -> Dict[str, Any]:
    """Saturated single-pilot RSA covers 0.5474 of the plane, within 0.01."""
    radius = 100.0
    load = 100.0 if quick else 500.0
    intensity = load / kappa_for(radius)
    window = CircularWindow(1000.0)
    coverages = []
    for seed in range(2 if quick else 5):
        sample = simulate_rsa(intensity, radius, window, 1.0, derive_seed(7, seed, "jamming"))
        coverages.append(sample.coverage(800.0))
        logger.info(f"  seed {seed}: {sample.arrivals} arrivals, coverage {coverages[-1]:.4f}")
    coverage = float(np.mean(coverages))
    return {'passed': abs(coverage - THETA_JAMMING) <= 0.01, 'detail': f"coverage {coverage:.4f}"}


def check_probability(quick: bool, workers: int, logger: logging.Logger) -> Dict[str, Any]:
    """Typical-user assignment probability within 0.03 absolute, nondecreasing in P."""
    trials = 500 if quick else 10000
    radius = 200.0
    worst = 0.0
    monotone = True
    for user_density in (1e-4, 1e-3):
        previous = 0.0
        for num_pilots in (1, 4, 16):
            theory = assignment_probability(AssignmentProbabilityInputs(user_density, radius, num_pilots))
            rows = run_experiment(_density_config(user_density, num_pilots, radius, trials, workers))
            frequency, _ = mean_ci([float(r.typical_assigned) for r in rows])
            worst = max(worst, abs(theory - frequency))
            monotone = monotone and theory >= previous - 1e-12
            previous = theory
            logger.info(f"  lambda_u={user_density:g} P={num_pilots}: theory {theory:.4f}, sim {frequency:.4f}")
    return {'passed': worst <= 0.03 and monotone, 'detail': f"worst gap {worst:.4f}, monotone {monotone}"}


def check_regenerative(quick: bool, workers: int, logger: logging.Logger) -> Dict[str, Any]:
    """Centralized and regenerative RSA give the same assigned density, within 3%."""
    trials = 20 if quick else 200
    worst = 0.0
    for num_pilots in (2, 8):
        base = _density_config(1e-3, num_pilots, 200.0, trials, workers)
        central, _ = mean_ci([r.assigned_density for r in run_experiment(base)])
        regen_rows = run_experiment(base.with_overrides(scheme="regenerative"))
        regenerative, _ = mean_ci([r.assigned_density for r in regen_rows])
        error = abs(central - regenerative) / central
        worst = max(worst, error)
        logger.info(f"  P={num_pilots}: centralized {central:.4e}, regenerative {regenerative:.4e}")
    return {'passed': worst <= 0.03, 'detail': f"worst relative gap {100 * worst:.2f}%"}


def _brute_force_maxmin(points: np.ndarray, parts: int, floor: int) -> float:
    best = -1.0
    for labels in set_partitions(points.shape[0], parts, floor):
        best = max(best, min_copilot_distance(labels, points))
    return best


def check_maxmin(quick: bool, workers: int, logger: logging.Logger) -> Dict[str, Any]:
    """Bisection t* within 0.5 m of enumeration; partitions respect every constraint."""
    rng = np.random.default_rng(3)
    window = CircularWindow(400.0)
    instances = 10 if quick else 50
    failures = 0
    for k in range(instances):
        n = int(rng.integers(6, 13))
        parts = int(rng.choice([2, 3]))
        users = sample_uniform(n, window, derive_seed(5, k, "maxmin"))
        result = maxmin_assign(PartitionInstance.from_points(users, parts, size_floor=2, epsilon=0.5, time_budget=60.0))
        optimum = _brute_force_maxmin(users.points, parts, 2)
        sizes = np.bincount(result.membership, minlength=parts + 1)[1:]
        achieved = min_copilot_distance(result.membership, users.points)
        ok = (result.feasible and 0.0 <= optimum - result.t_star < 0.5
              and np.all(sizes >= 2) and achieved >= result.t_star - 1e-12)
        if not ok:
            failures += 1
            logger.error(f"  ✗ instance {k}: N={n} P={parts} t*={result.t_star:.3f} optimum {optimum:.3f}")
    return {'passed': failures == 0, 'detail': f"{instances - failures}/{instances} instances match"}


def check_bnp(quick: bool, workers: int, logger: logging.Logger) -> Dict[str, Any]:
    """BnP equals the enumerated optimum; most trees prune or close at the root."""
    rng = np.random.default_rng(4)
    window = CircularWindow(400.0)
    instances = 10 if quick else 50
    energy_db = 80.0
    mismatches = 0
    pruned = 0
    for k in range(instances):
        n = int(rng.integers(6, 11))
        parts = int(rng.choice([2, 3]))
        rrhs = sample_uniform(int(rng.integers(5, 21)), window, derive_seed(6, k, "rrhs"))
        users = sample_uniform(n, window, derive_seed(6, k, "users"))
        beta = gain_matrix(rrhs, users)
        clusters = cluster_users(beta, parts, seed=derive_seed(6, k, "kmeans")).user_membership
        instance = BnpInstance(beta, parts, clusters, parts * 10.0 ** (energy_db / 10.0), sinr_floor=0.0)
        result = bnp_solve(instance, time_budget=600.0)
        _, optimum = exhaustive_oracle(instance)
        if not result.certified or abs(result.objective - optimum) > 1e-9 * max(1.0, abs(optimum)):
            mismatches += 1
            logger.error(f"  ✗ instance {k}: BnP {result.objective:.9f} vs oracle {optimum:.9f}")
        if result.stats.nodes_pruned > 0 or result.stats.nodes_processed == 1:
            pruned += 1
    share = pruned / instances
    return {
        'passed': mismatches == 0 and share >= 0.8,
        'detail': f"{instances - mismatches}/{instances} optimal, {100 * share:.0f}% pruned or closed at root",
    }


def check_kernels(quick: bool, workers: int, logger: logging.Logger) -> Dict[str, Any]:
    """Eigen-residuals, Laplacian spectrum range and per-RRH power sums."""
    rng = np.random.default_rng(8)
    window = CircularWindow(400.0)
    worst_residual = 0.0
    worst_power = 0.0
    spectrum_ok = True
    for k in range(20 if quick else 100):
        rrhs = sample_uniform(int(rng.integers(4, 16)), window, derive_seed(9, k, "rrhs"))
        users = sample_uniform(int(rng.integers(6, 30)), window, derive_seed(9, k, "users"))
        beta = gain_matrix(rrhs, users)

        graph = build_graph(beta)
        embedding = normalized_spectral_embedding(graph, min(4, graph.num_vertices - 1))
        for j, value in enumerate(embedding.eigenvalues):
            v = embedding.vectors[:, j]
            worst_residual = max(worst_residual, float(np.linalg.norm(graph.normalized_laplacian @ v - value * v)))
            spectrum_ok = spectrum_ok and -1e-9 <= value <= 2 + 1e-9

        num_pilots = int(rng.integers(1, 5))
        pilots = rng.integers(1, num_pilots + 1, size=len(users))
        state = channel_state(beta, pilots, num_pilots * 1e8, num_pilots)
        for pilot in np.unique(pilots):
            sums = state.eta[:, pilots == pilot].sum(axis=1)
            worst_power = max(worst_power, float(np.max(np.abs(sums - 1.0 / num_pilots))))

    logger.info(f"  worst eigen-residual {worst_residual:.2e}, worst power error {worst_power:.2e}")
    return {
        'passed': worst_residual <= 1e-8 and worst_power <= 1e-12 and spectrum_ok,
        'detail': f"residual {worst_residual:.1e}, power {worst_power:.1e}",
    }


def check_determinism(quick: bool, workers: int, logger: logging.Logger) -> Dict[str, Any]:
    """Identical CLI invocations write identical bytes, serial or parallel."""
    from cli import main as cli_main

    temp_dir = Path(tempfile.mkdtemp())
    try:
        overrides = []
        for item in ("trials=4", "generation_radius=800", "measurement_radius=400",
                     "user_density=1e-4", "rrh_density=5e-5", "inhibition_radii=100,200"):
            overrides += ["--override", item]
        outputs = []
        for i, count in enumerate((1, 1, max(2, workers))):
            out = temp_dir / f"run{i}.csv"
            code = cli_main(["simulate", *overrides, "--workers", str(count), "--out", str(out)])
            if code != 0:
                return {'passed': False, 'detail': f"simulate exited {code}"}
            outputs.append(out.read_bytes())

        prob = []
        for i in range(2):
            out = temp_dir / f"prob{i}.csv"
            cli_main(["theory", "prob", "--user-density", "1e-3", "--radius", "200",
                      "--pilots", "1", "4", "16", "--out", str(out)])
            prob.append(out.read_bytes())
        same = len(set(outputs)) == 1 and prob[0] == prob[1]
        return {'passed': same, 'detail': "byte-identical" if same else "outputs differ"}
    finally:
        shutil.rmtree(temp_dir)


CHECKS: Dict[str, Callable[[bool, int, logging.Logger], Dict[str, Any]]] = {
    "density": check_density,
    "jamming": check_jamming,
    "probability": check_probability,
    "regenerative": check_regenerative,
    "maxmin": check_maxmin,
    "bnp": check_bnp,
    "kernels": check_kernels,
    "determinism": check_determinism,
}


def run_checks(names: List[str], quick: bool, workers: int, logger: logging.Logger) -> Dict[str, Any]:
    """
    Run the selected checks.

    Returns:
        Summary with per-check results
    """
    summary = {'total': len(names), 'passed': 0, 'failed': 0, 'results': {}, 'errors': []}

    for name in names:
        logger.info("")
        logger.info(f"Check: {name}")
        started = time.perf_counter()
        try:
            result = CHECKS[name](quick, workers, logger)
        except Exception as e:
            error_msg = f"{name} raised: {e}"
            logger.error(f"  ✗ {error_msg}", exc_info=True)
            summary['errors'].append(error_msg)
            result = {'passed': False, 'detail': str(e)}

        result['seconds'] = time.perf_counter() - started
        summary['results'][name] = result
        if result['passed']:
            summary['passed'] += 1
            logger.info(f"  ✓ {result['detail']} ({result['seconds']:.1f} s)")
        else:
            summary['failed'] += 1
            logger.error(f"  ✗ {result['detail']} ({result['seconds']:.1f} s)")

    return summary


def print_summary(summary: Dict[str, Any], logger: logging.Logger):
    """
    Print execution summary.

    Args:
        summary: Summary dictionary
        logger: Logger instance
    """
    logger.info("")
    logger.info("=" * 70)
    logger.info("VALIDATION SUMMARY")
    logger.info("=" * 70)
    for name, result in summary['results'].items():
        mark = "✓" if result['passed'] else "✗"
        logger.info(f"{mark} {name:<13} {result['detail']}")
    logger.info(f"Passed: {summary['passed']}/{summary['total']}")

    if summary['errors']:
        logger.info(f"Errors: {len(summary['errors'])}")
        for i, error in enumerate(summary['errors'], 1):
            logger.error(f"  {i}. {error}")

    logger.info("=" * 70)


def main():
    """
    Main execution flow.

    Returns:
        0 when every selected check passes, 1 otherwise
    """
    parser = argparse.ArgumentParser(description="pilotgrid acceptance-scale validation")
    parser.add_argument("--quick", action="store_true", help="Reduced trial counts and grids")
    parser.add_argument("--only", nargs="+", choices=list(CHECKS), help="Run only these checks")
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()

    logger = setup_logging()
    workers = args.workers or get_config().workers
    names = args.only or list(CHECKS)
    logger.info(f"Checks: {', '.join(names)} ({'quick' if args.quick else 'full'}, {workers} worker(s))")

    try:
        summary = run_checks(names, args.quick, workers, logger)
        print_summary(summary, logger)
        return 0 if summary['failed'] == 0 else 1
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return 1


if __name__ == '__main__':
    sys.exit(main())
