"""
Command-line interface for pilotgrid.

Subcommands:
    simulate   Monte Carlo experiment from a config file
    figure     Datasets of a published figure
    theory     Analytic density curve or assignment probability
    assign     Pilot assignment of a point file
    cluster    Spectral clustering of users and RRHs

Exit codes: 0 ok, 1 other failure, 2 configuration error, 3 infeasible
instance, 4 time budget exceeded without a certified optimum.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from config import (
    SCHEMES,
    VERSION,
    ConfigError,
    get_config,
    get_logger,
    load_experiment_config,
    parse_overrides,
)
from export import format_value, setup_logging, write_dataset

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CERTIFIED = 4


def _print_rows(columns: Sequence[str], rows: Sequence[Sequence[object]]):
    print(",".join(columns))
    for row in rows:
        print(",".join(format_value(v) for v in row))


def cmd_simulate(args: argparse.Namespace) -> int:
    from experiment import run_experiment, summarize, write_results, SUMMARY_COLUMNS

    overrides = parse_overrides(args.override or [])
    config = load_experiment_config(args.config, overrides)
    rows = run_experiment(config, workers=args.workers)

    if args.out:
        write_results(rows, Path(args.out), config, Path(args.summary) if args.summary else None, args.json)
    else:
        _print_rows(SUMMARY_COLUMNS, [s.values() for s in summarize(rows)])
    return EXIT_OK


def cmd_figure(args: argparse.Namespace) -> int:
    from figures import FigureSettings, reproduce_figure

    settings = FigureSettings(
        trials=args.trials,
        base_seed=args.seed,
        workers=args.workers or get_config().workers,
        certified=args.certified,
        json_mirror=args.json,
        time_budget=args.time_budget,
    )
    out_dir = Path(args.out) if args.out else get_config().output_dir
    for path in reproduce_figure(args.name, out_dir, settings):
        print(path)
    return EXIT_OK


def cmd_theory_density(args: argparse.Namespace) -> int:
    from rsa_theory import density_curve

    model = density_curve(
        args.intensity,
        args.radius,
        t_max=args.t_max,
        step=args.step,
        printed_normalization=args.printed_normalization,
        printed_exponent=args.printed_exponent,
    )
    if args.out:
        model.to_csv(Path(args.out))
    else:
        _print_rows(["t", "rho"], model.to_rows())
    return EXIT_OK


def cmd_theory_prob(args: argparse.Namespace) -> int:
    from rsa_theory import AssignmentProbabilityInputs, assignment_probability

    rows = []
    for num_pilots in args.pilots:
        inputs = AssignmentProbabilityInputs(args.user_density, args.radius, num_pilots, args.observation_radius)
        rows.append((num_pilots, assignment_probability(inputs, printed_form=args.printed_form)))

    columns = ["num_pilots", "probability"]
    if args.out:
        header = {
            "version": VERSION,
            "user_density": args.user_density,
            "inhibition_radius": args.radius,
            "observation_radius": args.observation_radius,
            "printed_form": args.printed_form,
        }
        write_dataset(Path(args.out), columns, rows, header)
    else:
        _print_rows(columns, rows)
    return EXIT_OK


def _load_points(path: str, seed: int, needs_marks: bool):
    from stochastic_geometry import PointSet, assign_marks, derive_seed

    users = PointSet.from_csv(Path(path))
    if needs_marks and not users.has_marks:
        logger.info("Point file has no marks; drawing arrival marks from the seed")
        users = assign_marks(users, derive_seed(seed, "marks"))
    return users


def _read_clusters(path: str, num_users: int) -> np.ndarray:
    """User cluster ids from a `cluster` dataset (or any CSV with a cluster column)."""
    from export import ExportError, read_int_column

    try:
        clusters = read_int_column(Path(path), "cluster", where={"kind": "user"})
    except ExportError as e:
        raise ConfigError(f"Unreadable cluster file: {e}") from e
    if clusters.shape[0] != num_users:
        raise ConfigError(f"Cluster file {path} labels {clusters.shape[0]} users, point file has {num_users}")
    if clusters.size and clusters.min() < 0:
        raise ConfigError(f"Cluster file {path} has negative cluster ids")
    return clusters


def cmd_assign(args: argparse.Namespace) -> int:
    from stochastic_geometry import PointSet
    from channel_model import gain_matrix
    from experiment import assign_pilots, solve_bnp
    from maxmin_partition import PartitionInstance, maxmin_assign

    users = _load_points(args.users, args.seed, args.scheme in ("rsa", "regenerative", "distributed-rsa"))
    config = load_experiment_config(overrides=dict(
        scheme=args.scheme,
        num_pilots=args.pilots,
        inhibition_radius=args.radius,
        pilot_snr_db=args.pilot_snr_db,
        size_floor=args.size_floor,
        epsilon=args.epsilon,
        time_budget=args.time_budget,
        sinr_floor_db=args.sinr_floor_db,
        num_clusters=args.clusters,
        big_m=args.big_m,
        base_seed=args.seed,
    ))
    header = {"version": VERSION, "users_file": Path(args.users).name}
    status = EXIT_OK

    if args.scheme == "maxmin":
        # Run directly so that infeasibility is reported, not silently mapped to unassigned
        result = maxmin_assign(PartitionInstance.from_points(
            users, args.pilots, size_floor=args.size_floor, epsilon=args.epsilon, time_budget=args.time_budget
        ))
        if not result.feasible:
            if result.approximate:
                logger.error("Max-min search ran out of time before finding any partition")
                return EXIT_NOT_CERTIFIED
            logger.error(f"No partition of {len(users)} users into {args.pilots} sets of {args.size_floor}+")
            return EXIT_INFEASIBLE
        assignment = result.to_assignment()
        header.update(t_star=result.t_star, approximate=result.approximate,
                      feasibility_calls=result.feasibility_calls)
        if result.approximate:
            logger.warning(f"Max-min search hit its time budget {result.timeouts} time(s); t* is not certified")
            status = EXIT_NOT_CERTIFIED
    elif args.scheme == "bnp":
        if not args.rrhs:
            raise ConfigError("bnp needs --rrhs")
        rrhs = PointSet.from_csv(Path(args.rrhs))
        beta = gain_matrix(rrhs, users, config.pathloss)
        clusters = _read_clusters(args.cluster_file, len(users)) if args.cluster_file else None
        result = solve_bnp(config, beta, args.seed, clusters)
        if result is None:
            return EXIT_INFEASIBLE
        assignment = result.to_assignment()
        header.update(objective=result.objective, certified=result.certified, big_m=config.big_m,
                      clusters=Path(args.cluster_file).name if args.cluster_file else "spectral",
                      **result.stats.to_dict())
        if not result.certified:
            status = EXIT_NOT_CERTIFIED
    else:
        beta = np.zeros((0, len(users)))
        assignment = assign_pilots(config, users, beta, args.radius, args.seed)

    if args.out:
        assignment.to_csv(Path(args.out), users, header)
    else:
        _print_rows(["user_index", "pilot"], list(enumerate(assignment.pilots.tolist())))
    logger.info(f"Assigned {assignment.assigned_count}/{len(assignment)} users with {args.scheme}")
    return status


def cmd_cluster(args: argparse.Namespace) -> int:
    from stochastic_geometry import PointSet
    from channel_model import gain_matrix
    from spectral_clustering import cluster_users

    users = PointSet.from_csv(Path(args.users))
    if args.restarts < 1:
        raise ConfigError(f"--restarts must be >= 1, got: {args.restarts}")
    rrhs = PointSet.from_csv(Path(args.rrhs))
    beta = gain_matrix(rrhs, users)
    result = cluster_users(
        beta,
        args.pilots,
        args.clusters,
        seed=args.seed,
        include_null_vector=args.include_null_vector,
        n_init=args.restarts,
    )

    rows = [("user", i, int(c)) for i, c in enumerate(result.user_membership)]
    rows += [("rrh", i, int(c)) for i, c in enumerate(result.rrh_membership)]
    columns = ["kind", "index", "cluster"]
    if args.out:
        header = {
            "version": VERSION,
            "num_clusters": result.num_clusters,
            "ncut": result.ncut_value,
            "reruns": result.reruns,
            "splits": result.splits,
            "seed": args.seed,
            "restarts": args.restarts,
            "include_null_vector": args.include_null_vector,
        }
        write_dataset(Path(args.out), columns, rows, header)
    else:
        _print_rows(columns, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pilotgrid", description="Pilot assignment for cell-free massive MIMO")
    parser.add_argument("--version", action="version", version=VERSION)
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-file", action="store_true", help="Also log to <log_dir>/pilotgrid.log")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Run a Monte Carlo experiment")
    p.add_argument("--config", type=Path, default=None, help="Flat TOML experiment file")
    p.add_argument("--override", action="append", metavar="KEY=VALUE", help="Override a config field")
    p.add_argument("--out", help="Per-trial dataset (CSV); prints the summary when omitted")
    p.add_argument("--summary", help="Summary dataset (CSV)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--json", action="store_true", help="Also write JSON mirrors")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("figure", help="Write the datasets of a figure")
    p.add_argument("name", help="fig3-left, fig3-center, fig3-right, fig4-ratios or fig5-cdf")
    p.add_argument("--out", help="Output directory (default: PILOTGRID_OUTPUT_DIR)")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--certified", action="store_true", help="Small instances with certified BnP optima")
    p.add_argument("--time-budget", type=float, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_figure)

    theory = sub.add_parser("theory", help="Analytic RSA results").add_subparsers(dest="quantity", required=True)
    p = theory.add_parser("density", help="Density curve rho(t)")
    p.add_argument("--intensity", type=float, required=True, help="Arrivals per m^2")
    p.add_argument("--radius", type=float, required=True, help="R_inh (m)")
    p.add_argument("--t-max", type=float, default=1.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--printed-normalization", action="store_true")
    p.add_argument("--printed-exponent", action="store_true")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_theory_density)

    p = theory.add_parser("prob", help="Typical-user assignment probability")
    p.add_argument("--user-density", type=float, required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--pilots", type=int, nargs="+", required=True)
    p.add_argument("--observation-radius", type=float, default=600.0)
    p.add_argument("--printed-form", action="store_true")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_theory_prob)

    p = sub.add_parser("assign", help="Assign pilots to a point file")
    p.add_argument("scheme", choices=SCHEMES)
    p.add_argument("--users", required=True, help="x_m,y_m[,mark] CSV")
    p.add_argument("--rrhs", help="RRH point file (bnp)")
    p.add_argument("--pilots", type=int, required=True)
    p.add_argument("--radius", type=float, default=200.0, help="R_inh (m)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pilot-snr-db", type=float, default=80.0)
    p.add_argument("--size-floor", type=int, default=2)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--time-budget", type=float, default=10.0)
    p.add_argument("--sinr-floor-db", type=float, default=0.0)
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--big-m", type=float, default=1e6, help="Penalty of infeasible columns (bnp)")
    p.add_argument("--cluster-file", help="Cluster dataset from the cluster subcommand (bnp)")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_assign)

    p = sub.add_parser("cluster", help="Spectral clustering of users and RRHs")
    p.add_argument("--users", required=True)
    p.add_argument("--rrhs", required=True)
    p.add_argument("--pilots", type=int, required=True)
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10, help="k-means restarts")
    p.add_argument("--include-null-vector", action="store_true", help="Keep the zero-eigenvalue eigenvector")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_cluster)

    return parser


def exit_code_for(error: Exception) -> int:
    """Map a pilotgrid exception to its exit code."""
    from figures import FigureError
    from bnp_solver import StructuralInfeasibility
    from maxmin_partition import FeasibilityTimeout

    if isinstance(error, (ConfigError, FigureError)):
        return EXIT_CONFIG
    if isinstance(error, StructuralInfeasibility):
        return EXIT_INFEASIBLE
    if isinstance(error, FeasibilityTimeout):
        return EXIT_NOT_CERTIFIED
    return EXIT_FAILURE


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    config = get_config()
    setup_logging(config.log_dir if args.log_file else None, args.log_level or config.log_level)

    try:
        return args.handler(args)
    except Exception as e:
        code = exit_code_for(e)
        if code == EXIT_FAILURE:
            logger.exception(f"pilotgrid {args.command} failed: {e}")
        else:
            logger.error(str(e))
        return code


if __name__ == "__main__":
    sys.exit(main())
