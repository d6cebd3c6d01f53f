"""
Dataset pipelines behind the published figures.

Each pipeline writes CSV files (theory and simulation series side by side)
into an output directory. Trial counts default to desk scale; the
acceptance-scale runs live in scripts/run_validation.py.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from config import VERSION, ExperimentConfig, get_logger
from stochastic_geometry import CircularWindow, assign_marks, derive_seed, sample_uniform
from channel_model import gain_matrix, se_metrics
from rsa_theory import AssignmentProbabilityInputs, assignment_probability, sequential_densities
from experiment import (
    assign_pilots,
    mean_ci,
    pick_best_radius,
    run_experiment,
    solve_bnp,
    summarize,
)
from export import safe_join, write_dataset

logger = get_logger(__name__)

RADIUS_GRID = (50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0)


class FigureError(Exception):
    """Raised for unknown figure names or invalid figure settings."""
    pass


@dataclass(frozen=True)
class FigureSettings:
    """Knobs shared by all pipelines."""

    trials: Optional[int] = None
    base_seed: int = 1
    workers: int = 1
    certified: bool = False
    json_mirror: bool = False
    time_budget: Optional[float] = None
    extra: Dict[str, object] = field(default_factory=dict)

    def trials_or(self, default: int) -> int:
        return self.trials if self.trials is not None else default


def _header(settings: FigureSettings, name: str, **fields) -> Dict[str, object]:
    header: Dict[str, object] = {
        "figure": name,
        "version": VERSION,
        "base_seed": settings.base_seed,
    }
    header.update(fields)
    return header


def _write(out_dir: Path, filename: str, columns, rows, header, settings: FigureSettings) -> Path:
    path = safe_join(out_dir, filename)
    write_dataset(path, columns, rows, header, settings.json_mirror)
    logger.info(f"Wrote {path}")
    return path


def _density_config(settings: FigureSettings, user_density: float, trials: int) -> ExperimentConfig:
    # Densities and assignment probability need no RRHs
    return ExperimentConfig(
        scheme="rsa",
        rrh_density=0.0,
        user_density=user_density,
        inhibition_radius=200.0,
        trials=trials,
        base_seed=settings.base_seed,
        workers=settings.workers,
    )


def fig3_left(out_dir: Path, settings: FigureSettings) -> List[Path]:
    """Co-pilot user density against P at R_inh = 200 m."""
    trials = settings.trials_or(20)
    radius = 200.0
    rows = []
    for user_density in (1e-4, 1e-3):
        base = _density_config(settings, user_density, trials)
        for num_pilots in range(1, 17):
            theory = sequential_densities(user_density, radius, num_pilots)
            sim = run_experiment(base.with_overrides(num_pilots=num_pilots))
            mean, ci = mean_ci([r.assigned_density / num_pilots for r in sim])
            rows.append((
                user_density,
                num_pilots,
                theory.lambda_phi_uo,
                mean,
                ci,
                theory.total,
                mean * num_pilots,
            ))
            logger.debug(f"fig3-left lambda_u={user_density} P={num_pilots}: theory {theory.lambda_phi_uo:.3e}, sim {mean:.3e}")

    columns = ["user_density", "num_pilots", "density_theory", "density_sim", "density_sim_ci",
               "assigned_density_theory", "assigned_density_sim"]
    header = _header(settings, "fig3-left", inhibition_radius=radius, trials=trials,
                     generation_radius=1500.0, measurement_radius=600.0)
    return [_write(out_dir, "fig3-left.csv", columns, rows, header, settings)]


def fig3_center(out_dir: Path, settings: FigureSettings) -> List[Path]:
    """Typical-user assignment probability against P at R_inh = 200 m."""
    trials = settings.trials_or(200)
    radius = 200.0
    rows = []
    for user_density in (1e-4, 1e-3):
        base = _density_config(settings, user_density, trials)
        for num_pilots in range(1, 17):
            inputs = AssignmentProbabilityInputs(user_density, radius, num_pilots, base.measurement_radius)
            theory = assignment_probability(inputs)
            sim = run_experiment(base.with_overrides(num_pilots=num_pilots))
            frequency, ci = mean_ci([float(r.typical_assigned) for r in sim])
            rows.append((user_density, num_pilots, theory, frequency, ci))

    columns = ["user_density", "num_pilots", "probability_theory", "probability_sim", "probability_sim_ci"]
    header = _header(settings, "fig3-center", inhibition_radius=radius, trials=trials,
                     observation_radius=600.0)
    return [_write(out_dir, "fig3-center.csv", columns, rows, header, settings)]


def fig3_right(out_dir: Path, settings: FigureSettings) -> List[Path]:
    """Mean user SE against R_inh for RSA, with random assignment as the baseline."""
    trials = settings.trials_or(50)
    rrh_density = float(settings.extra.get("rrh_density", 1e-4))
    rows = []
    for user_density in (1e-5, 1e-4, 1e-3):
        base = ExperimentConfig(
            scheme="rsa",
            rrh_density=rrh_density,
            user_density=user_density,
            num_pilots=16,
            pilot_snr_db=80.0,
            inhibition_radii=list(RADIUS_GRID),
            trials=trials,
            base_seed=settings.base_seed,
            workers=settings.workers,
        )
        for summary in summarize(run_experiment(base)):
            rows.append((user_density, "rsa", summary.inhibition_radius,
                         summary.mean_typical_se, summary.ci_typical_se))
        random = summarize(run_experiment(base.with_overrides(scheme="random", inhibition_radii=None)))[0]
        for radius in RADIUS_GRID:
            rows.append((user_density, "random", radius, random.mean_typical_se, random.ci_typical_se))

    columns = ["user_density", "scheme", "inhibition_radius", "mean_se", "ci_se"]
    header = _header(settings, "fig3-right", rrh_density=rrh_density, num_pilots=16,
                     pilot_snr_db=80.0, trials=trials)
    return [_write(out_dir, "fig3-right.csv", columns, rows, header, settings)]


FIG4_CASES = ((1e-5, 16), (1e-4, 16), (1e-5, 8))
FIG4_RRH_DENSITIES = (2e-5, 5e-5, 1e-4, 2e-4)


def fig4_ratios(out_dir: Path, settings: FigureSettings) -> List[Path]:
    """
    Mean user SE of max-min and random assignment relative to RSA.

    All schemes assign pilots to the users of the measurement disk only,
    on the same realizations; RSA runs at its best R_inh for each point.
    """
    trials = settings.trials_or(20)
    time_budget = settings.time_budget or 2.0
    rows = []
    for user_density, num_pilots in FIG4_CASES:
        for rrh_density in FIG4_RRH_DENSITIES:
            base = ExperimentConfig(
                scheme="rsa",
                rrh_density=rrh_density,
                user_density=user_density,
                num_pilots=num_pilots,
                system_radius=600.0,
                inhibition_radii=list(RADIUS_GRID),
                trials=trials,
                base_seed=settings.base_seed,
                workers=settings.workers,
                time_budget=time_budget,
            )
            rsa_rows = run_experiment(base)
            means = {s.inhibition_radius: s.mean_typical_se for s in summarize(rsa_rows)}
            best = pick_best_radius(means)
            rsa = [r for r in rsa_rows if r.inhibition_radius == best]
            rsa_se = float(np.mean([r.typical_se for r in rsa]))
            rsa_window = float(np.mean([r.sum_se / r.num_users for r in rsa]))

            rows.append((user_density, num_pilots, rrh_density, best, "rsa", rsa_se, 1.0, 1.0))
            for scheme in ("maxmin", "random"):
                other = run_experiment(base.with_overrides(scheme=scheme, inhibition_radii=None))
                se = float(np.mean([r.typical_se for r in other]))
                window = float(np.mean([r.sum_se / r.num_users for r in other]))
                rows.append((
                    user_density, num_pilots, rrh_density, best, scheme, se,
                    se / rsa_se if rsa_se > 0 else float('nan'),
                    window / rsa_window if rsa_window > 0 else float('nan'),
                ))
            logger.info(f"fig4 lambda_u={user_density} P={num_pilots} lambda_r={rrh_density}: best R_inh {best} m")

    columns = ["user_density", "num_pilots", "rrh_density", "rsa_inhibition_radius", "scheme",
               "mean_se", "ratio_to_rsa", "window_ratio_to_rsa"]
    header = _header(settings, "fig4-ratios", trials=trials, system_radius=600.0, time_budget=time_budget)
    return [_write(out_dir, "fig4-ratios.csv", columns, rows, header, settings)]


def _fig5_panel(
    settings: FigureSettings,
    num_users: int,
    num_rrhs: int,
    num_pilots: int,
    trials: int,
    time_budget: float
) -> List[tuple]:
    """Per-trial RSA/BnP sum-SE ratios for one (N_u, N_r, P)."""
    radius = 400.0
    window = CircularWindow(radius)
    common = dict(
        num_pilots=num_pilots,
        generation_radius=radius,
        measurement_radius=radius,
        base_seed=settings.base_seed,
        time_budget=time_budget,
    )
    rsa_config = ExperimentConfig(scheme="rsa", **common)
    bnp_config = ExperimentConfig(scheme="bnp", **common)

    # rsa_se[r][k]: sum SE of trial k at RADIUS_GRID[r]
    rsa_se = np.zeros((len(RADIUS_GRID), trials))
    bnp_se = np.zeros(trials)
    certified = np.zeros(trials, dtype=bool)
    for k in range(trials):
        seed = derive_seed(settings.base_seed, "fig5", num_users, num_rrhs, num_pilots, k)
        users = assign_marks(sample_uniform(num_users, window, derive_seed(seed, "users")), derive_seed(seed, "marks"))
        rrhs = sample_uniform(num_rrhs, window, derive_seed(seed, "rrhs"))
        beta = gain_matrix(rrhs, users, rsa_config.pathloss)

        def sum_se(pilots: np.ndarray, config: ExperimentConfig) -> float:
            return se_metrics(beta, pilots, config.pilot_energy, num_pilots, config.sinr_cap).sum_se

        for r, inhibition_radius in enumerate(RADIUS_GRID):
            assignment = assign_pilots(rsa_config, users, beta, inhibition_radius, seed)
            rsa_se[r, k] = sum_se(assignment.pilots, rsa_config)

        bnp = solve_bnp(bnp_config, beta, seed)
        if bnp is None:
            raise FigureError(f"{num_users} users cannot fill {num_pilots} co-pilot sets of two")
        bnp_se[k] = sum_se(bnp.pilots, bnp_config)
        certified[k] = bnp.certified

    best = int(np.argmax(rsa_se.mean(axis=1)))
    ratios = rsa_se[best] / bnp_se
    order = np.argsort(ratios, kind='stable')
    rows = []
    for rank, k in enumerate(order, start=1):
        rows.append((
            num_users, num_rrhs, num_pilots, int(k), RADIUS_GRID[best],
            float(rsa_se[best, k]), float(bnp_se[k]), float(ratios[k]), bool(certified[k]), rank / trials,
        ))
    return rows


def fig5_cdf(out_dir: Path, settings: FigureSettings) -> List[Path]:
    """
    CDF of the RSA/BnP sum-SE ratio on small uniform networks.

    Left panel: N_r varies at fixed P. Right panel: P varies at N_r = 10.
    The certified setting uses instances small enough for BnP to prove
    optimality within its budget (N_u = 12, P in {2, 3}).
    """
    trials = settings.trials_or(20)
    if settings.certified:
        num_users, default_pilots, pilot_values = 12, 3, (2, 3)
        time_budget = settings.time_budget or 60.0
    else:
        num_users, default_pilots, pilot_values = 48, 10, (6, 8, 10)
        time_budget = settings.time_budget or 10.0

    columns = ["num_users", "num_rrhs", "num_pilots", "trial", "rsa_inhibition_radius",
               "rsa_sum_se", "bnp_sum_se", "ratio", "certified", "cdf"]
    header = _header(settings, "fig5-cdf", trials=trials, certified=settings.certified,
                     time_budget=time_budget, disk_radius=400.0)

    left = []
    for num_rrhs in (5, 10, 20):
        left.extend(_fig5_panel(settings, num_users, num_rrhs, default_pilots, trials, time_budget))
    right = []
    for num_pilots in pilot_values:
        right.extend(_fig5_panel(settings, num_users, 10, num_pilots, trials, time_budget))

    return [
        _write(out_dir, "fig5-cdf-rrhs.csv", columns, left, header, settings),
        _write(out_dir, "fig5-cdf-pilots.csv", columns, right, header, settings),
    ]


FIGURES: Dict[str, Callable[[Path, FigureSettings], List[Path]]] = {
    "fig3-left": fig3_left,
    "fig3-center": fig3_center,
    "fig3-right": fig3_right,
    "fig4-ratios": fig4_ratios,
    "fig5-cdf": fig5_cdf,
}


def reproduce_figure(name: str, out_dir: Path, settings: Optional[FigureSettings] = None) -> List[Path]:
    """
    Write the datasets of a named figure.

    Args:
        name: One of FIGURES
        out_dir: Output directory (created if missing)
        settings: Trial counts, seed, workers and output options

    Returns:
        Paths of the files written

    Raises:
        FigureError: If the name is unknown
    """
    if name not in FIGURES:
        raise FigureError(f"Unknown figure: {name}. Valid names: {', '.join(FIGURES)}")
    settings = settings or FigureSettings()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Reproducing {name} into {out_dir}")
    return FIGURES[name](out_dir, settings)


def figure_names() -> Sequence[str]:
    return tuple(FIGURES)
