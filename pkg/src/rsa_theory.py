"""
Analytic RSA kinetics and the pilot-assignment probability.

Everything is expressed in coverage theta = kappa * rho, where
kappa = pi * R_inh^2 / 4 is the area of a disk of radius R_inh / 2.
The available-area (retention) function then starts as
1 - 4 theta + c2 theta^2 + c3 theta^3 and vanishes at the jamming
coverage 0.5474.

The module also carries a direct Monte Carlo RSA process used to check
the theory (coverage, jamming, insertion probability).
"""

from pathlib import Path
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy import integrate, stats
from scipy.linalg import solve_triangular
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from config import get_logger, VERSION
from stochastic_geometry import CircularWindow

logger = get_logger(__name__)

THETA_JAMMING = 0.5474

# ODE settings
ODE_RTOL = 1e-8
ODE_ATOL = 1e-14
JAMMING_PHI = 1e-10

# Monte Carlo RSA chunk size
_CHUNK = 4096


class TheoryError(Exception):
    """Raised for invalid radii, intensities, steps or means."""
    pass


def circle_intersection_area(r, radius: float = 1.0):
    """
    Intersection area of two disks of equal radius whose centers are r apart.

    Args:
        r: Center distance (scalar or array, >= 0)
        radius: Disk radius R

    Returns:
        2R^2 arccos(r/2R) - (r/2) sqrt(4R^2 - r^2) for r <= 2R, else 0
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise TheoryError("Center distance must be non-negative")
    if not radius > 0:
        raise TheoryError(f"Radius must be positive, got: {radius}")

    inside = r_arr <= 2 * radius
    clipped = np.minimum(r_arr, 2 * radius)
    area = 2 * radius ** 2 * np.arccos(clipped / (2 * radius)) - 0.5 * clipped * np.sqrt(
        np.maximum(4 * radius ** 2 - clipped ** 2, 0.0)
    )
    area = np.where(inside, area, 0.0)
    return float(area) if np.ndim(area) == 0 else area


def series_coefficients() -> Tuple[float, float, float]:
    """
    Coefficients (c1, c2, c3) of the available-area series in theta.

    c2 and c3 come from overlap integrals of exclusion disks over the
    hard-core shell R <= r <= 2R (radius-free, evaluated at R = 1).
    """
    first, _ = integrate.quad(lambda r: 2 * np.pi * r * circle_intersection_area(r), 1.0, 2.0, epsabs=1e-13)
    second, _ = integrate.quad(lambda r: 2 * np.pi * r * circle_intersection_area(r) ** 2, 1.0, 2.0, epsabs=1e-13)

    c1 = -4.0
    c2 = 8.0 / np.pi ** 2 * first
    c3 = 64.0 / (3.0 * np.pi ** 3) * second - 8.0 / np.pi ** 2 * (np.sqrt(3.0) * np.pi - 14.0 / 3.0)
    return c1, float(c2), float(c3)


def available_area_series(theta):
    """Third-order available-area series 1 + c1 theta + c2 theta^2 + c3 theta^3."""
    c1, c2, c3 = series_coefficients()
    theta = np.asarray(theta, dtype=float)
    value = 1.0 + c1 * theta + c2 * theta ** 2 + c3 * theta ** 3
    return float(value) if np.ndim(value) == 0 else value


def _base_polynomial(printed_exponent: bool) -> np.ndarray:
    # Coefficients of (1 - x)^3, or of 1 - x^3 for the printed form
    if printed_exponent:
        return np.array([1.0, 0.0, 0.0, -1.0])
    return np.array([1.0, -3.0, 3.0, -1.0])


def fit_coefficients(printed_exponent: bool = False, theta_inf: float = THETA_JAMMING) -> Tuple[float, float, float]:
    """
    (b1, b2, b3) of the fitting function
    (1 + b1 x + b2 x^2 + b3 x^3) * (1 - x)^3, x = theta / theta_inf,
    chosen so that its Taylor series in theta matches the available-area
    series through third order.

    Args:
        printed_exponent: Use the factor (1 - x^3) instead of (1 - x)^3
        theta_inf: Jamming coverage

    Returns:
        (b1, b2, b3)
    """
    series = np.array(series_coefficients())
    target = series * theta_inf ** np.arange(1, 4)
    q = _base_polynomial(printed_exponent)

    # sum_{j=1..k} q[k-j] b_j = target_k - q[k]
    matrix = np.array([[q[k - j] if j <= k else 0.0 for j in range(1, 4)] for k in range(1, 4)])
    rhs = target - q[1:]
    b = solve_triangular(matrix, rhs, lower=True)
    return float(b[0]), float(b[1]), float(b[2])


def _phi(theta, coeffs: Tuple[float, float, float], printed_exponent: bool, theta_inf: float):
    x = np.clip(np.asarray(theta, dtype=float) / theta_inf, 0.0, 1.0)
    b1, b2, b3 = coeffs
    poly = 1.0 + b1 * x + b2 * x ** 2 + b3 * x ** 3
    tail = (1.0 - x ** 3) if printed_exponent else (1.0 - x) ** 3
    return np.maximum(poly * tail, 0.0)


def available_area_fraction(theta, printed_exponent: bool = False, theta_inf: float = THETA_JAMMING):
    """
    Fitted retention probability at coverage theta.

    Coverage above theta_inf is clamped to 0 with a warning.

    Raises:
        TheoryError: If theta is negative
    """
    theta_arr = np.asarray(theta, dtype=float)
    if np.any(theta_arr < 0):
        raise TheoryError("Coverage must be non-negative")
    if np.any(theta_arr > theta_inf):
        logger.warning(f"Coverage above the jamming limit {theta_inf}; retention clamped to 0")

    value = _phi(theta_arr, fit_coefficients(printed_exponent, theta_inf), printed_exponent, theta_inf)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class DensityModel:
    """Solved RSA kinetics for one (intensity, R_inh)."""

    inhibition_radius: float
    intensity: float
    kappa: float
    theta_inf: float
    fit_coeffs: Tuple[float, float, float]
    t: np.ndarray
    rho: np.ndarray
    printed_normalization: bool = False
    printed_exponent: bool = False

    @property
    def coverage(self) -> np.ndarray:
        return self.kappa * self.rho

    @property
    def final_density(self) -> float:
        return float(self.rho[-1])

    def rho_at(self, t: float) -> float:
        """Linear interpolation of the tabulated curve."""
        return float(np.interp(t, self.t, self.rho))

    def to_rows(self) -> List[Tuple[float, float]]:
        return [(float(t), float(r)) for t, r in zip(self.t, self.rho)]

    def to_csv(self, path: Path, metadata: Optional[Mapping[str, Any]] = None) -> Path:
        from export import write_dataset

        header: Dict[str, Any] = {
            "version": VERSION,
            "intensity": self.intensity,
            "inhibition_radius": self.inhibition_radius,
            "kappa": self.kappa,
            "theta_inf": self.theta_inf,
            "fit_coeffs": " ".join(repr(b) for b in self.fit_coeffs),
            "printed_normalization": self.printed_normalization,
            "printed_exponent": self.printed_exponent,
        }
        header.update(metadata or {})
        return write_dataset(path, ["t", "rho"], self.to_rows(), header)


def kappa_for(inhibition_radius: float) -> float:
    """Area of a disk of radius R_inh / 2."""
    return np.pi * inhibition_radius ** 2 / 4.0


def density_curve(
    intensity: float,
    inhibition_radius: float,
    t_max: float = 1.0,
    step: float = 0.01,
    printed_normalization: bool = False,
    printed_exponent: bool = False,
    theta_inf: float = THETA_JAMMING
) -> DensityModel:
    """
    Integrate the RSA kinetics d(rho)/dt = intensity * Phi(kappa * rho), rho(0) = 0.

    Args:
        intensity: Arrival intensity (per m^2 per unit time, >= 0)
        inhibition_radius: R_inh (meters)
        t_max: End time
        step: Tabulation step
        printed_normalization: Integrate d(rho)/dt = (intensity / kappa) * Phi instead
        printed_exponent: Use the (1 - x^3) fitting factor
        theta_inf: Jamming coverage

    Returns:
        DensityModel tabulated on [0, t_max]

    Raises:
        TheoryError: On negative intensity, non-positive radius, step or t_max
    """
    if not np.isfinite(intensity) or intensity < 0:
        raise TheoryError(f"Intensity must be non-negative, got: {intensity}")
    if not inhibition_radius > 0:
        raise TheoryError(f"Inhibition radius must be positive, got: {inhibition_radius}")
    if not step > 0:
        raise TheoryError(f"Step must be positive, got: {step}")
    if not t_max > 0:
        raise TheoryError(f"t_max must be positive, got: {t_max}")

    kappa = kappa_for(inhibition_radius)
    coeffs = fit_coefficients(printed_exponent, theta_inf)
    count = max(1, int(np.ceil(t_max / step - 1e-9)))
    t_grid = np.linspace(0.0, t_max, count + 1)

    def model(rho: np.ndarray) -> DensityModel:
        return DensityModel(
            inhibition_radius, intensity, kappa, theta_inf, coeffs,
            t_grid, rho, printed_normalization, printed_exponent
        )

    if intensity == 0:
        return model(np.zeros_like(t_grid))

    # Coverage rate: kappa * intensity normally, intensity under the printed scaling
    rate = intensity if printed_normalization else kappa * intensity

    def rhs(_t, y):
        return [rate * float(_phi(y[0], coeffs, printed_exponent, theta_inf))]

    def jammed(_t, y):
        return float(_phi(y[0], coeffs, printed_exponent, theta_inf)) - JAMMING_PHI
    jammed.terminal = True
    jammed.direction = -1

    solution = integrate.solve_ivp(
        rhs, (0.0, t_max), [0.0], method='RK45', t_eval=t_grid,
        rtol=ODE_RTOL, atol=ODE_ATOL, events=jammed
    )
    if not solution.success:
        raise TheoryError(f"Kinetics integration failed: {solution.message}")

    theta = np.full(t_grid.shape, np.nan)
    theta[:solution.t.shape[0]] = solution.y[0]
    if solution.t.shape[0] < t_grid.shape[0]:
        # Stopped at the jamming event: the remaining curve is flat
        last = solution.y_events[0][0][0] if solution.t_events[0].size else solution.y[0][-1]
        theta[solution.t.shape[0]:] = last
        logger.debug(f"Kinetics reached jamming at t={solution.t_events[0][0]:.4g}")

    theta = np.maximum.accumulate(np.clip(theta, 0.0, theta_inf))
    return model(theta / kappa)


def rho_at(intensity: float, inhibition_radius: float, t: float = 1.0, **kwargs) -> float:
    """Density rho(t) of retained points."""
    if intensity == 0:
        return 0.0
    return density_curve(intensity, inhibition_radius, t_max=t, step=t, **kwargs).final_density


@dataclass(frozen=True)
class SequentialDensities:
    """Per-pilot co-pilot densities and their mean."""

    per_pilot: np.ndarray
    lambda_phi_uo: float

    @property
    def total(self) -> float:
        """Density of users holding some pilot."""
        return float(np.sum(self.per_pilot))


def sequential_densities(
    user_density: float,
    inhibition_radius: float,
    num_pilots: int,
    **kwargs
) -> SequentialDensities:
    """
    Densities of the P co-pilot processes, filled one pilot at a time.

    Pilot j sees the users left over by pilots 1..j-1 as a Poisson process
    of the remaining intensity.
    """
    if num_pilots < 1:
        raise TheoryError(f"Pilot count must be >= 1, got: {num_pilots}")
    if not np.isfinite(user_density) or user_density < 0:
        raise TheoryError(f"User density must be non-negative, got: {user_density}")

    remaining = user_density
    per_pilot = np.zeros(num_pilots)
    for j in range(num_pilots):
        if remaining <= 0:
            break
        per_pilot[j] = rho_at(remaining, inhibition_radius, 1.0, **kwargs)
        remaining = max(0.0, remaining - per_pilot[j])

    return SequentialDensities(per_pilot, float(np.sum(per_pilot) / num_pilots))


def expected_inverse_count(mean: float, num_pilots: int, printed_form: bool = False) -> float:
    """
    E[1/N | N > P] for N ~ Poisson(mean).

    The exact value is summed in log space over n = P+1 .. mean + 12 sqrt(mean).
    With printed_form the closed expression
    (mean - P[N <= P]) / (1 - P[N <= P]) is returned instead; it is not a
    conditional moment and is kept for comparison only.

    Raises:
        TheoryError: If mean <= 0 or P < 0
    """
    if not mean > 0:
        raise TheoryError(f"Mean must be positive, got: {mean}")
    if num_pilots < 0:
        raise TheoryError(f"Pilot count must be >= 0, got: {num_pilots}")

    if printed_form:
        low = stats.poisson.cdf(num_pilots, mean)
        return float((mean - low) / (1.0 - low))

    spread = 12.0 * np.sqrt(mean)
    n_lo = max(num_pilots + 1, int(np.floor(mean - spread)))
    n_hi = max(n_lo + 1, int(np.ceil(mean + spread)) + 20)
    n = np.arange(n_lo, n_hi + 1)

    log_terms = stats.poisson.logpmf(n, mean) - np.log(n)
    log_tail = stats.poisson.logsf(num_pilots, mean)
    return float(np.exp(logsumexp(log_terms) - log_tail))


@dataclass(frozen=True)
class AssignmentProbabilityInputs:
    """Network parameters for the typical user's assignment probability."""

    user_density: float
    inhibition_radius: float
    num_pilots: int
    observation_radius: float = 600.0

    def __post_init__(self):
        if not np.isfinite(self.user_density) or self.user_density < 0:
            raise TheoryError(f"User density must be non-negative, got: {self.user_density}")
        if not self.inhibition_radius > 0:
            raise TheoryError(f"Inhibition radius must be positive, got: {self.inhibition_radius}")
        if self.num_pilots < 1:
            raise TheoryError(f"Pilot count must be >= 1, got: {self.num_pilots}")
        if not self.observation_radius > 0:
            raise TheoryError(f"Observation radius must be positive, got: {self.observation_radius}")

    @property
    def mean_users(self) -> float:
        return self.user_density * np.pi * self.observation_radius ** 2


def assignment_probability(
    inputs: AssignmentProbabilityInputs,
    printed_form: bool = False,
    densities: Optional[SequentialDensities] = None
) -> float:
    """
    Probability that the typical user gets a pilot.

    P[N <= P] + P[N > P] * (P * lambda_phi_uo * pi R_s^2) * E[1/N | N > P],
    clamped to [0, 1].
    """
    if inputs.observation_radius < 3 * inputs.inhibition_radius:
        logger.warning(
            f"Observation radius {inputs.observation_radius} m is below 3 x R_inh "
            f"({inputs.inhibition_radius} m); edge effects are not negligible"
        )

    mean = inputs.mean_users
    if mean == 0:
        return 1.0

    if densities is None:
        densities = sequential_densities(inputs.user_density, inputs.inhibition_radius, inputs.num_pilots)

    p_low = float(stats.poisson.cdf(inputs.num_pilots, mean))
    p_high = float(stats.poisson.sf(inputs.num_pilots, mean))
    assigned_mean = inputs.num_pilots * densities.lambda_phi_uo * np.pi * inputs.observation_radius ** 2
    inverse = expected_inverse_count(mean, inputs.num_pilots, printed_form)

    probability = p_low + p_high * assigned_mean * inverse
    return float(np.clip(probability, 0.0, 1.0))


@dataclass
class RsaSample:
    """Outcome of a Monte Carlo RSA run."""

    points: np.ndarray
    times: np.ndarray
    arrivals: int
    window: CircularWindow
    inhibition_radius: float
    metadata: Dict[str, Any] = field(default_factory=dict)

    def count_within(self, radius: float) -> int:
        c = self.window.center
        return int(np.count_nonzero(np.hypot(self.points[:, 0] - c[0], self.points[:, 1] - c[1]) <= radius))

    def density(self, radius: float) -> float:
        """Retained points per m^2 inside the centered disk of this radius."""
        return self.count_within(radius) / (np.pi * radius ** 2)

    def coverage(self, radius: float) -> float:
        return kappa_for(self.inhibition_radius) * self.density(radius)


class _RsaProcess:
    """Hard-disk retention with batched rejection against a k-d tree."""

    def __init__(self, radius: float):
        self.radius = radius
        self.kept: List[np.ndarray] = []
        self.kept_times: List[float] = []
        self._tree: Optional[cKDTree] = None
        self._tree_size = 0

    def _refresh(self):
        if len(self.kept) != self._tree_size:
            self._tree = cKDTree(np.vstack(self.kept))
            self._tree_size = len(self.kept)

    def feed(self, points: np.ndarray, times: np.ndarray, stop=None) -> bool:
        """
        Offer arrivals in order; returns True if `stop` fired.

        stop(point) is called after each retention.
        """
        survivors = np.ones(points.shape[0], dtype=bool)
        if self.kept:
            self._refresh()
            dist, _ = self._tree.query(points, k=1, distance_upper_bound=self.radius)
            survivors = ~(dist < self.radius)

        fresh: List[np.ndarray] = []
        for idx in np.flatnonzero(survivors):
            p = points[idx]
            if fresh:
                block = np.asarray(fresh)
                if np.any(np.hypot(block[:, 0] - p[0], block[:, 1] - p[1]) < self.radius):
                    continue
            fresh.append(p)
            self.kept.append(p)
            self.kept_times.append(float(times[idx]))
            if stop is not None and stop(p):
                return True
        return False

    def result(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.kept:
            return np.zeros((0, 2)), np.zeros(0)
        return np.vstack(self.kept), np.asarray(self.kept_times)


def _disk_points(rng: np.random.Generator, count: int, window: CircularWindow) -> np.ndarray:
    radius = window.radius * np.sqrt(rng.random(count))
    angle = 2.0 * np.pi * rng.random(count)
    return np.column_stack((window.center[0] + radius * np.cos(angle), window.center[1] + radius * np.sin(angle)))


def simulate_rsa(
    intensity: float,
    inhibition_radius: float,
    window: CircularWindow,
    t: float = 1.0,
    seed: int = 0
) -> RsaSample:
    """
    Monte Carlo RSA on a window: Poisson(intensity * area * t) arrivals at
    uniform times and locations, each retained when no earlier retained
    point is closer than R_inh.

    Args:
        intensity: Arrivals per m^2 per unit time
        inhibition_radius: R_inh (meters)
        window: Simulation disk
        t: Duration
        seed: Seed

    Returns:
        RsaSample with retained points in arrival order
    """
    if not np.isfinite(intensity) or intensity < 0:
        raise TheoryError(f"Intensity must be non-negative, got: {intensity}")
    if not inhibition_radius > 0:
        raise TheoryError(f"Inhibition radius must be positive, got: {inhibition_radius}")

    rng = np.random.default_rng(seed)
    arrivals = int(rng.poisson(intensity * window.area * t)) if intensity > 0 else 0
    times = np.sort(rng.random(arrivals)) * t
    locations = _disk_points(rng, arrivals, window)

    process = _RsaProcess(inhibition_radius)
    for start in range(0, arrivals, _CHUNK):
        process.feed(locations[start:start + _CHUNK], times[start:start + _CHUNK])

    points, kept_times = process.result()
    logger.debug(f"RSA simulation: {points.shape[0]} of {arrivals} arrivals retained")
    return RsaSample(points, kept_times, arrivals, window, inhibition_radius, {"seed": seed, "intensity": intensity})


def insertion_probability_mc(
    theta: float,
    inhibition_radius: float,
    seed: int,
    window_factor: float = 16.0,
    trial_centers: int = 50000,
    realizations: int = 1
) -> float:
    """
    Monte Carlo retention probability at coverage theta.

    RSA arrivals are added until the inner disk (window_factor - 2) R_inh
    reaches the coverage; then uniform trial centers in that disk are
    tested against all retained points.

    Raises:
        TheoryError: If theta is outside (0, theta_inf)
    """
    if not 0 < theta < THETA_JAMMING:
        raise TheoryError(f"Coverage must lie in (0, {THETA_JAMMING}), got: {theta}")

    window = CircularWindow(radius=window_factor * inhibition_radius)
    inner = (window_factor - 2.0) * inhibition_radius
    if inner <= 0:
        raise TheoryError(f"window_factor must exceed 2, got: {window_factor}")
    target = int(np.ceil(theta * np.pi * inner ** 2 / kappa_for(inhibition_radius)))
    inner_window = CircularWindow(radius=inner, center=window.center)

    hits = 0
    for r in range(realizations):
        rng = np.random.default_rng([seed, r])
        process = _RsaProcess(inhibition_radius)
        count = [0]

        def reached(p: np.ndarray) -> bool:
            if np.hypot(p[0] - window.center[0], p[1] - window.center[1]) <= inner:
                count[0] += 1
            return count[0] >= target

        done = False
        offered = 0
        # Coverage theta is reached well before kappa * intensity * t = 60
        budget = int(60.0 * window.area / kappa_for(inhibition_radius))
        while not done and offered < budget:
            done = process.feed(_disk_points(rng, _CHUNK, window), np.zeros(_CHUNK), stop=reached)
            offered += _CHUNK
        if not done:
            raise TheoryError(f"Coverage {theta} not reached in {offered} arrivals")

        kept, _ = process.result()
        centers = _disk_points(rng, trial_centers, inner_window)
        dist, _ = cKDTree(kept).query(centers, k=1)
        hits += int(np.count_nonzero(dist >= inhibition_radius))

    return hits / (trial_centers * realizations)
