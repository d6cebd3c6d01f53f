"""
Large-scale channel model and asymptotic downlink SINR.

Conventions:
- beta, gamma and eta matrices are indexed (RRH, user).
- Path loss is a dB quantity; beta = 10^(-l/10).
- Pilot index 0 means unassigned: such users send no pilot, get
  gamma = eta = 0, and are not served.
"""

from pathlib import Path
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from config import get_logger, VERSION
from stochastic_geometry import PointSet, pairwise_distances

logger = get_logger(__name__)

ArrayLike = Union[float, np.ndarray]

# Distances below this (meters) are evaluated at this distance
MIN_DISTANCE = 1.0


class ChannelError(Exception):
    """Raised for invalid distances, empty co-pilot sets, or bad pilot energy."""
    pass


@dataclass(frozen=True)
class PathlossParams:
    """Non-line-of-sight urban path-loss parameters (meters, GHz)."""

    street_width: float = 20.0
    building_height: float = 5.0
    ap_height: float = 40.0
    user_height: float = 1.5
    carrier_ghz: float = 0.45

    def __post_init__(self):
        for name in ('street_width', 'building_height', 'ap_height', 'user_height', 'carrier_ghz'):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ChannelError(f"{name} must be positive, got: {value}")


DEFAULT_PATHLOSS = PathlossParams()


def pathloss_db(distance: ArrayLike, params: PathlossParams = DEFAULT_PATHLOSS) -> ArrayLike:
    """
    Path loss l(d) in dB.

    Args:
        distance: Meters (scalar or array), clamped below at 1 m
        params: Path-loss parameters

    Returns:
        Loss in dB, same shape as distance

    Raises:
        ChannelError: If any distance is <= 0
    """
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise ChannelError("Path loss needs positive distances")
    d = np.maximum(d, MIN_DISTANCE)

    w, h = params.street_width, params.building_height
    h_ap, h_at, fc = params.ap_height, params.user_height, params.carrier_ghz

    loss = (
        161.04
        - 7.1 * np.log10(w)
        + 7.5 * np.log10(h)
        - (24.37 - 3.7 * (h / h_ap) ** 2) * np.log10(h_ap)
        + (43.42 - 3.1 * np.log10(h_ap)) * (np.log10(d) - 3.0)
        + 20.0 * np.log10(fc)
        - (3.2 * np.log10(11.75 * h_at) ** 2 - 4.97)
    )
    return float(loss) if np.ndim(loss) == 0 else loss


def db_to_gain(loss_db: ArrayLike) -> ArrayLike:
    """Linear gain of a loss expressed in dB."""
    gain = 10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0)
    return float(gain) if np.ndim(gain) == 0 else gain


def large_scale_gain(distance: ArrayLike, params: PathlossParams = DEFAULT_PATHLOSS) -> ArrayLike:
    """beta(d) = 10^(-l(d)/10)."""
    return db_to_gain(pathloss_db(distance, params))


def gain_matrix(rrhs: PointSet, users: PointSet, params: PathlossParams = DEFAULT_PATHLOSS) -> np.ndarray:
    """Large-scale gains between every RRH (rows) and user (columns)."""
    dist = np.maximum(pairwise_distances(rrhs, users), MIN_DISTANCE)
    if dist.size == 0:
        return dist
    return large_scale_gain(dist, params)


def _check_energy(pilot_energy: float):
    if not np.isfinite(pilot_energy) or pilot_energy <= 0:
        raise ChannelError(f"Pilot energy must be positive, got: {pilot_energy}")


def gammas_for_set(betas: np.ndarray, pilot_energy: float) -> np.ndarray:
    """
    Estimation quality of every member of one co-pilot set.

    Args:
        betas: (RRHs, members) large-scale gains of the set
        pilot_energy: tau_p * rho_p (linear)

    Returns:
        (RRHs, members) gamma matrix
    """
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    if betas.shape[1] == 0:
        raise ChannelError("Co-pilot set is empty")
    _check_energy(pilot_energy)
    denom = 1.0 + pilot_energy * betas.sum(axis=1, keepdims=True)
    return pilot_energy * betas ** 2 / denom


def gamma_for_set(betas: np.ndarray, target: int, pilot_energy: float) -> np.ndarray:
    """Per-RRH gamma of one member (column `target`) of a co-pilot set."""
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    if betas.shape[1] == 0:
        raise ChannelError("Co-pilot set is empty")
    if not 0 <= target < betas.shape[1]:
        raise ChannelError(f"Target {target} is not in a set of {betas.shape[1]} users")
    return gammas_for_set(betas, pilot_energy)[:, target]


def power_control(gammas: np.ndarray, num_pilots: int) -> np.ndarray:
    """
    Per-RRH power fractions for one co-pilot set.

    eta_mk = gamma_mk / (P * sum_j gamma_mj), so each RRH spends 1/P per pilot.
    """
    gammas = np.atleast_2d(np.asarray(gammas, dtype=float))
    if num_pilots < 1:
        raise ChannelError(f"Pilot count must be >= 1, got: {num_pilots}")
    totals = gammas.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise ChannelError("Power control needs positive gamma at every RRH")
    return gammas / (num_pilots * totals)


def asymptotic_sinr(gammas: np.ndarray, etas: np.ndarray, target: int) -> float:
    """
    Asymptotic downlink SINR of one member of a co-pilot set.

    Numerator (sum_m sqrt(eta_mo gamma_mo))^2, interference
    sum_{k != o} (sum_m sqrt(eta_mk gamma_mo))^2. Interferer powers are paired
    with the target's own gamma.
    """
    gammas = np.atleast_2d(np.asarray(gammas, dtype=float))
    etas = np.atleast_2d(np.asarray(etas, dtype=float))
    members = gammas.shape[1]
    if members == 1:
        return float('inf')

    root_gamma = np.sqrt(gammas[:, target])
    signal = float(np.sum(np.sqrt(etas[:, target]) * root_gamma)) ** 2
    interference = 0.0
    for k in range(members):
        if k != target:
            interference += float(np.sum(np.sqrt(etas[:, k]) * root_gamma)) ** 2

    if interference == 0.0:
        return float('inf') if signal > 0 else 0.0
    return signal / interference


def copilot_sinrs(betas: np.ndarray, pilot_energy: float, num_pilots: int) -> np.ndarray:
    """
    SINR of every member of a co-pilot set at once.

    Args:
        betas: (RRHs, members) gains of the set
        pilot_energy: tau_p * rho_p (linear)
        num_pilots: P

    Returns:
        Per-member SINR (inf for a singleton set)
    """
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    members = betas.shape[1]
    if members == 0:
        raise ChannelError("Co-pilot set is empty")
    if members == 1:
        return np.array([np.inf])

    gammas = gammas_for_set(betas, pilot_energy)
    etas = power_control(gammas, num_pilots)
    # coupling[o, k] = sum_m sqrt(gamma_mo) sqrt(eta_mk)
    coupling = np.sqrt(gammas).T @ np.sqrt(etas)
    power = coupling ** 2
    signal = np.diag(power).copy()
    interference = np.where(np.eye(members, dtype=bool), 0.0, power).sum(axis=1)

    with np.errstate(divide='ignore', invalid='ignore'):
        sinr = np.where(interference > 0, signal / interference, np.where(signal > 0, np.inf, 0.0))
    return sinr


@dataclass(frozen=True)
class ChannelState:
    """Gains, estimation qualities and power fractions for one assignment."""

    beta: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    pilots: np.ndarray
    num_pilots: int
    pilot_energy: float

    def sinr(self, user: int) -> float:
        """Asymptotic SINR of one user (0 when unassigned)."""
        pilot = int(self.pilots[user])
        if pilot == 0:
            return 0.0
        group = np.flatnonzero(self.pilots == pilot)
        target = int(np.flatnonzero(group == user)[0])
        return asymptotic_sinr(self.gamma[:, group], self.eta[:, group], target)

    def sinrs(self) -> np.ndarray:
        """SINR of every user (0 for unassigned users)."""
        out = np.zeros(self.pilots.shape[0])
        for pilot in range(1, self.num_pilots + 1):
            group = np.flatnonzero(self.pilots == pilot)
            if group.size:
                out[group] = copilot_sinrs(self.beta[:, group], self.pilot_energy, self.num_pilots)
        return out

    def power_per_rrh(self) -> np.ndarray:
        """Total power fraction spent by each RRH."""
        return self.eta.sum(axis=1)

    def to_csv(self, path: Path, metadata: Optional[Mapping[str, Any]] = None) -> Path:
        """Write `rrh,user,beta,gamma,eta` rows for debugging."""
        from export import write_dataset

        header: Dict[str, Any] = {
            "version": VERSION,
            "num_pilots": self.num_pilots,
            "pilot_energy": self.pilot_energy,
        }
        header.update(metadata or {})
        rows = []
        num_rrhs, num_users = self.beta.shape
        for m in range(num_rrhs):
            for k in range(num_users):
                rows.append((m, k, self.beta[m, k], self.gamma[m, k], self.eta[m, k]))
        return write_dataset(path, ["rrh", "user", "beta", "gamma", "eta"], rows, header)


def channel_state(beta: np.ndarray, pilots: np.ndarray, pilot_energy: float, num_pilots: int) -> ChannelState:
    """
    Build the channel state of a full assignment.

    Args:
        beta: (RRHs, users) gains
        pilots: Per-user pilot index (0 = unassigned)
        pilot_energy: tau_p * rho_p (linear)
        num_pilots: P

    Returns:
        ChannelState with gamma/eta computed per co-pilot group
    """
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    pilots = np.asarray(pilots, dtype=int).reshape(-1)
    if beta.shape[1] != pilots.shape[0]:
        raise ChannelError(f"{beta.shape[1]} users in beta but {pilots.shape[0]} pilot entries")
    if np.any(beta <= 0):
        raise ChannelError("Large-scale gains must be positive")
    _check_energy(pilot_energy)
    if np.any((pilots < 0) | (pilots > num_pilots)):
        raise ChannelError(f"Pilot indices must lie in 0..{num_pilots}")

    gamma = np.zeros_like(beta)
    eta = np.zeros_like(beta)
    for pilot in range(1, num_pilots + 1):
        group = np.flatnonzero(pilots == pilot)
        if group.size:
            g = gammas_for_set(beta[:, group], pilot_energy)
            gamma[:, group] = g
            eta[:, group] = power_control(g, num_pilots)

    return ChannelState(beta, gamma, eta, pilots.copy(), int(num_pilots), float(pilot_energy))


@dataclass(frozen=True)
class SinrReport:
    """Per-user SINR/SE and the window sum SE of one realization."""

    sinr: np.ndarray
    se: np.ndarray
    assigned: np.ndarray
    in_window: np.ndarray
    sum_se: float

    def user_se(self, user: int) -> float:
        return float(self.se[user])


def spectral_efficiency(sinr: np.ndarray, assigned: np.ndarray, sinr_cap: float) -> np.ndarray:
    """I_j * log2(1 + SINR_j), with infinite SINR replaced by the cap."""
    sinr = np.asarray(sinr, dtype=float)
    effective = np.where(np.isinf(sinr), sinr_cap, sinr)
    return np.where(np.asarray(assigned, dtype=bool), np.log2(1.0 + effective), 0.0)


def se_metrics(
    beta: np.ndarray,
    pilots: np.ndarray,
    pilot_energy: float,
    num_pilots: int,
    sinr_cap: float,
    in_window: Optional[np.ndarray] = None
) -> SinrReport:
    """
    SE metrics of an assignment.

    Args:
        beta: (RRHs, users) gains
        pilots: Per-user pilot index (0 = unassigned)
        pilot_energy: tau_p * rho_p (linear)
        num_pilots: P
        sinr_cap: Linear SINR used in place of +inf (singleton sets)
        in_window: Mask of users counted in the sum (default: all)

    Returns:
        SinrReport
    """
    pilots = np.asarray(pilots, dtype=int).reshape(-1)
    assigned = pilots > 0
    if in_window is None:
        in_window = np.ones(pilots.shape[0], dtype=bool)
    in_window = np.asarray(in_window, dtype=bool)

    if pilots.shape[0] == 0:
        empty = np.zeros(0)
        return SinrReport(empty, empty, np.zeros(0, dtype=bool), in_window, 0.0)

    if np.any(assigned):
        state = channel_state(beta, pilots, pilot_energy, num_pilots)
        sinr = state.sinrs()
    else:
        sinr = np.zeros(pilots.shape[0])

    se = spectral_efficiency(sinr, assigned, sinr_cap)
    return SinrReport(sinr, se, assigned, in_window, float(np.sum(se[in_window])))
