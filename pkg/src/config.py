"""
Configuration management for pilotgrid.

Two layers live here:
- Config: runtime settings (log level, output and log directories, worker
  count) loaded from environment variables with sensible defaults.
- ExperimentConfig: the flat, typed experiment file (TOML, top-level keys
  only) plus `key=value` overrides from the command line.
"""

import os
import math
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

VERSION = "pilotgrid 0.1.0"

SCHEMES = ("rsa", "regenerative", "distributed-rsa", "random", "maxmin", "bnp")


class ConfigError(Exception):
    """Raised when an experiment configuration cannot be loaded or validated."""
    pass


@dataclass
class Config:
    """
    Runtime configuration for pilotgrid.

    All paths are absolute. Directories are created on demand by
    ensure_directories().
    """

    # Logging configuration
    log_level: str = "INFO"
    log_dir: Path = None

    # Where datasets are written when no explicit path is given
    output_dir: Path = None

    # Monte Carlo worker processes
    workers: int = 1

    # Internal paths (computed from project structure)
    project_root: Path = None

    def __init__(
        self,
        log_level: Optional[str] = None,
        output_dir: Optional[str] = None,
        log_dir: Optional[str] = None,
        workers: Optional[int] = None
    ):
        """
        Initialize configuration from environment variables or defaults.

        Args:
            log_level: Logging level (default: INFO)
            output_dir: Directory for datasets (default: <project>/results)
            log_dir: Directory for log files (default: <project>/logs)
            workers: Number of Monte Carlo worker processes (default: 1)
        """
        # Determine project root (parent of src directory)
        self.project_root = Path(__file__).parent.parent.resolve()

        self.log_level = (log_level or os.getenv('PILOTGRID_LOG_LEVEL', 'INFO')).upper()

        output = output_dir or os.getenv(
            'PILOTGRID_OUTPUT_DIR',
            str(self.project_root / 'results')
        )
        self.output_dir = Path(output).resolve()

        logs = log_dir or os.getenv(
            'PILOTGRID_LOG_DIR',
            str(self.project_root / 'logs')
        )
        self.log_dir = Path(logs).resolve()

        raw_workers = workers if workers is not None else os.getenv('PILOTGRID_WORKERS', '1')
        try:
            self.workers = int(raw_workers)
        except (TypeError, ValueError):
            raise ValueError(f"Invalid worker count: {raw_workers}")

        self._validate()

    def _validate(self):
        """
        Validate configuration values.

        Raises:
            ValueError: If configuration is invalid
        """
        valid_levels = {'DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'}
        if self.log_level not in valid_levels:
            raise ValueError(
                f"Invalid log level: {self.log_level}. "
                f"Must be one of: {', '.join(sorted(valid_levels))}"
            )

        if self.workers < 1:
            raise ValueError(f"Worker count must be >= 1, got: {self.workers}")

    def ensure_directories(self):
        """Create the output and log directories."""
        for dir_path in (self.output_dir, self.log_dir):
            dir_path.mkdir(mode=0o755, parents=True, exist_ok=True)

    def __repr__(self) -> str:
        return (
            f"Config(\n"
            f"  log_level={self.log_level},\n"
            f"  output_dir={self.output_dir},\n"
            f"  workers={self.workers},\n"
            f"  project_root={self.project_root}\n"
            f")"
        )


# Global config instance (initialized on first use)
_config_instance: Optional[Config] = None


def get_config() -> Config:
    """
    Get the global configuration instance.

    Lazily initializes the config on first call.
    Subsequent calls return the same instance.
    """
    global _config_instance
    if _config_instance is None:
        _config_instance = Config()
    return _config_instance


def reload_config() -> Config:
    """Reload configuration from environment variables."""
    global _config_instance
    _config_instance = None
    return get_config()


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger with the configured log level.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    config = get_config()
    logger.setLevel(getattr(logging, config.log_level))
    return logger


class ExperimentConfig(BaseModel):
    """
    One Monte Carlo experiment: network densities, scheme and its knobs.

    Densities are per square meter, radii in meters, powers in dB.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    scheme: Literal["rsa", "regenerative", "distributed-rsa", "random", "maxmin", "bnp"] = "rsa"

    rrh_density: float = Field(1e-4, ge=0.0)
    user_density: float = Field(1e-4, ge=0.0)
    num_pilots: int = Field(16, ge=1)
    inhibition_radius: float = Field(200.0, gt=0.0)
    inhibition_radii: Optional[List[float]] = None

    generation_radius: float = Field(1500.0, gt=0.0)
    measurement_radius: float = Field(600.0, gt=0.0)
    system_radius: Optional[float] = Field(None, gt=0.0)

    pilot_snr_db: float = 80.0
    trials: int = Field(500, ge=1)
    base_seed: int = Field(1, ge=0)

    # Non-line-of-sight path loss
    street_width: float = Field(20.0, gt=0.0)
    building_height: float = Field(5.0, gt=0.0)
    ap_height: float = Field(40.0, gt=0.0)
    user_height: float = Field(1.5, gt=0.0)
    carrier_ghz: float = Field(0.45, gt=0.0)

    sinr_cap_db: float = 40.0
    sinr_floor_db: float = 0.0
    big_m: float = Field(1e6, gt=0.0)
    epsilon: float = Field(1.0, gt=0.0)
    size_floor: int = Field(2, ge=1)
    num_clusters: Optional[int] = Field(None, ge=1)
    time_budget: float = Field(10.0, gt=0.0)

    workers: int = Field(1, ge=1)
    record_runtime: bool = False

    @field_validator("inhibition_radii", mode="before")
    @classmethod
    def _split_radii(cls, value: Any) -> Any:
        if isinstance(value, str):
            parts = [p.strip() for p in value.split(",") if p.strip()]
            return [float(p) for p in parts]
        return value

    @field_validator("inhibition_radii")
    @classmethod
    def _check_radii(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None:
            if not value:
                raise ValueError("inhibition_radii must not be empty")
            if any(r <= 0 for r in value):
                raise ValueError("inhibition_radii must be positive")
        return value

    @model_validator(mode="after")
    def _check_windows(self) -> "ExperimentConfig":
        if self.measurement_radius > self.generation_radius:
            raise ValueError(
                f"measurement_radius ({self.measurement_radius}) exceeds "
                f"generation_radius ({self.generation_radius})"
            )
        return self

    @property
    def pilot_length(self) -> int:
        """τ_p, equal to the pilot count."""
        return self.num_pilots

    @property
    def pilot_energy(self) -> float:
        """τ_p·ρ_p in linear scale."""
        return self.pilot_length * 10.0 ** (self.pilot_snr_db / 10.0)

    @property
    def sinr_cap(self) -> float:
        return 10.0 ** (self.sinr_cap_db / 10.0)

    @property
    def sinr_floor(self) -> float:
        # -inf dB disables the floor
        return 10.0 ** (self.sinr_floor_db / 10.0)

    @property
    def radii(self) -> List[float]:
        """The R_inh values to run: the sweep if given, else the single value."""
        return list(self.inhibition_radii) if self.inhibition_radii else [self.inhibition_radius]

    @property
    def pathloss(self):
        from channel_model import PathlossParams
        return PathlossParams(
            street_width=self.street_width,
            building_height=self.building_height,
            ap_height=self.ap_height,
            user_height=self.user_height,
            carrier_ghz=self.carrier_ghz,
        )

    @property
    def served_radius(self) -> float:
        """Radius of the disk whose users take part in the assignment."""
        if self.system_radius is None:
            return self.generation_radius
        return min(self.system_radius, self.generation_radius)

    def expected_served_users(self) -> float:
        """Mean user count of one trial's assignment, typical user included."""
        return self.user_density * math.pi * self.served_radius ** 2 + 1.0

    def check_user_capacity(self) -> None:
        """
        Refuse schemes whose exact solvers cannot hold the expected user count.

        A trial's count is Poisson, so the check uses its mean plus three
        standard deviations.

        Raises:
            ConfigError: If max-min or BnP would meet more users than they accept
        """
        if self.scheme == "maxmin":
            from maxmin_partition import MAX_EXACT_USERS as cap
        elif self.scheme == "bnp":
            from bnp_solver import MAX_USERS as cap
        else:
            return

        mean = self.expected_served_users()
        high = mean + 3.0 * math.sqrt(mean)
        if high > cap:
            raise ConfigError(
                f"Scheme {self.scheme} accepts at most {cap} users per trial, but about {mean:.0f} "
                f"(up to {high:.0f}) are expected within {self.served_radius:g} m; "
                f"set system_radius to shrink the served disk"
            )

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        """Return a validated copy with some fields replaced."""
        data = self.model_dump()
        data.update(changes)
        try:
            return ExperimentConfig(**data)
        except ValidationError as e:
            raise ConfigError(f"Invalid experiment configuration: {e}") from e

    def echo(self) -> Dict[str, Any]:
        """Flat dictionary for dataset headers."""
        return {k: v for k, v in self.model_dump().items() if v is not None}


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """
    Parse `key=value` strings.

    Raises:
        ConfigError: If an item has no '=' or an empty key
    """
    overrides: Dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"Override must look like key=value, got: {item!r}")
        key, value = item.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"Override has an empty key: {item!r}")
        overrides[key] = value.strip()
    return overrides


def load_experiment_config(
    path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    """
    Load an experiment file and apply overrides.

    Args:
        path: TOML file with top-level keys only (None uses defaults)
        overrides: Field values that replace those from the file

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: If the file is unreadable, nested, or fails validation
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, 'rb') as f:
                data = tomllib.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {path}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid TOML: {e}") from e

        nested = [k for k, v in data.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"Config file must be flat; nested tables: {', '.join(nested)}")

    if overrides:
        data.update(overrides)

    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment configuration: {e}") from e
