"""Configuration management for geopca runs."""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from .errors import ConfigError

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "GEOPCA_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "geopca-out"

METHODS = ("gpca-global", "gpca-nested", "fpca")
STRATEGIES = ("auto", "grid", "multistart")


def _encode_bound(value: float) -> Any:
    """JSON has no infinities; store them as strings."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _decode_bound(value: Any) -> float:
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid domain bound: {value!r}") from e


@dataclass
class SolverOptions:
    """Optimizer settings for the constrained PCA solvers."""

    # Projected gradient
    max_iter: int = 500
    grad_tol: float = 1e-9
    fd_step: float = 1e-7

    # Subspace projections: SLSQP on the span coefficients, Dykstra for
    # oracles without linear constraint rows
    qp_ftol: float = 1e-12
    qp_max_iter: int = 200
    dykstra_tol: float = 1e-10
    dykstra_max_iter: int = 10_000

    # Search strategy
    strategy: str = "auto"
    n_random_starts: int = 8
    angular_grid_size: int = 2000
    seed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        """Convert options to dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SolverOptions":
        """Create options from dictionary, ignoring unknown keys."""
        valid_fields = {f.name for f in fields(cls)}
        filtered = {k: v for k, v in data.items() if k in valid_fields}
        return cls(**filtered)

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"Unknown solver strategy: {self.strategy!r}")
        if self.max_iter < 1 or self.dykstra_max_iter < 1 or self.qp_max_iter < 1:
            raise ConfigError("Iteration caps must be positive")
        if min(self.grad_tol, self.dykstra_tol, self.qp_ftol, self.fd_step) <= 0:
            raise ConfigError("Tolerances must be positive")
        if self.n_random_starts < 0:
            raise ConfigError("n_random_starts must be nonnegative")
        if self.angular_grid_size < 8:
            raise ConfigError("angular_grid_size must be at least 8")


@dataclass
class RunConfig:
    """Resolved settings for one CLI run."""

    # Grid settings
    grid_size: int = 1000
    omega_lo: float = -math.inf
    omega_hi: float = math.inf

    # Analysis settings
    method: str = "gpca-global"
    k: int = 2
    seed: int = 0
    taus: List[float] = field(default_factory=lambda: [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
    density_points: int = 512
    steps: int = 10

    # Ingestion settings
    open_bin_cap: float = 100.0

    # Consistency simulation
    n_schedule: List[int] = field(default_factory=lambda: [25, 100, 400])
    trials: int = 50

    # Output
    output_dir: Optional[str] = None

    solver: SolverOptions = field(default_factory=SolverOptions)

    def to_dict(self) -> Dict[str, Any]:
        """Convert config to a JSON-safe dictionary."""
        data = asdict(self)
        data["omega_lo"] = _encode_bound(self.omega_lo)
        data["omega_hi"] = _encode_bound(self.omega_hi)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """Create config from dictionary, ignoring unknown keys."""
        valid_fields = {f.name for f in fields(cls)}
        filtered = {k: v for k, v in data.items() if k in valid_fields}
        if "omega_lo" in filtered:
            filtered["omega_lo"] = _decode_bound(filtered["omega_lo"])
        if "omega_hi" in filtered:
            filtered["omega_hi"] = _decode_bound(filtered["omega_hi"])
        if isinstance(filtered.get("solver"), dict):
            filtered["solver"] = SolverOptions.from_dict(filtered["solver"])
        try:
            return cls(**filtered)
        except TypeError as e:
            raise ConfigError(f"Invalid configuration: {e}") from e

    def resolved_output_dir(self) -> Path:
        """Output directory, falling back to the environment default root."""
        if self.output_dir:
            return Path(self.output_dir)
        return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))

    def validate(self) -> None:
        """Check the configuration against module preconditions."""
        if self.grid_size < 2:
            raise ConfigError("grid_size must be at least 2")
        if not self.omega_lo < self.omega_hi:
            raise ConfigError("omega_lo must be below omega_hi")
        if self.method not in METHODS:
            raise ConfigError(f"Unknown method: {self.method!r}")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.density_points < 3:
            raise ConfigError("density_points must be at least 3")
        if self.steps < 1:
            raise ConfigError("steps must be at least 1")
        if self.open_bin_cap <= 0:
            raise ConfigError("open_bin_cap must be positive")
        if not self.n_schedule or any(n < 2 for n in self.n_schedule):
            raise ConfigError("n_schedule entries must be at least 2")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        self.solver.validate()


class ConfigManager:
    """Manages loading, overriding and saving run configuration."""

    def __init__(self, config_path: Optional[Path] = None):
        self.config_path = config_path
        self._config = self._load_config()

    def _load_config(self) -> RunConfig:
        """Load configuration from file, defaults when no file is given."""
        if self.config_path is None:
            return RunConfig()
        if not self.config_path.exists():
            raise ConfigError(f"Config file not found: {self.config_path}")
        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Error loading config {self.config_path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("Config file must hold a JSON object")
        # run.json records wrap the settings under "config"
        if isinstance(data.get("config"), dict):
            data = data["config"]
        logger.debug("Loaded config from %s", self.config_path)
        return RunConfig.from_dict(data)

    def save_config(self, path: Optional[Path] = None) -> Path:
        """Save configuration to file."""
        target = path or self.config_path
        if target is None:
            raise ConfigError("No config path to save to")
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(self._config.to_dict(), f, indent=2)
        logger.debug("Saved config to %s", target)
        return target

    @property
    def config(self) -> RunConfig:
        """Get current configuration."""
        return self._config

    def update(self, **kwargs: Any) -> None:
        """Override configuration values; None leaves a value untouched."""
        for key, value in kwargs.items():
            if value is None:
                continue
            if hasattr(self._config, key):
                setattr(self._config, key, value)
            elif hasattr(self._config.solver, key):
                setattr(self._config.solver, key, value)
            else:
                raise ConfigError(f"Unknown config key: {key}")

    def resolve(self) -> RunConfig:
        """Validate and return the final configuration."""
        self._config.validate()
        return self._config
