"""
Stochastic NLS Utilities Module

This module provides run configuration, configuration file handling, logging
setup and the JSON summary writer shared by every command.
"""

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, fields
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml

from .exceptions import ConfigurationError
from .experiments import ConvergenceConfig, steps_for
from .grid import MAX_SOBOLEV_INDEX, is_power_of_two
from .integrators import SchemeKind

COMMANDS = ("evolve", "conservation", "convergence", "regularity", "selftest")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
EFFECTIVE_CONFIG_NAME = "effective_config.yaml"
SUMMARY_NAME = "summary.json"
LOG_FILE_NAME = "run.log"

_POWER_OF_TWO_STEP = re.compile(r"^\s*2\s*\^\s*\(?\s*(-?\d+)\s*\)?\s*$")


def parse_step(value: Any, key: str) -> float:
    """Step size from a number or a '2^-k' string"""
    if isinstance(value, bool):
        raise ConfigurationError(f"expected a step size, got {value!r}", key=key)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        match = _POWER_OF_TWO_STEP.match(value)
        if match:
            return 2.0 ** int(match.group(1))
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigurationError(f"expected a number or '2^-k', got {value!r}", key=key)


def _as_int(value: Any, key: str) -> int:
    if isinstance(value, bool):
        raise ConfigurationError(f"expected an integer, got {value!r}", key=key)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, float) and value.is_integer():
        return int(value)
    raise ConfigurationError(f"expected an integer, got {value!r}", key=key)


def _as_float(value: Any, key: str) -> float:
    number = parse_step(value, key)
    if not math.isfinite(number):
        raise ConfigurationError(f"expected a finite number, got {value!r}", key=key)
    return number


def _as_bool(value: Any, key: str) -> bool:
    if isinstance(value, bool):
        return value
    raise ConfigurationError(f"expected true or false, got {value!r}", key=key)


def _as_str(value: Any, key: str) -> str:
    if isinstance(value, str) and value.strip():
        return value.strip()
    raise ConfigurationError(f"expected a non-empty string, got {value!r}", key=key)


def _as_list(value: Any, key: str) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, (str, int, float)) and not isinstance(value, bool):
        return [value]
    raise ConfigurationError(f"expected a list, got {value!r}", key=key)


@dataclass
class RunConfig:
    """
    Validated settings of one CLI run

    Field names are the keys of the YAML configuration file.
    """
    command: str = "evolve"
    domain_length: float = 2.0 * math.pi
    grid_points: int = 1024
    potential: str = "cosine"
    initial_condition: str = "gaussian"
    t_end: float = 1.0
    tau: float = 2.0 ** -8
    tau_ladder: List[float] = field(default_factory=lambda: [2.0 ** -k for k in range(10, 17)])
    tau_ref: float = 2.0 ** -18
    samples: int = 100
    seed: int = 20210101
    schemes: List[str] = field(default_factory=lambda: [s.value for s in SchemeKind])
    norm_index: int = 1
    moment: float = 2.0
    output_dir: str = "./results"
    snapshot_every: int = 64
    workers: int = 1
    dealias: bool = False
    sup_error: bool = False
    probability_constants: List[float] = field(
        default_factory=lambda: [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0]
    )
    log_level: str = "INFO"

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "RunConfig":
        """
        Build and validate a RunConfig from raw (YAML-parsed) values

        Args:
            raw: Mapping of config keys to values; missing keys take defaults

        Returns:
            Validated RunConfig

        Raises:
            ConfigurationError: unknown key, wrong type or invalid combination
        """
        unknown = sorted(set(raw) - set(cls.keys()))
        if unknown:
            raise ConfigurationError(f"unknown configuration key (valid keys: "
                                     f"{', '.join(cls.keys())})", key=unknown[0])
        values = asdict(cls())
        values.update(raw)

        config = cls(
            command=_as_str(values["command"], "command").lower(),
            domain_length=_as_float(values["domain_length"], "domain_length"),
            grid_points=_as_int(values["grid_points"], "grid_points"),
            potential=_as_str(values["potential"], "potential"),
            initial_condition=_as_str(values["initial_condition"], "initial_condition"),
            t_end=_as_float(values["t_end"], "t_end"),
            tau=_as_float(values["tau"], "tau"),
            tau_ladder=[_as_float(t, "tau_ladder") for t in _as_list(values["tau_ladder"], "tau_ladder")],
            tau_ref=_as_float(values["tau_ref"], "tau_ref"),
            samples=_as_int(values["samples"], "samples"),
            seed=_as_int(values["seed"], "seed"),
            schemes=[SchemeKind.parse(s).value for s in _as_list(values["schemes"], "schemes")],
            norm_index=_as_int(values["norm_index"], "norm_index"),
            moment=_as_float(values["moment"], "moment"),
            output_dir=_as_str(str(values["output_dir"]), "output_dir"),
            snapshot_every=_as_int(values["snapshot_every"], "snapshot_every"),
            workers=_as_int(values["workers"], "workers"),
            dealias=_as_bool(values["dealias"], "dealias"),
            sup_error=_as_bool(values["sup_error"], "sup_error"),
            probability_constants=[
                _as_float(c, "probability_constants")
                for c in _as_list(values["probability_constants"], "probability_constants")
            ],
            log_level=_as_str(values["log_level"], "log_level").upper(),
        )
        config.validate()
        return config

    def validate(self):
        """Check ranges and cross-field constraints of the active command"""
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command '{self.command}' "
                                     f"(expected one of {', '.join(COMMANDS)})", key="command")
        if not self.domain_length > 0:
            raise ConfigurationError("must be positive", key="domain_length")
        if not is_power_of_two(self.grid_points) or self.grid_points < 4:
            raise ConfigurationError(f"must be a power of two >= 4, got {self.grid_points}",
                                     key="grid_points")
        if not self.t_end > 0:
            raise ConfigurationError("must be positive", key="t_end")
        if not 0 < self.tau < 1:
            raise ConfigurationError(f"must lie in (0, 1), got {self.tau}", key="tau")
        if self.samples < 1:
            raise ConfigurationError("need at least one sample", key="samples")
        if self.seed < 0:
            raise ConfigurationError("must be non-negative", key="seed")
        if not self.schemes:
            raise ConfigurationError("at least one scheme is required", key="schemes")
        if not 0 <= self.norm_index <= MAX_SOBOLEV_INDEX:
            raise ConfigurationError(f"must lie in [0, {MAX_SOBOLEV_INDEX}]", key="norm_index")
        if not self.moment >= 1:
            raise ConfigurationError(f"must be >= 1, got {self.moment}", key="moment")
        if self.snapshot_every < 0:
            raise ConfigurationError("must be >= 0", key="snapshot_every")
        if self.workers < 1:
            raise ConfigurationError("must be >= 1", key="workers")
        if any(c < 0 for c in self.probability_constants):
            raise ConfigurationError("constants must be non-negative", key="probability_constants")
        if self.log_level not in LOG_LEVELS:
            raise ConfigurationError(f"unknown level '{self.log_level}'", key="log_level")

        if self.command in ("evolve", "conservation"):
            steps_for(self.t_end, self.tau, key="tau")
        elif self.command in ("convergence", "regularity"):
            self.convergence_config()

    def convergence_config(self) -> ConvergenceConfig:
        """ConvergenceConfig of a convergence or regularity study"""
        return ConvergenceConfig(
            schemes=tuple(self.schemes),
            taus=tuple(self.tau_ladder),
            tau_ref=self.tau_ref,
            M=self.grid_points,
            T_end=self.t_end,
            samples=self.samples,
            norm_index=self.norm_index,
            moment=self.moment,
            L=self.domain_length,
            potential=self.potential,
            initial_condition=self.initial_condition,
            dealias=self.dealias,
            sup_error=self.sup_error,
            workers=self.workers,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class ConfigManager:
    """
    Configuration manager for stochastic NLS runs

    Values are layered: defaults, then the YAML file, then `--set key=value`
    assignments, then explicit command-line flags.
    """

    def __init__(self, config_file: Optional[Union[str, Path]] = None):
        self.logger = logging.getLogger(__name__)
        self.config_file = Path(config_file) if config_file else None
        self.config = self._load_default_config()
        self._load_config()

    def _load_default_config(self) -> Dict[str, Any]:
        """Load default configuration settings"""
        return RunConfig().to_dict()

    def _load_config(self):
        """Load configuration from file if one was given"""
        if self.config_file is None:
            return
        if not self.config_file.is_file():
            raise ConfigurationError(f"configuration file {self.config_file} not found",
                                     key="config")
        try:
            with open(self.config_file, "r") as f:
                user_config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"cannot parse {self.config_file}: {e}", key="config")

        if user_config is None:
            return
        if not isinstance(user_config, dict):
            raise ConfigurationError(f"{self.config_file} must hold a key-value mapping",
                                     key="config")
        for key, value in user_config.items():
            self.set(str(key), value)
        self.logger.debug(f"Loaded {len(user_config)} keys from {self.config_file}")

    def apply_assignments(self, assignments: Optional[List[str]]):
        """Apply 'key=value' strings; values are parsed as YAML scalars or lists"""
        for assignment in assignments or []:
            key, sep, raw = assignment.partition("=")
            if not sep or not key.strip():
                raise ConfigurationError(f"expected key=value, got '{assignment}'", key="set")
            try:
                value = yaml.safe_load(raw) if raw.strip() else ""
            except yaml.YAMLError as e:
                raise ConfigurationError(f"cannot parse value '{raw}': {e}", key=key.strip())
            self.set(key.strip(), value)

    def apply_overrides(self, overrides: Dict[str, Any]):
        """Apply explicit flag values, skipping the ones left unset"""
        for key, value in overrides.items():
            if value is not None:
                self.set(key, value)

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value

        Args:
            key: Configuration key (e.g., 'tau_ref')
            default: Default value if key not found

        Returns:
            Configuration value or default
        """
        return self.config.get(key, default)

    def set(self, key: str, value: Any):
        """Set a configuration value; unknown keys are rejected"""
        if key not in self.config:
            raise ConfigurationError("unknown configuration key", key=key)
        self.config[key] = value

    def build(self) -> RunConfig:
        """Validated RunConfig of the current values"""
        return RunConfig.from_dict(self.config)

    @staticmethod
    def save_effective_config(config: RunConfig, directory: Union[str, Path]) -> Path:
        """Echo the effective configuration as YAML for provenance"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        target = directory / EFFECTIVE_CONFIG_NAME
        with open(target, "w") as f:
            yaml.safe_dump(config.to_dict(), f, default_flow_style=False, sort_keys=False)
        return target


def parse_config(config_file: Optional[Union[str, Path]] = None,
                 overrides: Optional[Dict[str, Any]] = None,
                 assignments: Optional[List[str]] = None) -> RunConfig:
    """
    Layer file, assignments and flag overrides into a validated RunConfig

    Raises:
        ConfigurationError: naming the offending key
    """
    manager = ConfigManager(config_file)
    manager.apply_assignments(assignments)
    manager.apply_overrides(overrides or {})
    return manager.build()


def setup_logging(config: RunConfig, output_dir: Optional[Union[str, Path]] = None,
                  verbose: bool = False):
    """
    Setup logging configuration

    Args:
        config: RunConfig providing log_level
        output_dir: Directory receiving run.log; console only when None
        verbose: Force DEBUG
    """
    log_level = logging.DEBUG if verbose else getattr(logging, config.log_level)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    if output_dir is not None:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            Path(output_dir) / LOG_FILE_NAME,
            maxBytes=10 * 1024 * 1024,
            backupCount=5,
        )
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)
    root_logger.setLevel(log_level)


def _json_default(value: Any):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _finite_or_none(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite_or_none(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_none(v) for v in value]
    return value


def write_summary(directory: Union[str, Path], summary: Dict[str, Any]) -> Path:
    """Write summary.json; NaN and infinities become null"""
    target = Path(directory) / SUMMARY_NAME
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w") as f:
        json.dump(_finite_or_none(summary), f, indent=2, default=_json_default)
    return target
