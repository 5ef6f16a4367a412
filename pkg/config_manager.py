"""
Config Manager - loads YAML configuration, sets up logging and builds
simulation grids (including the built-in reproduction grids).
"""
import sys
from typing import Any, Dict, List, Mapping, Optional

import yaml
from loguru import logger

from covariance import CovarianceSpec, parse_covariance_spec
from errors import ConfigError
from harness import DEFAULT_METHODS, DEFAULT_SEED, GridConfig

REFERENCE_N = 5000
REFERENCE_K = 2.5
REFERENCE_ALPHA = 0.05
REFERENCE_REPLICATES = 200
REFERENCE_P_GRID = tuple(round(0.01 * i, 2) for i in range(1, 11))
REFERENCE_EQUI_RHOS = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
# block sizes of the reference study are unknown; four equal blocks is an assumption
REFERENCE_BLOCKS = "blocks:1250@0.25,1250@0.5,1250@0.15,1250@0.75"
EQUICORRELATED_TABLES = (1, 2, 3)
BLOCK_TABLES = (4, 5, 6)

DEFAULT_LOGGING = {"level": "INFO", "file": None}


def load_config(config_path: str) -> Dict[str, Any]:
    """Load configuration from YAML file."""
    try:
        with open(config_path, "r") as f:
            config = yaml.safe_load(f) or {}
    except FileNotFoundError:
        logger.warning(f"Config file {config_path} not found. Using defaults.")
        return {"logging": dict(DEFAULT_LOGGING)}
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {config_path} is not valid YAML: {e}") from e

    if not isinstance(config, dict):
        raise ConfigError(f"Config file {config_path} must contain a mapping")
    return config


def configure_logging(config: Mapping[str, Any], level: Optional[str] = None) -> None:
    """Console sink plus the optional rotating file sink from the logging section."""
    log_config = {**DEFAULT_LOGGING, **(config.get("logging") or {})}
    level = (level or log_config["level"]).upper()

    logger.remove()
    logger.add(lambda message: sys.stderr.write(message), level=level)
    if log_config.get("file"):
        logger.add(log_config["file"], level=level, rotation="10 MB")


def expand_p_grid(value: Any) -> List[float]:
    """A list of proportions, or a {start, stop, step} range with stop included."""
    if isinstance(value, Mapping):
        try:
            start, stop, step = float(value["start"]), float(value["stop"]), float(value["step"])
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"p_grid range needs numeric start, stop and step: {value}") from e
        if step <= 0 or stop < start:
            raise ConfigError(f"Invalid p_grid range {value}")
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 12) for i in range(count)]

    if isinstance(value, (int, float)):
        return [float(value)]
    try:
        return [float(p) for p in value]
    except (TypeError, ValueError) as e:
        raise ConfigError(f"p_grid must be a list of numbers or a range, got {value!r}") from e


def grid_config_from_mapping(section: Mapping[str, Any]) -> GridConfig:
    """Build a GridConfig from the `simulation:` section of a config file."""
    if not isinstance(section, Mapping):
        raise ConfigError("The simulation section must be a mapping")

    try:
        n = int(section.get("n", REFERENCE_N))
        sigma_texts = section.get("sigma_grid") or []
        if isinstance(sigma_texts, str):
            sigma_texts = [sigma_texts]
        sigma_grid = [parse_covariance_spec(text, n) for text in sigma_texts]
        return GridConfig(
            n=n,
            p_grid=expand_p_grid(section.get("p_grid", [])),
            sigma_grid=sigma_grid,
            k=float(section.get("k", REFERENCE_K)),
            alpha=float(section.get("alpha", REFERENCE_ALPHA)),
            replicates=int(section.get("replicates", REFERENCE_REPLICATES)),
            base_seed=int(section.get("base_seed", DEFAULT_SEED)),
            methods=section.get("methods", DEFAULT_METHODS),
            threads=int(section.get("threads", 1)),
            record_timing=bool(section.get("record_timing", True)),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid simulation config: {e}") from e


def load_grid_config(config_path: str) -> GridConfig:
    """Read config.yaml and build the GridConfig from its simulation section."""
    config = load_config(config_path)
    if "simulation" not in config:
        raise ConfigError(f"Config file {config_path} has no simulation section")
    return grid_config_from_mapping(config["simulation"])


def reference_sigma_grid(table: int) -> List[CovarianceSpec]:
    if table in EQUICORRELATED_TABLES:
        return [CovarianceSpec.equicorrelated(REFERENCE_N, rho) for rho in REFERENCE_EQUI_RHOS]
    if table in BLOCK_TABLES:
        return [parse_covariance_spec(REFERENCE_BLOCKS)]
    raise ConfigError(f"Unknown table {table}; choose 1-6")


def reference_grid(table: int, **overrides) -> GridConfig:
    """The reference reproduction grid behind a table (1-3 share one grid, 4-6 another)."""
    config = GridConfig(
        n=REFERENCE_N,
        p_grid=REFERENCE_P_GRID,
        sigma_grid=reference_sigma_grid(table),
        k=REFERENCE_K,
        alpha=REFERENCE_ALPHA,
        replicates=REFERENCE_REPLICATES,
    )
    return config.with_overrides(**overrides)
