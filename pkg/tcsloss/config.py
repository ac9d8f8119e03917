import os
from pathlib import Path

import yaml
from dotenv import load_dotenv

from tcsloss.errors import ConfigError

load_dotenv()

# Defaults per subcommand; a config file may override any of these keys, nothing else
DEFAULTS = {
    "simulate": {
        "d": 3,
        "p_comp": 0.0,
        "p_loss": 0.0,
        "p_lint": 0.0,
        "seed": 0,
        "blocks": None,
        "failures": None,
        "t_check": "auto",
        "t_delete": None,
        "max_rounds": 10_000_000,
        "time_limit": None,
        "workers": 1,
        "format": "csv",
    },
    "sweep": {
        "d": [3, 5],
        "p_comp": 0.0,
        "p_loss": [],
        "p_lint": 0.0,
        "seed": 0,
        "blocks": None,
        "failures": 100,
        "t_check": "auto",
        "t_delete": None,
        "max_rounds": 10_000_000,
        "time_limit": None,
        "workers": 1,
        "format": "csv",
    },
    "overhead": {
        "target": 1e-15,
        "baseline_d": None,
        "convention": "floor",
        "p_comp": None,
        "p_lint": None,
        "format": "csv",
    },
}

WORKERS = os.getenv("TCSLOSS_WORKERS")
LOG_LEVEL = os.getenv("TCSLOSS_LOG_LEVEL", "WARNING")


def default_workers() -> int:
    if not WORKERS:
        return 1
    try:
        workers = int(WORKERS)
    except ValueError:
        raise ConfigError(f"TCSLOSS_WORKERS must be an integer, got {WORKERS!r}") from None
    if workers < 1:
        raise ConfigError("TCSLOSS_WORKERS must be >= 1")
    return workers


def load_config_file(path: str | Path) -> dict:
    """YAML (or JSON) mapping of option name to value."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping of options")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve(command: str, file_values: dict | None, cli_values: dict) -> dict:
    """Defaults < config file < explicit CLI flags (None means not given)."""
    defaults = dict(DEFAULTS[command])
    if "workers" in defaults:
        defaults["workers"] = default_workers()
    unknown = sorted(set(file_values or {}) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown {command} options in config file: {', '.join(unknown)}")
    out = defaults
    out.update(file_values or {})
    out.update({k: v for k, v in cli_values.items() if k in defaults and v is not None})
    return out
