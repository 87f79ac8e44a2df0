"""
Configuration loading.

Defaults live in DEFAULTS; config/creakbench.yaml (created by `creakbench init`)
overrides them section by section.
"""
import copy
import os
from pathlib import Path
from typing import Any

import yaml

from creakbench.errors import ConfigError

PACKAGE_DIR = Path(__file__).parent
REPO_ROOT = PACKAGE_DIR.parent  # repo root (up from creakbench/)
CONFIG_DIR = REPO_ROOT / "config"
CONFIG_PATH = CONFIG_DIR / "creakbench.yaml"

SEED_ENV = "CREAKBENCH_SEED"

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "vad": {"threshold_db": -35.0, "hangover_frames": 5},
    "pitch": {"f_min_hz": 50.0, "f_max_hz": 500.0},
    "creak": {"calibration": None, "male_threshold": 0.5, "female_threshold": 0.3},
    "adapt": {"b": 2.0, "preset": "data"},
    "flow": {
        "hidden": 64,
        "steps": 20,
        "trace": "exact",
        "hutchinson_probes": 1,
        "batch_size": 200,
        "learning_rate": 1e-4,
        "epochs": 100,
    },
    "synthexp": {},
}


def load_config(path: Path | None = None) -> dict[str, Any]:
    """Load the YAML config. Missing file yields an empty dict."""
    path = Path(path) if path is not None else CONFIG_PATH
    if not path.exists():
        return {}
    try:
        with open(path) as f:
            return yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"Could not read config {path}: {e}") from e


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def get_config(path: Path | None = None) -> dict[str, Any]:
    """DEFAULTS with the YAML file merged on top."""
    return _merge(DEFAULTS, load_config(path))


def get_section(name: str, path: Path | None = None) -> dict[str, Any]:
    """One merged config section (e.g. 'flow')."""
    section = get_config(path).get(name)
    if section is None:
        raise ConfigError(f"Unknown config section '{name}'")
    return section


def default_seed(path: Path | None = None) -> int:
    """Seed precedence: CREAKBENCH_SEED env var, then config, then 0."""
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV} must be an integer, got '{env}'") from e
    return int(get_config(path).get("seed", 0))
