"""Frozen numerical constants shipped with the package."""
from __future__ import annotations

import logging
from importlib import resources
from pathlib import Path
from typing import Any

import yaml
from ruamel.yaml import YAML

from rilab.errors import ConfigError

logger = logging.getLogger(__name__)

FIXTURE_KEYS = ("green_origin", "cap_origin", "gamma_c", "admissible_a", "c73")


def default_path() -> Path:
    return Path(str(resources.files("rilab") / "data" / "fixtures.yaml"))


def load_fixtures(path: Path | str | None = None) -> dict[str, float]:
    """Read the fixture file.

    Args:
        path: Alternative fixture file (the packaged one when None)

    Returns:
        Mapping of fixture name to value

    Raises:
        ConfigError: If the file is missing, malformed or lacks a fixture
    """
    path = Path(path) if path is not None else default_path()
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError as e:
        raise ConfigError(f"fixture file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"fixture file {path} is not valid YAML: {e}") from e
    missing = [k for k in FIXTURE_KEYS if k not in data]
    if missing:
        raise ConfigError(f"fixture file {path} lacks {', '.join(missing)}")
    try:
        return {k: float(data[k]) for k in FIXTURE_KEYS}
    except (TypeError, ValueError) as e:
        raise ConfigError(f"fixture file {path} has a non-numeric value: {e}") from e


def get(name: str, path: Path | str | None = None) -> float:
    if name not in FIXTURE_KEYS:
        raise ConfigError(f"unknown fixture {name!r}")
    return load_fixtures(path)[name]


def freeze(name: str, value: float, path: Path | str | None = None) -> None:
    """Write one fixture back, keeping the file's comments."""
    if name not in FIXTURE_KEYS:
        raise ConfigError(f"unknown fixture {name!r}")
    path = Path(path) if path is not None else default_path()
    ryaml = YAML()
    ryaml.preserve_quotes = True
    with open(path) as f:
        data: Any = ryaml.load(f)
    data[name] = float(value)
    with open(path, "w") as f:
        ryaml.dump(data, f)
    logger.info("froze %s = %r in %s", name, value, path)
