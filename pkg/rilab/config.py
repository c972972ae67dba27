"""Experiment configuration: the rilab.yaml template, loading and validation."""
from __future__ import annotations

import dataclasses
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml
from ruamel.yaml import YAML

from rilab.errors import ConfigError
from rilab.lattice import K_MIN

logger = logging.getLogger(__name__)

CONFIG_NAME = "rilab.yaml"
K_MIN_TEST = 10

EXPERIMENTS = ("void", "one_arm", "exist", "two_arms", "capacity", "tail")

TEMPLATE = """\
# rilab experiment configuration
# Values here override command-line defaults; explicit flags override both.

experiment:
  # One of: void, one_arm, exist, two_arms, capacity, tail
  name: void
  trials: 100
  seed: 20240601
  # Small geometries: d = 2 allowed, K_min drops from 100 to 10
  test_mode: false

geometry:
  d: 3
  L: 5
  K: 100
  N: 20
  L0: 6
  L0_minus: 6
  # Margin used by the surrounding relation and Fill
  margin: 2
  # Swept scale: R (one_arm), L (exist), N (two_arms), box side (capacity)
  # or number of boxes (tail)
  radii: [10]

levels:
  u: [1.0]
  delta: 0.0
  # Deviation window of the tail experiment
  eps: 0.2
  # u_plus: 2.0

walks:
  # Kill radius factor: a walk has escaped at distance kappa * diam
  kappa: 8.0
  # exact or mc equilibrium measures
  mode: exact
  escape_trials: 1000
"""

_SECTIONS = {
    "experiment": {"name": "experiment", "trials": "trials", "seed": "seed",
                   "test_mode": "test_mode"},
    "geometry": {"d": "d", "L": "L", "K": "K", "N": "N", "L0": "L0", "L0_minus": "L0_minus",
                 "margin": "margin", "radii": "radii"},
    "levels": {"u": "levels", "delta": "delta", "eps": "eps", "u_plus": "u_plus"},
    "walks": {"kappa": "kappa", "mode": "mode", "escape_trials": "escape_trials"},
}


def get_base_path() -> Path:
    """RILAB_BASE_DIR when set, else the current directory."""
    base_dir = os.environ.get("RILAB_BASE_DIR")
    if base_dir:
        return Path(base_dir)
    return Path.cwd()


def init_config(target_dir: Path | str | None = None) -> Path:
    """Write the commented rilab.yaml template.

    Args:
        target_dir: Directory to write into (default: the base path)

    Returns:
        Path to the written file

    Raises:
        FileExistsError: If rilab.yaml already exists there
    """
    target = Path(target_dir) if target_dir is not None else get_base_path()
    config_file = target / CONFIG_NAME
    if config_file.exists():
        raise FileExistsError(f"{CONFIG_NAME} already exists at {target}")
    target.mkdir(parents=True, exist_ok=True)
    ryaml = YAML()
    data = ryaml.load(TEMPLATE)
    with open(config_file, "w") as f:
        ryaml.dump(data, f)
    logger.info("wrote %s", config_file)
    return config_file


def load_config(path: Path | str) -> dict[str, Any]:
    """Read a config file; a missing file warns and yields {}.

    Raises:
        ConfigError: If the file is not valid YAML or not a mapping
    """
    path = Path(path)
    if not path.exists():
        print(f"⚠️  Configuration not found: {path}", file=sys.stderr)
        return {}
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    return data


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated parameters of one batch run.

    Attributes:
        experiment: Name of the experiment (see ``EXPERIMENTS``)
        trials: Trials per parameter point
        seed: Base seed; trial seeds are derived from it
        test_mode: Allow d = 2 and K down to 10
        d: Dimension
        L, K, N, L0, L0_minus: Scales of the geometry
        margin: Margin of the surrounding relation
        radii: Radii swept by the experiment
        levels: Levels u swept by the experiment
        delta: Noise level
        eps: Deviation window of the tail experiment
        u_plus: Upper level of the tail experiment (2u by default)
        kappa: Kill radius factor
        mode: exact or mc equilibrium measures
        escape_trials: Escape trials per site in mc mode
    """

    experiment: str = "void"
    trials: int = 100
    seed: int = 20240601
    test_mode: bool = False
    d: int = 3
    L: int = 5
    K: int = 100
    N: int = 20
    L0: int = 6
    L0_minus: int = 6
    margin: int = 2
    radii: tuple[int, ...] = (10,)
    levels: tuple[float, ...] = (1.0,)
    delta: float = 0.0
    eps: float = 0.2
    u_plus: float | None = None
    kappa: float = 8.0
    mode: str = "exact"
    escape_trials: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(int(r) for r in self.radii))
        object.__setattr__(self, "levels", tuple(float(u) for u in self.levels))
        problems = self._problems()
        if problems:
            raise ConfigError("; ".join(problems))

    def _problems(self) -> list[str]:
        out = []
        if self.experiment not in EXPERIMENTS:
            out.append(f"unknown experiment {self.experiment!r}")
        if self.d < (2 if self.test_mode else 3):
            out.append(f"d must be at least 3 outside test mode, got {self.d}")
        if self.kappa < 2:
            out.append(f"kappa must be at least 2, got {self.kappa}")
        if not 0 <= self.delta < 1:
            out.append(f"delta must lie in [0, 1), got {self.delta}")
        if self.K < self.k_min:
            out.append(f"K must be at least {self.k_min}, got {self.K}")
        for name in ("L", "N", "L0", "margin"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be at least 1")
        if self.L0_minus < 6:
            out.append(f"L0_minus must be at least 6, got {self.L0_minus}")
        if self.trials < 0:
            out.append(f"trials must be nonnegative, got {self.trials}")
        if not self.radii or min(self.radii) < 1:
            out.append("radii must be a nonempty list of positive integers")
        if not self.levels or min(self.levels) <= 0:
            out.append("levels must be a nonempty list of positive numbers")
        if not 0 < self.eps < 1:
            out.append(f"eps must lie in (0, 1), got {self.eps}")
        if self.u_plus is not None and self.u_plus <= 0:
            out.append("u_plus must be positive")
        if self.mode not in ("exact", "mc"):
            out.append(f"mode must be exact or mc, got {self.mode!r}")
        if self.escape_trials < 1:
            out.append("escape_trials must be positive")
        return out

    @property
    def k_min(self) -> int:
        return K_MIN_TEST if self.test_mode else K_MIN

    @classmethod
    def from_mapping(cls, data: dict[str, Any] | None) -> ExperimentConfig:
        """Build from the sectioned YAML mapping.

        Raises:
            ConfigError: On unknown keys, wrong types or violated preconditions
        """
        values: dict[str, Any] = {}
        for section, body in (data or {}).items():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section {section!r}")
            if body is None:
                continue
            if not isinstance(body, dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            for key, value in body.items():
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"unknown key {section}.{key}")
                values[_SECTIONS[section][key]] = value
        for key in ("radii", "levels"):
            if key in values and not isinstance(values[key], list | tuple):
                values[key] = [values[key]]
        try:
            return cls(**values)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid configuration: {e}") from e

    def override(self, **changes: Any) -> ExperimentConfig:
        """Copy with the non-None ``changes`` applied."""
        changes = {k: v for k, v in changes.items() if v is not None}
        try:
            return dataclasses.replace(self, **changes)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid configuration: {e}") from e

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["radii"] = list(self.radii)
        out["levels"] = list(self.levels)
        return out


def resolve_config(path: Path | str | None) -> ExperimentConfig:
    """Config from an explicit file, else rilab.yaml under the base path, else defaults."""
    if path is None:
        candidate = get_base_path() / CONFIG_NAME
        if not candidate.exists():
            return ExperimentConfig()
        path = candidate
    return ExperimentConfig.from_mapping(load_config(path))
