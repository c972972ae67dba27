"""Shared fixtures for rilab tests."""
import shutil
import tempfile
from pathlib import Path
from typing import Any

import numpy as np
import pytest
import yaml


@pytest.fixture
def temp_dir():
    """Create a temporary directory that's cleaned up after the test."""
    temp_path = Path(tempfile.mkdtemp())
    yield temp_path
    shutil.rmtree(temp_path)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so sampled configurations are reproducible."""
    return np.random.default_rng(20240601)


@pytest.fixture
def sample_config() -> dict[str, Any]:
    """Sample rilab.yaml configuration."""
    return {
        "experiment": {"name": "void", "trials": 50, "seed": 7, "test_mode": True},
        "geometry": {"d": 3, "L": 2, "K": 10, "radii": [1]},
        "levels": {"u": [0.5, 1.0]},
        "walks": {"kappa": 2.0},
    }


@pytest.fixture
def config_file(temp_dir, sample_config):
    """Create a temporary rilab.yaml file."""
    config_path = temp_dir / "rilab.yaml"
    with open(config_path, "w") as f:
        yaml.dump(sample_config, f)
    return config_path
