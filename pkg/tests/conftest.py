"""Shared fixtures for the reconstruction tests."""

import json

import numpy as np
import pytest

from core.fields import GridField, GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ramp_8x8():
    i, j = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    return GridField.from_array(1.0 + 0.1 * i + 0.2 * j)


@pytest.fixture
def grid_3d():
    return GridSpec((4, 3, 5), (1.0, 0.5, 2.0))


@pytest.fixture
def write_config(tmp_path):
    """Write a JSON config into tmp_path and return its path."""
    def write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path
    return write


@pytest.fixture
def tiny_sweep_config(tmp_path):
    return {
        "problem": "denoise2d",
        "shape": [8, 8],
        "phantom": "disc",
        "noise_fractions": [0.01, 0.05],
        "seeds": [0],
        "solver": {"mode": "alg1", "max_iter": 200},
        "output_dir": str(tmp_path / "out"),
        "workers": 1,
    }
