"""
Configuration file for pytest.
This file contains fixtures and configuration settings for pytest.
"""
import math
import os
import sys

import numpy as np
import pytest

# Add the src directory to the path so that imports work without an install
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'src')))

from pynlps.grid import TriangleField, build_grid  # noqa: E402


# Define fixtures that can be used across all tests
@pytest.fixture
def config_dir():
    """Return the path to the example config directory."""
    return os.path.join(os.path.dirname(__file__), '..', 'config')


@pytest.fixture
def small_grid():
    """Desk-scale grid used by the oracle comparisons."""
    return build_grid(T=0.1, n_tau=8, L=2 * math.pi, n_y=16)


@pytest.fixture
def heat_grid():
    """Grid on which the nonlocal heat preset is CFL-stable."""
    return build_grid(T=1.0, n_tau=64, L=2 * math.pi, n_y=16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sin_field():
    """u(t, s, y) = (1 + s) sin(y) on a small triangle."""
    grid = build_grid(T=1.0, n_tau=4, L=2 * math.pi, n_y=16)
    return TriangleField.from_function(grid, lambda t, s, y: (1 + s) * np.sin(y[0])[None, :] + 0 * t)
