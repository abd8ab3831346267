"""Shared fixtures for the stochnls test suite"""

import math

import numpy as np
import pytest

from stochnls import Potential, SpectralGrid, initial_condition


@pytest.fixture
def grid():
    return SpectralGrid(64)


@pytest.fixture
def small_grid():
    return SpectralGrid(8)


@pytest.fixture
def cosine(grid):
    return Potential.cosine(grid)


@pytest.fixture
def zero_potential(grid):
    return Potential.zero(grid)


@pytest.fixture
def gaussian(grid):
    """exp(-0.5 (x - pi)^2); its periodic extension has a small derivative jump"""
    return initial_condition("gaussian", grid)


@pytest.fixture
def narrow_gaussian(grid):
    """exp(-4 (x - pi)^2), smooth to roundoff when periodized"""
    return np.exp(-4.0 * (grid.x - math.pi) ** 2).astype(np.complex128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
