"""Shared fixtures for the gbmap test suite"""

import numpy as np
import pytest

from gbmap.data import gen_synth_cos
from gbmap.models import TaskKind


@pytest.fixture
def rng():
    """Seeded generator, fresh for every test"""
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def synth_regression():
    """Small synth-cos regression data (400 x 4 + intercept)"""
    return gen_synth_cos(400, 4, seed=3)


@pytest.fixture(scope="session")
def synth_classification():
    """Small synth-cos classification data (400 x 4 + intercept)"""
    return gen_synth_cos(400, 4, seed=4, task=TaskKind.CLASSIFICATION)
