"""Shared fixtures for the scheduling tests."""

import numpy as np
import pytest

from src.evaluation.oracle import make_instance
from src.simulation.model import SimConfig, Sample


def make_sample(sid=0, slot=1, weight=10.0, n_classifiers=2, truth=1, labels=None):
    if labels is None:
        labels = np.full(n_classifiers, truth, dtype=np.int8)
    return Sample(sid, slot, float(weight), truth, np.asarray(labels, dtype=np.int8))


@pytest.fixture
def two_classifier_config():
    return SimConfig(horizon=5, n_classifiers=2, competences=[0.9, 0.8])


@pytest.fixture
def single_arrival_instance():
    """One sample of weight 10 at slot 1, classifiers 0.9 and 0.8."""
    return make_instance([0.9, 0.8], [(1, 10.0)], horizon=3)


@pytest.fixture
def small_config():
    return SimConfig(horizon=300, n_classifiers=6, competences=[0.9, 0.85, 0.8, 0.75, 0.7, 0.65], seed=5)


@pytest.fixture
def sample_factory():
    return make_sample
