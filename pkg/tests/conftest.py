# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 17:24'

Usage:
shared fixtures; toy sizes keep the numpy engine fast
"""
import numpy as np
import pytest
from click.testing import CliRunner

from hykey.hsidata import EPIPOLAR, PLANAR, HsiCube, SyntheticPairSpec, generate_base_cube, generate_triplet
from hykey.model import HyKeyConfig, HyKeyNetwork


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running acceptance checks, deselect with -m "not slow"')


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def toy_config():
    return HyKeyConfig(channels=(4, 4, 8), descriptor_dim=8, train_detected=16, train_random=16, max_keypoints=64)


@pytest.fixture
def toy_network(toy_config):
    return HyKeyNetwork(toy_config, seed=0)


@pytest.fixture
def toy_spec():
    return SyntheticPairSpec(mode=PLANAR, seed=3, height=16, width=16)


@pytest.fixture
def toy_cube(toy_spec):
    return generate_base_cube(toy_spec)


@pytest.fixture
def ramp_cube():
    """16 bands of a smooth pattern with a unique maximum per band"""
    y, x = np.mgrid[0:16, 0:16].astype(np.float64)
    bands = [np.sin(0.4 * x + 0.1 * b) * np.cos(0.3 * y - 0.05 * b) for b in range(16)]
    return HsiCube(0.5 + 0.5 * np.stack(bands))


@pytest.fixture
def planar_triplet(toy_spec):
    return generate_triplet(toy_spec)


@pytest.fixture
def epipolar_triplet():
    return generate_triplet(SyntheticPairSpec(mode=EPIPOLAR, seed=5, height=24, width=24))


@pytest.fixture
def runner():
    return CliRunner()
