"""Shared fixtures for the stefan-lab test suite."""

import logging
import os

import numpy as np
import pytest

from stefan_lab.config.settings import Settings
from stefan_lab.core.grid import DomainSpec, ScalarField, build_domain


@pytest.fixture
def isolated_home(tmp_path, monkeypatch):
    """HOME without user config and no STEFAN_LAB_* overrides."""
    home = tmp_path / 'home'
    home.mkdir()
    monkeypatch.setenv('HOME', str(home))
    for name in list(os.environ):
        if name.startswith('STEFAN_LAB_'):
            monkeypatch.delenv(name, raising=False)
    return home


@pytest.fixture
def settings(isolated_home):
    return Settings()


@pytest.fixture
def quiet_logger():
    logger = logging.getLogger('stefan_lab.tests')
    logger.handlers.clear()
    logger.addHandler(logging.NullHandler())
    logger.propagate = False
    return logger


@pytest.fixture
def interval_domain():
    """Unit interval at n = 400."""
    return build_domain(DomainSpec('interval', dim=1, n=400))


@pytest.fixture
def box_domain():
    """Unit square at n = 16."""
    return build_domain(DomainSpec('box', dim=2, n=16))


@pytest.fixture
def two_band_pair(interval_domain):
    """μ = ½ on (0, 1) and ν = χ(0, ¼) + χ(¾, 1)."""
    geometry, U = interval_domain
    mu = ScalarField(np.where(U.mask, 0.5, 0.0), geometry, support=U, value_cap=1.0, name='mu')
    x = geometry.centers()[0]
    nu_values = np.where(U.mask & ((x < 0.25) | (x > 0.75)), 1.0, 0.0)
    nu = ScalarField(nu_values, geometry, support=U, value_cap=1.0, name='nu')
    return mu, nu
