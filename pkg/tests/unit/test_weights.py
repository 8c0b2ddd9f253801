"""Tests for the built-in superharmonic weights."""

import numpy as np
import pytest

from stefan_lab.core.errors import ConfigurationError
from stefan_lab.core.grid import DomainSpec, build_domain
from stefan_lab.core.weights import BUILTIN_WEIGHTS, WeightSpec, nonuniversal, quadratic, weight_by_name


@pytest.mark.parametrize('name', BUILTIN_WEIGHTS)
def test_builtin_weights_validate_on_disc(name):
    geometry, U = build_domain(DomainSpec('ball', n=32))
    stats = weight_by_name(name).validate(geometry, U)
    assert stats['min_u'] > 0.0
    assert stats['max_laplacian'] < 0.0


@pytest.mark.parametrize('name', BUILTIN_WEIGHTS)
def test_analytic_laplacian_matches_stencil(name):
    geometry, _ = build_domain(DomainSpec('ball', n=64))
    weight = weight_by_name(name)
    x, y = geometry.centers()
    h = geometry.h
    stencil = (weight.func(x + h, y) + weight.func(x - h, y) + weight.func(x, y + h)
               + weight.func(x, y - h) - 4.0 * weight.func(x, y)) / h ** 2
    inside = (np.abs(x) < 0.9) & (np.abs(y) < 0.9)
    exact = weight.laplacian_field(geometry)
    assert np.abs(stencil - exact)[inside].max() <= 1e-2 * max(1.0, np.abs(exact[inside]).max())


def test_quadratic_in_one_dimension():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=32))
    weight = quadratic(center=(0.5,), dim=1)
    stats = weight.validate(geometry, U)
    assert stats['max_laplacian'] == pytest.approx(-2.0)
    sampled = weight.sample(geometry, U)
    assert sampled.values[~U.mask].max() == 0.0
    assert sampled.values[U.mask].max() == pytest.approx(2.0, abs=1e-3)


def test_non_superharmonic_weight_is_rejected():
    geometry, U = build_domain(DomainSpec('ball', n=32))
    convex = WeightSpec('convex', lambda x, y: 1.0 + x * x + y * y,
                        lambda x, y: np.full(np.shape(x), 4.0))
    with pytest.raises(ConfigurationError):
        convex.validate(geometry, U)
    negative = quadratic().scaled(-1.0)
    with pytest.raises(ConfigurationError):
        negative.validate(geometry, U)


def test_nonuniversal_parameters_and_scaling():
    weight = nonuniversal(0.02)
    assert dict(weight.params) == {'eps': 0.02}
    doubled = weight.scaled(2.0)
    assert doubled.func(0.3, 0.4) == pytest.approx(2.0 * weight.func(0.3, 0.4))
    assert doubled.laplacian(0.3, 0.4) == pytest.approx(2.0 * weight.laplacian(0.3, 0.4))


def test_unknown_and_two_dimensional_only_weights():
    with pytest.raises(ConfigurationError):
        weight_by_name('cubic')
    with pytest.raises(ConfigurationError):
        weight_by_name('nonuniversal', dim=1)
