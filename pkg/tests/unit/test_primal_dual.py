"""Tests for the primal problem, its dual certificate and the transition zone."""

import numpy as np
import pytest

from stefan_lab.core.errors import DomainError, InfeasibleProblemError
from stefan_lab.core.grid import CellSet, DomainSpec, ScalarField, build_domain
from stefan_lab.core.primal_dual import (
    SolverOptions, extract_transition_zone, harmonic_function, moment_audit, saturation_screen,
    solve_primal_dual,
)
from stefan_lab.core.weights import quadratic

HIGHS = SolverOptions(backend='highs')


@pytest.fixture
def interval_problem():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=64))
    mu = ScalarField(np.where(U.mask, 0.5, 0.0), geometry, support=U, value_cap=1.0, name='mu')
    return geometry, U, mu, quadratic(center=(0.5,), dim=1)


def test_interval_optimum_is_two_end_bands(interval_problem):
    geometry, U, mu, weight = interval_problem
    solution, certificate = solve_primal_dual(mu, weight, U, HIGHS)
    assert solution.converged
    assert abs(solution.mass_error) < 1e-8
    assert solution.constraint_residual < 1e-6
    assert solution.objective == pytest.approx(1.0 - 7.0 / 96.0, abs=2e-3)
    assert abs(certificate.gap) <= 1e-6 * max(1.0, abs(solution.objective))
    assert certificate.subharmonic_violation < 1e-6

    x = geometry.centers()[0]
    nu = solution.nu.values
    assert nu[U.mask & ((x < 0.2) | (x > 0.8))].min() > 0.99
    assert nu[U.mask & (x > 0.3) & (x < 0.7)].max() < 0.01
    assert solution.binarity_defect < 2.0 * geometry.h


def test_transition_zone_and_moments(interval_problem):
    geometry, U, mu, weight = interval_problem
    solution, certificate = solve_primal_dual(mu, weight, U, HIGHS)
    zone = extract_transition_zone(solution, certificate, weight, U)
    assert zone.sigma.measure() == pytest.approx(0.5, abs=2.0 * geometry.h)
    assert zone.screen.boundary_ok

    rows = moment_audit(zone.sigma, mu, ['one', 'x'], center=(0.5,))
    assert [row['harmonic'] for row in rows] == ['one', 'x']
    for row in rows:
        assert abs(row['residual']) <= 2.0 * geometry.h


def test_mass_above_capacity_is_infeasible(interval_problem):
    geometry, U, _, weight = interval_problem
    heavy = ScalarField(np.where(U.mask, 1.5, 0.0), geometry)
    with pytest.raises(InfeasibleProblemError) as info:
        solve_primal_dual(heavy, weight, U)
    assert info.value.direction is not None
    assert np.array_equal(info.value.direction.values > 0, U.mask)


def test_source_outside_domain_is_rejected(interval_problem):
    geometry, U, _, weight = interval_problem
    leaking = ScalarField(np.full(geometry.shape, 0.1), geometry)
    with pytest.raises(DomainError):
        solve_primal_dual(leaking, weight, U)


def test_unknown_backend_is_rejected(interval_problem):
    _, U, mu, weight = interval_problem
    with pytest.raises(DomainError):
        solve_primal_dual(mu, weight, U, SolverOptions(backend='simplex'))


def test_weight_array_must_be_positive(interval_problem):
    geometry, U, mu, _ = interval_problem
    with pytest.raises(DomainError):
        solve_primal_dual(mu, np.zeros(geometry.shape), U)


def test_dual_simplex_backend_agrees(interval_problem):
    _, U, mu, weight = interval_problem
    ipm, _ = solve_primal_dual(mu, weight, U, HIGHS)
    simplex, certificate = solve_primal_dual(mu, weight, U, SolverOptions(backend='highs-ds'))
    assert simplex.objective == pytest.approx(ipm.objective, abs=1e-7)
    assert abs(certificate.gap) < 1e-6


def test_solver_options_from_settings(settings):
    options = SolverOptions.from_settings(settings.solver_config)
    assert options.backend == 'pdhg'
    assert options.check_every == 500
    assert options.ambiguity_flag == pytest.approx(0.05)


def test_saturation_screen_repairs_cracks(box_domain):
    geometry, U = box_domain
    sigma = U.mask.copy()
    sigma[12, 12] = False
    repaired, screen = saturation_screen(sigma, U)
    assert screen.holes_filled == 1
    assert repaired[12, 12]
    assert screen.boundary_ok

    lonely = geometry.empty_mask()
    lonely[12, 12] = True
    repaired, screen = saturation_screen(lonely, U)
    assert screen.isolated_removed == 1
    assert not repaired.any()
    assert not screen.boundary_ok


def test_harmonic_functions():
    name, func = harmonic_function(('cos', 2))
    assert name == 'r^2 cos(2θ)'
    assert func(np.array([1.0]), np.array([1.0]))[0] == pytest.approx(0.0)
    assert func(np.array([2.0]), np.array([0.0]))[0] == pytest.approx(4.0)
    _, sine = harmonic_function(('sin', 1), center=(0.5, 0.5))
    assert sine(np.array([0.5]), np.array([1.5]))[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        harmonic_function(('tan', 1))


def test_moment_audit_in_two_dimensions(box_domain):
    geometry, U = box_domain
    mu = ScalarField(np.where(U.mask, 0.5, 0.0), geometry)
    rows = moment_audit(CellSet(U.mask, geometry), mu, ['one'])
    assert rows[0]['sigma_side'] == pytest.approx(1.0)
    assert rows[0]['mu_side'] == pytest.approx(0.5)


@pytest.fixture
def coarse_interval():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=32))
    mu = ScalarField(np.where(U.mask, 0.5, 0.0), geometry, support=U, value_cap=1.0, name='mu')
    return geometry, U, mu, quadratic(center=(0.5,), dim=1)


def test_pdhg_converges_to_the_highs_optimum(coarse_interval):
    geometry, U, mu, weight = coarse_interval
    reference, _ = solve_primal_dual(mu, weight, U, HIGHS)
    solution, certificate = solve_primal_dual(mu, weight, U, SolverOptions(backend='pdhg'))
    assert solution.backend == 'pdhg'
    assert solution.converged
    assert solution.iterations < 200000
    assert abs(certificate.relative_gap) <= 1e-6
    assert solution.objective == pytest.approx(reference.objective, abs=1e-5)
    assert solution.objective == pytest.approx(1.0 - 7.0 / 96.0, abs=5e-3)
    assert solution.constraint_residual < 1e-5
    assert certificate.subharmonic_violation < 1e-5

    x = geometry.centers()[0]
    nu = solution.nu.values
    assert nu[U.mask & ((x < 0.2) | (x > 0.8))].min() > 0.9
    assert nu[U.mask & (x > 0.3) & (x < 0.7)].max() < 0.1


def test_pdhg_stops_with_a_flagged_partial_result(coarse_interval):
    _, U, mu, weight = coarse_interval
    options = SolverOptions(backend='pdhg', max_iters=1000, check_every=100)
    solution, certificate = solve_primal_dual(mu, weight, U, options)
    assert not solution.converged
    assert solution.iterations == 1000
    assert solution.potential.v.values.min() >= 0.0
    assert 0.0 <= solution.nu.values.min() and solution.nu.values.max() <= 1.0
    assert certificate.psi.values.min() >= 0.0
