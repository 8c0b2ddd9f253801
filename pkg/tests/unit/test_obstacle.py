"""Tests for the parabolic obstacle evolution, freezing maps and gluing."""

import numpy as np
import pytest

from stefan_lab.core.errors import GluingError, NotSubharmonicError
from stefan_lab.core.grid import DomainSpec, ScalarField, build_domain
from stefan_lab.core.obstacle import (
    ObstacleOptions, detect_nucleation, freezing_map, glue_trajectories, initial_potential, run_obstacle,
)
from stefan_lab.core.radial_targets import RadialDensity, rasterize_shell, targets_1d


@pytest.fixture(scope='module')
def interval_run():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=64))
    mu = ScalarField(np.where(U.mask, 0.5, 0.0), geometry, support=U, value_cap=1.0, name='mu')
    shell = targets_1d(RadialDensity.constant(0.5, 1))
    nu = rasterize_shell(shell, geometry, U, mu.integral(), kind='interval')
    traj = run_obstacle(mu, nu, U, ObstacleOptions(), record_times=(0.01,))
    return geometry, U, mu, nu, traj


def test_initial_potential_is_nonnegative(interval_run):
    geometry, U, mu, nu, traj = interval_run
    w0 = initial_potential(mu, nu, U)
    assert w0.min() >= 0.0
    assert np.all(w0[~U.mask] == 0.0)
    x = geometry.centers()[0]
    assert np.interp(0.5, x, w0) == pytest.approx(1.0 / 32.0, abs=2e-4)
    assert np.array_equal(traj.w0, w0)


def test_reversed_pair_is_rejected(interval_run):
    _, U, mu, nu, _ = interval_run
    with pytest.raises(NotSubharmonicError):
        run_obstacle(nu, mu, U)


def test_trajectory_invariants(interval_run):
    geometry, _, _, _, traj = interval_run
    assert traj.dt == pytest.approx(0.5 * geometry.h ** 2)
    assert traj.tol_w == pytest.approx(0.25 * traj.dt)
    assert traj.stop_reason in ('decayed', 'frozen')
    assert traj.converged
    assert traj.monotonicity_violations == 0
    assert traj.nesting_violations == 0
    assert traj.occupation_defect <= 0.02
    assert traj.times[0] == 0.0
    assert np.all(np.diff(traj.times) > 0.0)
    integrals = [value for _, value in traj.integral_history]
    assert all(b <= a + 1e-15 for a, b in zip(integrals, integrals[1:]))


def test_freezing_map_splits_domain(interval_run):
    geometry, _, _, _, traj = interval_run
    fmap = freezing_map(traj)
    undecided = fmap.undecided().measure()
    frozen = fmap.sigma().measure() - undecided + fmap.F0().measure()
    assert frozen == pytest.approx(0.5, abs=4.0 * geometry.h)
    assert fmap.never().measure() + undecided == pytest.approx(0.5, abs=4.0 * geometry.h)
    assert np.isinf(fmap.value_at((0.5,)))
    s_band = fmap.value_at((0.1,))
    assert 0.0 < s_band < traj.t_end
    assert fmap.summary()['max_finite_s'] > 0.0

    values = fmap.csv_values()
    assert np.isnan(values[~traj.U.mask]).all()
    assert (values[fmap.never().mask] == -1.0).all()


def test_no_nucleation_for_constant_density(interval_run):
    _, _, _, _, traj = interval_run
    events = detect_nucleation(traj)
    assert [e for e in events if e.kind == 'nucleation'] == []


def test_recorded_times(interval_run):
    _, _, _, _, traj = interval_run
    assert 0.01 in traj.recorded
    entry = traj.recorded[0.01]
    assert abs(float(entry['t']) - 0.01) <= traj.dt
    assert entry['eta'].min() >= 0.0
    assert (entry['w'] <= traj.w0 + 1e-14).all()


def test_options_from_settings(settings):
    options = ObstacleOptions.from_settings(settings.obstacle_config, max_sweeps=10, dt=None)
    assert options.dt is None
    assert options.max_sweeps == 10
    assert options.t_max == pytest.approx(4.0)


def test_gluing_degenerate_cases(interval_run):
    _, _, _, _, traj = interval_run
    start = glue_trajectories(traj, 0.0, traj)
    assert start.degenerate == 'start'
    assert np.array_equal(start.w0, traj.w0)

    end = glue_trajectories(traj, 0.5, None)
    assert end.degenerate == 'end'
    assert np.array_equal(end.s, freezing_map(traj).s)


def test_gluing_rejects_continuation_on_frozen_cells(interval_run):
    _, _, _, _, traj = interval_run
    fmap = freezing_map(traj)
    positive = fmap.s[fmap.sigma().mask]
    t1 = float(np.median(positive))
    with pytest.raises(GluingError) as info:
        glue_trajectories(traj, t1, traj)
    assert info.value.cells
