"""Tests for the Monte Carlo barrier sampler and law comparisons."""

import numpy as np
import pytest

from stefan_lab.core.errors import GluingError
from stefan_lab.core.grid import DomainSpec, ScalarField, build_domain
from stefan_lab.core.obstacle import ObstacleOptions, freezing_map, run_obstacle
from stefan_lab.core.radial_targets import RadialDensity, rasterize_shell, targets_1d
from stefan_lab.core.scenarios import band_field
from stefan_lab.core.stochastic import (
    NEVER, Barrier, GluedBarrier, exit_time_batch, exit_time_tolerance, gluing_experiment, kolmogorov_distance,
    law_distance, mass_outside, maximality_audit, occupation_quadrature, sample_hitting, total_variation,
    weighted_occupation,
)
from stefan_lab.core.weights import quadratic
from stefan_lab.utils.performance import ParallelProcessor


@pytest.fixture(scope='module')
def exit_batch():
    return exit_time_batch(2000, n=64, dt=1e-4, seed=7, chunk_size=500)


def test_exit_time_from_midpoint(exit_batch):
    assert exit_batch.unstopped == 0
    assert not exit_batch.flagged
    assert abs(exit_batch.mean_tau - 0.25) <= exit_time_tolerance(exit_batch)
    assert exit_batch.positions.shape == (2000, 1)
    outside = (exit_batch.positions[:, 0] <= 1.0 / 64) | (exit_batch.positions[:, 0] >= 1.0 - 1.0 / 64)
    assert outside.all()


def test_batches_do_not_depend_on_thread_count():
    serial = exit_time_batch(600, n=32, dt=4e-4, seed=3, chunk_size=100,
                             processor=ParallelProcessor(1))
    threaded = exit_time_batch(600, n=32, dt=4e-4, seed=3, chunk_size=100,
                               processor=ParallelProcessor(4))
    assert np.array_equal(serial.tau, threaded.tau)
    assert np.array_equal(serial.positions, threaded.positions)

    other = exit_time_batch(600, n=32, dt=4e-4, seed=4, chunk_size=100)
    assert not np.array_equal(serial.tau, other.tau)


def test_weighted_occupation_of_constant_laplacian(exit_batch):
    result = weighted_occupation(exit_batch, lambda x: np.full(np.shape(x), -2.0))
    assert result['estimate'] == pytest.approx(2.0 * exit_batch.mean_tau, rel=1e-9)
    assert result['stderr'] > 0.0


def test_short_horizon_is_flagged():
    batch = exit_time_batch(200, n=32, dt=1e-4, seed=1, t_cap=0.001)
    assert batch.unstopped > 0
    assert batch.flagged
    assert batch.summary()['flagged']


def test_barrier_freezing_times():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=32))
    x = geometry.centers()[0]
    s = np.where(x < 0.5, 0.1, np.inf)
    barrier = Barrier(s, U, horizon=1.0)
    points = np.array([[0.25], [0.75], [-0.2]])
    times = barrier.freezing_time(points)
    assert times[0] == pytest.approx(0.1)
    assert times[1] == pytest.approx(NEVER)
    assert times[2] == 0.0
    assert barrier.max_finite == pytest.approx(0.1)
    assert barrier.hit(np.array([0.05, 0.2, 0.0]), points).tolist() == [False, False, True]
    assert barrier.hit(np.array([0.15, 0.2, 0.0]), points).tolist() == [True, False, True]


def test_glued_barrier_switches_at_t1():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=32))
    first = Barrier(np.full(geometry.shape, np.inf), U, horizon=0.5)
    second = Barrier(np.full(geometry.shape, 0.02), U, horizon=0.1)
    glued = GluedBarrier(first, 0.05, second)
    point = np.array([[0.5], [0.5]])
    assert glued.hit(np.array([0.04, 0.08]), point).tolist() == [False, True]
    assert glued.max_finite == pytest.approx(0.07)
    assert glued.horizon == pytest.approx(0.5)


def test_sampling_from_a_density_stays_in_support():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=32))
    x = geometry.centers()[0]
    mu = ScalarField(np.where(U.mask & (x > 0.5), 1.0, 0.0), geometry)
    batch = sample_hitting(mu, Barrier(np.zeros(geometry.shape), U), 300, seed=2)
    assert batch.mass == pytest.approx(0.5)
    assert np.all(batch.tau == 0.0)
    assert batch.positions.min() >= 0.5 - 1e-12


def test_law_distances():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=32))
    uniform = ScalarField(np.where(U.mask, 1.0, 0.0), geometry)
    rng = np.random.default_rng(0)
    positions = rng.random(4000)
    assert kolmogorov_distance(positions, uniform) < 0.05
    assert kolmogorov_distance(positions * 0.5, uniform) > 0.4


def test_total_variation_in_two_dimensions():
    geometry, U = build_domain(DomainSpec('box', dim=2, n=16))
    target = ScalarField(np.where(U.mask, 1.0, 0.0), geometry)
    batch = sample_hitting(target, Barrier(np.zeros(geometry.shape), U), 4000, seed=5)
    assert total_variation(batch, target) < 0.2
    distance = law_distance(batch, target)
    assert distance['metric'] == 'total_variation'
    assert distance['bound'] == pytest.approx(2.0 / np.sqrt(4000) + 2.0 / 16)


@pytest.fixture(scope='module')
def shell_run():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=32))
    mu = ScalarField(np.where(U.mask, 0.5, 0.0), geometry, support=U, value_cap=1.0, name='mu')
    nu = rasterize_shell(targets_1d(RadialDensity.constant(0.5, 1)), geometry, U, mu.integral(), kind='interval')
    traj = run_obstacle(mu, nu, U, ObstacleOptions(show_progress=False))
    return geometry, U, mu, nu, traj


class ScaledConstant:
    """Constant Laplacian whose repr hides the scale."""

    def __init__(self, value):
        self.value = value

    def __call__(self, x):
        return np.full(np.shape(x), self.value)

    def __repr__(self):
        return 'ScaledConstant'


def test_occupation_cache_keys_on_the_callable(exit_batch):
    two, four = ScaledConstant(-2.0), ScaledConstant(-4.0)
    assert repr(two) == repr(four)
    first = weighted_occupation(exit_batch, two)
    second = weighted_occupation(exit_batch, four)
    assert second['estimate'] == pytest.approx(2.0 * first['estimate'], rel=1e-12)
    assert two in exit_batch.integrals and four in exit_batch.integrals
    assert weighted_occupation(exit_batch, two) == first


def test_zero_freezing_time_gives_zero_occupation(shell_run):
    geometry, U, mu, _, _ = shell_run
    batch = sample_hitting(mu, Barrier(np.zeros(geometry.shape), U), 500, seed=4, chunk_size=100)
    result = weighted_occupation(batch, quadratic((0.5,), 1).laplacian)
    assert result == {'estimate': 0.0, 'stderr': 0.0}


def test_stream_key_is_reported(exit_batch):
    assert exit_batch.stream_key == {'seed': 7, 'chunk_size': 500, 'block_steps': 256}
    summary = exit_batch.summary()
    assert summary['chunk_size'] == 500
    assert summary['block_steps'] == 256


def test_mass_outside_the_zone(shell_run):
    geometry, U, mu, _, traj = shell_run
    fmap = freezing_map(traj)
    stopped = sample_hitting(mu, Barrier.from_trajectory(traj), 2000, seed=3, chunk_size=500)
    assert mass_outside(stopped, fmap) <= 0.1

    # paths stopped at their start stay uniform, so the melted middle keeps its share
    at_start = sample_hitting(mu, Barrier(np.zeros(geometry.shape), U), 2000, seed=3, chunk_size=500)
    loose = mass_outside(at_start, fmap)
    assert 0.25 < loose < 0.5
    assert mass_outside(at_start, fmap, dilation=0) >= loose


def test_maximality_audit_prefers_the_maximal_target(shell_run):
    geometry, U, mu, _, traj = shell_run
    alternative = band_field(geometry, U, [(0.0, 0.125), (0.375, 0.625), (0.875, 1.0)])
    traj_alt = run_obstacle(mu, alternative, U, ObstacleOptions(show_progress=False))
    weight = quadratic((0.5,), 1)
    audit = maximality_audit(mu, traj, traj_alt, weight.laplacian, 2000, seed=11, chunk_size=500)
    assert audit['passed']
    assert audit['margin'] > 0.0
    assert audit['maximal']['quadrature'] > audit['alternative']['quadrature']
    assert audit['maximal']['quadrature'] == pytest.approx(occupation_quadrature(traj, weight.laplacian, mu.integral()))


def test_gluing_reduces_to_a_single_run(shell_run):
    _, _, mu, nu, traj = shell_run
    direct = law_distance(sample_hitting(mu, Barrier.from_trajectory(traj), 1000, seed=9, chunk_size=250), nu)

    beyond = gluing_experiment(mu, traj, traj.t_end + 1.0, traj, nu, 1000, seed=9, chunk_size=250)
    assert beyond['mode'] == 'first'
    assert beyond['distance'] == direct['distance']
    assert gluing_experiment(mu, traj, 0.01, None, nu, 1000, seed=9, chunk_size=250)['mode'] == 'first'

    at_zero = gluing_experiment(mu, traj, 0.0, traj, nu, 1000, seed=9, chunk_size=250)
    assert at_zero['mode'] == 'second'
    assert at_zero['distance'] == direct['distance']
    assert at_zero['batch']['chunk_size'] == 250


def test_gluing_rejects_a_continuation_on_frozen_cells(shell_run):
    _, U, mu, nu, traj = shell_run
    s = freezing_map(traj).s
    frozen = s[U.mask & np.isfinite(s) & (s > 0.0)]
    t1 = float(np.median(frozen))
    with pytest.raises(GluingError):
        gluing_experiment(mu, traj, t1, traj, nu, 100, seed=9)
