"""Fast tests for scenario helpers, reports and the registry."""

import math

import numpy as np
import pytest

from stefan_lab.core.errors import ConfigurationError
from stefan_lab.core.grid import DomainSpec, build_domain
from stefan_lab.core.radial_targets import RadialDensity, targets_annulus, targets_ball
from stefan_lab.core.scenarios import (
    NONUNIVERSAL_CONSTANT, QUARTIC_A, QUARTIC_B, SCENARIOS, ScenarioConfig, ScenarioReport, _perimeter,
    _radial_density, _radial_symdiff, band_field, band_inclusion_bound, band_inclusion_threshold, fourier_density,
    fourier_moment, fourier_range, harmonic_continuation,
    quartic_cutoff, quartic_density, quartic_double_integral, quartic_potential, radial_shell, run_scenario,
    shell_double_integral,
)
from stefan_lab.core.weights import nonuniversal


def test_report_ignores_informational_failures():
    report = ScenarioReport('demo', {'n': 16})
    report.check('exact', True, 1.0, 1.0, 'closed form')
    note = report.check('upper bound', False, 2.0, '<= 1', 'closed form', informational=True)
    assert report.passed
    assert report.failed == []
    assert report.criterion('upper bound') is note

    report.check('order', False, -1.0, '>= 0', 'theory', proxy=True)
    assert not report.passed
    assert [c.name for c in report.failed] == ['order']
    data = report.to_dict()
    assert data['passed'] is False
    assert data['criteria'][2]['proxy'] is True
    with pytest.raises(KeyError):
        report.criterion('missing')


def test_config_from_settings(settings):
    settings.update_from_args({'seed': 99, 'paths': 1000, 'dt': 1e-5, 'threads': 2})
    cfg = ScenarioConfig.from_settings(settings, resolution=64, quiet=True)
    assert cfg.n == 64
    assert cfg.seed == 99
    assert cfg.paths == 1000
    assert cfg.threads == 2
    assert cfg.resolution(128) == 64
    assert 'dt' not in cfg.obstacle

    options = cfg.obstacle_options(dt=1e-3, max_sweeps=7)
    assert options.dt == pytest.approx(1e-5)
    assert options.max_sweeps == 7
    assert options.show_progress is False
    assert cfg.mc_kwargs()['processor'].max_workers == 2



def test_potential_settings_reach_the_cg_solves(settings):
    settings.set('potential', 'cg_rtol', 1e-8)
    settings.set('potential', 'cg_maxiter', 50)
    cfg = ScenarioConfig.from_settings(settings, quiet=True)
    assert cfg.potential_kwargs() == {'rtol': 1e-8, 'maxiter': 50}
    options = cfg.obstacle_options(dt=1e-3)
    assert options.cg_rtol == pytest.approx(1e-8)
    assert options.cg_maxiter == 50
    assert ScenarioConfig(quiet=True).potential_kwargs() == {'rtol': 1e-10, 'maxiter': None}

def test_pinned_resolution_and_scenario_dt():
    cfg = ScenarioConfig(quiet=True)
    assert cfg.resolution(2000) == 2000
    assert cfg.obstacle_options(dt=1.25e-7).dt == pytest.approx(1.25e-7)


def test_harmonic_continuation_of_a_harmonic_polynomial():
    value = harmonic_continuation(lambda x, y: x * x - y * y, 1.0, (0.5, 0.0))
    assert value == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize('eps', [0.0, 0.01, 0.03])
def test_nonuniversal_gap_at_the_boundary_point(eps):
    weight = nonuniversal(eps)
    psi = harmonic_continuation(weight.func, 1.0 / math.sqrt(2.0), (1.0, 0.0))
    gap = psi - float(weight.func(1.0, 0.0))
    assert gap == pytest.approx(eps / 2.0 - NONUNIVERSAL_CONSTANT, abs=1e-9)


def test_radial_symmetric_difference():
    assert _radial_symdiff([(0.5, 1.0)], [(0.6, 1.0)]) == pytest.approx(math.pi * (0.36 - 0.25))
    assert _radial_symdiff([(0.5, 1.0)], [(0.5, 1.0)]) == 0.0
    assert _radial_symdiff([(0.0, 0.25)], [(0.0, 0.5)], d=1) == pytest.approx(0.25)


def test_perimeter_of_shells():
    ball = targets_ball(RadialDensity.constant(0.5, 2))
    assert _perimeter(ball) == pytest.approx(2.0 * math.pi * (1.0 + ball.r_tilde))
    annulus = targets_annulus(RadialDensity.constant(0.5, 2, rho=0.5))
    edges = {0.5, annulus.r1, annulus.r2, 1.0}
    assert _perimeter(annulus) == pytest.approx(2.0 * math.pi * sum(edges))


def test_density_presets():
    assert _radial_density('three_quarters', 2, 0.0)(np.array([0.3]))[0] == pytest.approx(0.75)
    assert _radial_density(0.25, 2, 0.0)(np.array([0.9]))[0] == pytest.approx(0.25)
    with pytest.raises(ConfigurationError):
        _radial_density('lots', 2, 0.0)
    with pytest.raises(ConfigurationError):
        radial_shell(RadialDensity.constant(0.5, 2), 'square')


def test_quartic_constants_are_consistent():
    xs = np.linspace(0.0, 1.0, 2001)
    assert quartic_density(xs).min() >= -1e-12
    assert quartic_density(xs).max() <= 2.0
    assert float(quartic_potential(1.0)) == pytest.approx(0.0, abs=1e-9)
    assert quartic_potential(xs).min() >= -1e-10
    assert float(quartic_potential(0.0)) == 0.0
    assert float(shell_double_integral(QUARTIC_A)) == pytest.approx(0.5 * QUARTIC_A ** 2)

    h = 1e-4
    x = np.array([0.3, 0.6])
    second = (quartic_double_integral(x + h) - 2 * quartic_double_integral(x) + quartic_double_integral(x - h)) / h ** 2
    assert np.allclose(second, quartic_density(x), atol=1e-5)


def test_quartic_cutoff_bump():
    assert float(quartic_cutoff(QUARTIC_B)) == pytest.approx(0.0, abs=1e-15)
    assert float(quartic_cutoff(0.8)) == pytest.approx(0.0, abs=1e-15)
    assert float(quartic_cutoff(0.5 * (QUARTIC_B + 0.8))) == pytest.approx(1.0)
    assert float(quartic_cutoff(0.9)) == 0.0


def test_fourier_density_and_moment():
    func = fourier_density('single', k=3, delta0=0.2)
    assert func(np.array(1.0), np.array(0.0)) == pytest.approx(0.7)
    r = (np.arange(400) + 0.5) / 400
    theta = 2 * math.pi * (np.arange(256) + 0.5) / 256
    R, T = np.meshgrid(r, theta, indexing='ij')
    X, Y = R * np.cos(T), R * np.sin(T)
    integrand = (X + 1j * Y) ** 3
    values = (integrand.real * func(X, Y) * R).sum() * (1 / 400) * (2 * math.pi / 256)
    assert values == pytest.approx(fourier_moment('single', 3, 0.2, 0.0), rel=1e-4)
    with pytest.raises(ConfigurationError):
        fourier_density('triangle')


def test_fourier_range_and_rejected_amplitudes():
    assert fourier_range('single', 7, 0.45) == pytest.approx((0.05, 0.95))
    low, high = fourier_range('series', 7, 9.0 / 20.0)
    assert high == pytest.approx(0.5 + 0.45 * sum(math.exp(-math.sqrt(j)) for j in range(1, 17)))
    assert high > 1.1
    assert 0.0 < fourier_range('series', 7, 0.2)[0] < fourier_range('series', 7, 0.2)[1] < 0.81
    with pytest.raises(ConfigurationError):
        run_scenario('fourier_series', ScenarioConfig(quiet=True), delta0=9.0 / 20.0)
    with pytest.raises(ConfigurationError):
        run_scenario('fourier', ScenarioConfig(quiet=True), delta0=0.6)


def test_band_inclusion_chain_at_k7():
    closed = fourier_moment('series', 7, 0.2, 0.5)
    assert closed == pytest.approx(0.2 * math.pi * math.exp(-math.sqrt(7)) * (1 - 2 ** -9) / 9)
    assert closed < band_inclusion_bound(7, 0.05)

    first = band_inclusion_threshold('series', 0.2, 0.05, 0.5)
    assert first is not None and first > 7
    assert fourier_moment('series', first, 0.2, 0.5) > band_inclusion_bound(first, 0.05)
    assert fourier_moment('series', first - 1, 0.2, 0.5) <= band_inclusion_bound(first - 1, 0.05)
    assert band_inclusion_threshold('series', 0.2, 0.1, 0.5) < first
    assert band_inclusion_threshold('single', 0.45, 0.05, 0.0) is not None
    assert band_inclusion_threshold('series', 0.2, 0.05, 0.5, k_max=7) is None


def test_band_field_covers_exactly():
    geometry, U = build_domain(DomainSpec('interval', dim=1, n=40))
    field = band_field(geometry, U, [(0.0, 0.2), (0.61, 1.0)])
    assert field.integral() == pytest.approx(0.59, abs=1e-12)
    assert field.values.max() <= 1.0


def test_registry():
    assert {'radial', 'radial_annulus', 'radial_subcritical', 'non_universality', 'fourier', 'fourier_k1',
            'fourier_series', 'nucleation_1d', 'fractal_freezing', 'stability', 'initial_nucleation',
            'monte_carlo', 'gluing_1d'} == set(SCENARIOS)
    assert SCENARIOS['radial_annulus'].defaults == {'domain': 'annulus'}
    assert SCENARIOS['fourier_series'].defaults['k'] == 7
    assert SCENARIOS['fourier_k1'].defaults == {'k': 1, 'delta0': 0.1}
    with pytest.raises(ConfigurationError):
        run_scenario('not_a_scenario')
