"""End-to-end runs of the laboratory service on small grids."""

import json
import math

import pytest

from stefan_lab.core.errors import ConfigurationError
from stefan_lab.core.lab_service import LabService
from stefan_lab.output.writers import load_manifest, verify_manifest


@pytest.fixture
def service(settings, quiet_logger, tmp_path):
    settings.set('output', 'directory', str(tmp_path / 'out'))
    settings.set('performance', 'threads', 2)
    return LabService(settings, quiet_logger, quiet=True)


def test_radial_ball(service):
    result = service.radial('ball', 2, 'half')
    assert result['success']
    assert result['passed']
    assert result['report']['r_tilde'] == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-6)
    assert result['outputs'] == ['report.json']
    assert verify_manifest(result['output_dir']) == {'report.json': True}


def test_radial_interval_and_annulus(service):
    interval = service.radial('interval', 2, 0.5)
    assert interval['report']['d'] == 1
    assert interval['report']['a'] == pytest.approx(0.25, abs=1e-6)
    assert interval['report']['b'] == pytest.approx(0.75, abs=1e-6)

    annulus = service.radial('annulus', 2, 'half', rho=0.5)
    assert annulus['success']
    assert 0.5 <= annulus['report']['r1'] < annulus['report']['r2'] < 1.0


def test_rejected_inputs(service):
    with pytest.raises(ConfigurationError):
        service.radial('box', 2, 'half')
    with pytest.raises(ConfigurationError):
        service.radial('ball', 2, 'lots')
    with pytest.raises(ConfigurationError):
        service.scenario('not_a_scenario')


def test_same_inputs_reuse_the_run_id(service):
    first = service.radial('ball', 2, 'half')
    second = service.radial('ball', 2, 'half')
    third = service.radial('ball', 2, 'three_quarters')
    assert first['output_dir'] == second['output_dir']
    assert first['output_dir'] != third['output_dir']


def test_solve_interval(service):
    result = service.solve('interval', 'half', n=32)
    assert result['success'], result.get('error')
    assert result['passed']
    report = result['report']
    assert report['backend'] == 'pdhg'
    assert report['primal_objective'] == pytest.approx(1.0 - 7.0 / 96.0, abs=2e-3)
    assert abs(report['gap']) <= 1e-5
    assert {'nu.csv', 'psi.csv', 'sigma.csv', 'sigma.pgm', 'report.json'} <= set(result['outputs'])

    manifest = load_manifest(result['output_dir'])
    assert manifest.command == 'solve'
    assert manifest.config['params']['n'] == 32
    assert all(verify_manifest(result['output_dir']).values())
    with open(f"{result['output_dir']}/report.json") as f:
        assert json.load(f)['backend'] == report['backend']


def test_obstacle_interval(service):
    result = service.obstacle('interval', 'half', n=48)
    assert result['success'], result.get('error')
    assert result['passed']
    assert {'freezing_map.csv', 'freezing_map.pgm', 'events.json'} <= set(result['outputs'])
    assert result['report']['events'] == []
    assert result['report']['trajectory']['stop_reason'] in ('decayed', 'frozen')


def test_monte_carlo_interval(service):
    service.settings.update_from_args({'paths': 2000, 'seed': 5})
    result = service.mc('interval', 'half', n=32)
    assert result['success'], result.get('error')
    report = result['report']
    assert report['batch']['n_paths'] == 2000
    assert report['law']['distance'] >= 0.0
    assert 'stopped_histogram.csv' in result['outputs']
    manifest = load_manifest(result['output_dir'])
    assert manifest.streams == {'seed': 5, 'chunk_size': 4096, 'block_steps': 256}
    assert report['batch']['chunk_size'] == 4096


def test_output_formats_limit_the_artifacts(service):
    service.settings.set('output', 'formats', ['json', 'csv'])
    result = service.solve('interval', 'half', n=32)
    assert result['success'], result.get('error')
    assert 'sigma.pgm' not in result['outputs']
    assert {'sigma.csv', 'report.json'} <= set(result['outputs'])
    assert load_manifest(result['output_dir']).streams == {}


def test_unknown_output_format_is_a_configuration_error(service):
    service.settings.set('output', 'formats', ['json', 'png'])
    with pytest.raises(ConfigurationError):
        service.radial('ball', 2, 'half')
