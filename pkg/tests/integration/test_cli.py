"""Exit codes and outputs of the stefan-lab command line."""

import json
from pathlib import Path

import pytest

from stefan_lab.cli.main import EXIT_CONFIG, EXIT_OK, main


@pytest.fixture
def out_dir(isolated_home, tmp_path):
    return tmp_path / 'out'


def _runs(out_dir: Path):
    return sorted(p for p in out_dir.iterdir() if p.is_dir())


def test_help_and_version(isolated_home, capsys):
    assert main(['--help']) == EXIT_OK
    assert 'scenario' in capsys.readouterr().out
    assert main(['version']) == EXIT_OK


def test_unknown_flag_is_a_usage_error(isolated_home):
    assert main(['radial', '--no-such-flag']) == EXIT_CONFIG
    assert main(['radial', '--domain', 'square']) == EXIT_CONFIG


def test_radial_writes_a_run_directory(out_dir):
    assert main(['radial', '--domain', 'ball', '--d', '2', '--mu', 'half', '--out', str(out_dir), '-q']) == EXIT_OK
    (run,) = _runs(out_dir)
    assert run.name.startswith('radial-')
    report = json.loads((run / 'report.json').read_text())
    assert report['r_tilde'] == pytest.approx(0.70711, abs=1e-5)
    manifest = json.loads((run / 'manifest.json').read_text())
    assert manifest['command'] == 'radial'
    assert 'report.json' in manifest['outputs']


def test_bad_density_is_a_configuration_error(out_dir):
    assert main(['radial', '--mu', 'lots', '--out', str(out_dir), '-q']) == EXIT_CONFIG


def test_malformed_config_file(out_dir, tmp_path):
    config = tmp_path / 'broken.yaml'
    config.write_text('grid: [unclosed\n')
    assert main(['radial', '--config', str(config), '--out', str(out_dir), '-q']) == EXIT_CONFIG


def test_unknown_scenario(out_dir):
    assert main(['scenario', 'no_such_scenario', '--out', str(out_dir)]) == EXIT_CONFIG


def test_list_and_config(isolated_home, capsys):
    assert main(['list']) == EXIT_OK
    output = capsys.readouterr().out
    assert 'nucleation_1d' in output
    assert 'monte_carlo' in output
    assert main(['config', '--show-config']) == EXIT_OK


def test_config_save_writes_the_user_config(isolated_home, tmp_path):
    source = tmp_path / 'lab.yaml'
    source.write_text('solver:\n  backend: highs\n')
    assert main(['config', '--config', str(source), '--save']) == EXIT_OK
    saved = isolated_home / '.stefan_lab' / 'config.yaml'
    assert saved.exists()
    assert 'backend: highs' in saved.read_text()


def test_solve_interval(out_dir):
    code = main(['solve', '--domain', 'interval', '--mu', '0.5', '-n', '32', '--out', str(out_dir), '-q'])
    assert code == EXIT_OK
    (run,) = _runs(out_dir)
    assert (run / 'sigma.pgm').exists()
    report = json.loads((run / 'report.json').read_text())
    assert report['converged'] is True
