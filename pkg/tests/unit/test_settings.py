"""Tests for hierarchical configuration loading."""

import pytest

from stefan_lab.config.settings import Settings, parse_config_text
from stefan_lab.core.errors import ConfigurationError


def test_defaults(settings):
    assert settings.get('grid', 'resolution') == 128
    assert settings.get('solver', 'backend') == 'pdhg'
    assert settings.get('obstacle', 'dt') is None
    assert settings.get('monte_carlo', 'seed') == 12345
    assert settings.config_file_path is None


def test_yaml_config_file(isolated_home, tmp_path):
    path = tmp_path / 'lab.yaml'
    path.write_text("grid:\n  resolution: 64\nsolver:\n  backend: pdhg\n")
    settings = Settings(str(path))
    assert settings.get('grid', 'resolution') == 64
    assert settings.get('solver', 'backend') == 'pdhg'
    assert settings.config_file_path == str(path)


def test_flat_key_value_file(isolated_home, tmp_path):
    path = tmp_path / 'lab.conf'
    path.write_text("# comment\ngrid.resolution = 96\nobstacle.dt = 1e-5\n")
    settings = Settings(str(path))
    assert settings.get('grid', 'resolution') == 96
    assert settings.get('obstacle', 'dt') == pytest.approx(1e-5)


def test_user_config_is_loaded(isolated_home):
    app_dir = isolated_home / '.stefan_lab'
    app_dir.mkdir()
    (app_dir / 'config.yaml').write_text("monte_carlo:\n  paths: 500\n")
    assert Settings().get('monte_carlo', 'paths') == 500


def test_environment_overrides_file(isolated_home, tmp_path, monkeypatch):
    path = tmp_path / 'lab.yaml'
    path.write_text("grid:\n  resolution: 64\n")
    monkeypatch.setenv('STEFAN_LAB_RESOLUTION', '32')
    monkeypatch.setenv('STEFAN_LAB_SEED', '7')
    settings = Settings(str(path))
    assert settings.get('grid', 'resolution') == 32
    assert settings.get('monte_carlo', 'seed') == 7


def test_cli_arguments_override_everything(settings):
    settings.update_from_args({'resolution': 48, 'seed': 3, 'dt': 0.001, 'threads': None})
    assert settings.get('grid', 'resolution') == 48
    assert settings.get('monte_carlo', 'seed') == 3
    assert settings.get('obstacle', 'dt') == pytest.approx(0.001)
    assert settings.get('performance', 'threads') is None


@pytest.mark.parametrize('text', [
    "nosuch:\n  key: 1\n",
    "grid:\n  nosuch: 1\n",
    "grid:\n  resolution: fast\n",
    "grid: 5\n",
])
def test_malformed_files_raise(isolated_home, tmp_path, text):
    path = tmp_path / 'bad.yaml'
    path.write_text(text)
    with pytest.raises(ConfigurationError):
        Settings(str(path))


def test_missing_config_file_raises(isolated_home, tmp_path):
    with pytest.raises(ConfigurationError):
        Settings(str(tmp_path / 'absent.yaml'))


def test_bad_environment_value_raises(isolated_home, monkeypatch):
    monkeypatch.setenv('STEFAN_LAB_THREADS', 'many')
    with pytest.raises(ConfigurationError):
        Settings()


def test_bad_cli_value_raises(settings):
    with pytest.raises(ConfigurationError):
        settings.update_from_args({'resolution': 12.5})


def test_parse_dotted_yaml_keys():
    parsed = parse_config_text("grid.resolution: 64\nsolver.gap_tol: 1.0e-7\n")
    assert parsed == {'grid': {'resolution': 64}, 'solver': {'gap_tol': 1e-7}}


def test_threads_default_to_cores(settings):
    assert settings.threads >= 1
    settings.set('performance', 'threads', 3)
    assert settings.threads == 3


def test_save_user_config(settings, isolated_home):
    settings.set('grid', 'resolution', 80)
    settings.save_user_config()
    assert (isolated_home / '.stefan_lab' / 'config.yaml').exists()
    assert Settings().get('grid', 'resolution') == 80
