"""
Configuration management for stefan-lab.
Supports hierarchical configuration loading from multiple sources.
"""

import copy
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from ..core.errors import ConfigurationError

console = Console()

APP_DIR_NAME = '.stefan_lab'
SYSTEM_CONFIG_PATH = Path('/etc/stefan-lab/config.yaml')


class Settings:
    """Configuration management with hierarchical loading.

    Priority, lowest to highest: defaults, system file, user file,
    explicit ``config_file``, environment variables, CLI arguments.
    """

    DEFAULT_CONFIG = {
        'grid': {
            'resolution': 128,
            'pad_fraction': 0.5,
            'rho': 0.5,
            'dimension': 2,
        },
        'solver': {
            'backend': 'pdhg',  # 'pdhg', 'highs' or 'highs-ds'
            'gap_tol': 1e-6,
            'max_iters': 200000,
            'feas_tol': 1e-8,
            'ambiguity_flag': 0.05,
            'pdhg_check_every': 500,
        },
        'potential': {
            'cg_rtol': 1e-10,
            'cg_maxiter': 20000,
        },
        'obstacle': {
            'dt': None,  # h^2/2 if None
            't_max': 4.0,
            'tol_w_factor': 0.25,
            'promotion_factor': 100.0,
            'max_sweeps': 5000,
            'omega': 1.2,
            'sweep_tol_factor': 1e-3,
            'snapshot_every': 50,
            'min_component_cells': None,  # 1 in 1D, 3 in 2D if None
            'tail_coarsening': True,
            'tail_fraction': 1e-3,
        },
        'monte_carlo': {
            'paths': 100000,
            'dt': None,  # (h/4)^2 if None
            'seed': 12345,
            'chunk_size': 4096,
            'block_steps': 256,
        },
        'output': {
            'directory': 'out',
            'formats': ['json', 'csv', 'pgm'],
        },
        'logging': {
            'level': 'INFO',
            'file': None,
            'format': None,
        },
        'performance': {
            'threads': None,  # available cores if None
            'show_metrics': False,
        },
    }

    # keys whose default is None still need a type for validation
    NULLABLE_TYPES = {
        ('obstacle', 'dt'): float,
        ('obstacle', 'min_component_cells'): int,
        ('monte_carlo', 'dt'): float,
        ('logging', 'file'): str,
        ('logging', 'format'): str,
        ('performance', 'threads'): int,
    }

    def __init__(self, config_file: Optional[str] = None):
        """
        Initialize settings with hierarchical loading.

        Args:
            config_file: Optional path to specific config file

        Raises:
            ConfigurationError: If any config source is malformed
        """
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)
        self.config_file_path = None

        self._load_system_config()
        self._load_user_config()

        if config_file:
            if not Path(config_file).exists():
                raise ConfigurationError(f"Config file not found: {config_file}")
            self._load_config_file(config_file)

        self._load_environment_variables()

    def _load_system_config(self):
        """Load system-wide configuration."""
        if SYSTEM_CONFIG_PATH.exists():
            self._load_config_file(str(SYSTEM_CONFIG_PATH))

    def _load_user_config(self):
        """Load user-specific configuration."""
        user_config_path = Path.home() / APP_DIR_NAME / 'config.yaml'
        if user_config_path.exists():
            self._load_config_file(str(user_config_path))

    def _load_config_file(self, config_path: str):
        """Load configuration from a YAML or flat ``key = value`` file."""
        try:
            text = Path(config_path).read_text()
        except OSError as e:
            raise ConfigurationError(f"Could not read config file {config_path}: {e}") from e

        file_config = parse_config_text(text, source=config_path)
        self._deep_merge(self.config, file_config, source=config_path)
        self.config_file_path = config_path

    def _load_environment_variables(self):
        """Load configuration from environment variables."""
        user_env_path = Path.home() / APP_DIR_NAME / '.env'
        if user_env_path.exists():
            load_dotenv(user_env_path, override=False)

        env_mapping = {
            'STEFAN_LAB_THREADS': ('performance', 'threads'),
            'STEFAN_LAB_LOG_LEVEL': ('logging', 'level'),
            'STEFAN_LAB_LOG_FILE': ('logging', 'file'),
            'STEFAN_LAB_OUTPUT_DIR': ('output', 'directory'),
            'STEFAN_LAB_SEED': ('monte_carlo', 'seed'),
            'STEFAN_LAB_SOLVER': ('solver', 'backend'),
            'STEFAN_LAB_RESOLUTION': ('grid', 'resolution'),
        }

        for env_var, (section, key) in env_mapping.items():
            value = os.getenv(env_var)
            if value is None or value == '':
                continue
            expected = self._expected_type(section, key)
            try:
                self.config[section][key] = _coerce(value, expected)
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"{env_var}={value!r}: {e}") from e

    def _expected_type(self, section: str, key: str):
        default = self.DEFAULT_CONFIG[section][key]
        if default is None:
            return self.NULLABLE_TYPES.get((section, key), str)
        return type(default)

    def _deep_merge(self, base: Dict, override: Dict, source: str = '<override>'):
        """Merge ``override`` into ``base``, validating sections, keys and types."""
        for section, values in override.items():
            if section not in self.DEFAULT_CONFIG:
                raise ConfigurationError(f"{source}: unknown section '{section}'")
            if not isinstance(values, dict):
                raise ConfigurationError(f"{source}: section '{section}' must be a mapping")
            for key, value in values.items():
                if key not in self.DEFAULT_CONFIG[section]:
                    raise ConfigurationError(f"{source}: unknown key '{section}.{key}'")
                expected = self._expected_type(section, key)
                try:
                    base[section][key] = _coerce(value, expected)
                except (TypeError, ValueError) as e:
                    raise ConfigurationError(f"{source}: {section}.{key}: {e}") from e

    def update_from_args(self, args: Dict[str, Any]):
        """Update configuration from command-line arguments."""
        arg_mapping = {
            'resolution': ('grid', 'resolution'),
            'pad_fraction': ('grid', 'pad_fraction'),
            'rho': ('grid', 'rho'),
            'dimension': ('grid', 'dimension'),
            'solver': ('solver', 'backend'),
            'gap_tol': ('solver', 'gap_tol'),
            'max_iters': ('solver', 'max_iters'),
            'dt': ('obstacle', 'dt'),
            't_max': ('obstacle', 't_max'),
            'paths': ('monte_carlo', 'paths'),
            'mc_dt': ('monte_carlo', 'dt'),
            'seed': ('monte_carlo', 'seed'),
            'out': ('output', 'directory'),
            'threads': ('performance', 'threads'),
            'show_metrics': ('performance', 'show_metrics'),
            'log_file': ('logging', 'file'),
        }

        for arg_name, (section, key) in arg_mapping.items():
            if arg_name in args and args[arg_name] is not None:
                expected = self._expected_type(section, key)
                try:
                    self.config[section][key] = _coerce(args[arg_name], expected)
                except (TypeError, ValueError) as e:
                    raise ConfigurationError(f"--{arg_name.replace('_', '-')}: {e}") from e

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """Get configuration value."""
        return self.config.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value: Any):
        """Set configuration value."""
        if section not in self.config:
            self.config[section] = {}
        self.config[section][key] = value

    def snapshot(self) -> Dict[str, Any]:
        """Deep copy of the effective configuration, for run manifests."""
        return copy.deepcopy(self.config)

    def save_user_config(self):
        """Save current configuration to the user config file."""
        user_config_dir = Path.home() / APP_DIR_NAME
        user_config_dir.mkdir(exist_ok=True)
        path = user_config_dir / 'config.yaml'
        try:
            with open(path, 'w') as f:
                yaml.safe_dump(self.config, f, default_flow_style=False, indent=2)
            self.config_file_path = str(path)
            console.print(f"✅ Configuration saved to {path}")
        except OSError as e:
            console.print(f"❌ Error saving configuration: {e}")

    def print_config(self):
        """Print current configuration in a table."""
        table = Table(title="Current Configuration")
        table.add_column("Section", style="cyan", no_wrap=True)
        table.add_column("Setting", style="magenta")
        table.add_column("Value", style="green")

        for section_name, section_config in self.config.items():
            for key, value in section_config.items():
                table.add_row(section_name, key, str(value))

        console.print(table)

    @property
    def grid_config(self) -> Dict[str, Any]:
        return self.config.get('grid', {})

    @property
    def solver_config(self) -> Dict[str, Any]:
        return self.config.get('solver', {})

    @property
    def potential_config(self) -> Dict[str, Any]:
        return self.config.get('potential', {})

    @property
    def obstacle_config(self) -> Dict[str, Any]:
        return self.config.get('obstacle', {})

    @property
    def monte_carlo_config(self) -> Dict[str, Any]:
        return self.config.get('monte_carlo', {})

    @property
    def output_config(self) -> Dict[str, Any]:
        return self.config.get('output', {})

    @property
    def logging_config(self) -> Dict[str, Any]:
        return self.config.get('logging', {})

    @property
    def threads(self) -> int:
        """Configured worker count, defaulting to the available cores."""
        threads = self.config['performance'].get('threads')
        if threads is None:
            return os.cpu_count() or 1
        return max(1, int(threads))


def parse_config_text(text: str, source: str = '<string>') -> Dict[str, Dict[str, Any]]:
    """Parse a config document into nested sections.

    Accepts nested YAML, YAML with dotted keys (``grid.resolution: 64``)
    and flat ``section.key = value`` lines.
    """
    try:
        loaded = yaml.safe_load(text)
    except yaml.YAMLError:
        loaded = None
        if '=' not in text:
            raise ConfigurationError(f"{source}: not valid YAML or key = value text")

    if loaded is None and '=' not in text:
        return {}

    if not isinstance(loaded, dict):
        loaded = _parse_flat_lines(text, source)

    nested: Dict[str, Dict[str, Any]] = {}
    for key, value in loaded.items():
        key = str(key)
        if '.' in key:
            section, sub = key.split('.', 1)
            nested.setdefault(section, {})[sub] = value
        elif isinstance(value, dict):
            nested.setdefault(key, {}).update(value)
        else:
            raise ConfigurationError(f"{source}: top-level key '{key}' has no section")
    return nested


def _parse_flat_lines(text: str, source: str) -> Dict[str, Any]:
    result = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigurationError(f"{source}:{lineno}: empty key")
        try:
            result[key] = yaml.safe_load(value) if value else None
        except yaml.YAMLError as e:
            raise ConfigurationError(f"{source}:{lineno}: {e}") from e
    return result


def _coerce(value: Any, expected: type) -> Any:
    """Convert ``value`` to ``expected``; None passes through."""
    if value is None:
        return None
    if expected is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ('true', '1', 'yes', 'on', 'false', '0', 'no', 'off'):
            return value.lower() in ('true', '1', 'yes', 'on')
        raise ValueError(f"expected a boolean, got {value!r}")
    if expected is int:
        if isinstance(value, bool):
            raise ValueError(f"expected an integer, got {value!r}")
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if expected is float:
        if isinstance(value, bool):
            raise ValueError(f"expected a number, got {value!r}")
        return float(value)
    if expected is list:
        if isinstance(value, str):
            return [item.strip() for item in value.split(',') if item.strip()]
        if not isinstance(value, (list, tuple)):
            raise ValueError(f"expected a list, got {value!r}")
        return list(value)
    if expected is str:
        if isinstance(value, (dict, list)):
            raise ValueError(f"expected a string, got {value!r}")
        return str(value)
    return value
