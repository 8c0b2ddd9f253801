"""
Command-line interface for the Stefan problem laboratory.
Built with Click; every run writes ``<out>/<run-id>/`` with a manifest.
"""

import sys
import traceback
from typing import Any, Callable, Dict, List, Optional

import click
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from .. import __version__
from ..config.settings import Settings
from ..core.errors import ConfigurationError
from ..core.lab_service import LabService
from ..core.scenarios import MU_PRESETS, SCENARIOS
from ..utils.logger import setup_logger

console = Console()

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

DOMAINS = ['interval', 'ball', 'annulus', 'box']
WEIGHTS = ['quadratic', 'quadratic_soft', 'nonuniversal', 'high_order']


def common_options(func: Callable) -> Callable:
    """Options shared by every computing subcommand."""
    options = [
        click.option('--config', type=click.Path(exists=True), help='Path to configuration file'),
        click.option('--out', type=click.Path(file_okay=False), help='Output root directory (default: out)'),
        click.option('--threads', type=int, help='Worker threads (default: available cores)'),
        click.option('--seed', type=int, help='Monte Carlo seed'),
        click.option('--solver', type=click.Choice(['pdhg', 'highs', 'highs-ds']), help='LP backend'),
        click.option('--log-file', type=click.Path(), help='Also log to this file'),
        click.option('--show-metrics/--no-show-metrics', default=None, help='Report time and memory use'),
        click.option('--verbose', '-v', is_flag=True, help='Enable verbose output'),
        click.option('--quiet', '-q', is_flag=True, help='Suppress progress output'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _service(options: Dict[str, Any]) -> LabService:
    """Settings, logger and service for one command; raises ConfigurationError."""
    settings = Settings(config_file=options.get('config'))
    settings.update_from_args(options)
    logging_config = settings.logging_config
    level = 'DEBUG' if options.get('verbose') else 'WARNING' if options.get('quiet') else \
        logging_config.get('level', 'INFO')
    logger = setup_logger(level=level, log_file=logging_config.get('file'),
                          format_string=logging_config.get('format'))
    return LabService(settings, logger, quiet=bool(options.get('quiet')))


def _execute(options: Dict[str, Any], run: Callable[[LabService], Dict[str, Any]],
             show: Optional[Callable[[Dict[str, Any]], None]] = None):
    """Run a service call and exit with 0 (pass), 1 (failure) or 2 (configuration)."""
    verbose = options.get('verbose')
    quiet = options.get('quiet')
    try:
        service = _service(options)
        result = run(service)
    except ConfigurationError as e:
        console.print(f"❌ [bold red]Configuration error:[/bold red] {e}")
        sys.exit(EXIT_CONFIG)
    except KeyboardInterrupt:
        console.print("\n❌ [yellow]Run interrupted by user[/yellow]")
        sys.exit(EXIT_FAILED)
    except Exception as e:
        console.print(f"❌ [bold red]Unexpected error:[/bold red] {e}")
        if verbose:
            console.print(traceback.format_exc())
        sys.exit(EXIT_FAILED)

    if not result['success']:
        console.print(f"❌ [bold red]Run failed:[/bold red] {result['error']}")
        sys.exit(EXIT_FAILED)
    if show is not None:
        show(result)
    if not quiet:
        marker = "✅ [bold green]passed[/bold green]" if result['passed'] else "❌ [bold red]failed[/bold red]"
        console.print(f"{marker}  📁 {result['output_dir']}  ⏱️  {result['processing_time']:.2f}s")
    sys.exit(EXIT_OK if result['passed'] else EXIT_FAILED)


def _print_report(result: Dict[str, Any]):
    console.print_json(data=result.get('report', {}), default=str)


def _print_criteria(result: Dict[str, Any]):
    table = Table(title=f"Scenario {result['report']['scenario']}")
    table.add_column("Criterion", style="cyan")
    table.add_column("Result")
    table.add_column("Measured", style="magenta")
    table.add_column("Expected", style="green")
    table.add_column("Provenance")
    for criterion in result['criteria']:
        if criterion['informational']:
            status = "ℹ️"
        else:
            status = "✅" if criterion['passed'] else "❌"
        name = criterion['name'] + (" (proxy)" if criterion['proxy'] else "")
        table.add_row(name, status, _cell(criterion['measured']), _cell(criterion['expected']),
                      criterion['provenance'])
    console.print(table)


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    text = str(value)
    return text if len(text) <= 48 else text[:45] + '...'


@click.group(invoke_without_command=True)
@click.version_option(__version__, '--version', prog_name='stefan-lab')
@click.pass_context
def cli(ctx):
    """
    🧊 Supercooled Stefan Problem Laboratory

    Maximal targets by linear programming, obstacle evolutions with their
    freezing maps, and Brownian paths stopped at the resulting barriers.
    """
    if ctx.invoked_subcommand is None:
        welcome_text = Text()
        welcome_text.append("🧊 ", style="bold blue")
        welcome_text.append("Stefan Problem Laboratory", style="bold")
        console.print(Panel(
            Text.from_markup(
                "Transition zones, freezing times and stopped Brownian motion\n\n"
                "[bold blue]Subcommands:[/bold blue]\n"
                "• solve, obstacle, radial, mc\n"
                "• scenario NAME, list, config, version\n\n"
                "[bold green]Quick start:[/bold green]\n"
                "  stefan-lab radial --domain ball --d 2 --mu half\n"
                "  stefan-lab scenario nucleation_1d\n\n"
                "[bold yellow]For help:[/bold yellow] stefan-lab --help"
            ),
            title=welcome_text,
            border_style="blue",
        ))


@cli.command()
@click.option('--domain', type=click.Choice(DOMAINS), default='ball', help='Domain kind (default: ball)')
@click.option('--mu', default='half', help=f'Constant density: a number or one of {sorted(MU_PRESETS)}')
@click.option('--weight', type=click.Choice(WEIGHTS), default='quadratic', help='Strictly superharmonic weight')
@click.option('--eps', type=float, default=0.01, help='Perturbation of the nonuniversal weight')
@click.option('--resolution', '-n', type=int, help='Cells across unit length')
@click.option('--dimension', '-d', type=int, help='Dimension of ball, annulus or box')
@click.option('--rho', type=float, help='Annulus inner radius')
@common_options
def solve(domain, mu, weight, eps, resolution, dimension, rho, **options):
    """
    Solve the primal LP and its dual certificate.

    Examples:

      stefan-lab solve --domain ball --mu half -n 64

      stefan-lab solve --weight nonuniversal --eps 0.01
    """
    options.update(resolution=resolution, dimension=dimension, rho=rho)
    _execute(options, lambda s: s.solve(domain, mu, weight, eps, resolution, dimension, rho), _print_report)


@cli.command()
@click.option('--domain', type=click.Choice(DOMAINS), default='ball', help='Domain kind (default: ball)')
@click.option('--mu', default='half', help='Constant density')
@click.option('--weight', type=click.Choice(WEIGHTS), default='quadratic', help='Weight selecting the target')
@click.option('--resolution', '-n', type=int, help='Cells across unit length')
@click.option('--dimension', '-d', type=int, help='Dimension of ball, annulus or box')
@click.option('--rho', type=float, help='Annulus inner radius')
@click.option('--dt', type=float, help='Time step (default: h²/2)')
@click.option('--t-max', type=float, help='Time horizon')
@common_options
def obstacle(domain, mu, weight, resolution, dimension, rho, dt, t_max, **options):
    """
    Evolve the obstacle problem and write the freezing map.

    Examples:

      stefan-lab obstacle --domain interval --mu half -n 200
    """
    options.update(resolution=resolution, dimension=dimension, rho=rho, dt=dt, t_max=t_max)
    _execute(options, lambda s: s.obstacle(domain, mu, weight, resolution, dimension, rho, dt))


@cli.command()
@click.option('--domain', type=click.Choice(['interval', 'ball', 'annulus']), default='ball')
@click.option('--d', 'd', type=int, default=2, help='Dimension (ignored for intervals)')
@click.option('--mu', default='half', help='Constant density')
@click.option('--rho', type=float, help='Annulus inner radius')
@common_options
def radial(domain, d, mu, rho, **options):
    """
    Closed-form shell targets of a radial density.

    Examples:

      stefan-lab radial --domain ball --d 2 --mu half
    """
    _execute(options, lambda s: s.radial(domain, d, mu, rho), _print_report)


@cli.command()
@click.option('--domain', type=click.Choice(DOMAINS), default='interval', help='Domain kind (default: interval)')
@click.option('--mu', default='half', help='Constant density')
@click.option('--resolution', '-n', type=int, help='Cells across unit length')
@click.option('--dimension', '-d', type=int, help='Dimension of ball, annulus or box')
@click.option('--paths', type=int, help='Number of Brownian paths')
@click.option('--mc-dt', type=float, help='Path time step (default: (h/4)²)')
@common_options
def mc(domain, mu, resolution, dimension, paths, mc_dt, **options):
    """
    Stop Brownian paths at the freezing barrier and compare with the target.

    Examples:

      stefan-lab mc --paths 100000 --seed 7 --threads 4
    """
    options.update(resolution=resolution, dimension=dimension, paths=paths, mc_dt=mc_dt)
    _execute(options, lambda s: s.mc(domain, mu, resolution, dimension, paths), _print_report)


@cli.command()
@click.argument('name')
@click.option('--resolution', '-n', type=int, help='Override the scenario resolution')
@click.option('--paths', type=int, help='Number of Brownian paths')
@click.option('--dt', type=float, help='Obstacle time step')
@click.option('--json', 'as_json', is_flag=True, help='Print the report as JSON instead of a table')
@common_options
def scenario(name, resolution, paths, dt, as_json, **options):
    """
    Run a canned scenario and check its criteria.

    NAME: a scenario from 'stefan-lab list'

    Examples:

      stefan-lab scenario nucleation_1d

      stefan-lab scenario radial -n 64
    """
    if name not in SCENARIOS:
        console.print(f"❌ [bold red]Unknown scenario:[/bold red] {name} (see 'stefan-lab list')")
        sys.exit(EXIT_CONFIG)
    options.update(paths=paths, dt=dt)
    show = _print_report if as_json else _print_criteria
    _execute(options, lambda s: s.scenario(name, resolution), None if options.get('quiet') else show)


@cli.command(name='list')
def list_cmd():
    """List the registered scenarios."""
    table = Table(title="Scenarios")
    table.add_column("Name", style="cyan", no_wrap=True)
    table.add_column("Description")
    for name, description in LabService.list_scenarios().items():
        table.add_row(name, description)
    console.print(table)


@cli.command(name='config')
@click.option('--show-config', is_flag=True, help='Show current configuration')
@click.option('--config-path', is_flag=True, help='Show the configuration file in use')
@click.option('--config', type=click.Path(exists=True), help='Path to configuration file')
@click.option('--save', is_flag=True, help='Save the effective configuration as the user config')
def config_cmd(show_config, config_path, config, save):
    """
    Show or save the effective configuration.

    Examples:

      stefan-lab config --show-config

      stefan-lab config --config lab.yaml --save
    """
    try:
        settings = Settings(config_file=config)
    except ConfigurationError as e:
        console.print(f"❌ [bold red]Configuration error:[/bold red] {e}")
        sys.exit(EXIT_CONFIG)

    if show_config or not (config_path or save):
        console.print("\n⚙️  [bold blue]Current Configuration[/bold blue]")
        settings.print_config()
    if save:
        settings.save_user_config()
    if config_path:
        console.print(f"\n📁 Configuration file: {settings.config_file_path}")


@cli.command()
def version():
    """Show version information."""
    console.print("\n🧊 [bold blue]Stefan Problem Laboratory[/bold blue]")
    console.print(f"Version: {__version__}")
    console.print("License: MIT")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point returning the process exit code.

    Usage errors and unknown flags exit with 2, like configuration errors.
    """
    try:
        result = cli.main(args=argv, prog_name='stefan-lab', standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_CONFIG if isinstance(e, click.UsageError) else EXIT_FAILED
    except click.Abort:
        console.print("\n❌ [yellow]Aborted[/yellow]")
        return EXIT_FAILED
    except SystemExit as e:
        return int(e.code or 0)
    return result if isinstance(result, int) else EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
