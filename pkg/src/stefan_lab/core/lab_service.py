"""
Laboratory service that orchestrates solves, simulations and scenarios.
Integrates configuration, the numerical core and run-directory output.
"""

import logging
import time
from typing import Any, Dict, Optional, Union

import numpy as np

from ..config.settings import Settings
from ..output.writers import RunDirectory
from ..utils.logger import ProgressLogger
from ..utils.performance import ParallelProcessor, PerformanceMonitor
from .errors import ConfigurationError, StefanLabError
from .grid import CellSet, DomainSpec, GridGeometry, ScalarField, build_domain
from .obstacle import detect_nucleation, freezing_map, run_obstacle
from .primal_dual import SolverOptions, extract_transition_zone, solve_primal_dual
from .radial_targets import (RadialDensity, density_field, radial_potential, rasterize_shell,
                             targets_1d, targets_annulus, targets_ball)
from .scenarios import MU_PRESETS, SCENARIOS, ScenarioConfig, ScenarioReport, run_scenario
from .stochastic import Barrier, law_distance, mass_outside, sample_hitting
from .weights import weight_by_name

MuSpec = Union[str, float]


class LabService:
    """Main service class behind every CLI subcommand.

    Each public method returns a result dict with ``success``, ``error``,
    ``processing_time`` and ``passed``; outputs go to ``<out>/<run-id>/``.
    """

    def __init__(self, settings: Settings, logger: logging.Logger, quiet: bool = False):
        """
        Initialize the laboratory service.

        Args:
            settings: Configuration settings
            logger: Logger instance
            quiet: Suppress progress output
        """
        self.settings = settings
        self.logger = logger
        self.quiet = quiet
        self.progress_logger = ProgressLogger(logger, quiet)
        self.performance_monitor = None  # Lazy initialization

    # ------------------------------------------------------------------
    # helpers

    def _run(self, command: str, params: Dict[str, Any], body) -> Dict[str, Any]:
        """Run ``body(run_dir)`` with timing, error capture and a manifest."""
        start_time = time.time()
        monitoring = None
        if self.settings.get('performance', 'show_metrics', False):
            if self.performance_monitor is None:
                self.performance_monitor = PerformanceMonitor(self.logger)
            monitoring = self.performance_monitor.start_monitoring()

        config = {'params': params, 'settings': self.settings.snapshot()}
        try:
            output = self.settings.output_config
            run_dir = RunDirectory(output.get('directory', 'out'), command, config, self.settings,
                                   formats=output.get('formats'))
            result = body(run_dir)
            run_dir.write('json', 'report.json', result.get('report', {}))
            manifest = run_dir.finalize(
                seed=self.settings.get('monte_carlo', 'seed'),
                grid=result.get('grid', {}),
                tolerances=result.get('tolerances', {}),
                streams=result.get('streams', {}),
            )
            result.update({
                'success': True,
                'error': None,
                'output_dir': str(run_dir.path),
                'outputs': sorted(manifest.outputs),
            })
        except ConfigurationError:
            raise
        except StefanLabError as e:
            self.progress_logger.error(f"❌ {command} failed: {e}")
            result = {'success': False, 'passed': False, 'error': str(e), 'error_type': type(e).__name__}

        result['processing_time'] = time.time() - start_time
        if monitoring:
            stats = self.performance_monitor.end_monitoring(monitoring, self.settings.threads)
            result['performance_stats'] = stats.to_dict()
            self.progress_logger.info(self.performance_monitor.format_performance_report(stats))
        return result

    def _resolution(self, n: Optional[int]) -> int:
        return int(n or self.settings.grid_config.get('resolution', 128))

    def _domain(self, domain: str, n: Optional[int], dim: Optional[int] = None,
                rho: Optional[float] = None) -> DomainSpec:
        dim = 1 if domain == 'interval' else int(dim or self.settings.grid_config.get('dimension', 2))
        rho = float(rho if rho is not None else self.settings.grid_config.get('rho', 0.5))
        pad_fraction = self.settings.grid_config.get('pad_fraction', 0.5)
        n = self._resolution(n)
        return DomainSpec(domain, dim=dim, n=n, pad=int(round(pad_fraction * n)), rho=rho)

    @staticmethod
    def _mu_value(mu: MuSpec) -> float:
        if isinstance(mu, str):
            if mu in MU_PRESETS:
                return MU_PRESETS[mu]
            try:
                return float(mu)
            except ValueError:
                raise ConfigurationError(
                    f"unknown density '{mu}'; use a number or one of {sorted(MU_PRESETS)}") from None
        return float(mu)

    def _density(self, spec: DomainSpec, mu: MuSpec):
        """Constant density as a RadialDensity (radial kinds) plus its grid field."""
        value = self._mu_value(mu)
        geometry, U = build_domain(spec)
        if spec.kind in ('interval', 'ball', 'annulus'):
            rho = spec.rho if spec.kind == 'annulus' else 0.0
            radial = RadialDensity.constant(value, spec.dim, rho=rho)
            kind = 'interval' if spec.kind == 'interval' else 'radial'
            return geometry, U, radial, density_field(radial, geometry, U, kind)
        field = ScalarField(np.where(U.mask, value, 0.0), geometry, support=U, value_cap=1.0, name='mu')
        return geometry, U, None, field

    @staticmethod
    def _shell(radial: RadialDensity, spec: DomainSpec):
        if spec.kind == 'interval':
            return targets_1d(radial)
        if spec.kind == 'ball':
            return targets_ball(radial)
        return targets_annulus(radial, rho=spec.rho)

    @staticmethod
    def _center(spec: DomainSpec):
        return spec.center()

    def _solver_options(self) -> SolverOptions:
        return SolverOptions.from_settings(self.settings.solver_config)

    def _maximal_target(self, spec: DomainSpec, geometry: GridGeometry, U: CellSet, radial, mu_field,
                        weight: str = 'quadratic'):
        """Closed-form shell for radial kinds, LP target otherwise."""
        if radial is not None and weight == 'quadratic':
            shell = self._shell(radial, spec)
            kind = 'interval' if spec.kind == 'interval' else 'radial'
            return rasterize_shell(shell, geometry, U, mu_field.integral(), kind=kind), shell.to_dict()
        weight_spec = weight_by_name(weight, center=self._center(spec), dim=spec.dim)
        solution, certificate = solve_primal_dual(mu_field, weight_spec, U, self._solver_options())
        return solution.nu, {'objective': solution.objective, 'gap': certificate.gap}

    # ------------------------------------------------------------------
    # operations

    def solve(self, domain: str = 'ball', mu: MuSpec = 'half', weight: str = 'quadratic',
              eps: float = 0.01, n: Optional[int] = None, dim: Optional[int] = None,
              rho: Optional[float] = None) -> Dict[str, Any]:
        """
        Solve the primal/dual pair for a constant density.

        Args:
            domain: Domain kind
            mu: Density preset name or value
            weight: Weight name (quadratic, quadratic_soft, nonuniversal, high_order)
            eps: Perturbation of the nonuniversal weight
            n: Resolution (cells across the unit length)
            dim: Dimension for ball/annulus/box
            rho: Annulus inner radius

        Returns:
            Dictionary with objectives, gap and transition-zone summary
        """
        spec = self._domain(domain, n, dim, rho)
        params = {'domain': domain, 'mu': mu, 'weight': weight, 'eps': eps, 'n': spec.n,
                  'dim': spec.dim, 'rho': spec.rho}

        def body(run_dir: RunDirectory) -> Dict[str, Any]:
            geometry, U, _, mu_field = self._density(spec, mu)
            weight_spec = weight_by_name(weight, center=self._center(spec), dim=spec.dim, eps=eps)
            options = self._solver_options()
            self.progress_logger.info(f"🧮 Solving {weight} LP on {domain} (n={spec.n}, backend={options.backend})")
            solution, certificate = solve_primal_dual(mu_field, weight_spec, U, options)
            zone = extract_transition_zone(solution, certificate, weight_spec, U, options.ambiguity_flag)

            run_dir.write('csv', 'nu.csv', solution.nu)
            run_dir.write('csv', 'psi.csv', certificate.psi)
            run_dir.write('csv', 'sigma.csv', zone.sigma)
            run_dir.write('pgm', 'sigma.pgm', zone.sigma)
            gap_tol = options.gap_tol * max(1.0, abs(solution.objective))
            passed = solution.converged and abs(certificate.gap) <= gap_tol
            self.progress_logger.criterion('duality gap', passed, f"{certificate.gap:.3e} <= {gap_tol:.1e}")
            report = {
                'primal_objective': solution.objective,
                'dual_objective': certificate.objective,
                'gap': certificate.gap,
                'relative_gap': certificate.relative_gap,
                'binarity_defect': solution.binarity_defect,
                'mass_error': solution.mass_error,
                'converged': solution.converged,
                'iterations': solution.iterations,
                'backend': solution.backend,
                'l1_norm': certificate.l1_norm,
                'l1_bound': certificate.l1_bound,
                'transition_zone': zone.to_dict(),
            }
            return {'passed': passed, 'report': report, 'grid': geometry.to_dict(),
                    'tolerances': {'gap_tol': gap_tol}}

        return self._run('solve', params, body)

    def obstacle(self, domain: str = 'ball', mu: MuSpec = 'half', weight: str = 'quadratic',
                 n: Optional[int] = None, dim: Optional[int] = None, rho: Optional[float] = None,
                 dt: Optional[float] = None) -> Dict[str, Any]:
        """
        Run the obstacle problem from the maximal target and write its freezing map.

        Returns:
            Dictionary with trajectory summary, freezing-map summary and events
        """
        spec = self._domain(domain, n, dim, rho)
        params = {'domain': domain, 'mu': mu, 'weight': weight, 'n': spec.n, 'dim': spec.dim,
                  'rho': spec.rho, 'dt': dt}

        def body(run_dir: RunDirectory) -> Dict[str, Any]:
            geometry, U, radial, mu_field = self._density(spec, mu)
            nu, target = self._maximal_target(spec, geometry, U, radial, mu_field, weight)
            options = ScenarioConfig.from_settings(self.settings, quiet=self.quiet).obstacle_options(dt=dt)
            self.progress_logger.info(f"🧊 Obstacle run on {domain} (n={spec.n})")
            traj = run_obstacle(mu_field, nu, U, options)
            fmap = freezing_map(traj)
            events = detect_nucleation(traj)

            run_dir.write('csv', 'freezing_map.csv', fmap)
            run_dir.write('pgm', 'freezing_map.pgm', np.where(np.isfinite(fmap.s), fmap.s, -1.0))
            run_dir.write('json', 'events.json', [e.to_dict() for e in events])
            passed = (traj.monotonicity_violations == 0 and traj.nesting_violations == 0
                      and traj.occupation_defect <= 0.02)
            self.progress_logger.criterion('obstacle invariants', passed,
                                           f"occupation defect {traj.occupation_defect:.2%}")
            report = {'target': target, 'trajectory': traj.summary(), 'freezing': fmap.summary(),
                      'events': [e.to_dict() for e in events]}
            return {'passed': passed, 'report': report, 'grid': geometry.to_dict(),
                    'tolerances': {'dt': traj.dt, 'tol_w': traj.tol_w, 'promotion_tol': traj.promotion_tol}}

        return self._run('obstacle', params, body)

    def radial(self, domain: str = 'ball', d: int = 2, mu: MuSpec = 'half',
               rho: Optional[float] = None) -> Dict[str, Any]:
        """
        Closed-form shell target and its radial potential.

        Returns:
            Dictionary whose ``report`` carries the shell radii (e.g. ``r_tilde``)
        """
        d = 1 if domain == 'interval' else d
        rho = float(rho if rho is not None else self.settings.grid_config.get('rho', 0.5))
        params = {'domain': domain, 'd': d, 'mu': mu, 'rho': rho}
        if domain not in ('interval', 'ball', 'annulus'):
            raise ConfigurationError(f"radial targets need an interval, ball or annulus, got '{domain}'")

        def body(run_dir: RunDirectory) -> Dict[str, Any]:
            value = self._mu_value(mu)
            radial = RadialDensity.constant(value, d, rho=rho if domain == 'annulus' else 0.0)
            spec = DomainSpec(domain, dim=d, rho=rho)
            shell = self._shell(radial, spec)
            potential = radial_potential(radial, shell)
            report = {**shell.to_dict(), 'potential': potential.to_dict()}
            self.progress_logger.info(f"⭕ Shell bands: {shell.bands()}")
            return {'passed': potential.monotone, 'report': report, 'grid': {},
                    'tolerances': {'samples': int(potential.r.size)}}

        return self._run('radial', params, body)

    def mc(self, domain: str = 'interval', mu: MuSpec = 'half', n: Optional[int] = None,
           dim: Optional[int] = None, paths: Optional[int] = None) -> Dict[str, Any]:
        """
        Simulate Brownian paths stopped at the freezing barrier of the maximal run.

        Returns:
            Dictionary with the batch summary and the stopped-law distance
        """
        spec = self._domain(domain, n, dim)
        cfg = ScenarioConfig.from_settings(self.settings, quiet=self.quiet)
        paths = int(paths or cfg.paths)
        params = {'domain': domain, 'mu': mu, 'n': spec.n, 'dim': spec.dim, 'paths': paths}

        def body(run_dir: RunDirectory) -> Dict[str, Any]:
            geometry, U, radial, mu_field = self._density(spec, mu)
            nu, target = self._maximal_target(spec, geometry, U, radial, mu_field)
            traj = run_obstacle(mu_field, nu, U, cfg.obstacle_options())
            fmap = freezing_map(traj)
            self.progress_logger.info(f"🎲 Simulating {paths} paths (seed {cfg.seed}, {cfg.threads} threads)")
            batch = sample_hitting(mu_field, Barrier.from_trajectory(traj), paths, dt=cfg.mc_dt,
                                   seed=cfg.seed, chunk_size=cfg.chunk_size, block_steps=cfg.block_steps,
                                   processor=ParallelProcessor(cfg.threads, self.logger),
                                   show_progress=not self.quiet)
            distance = law_distance(batch, nu)
            outside = mass_outside(batch, fmap)
            passed = distance['distance'] <= distance['bound'] and not batch.flagged
            self.progress_logger.criterion('stopped law', passed,
                                           f"{distance['metric']} {distance['distance']:.4g} <= {distance['bound']:.4g}")
            run_dir.write('csv', 'stopped_histogram.csv', batch.stopped_histogram())
            report = {'target': target, 'batch': batch.summary(), 'law': distance, 'mass_outside': outside,
                      'expected_tau_from_occupation': 2.0 * traj.integral_w0 / mu_field.integral()}
            return {'passed': passed, 'report': report, 'grid': geometry.to_dict(),
                    'tolerances': {'law_bound': distance['bound'], 'mc_dt': batch.dt},
                    'streams': batch.stream_key}

        return self._run('mc', params, body)

    def scenario(self, name: str, resolution: Optional[int] = None, **scenario_params) -> Dict[str, Any]:
        """
        Run a registered scenario and write its artifacts.

        Returns:
            Dictionary with ``passed``, the criteria list and the report
        """
        cfg = ScenarioConfig.from_settings(self.settings, resolution=resolution, quiet=self.quiet)
        params = {'scenario': name, 'resolution': resolution, **scenario_params}
        if name not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario '{name}'; run 'stefan-lab list'")

        def body(run_dir: RunDirectory) -> Dict[str, Any]:
            self.progress_logger.info(f"🔬 Scenario {name}: {SCENARIOS[name].description}")
            report: ScenarioReport = run_scenario(name, cfg, **scenario_params)
            for criterion in report.criteria:
                tag = ' (proxy)' if criterion.proxy else ' (info)' if criterion.informational else ''
                self.progress_logger.criterion(f"{criterion.name}{tag}", criterion.passed or criterion.informational,
                                               f"measured {_short(criterion.measured)}, expected {_short(criterion.expected)}")
            for format_type, file_name, payload in report.artifacts:
                report.files.extend(run_dir.write(format_type, file_name, payload))
            counted = [c for c in report.criteria if not c.informational]
            self.progress_logger.scenario_summary(name, sum(c.passed for c in counted), len(counted), report.elapsed)
            return {'passed': report.passed, 'report': report.to_dict(), 'criteria': [c.to_dict() for c in report.criteria],
                    'grid': {'resolution': report.inputs.get('n')},
                    'tolerances': {'gap_tol': cfg.solver.gap_tol},
                    'streams': cfg.stream_key()}

        return self._run(f'scenario-{name}', params, body)

    @staticmethod
    def list_scenarios() -> Dict[str, str]:
        return {name: entry.description for name, entry in SCENARIOS.items()}


def _short(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    text = str(value)
    return text if len(text) <= 60 else text[:57] + '...'
