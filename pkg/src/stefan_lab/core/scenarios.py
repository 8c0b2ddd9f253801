"""
Canned end-to-end experiments with pass/fail criteria.

Each scenario builds its data, runs the solvers it needs and returns a
:class:`ScenarioReport`. Every expected value carries a provenance tag
describing where it comes from; grid stand-ins for continuum claims
(null sets, waiting-time bands) are marked as proxies.
"""

import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from ..utils.logger import get_logger
from ..utils.performance import ParallelProcessor
from .errors import ConfigurationError
from .grid import (CellSet, DomainSpec, GridGeometry, NullSet, ScalarField, build_domain,
                   dyadic_decompose, label_components, rasterize_null_set)
from .obstacle import (ObstacleOptions, ObstacleTrajectory, detect_nucleation, freezing_map,
                       glue_trajectories, run_obstacle)
from .potential import check_subharmonic_order
from .primal_dual import SolverOptions, extract_transition_zone, moment_audit, solve_primal_dual
from .radial_targets import (RadialDensity, TargetShell, band_mass, density_field, positive_in_domain,
                             radial_coordinate, radial_potential, rasterize_shell, targets_1d,
                             targets_annulus, targets_ball)
from .stochastic import (Barrier, exit_time_batch, exit_time_tolerance, gluing_experiment,
                         law_distance, mass_outside, maximality_audit, occupation_quadrature,
                         sample_hitting, weighted_occupation, OVERSHOOT)
from .weights import nonuniversal, quadratic, quadratic_soft

logger = get_logger('scenarios')

CLOSED_FORM = 'closed-form radial/interval target'
EXACT_CONSTANTS = 'exact rational constants of the quartic interval example'
DIRECT_SOLVE = 'direct solve on the same grid'
TRIVIAL = 'trivial reduction'
OCCUPATION = 'occupation identity 2∫w0'
GRID_PROXY = 'grid-scale proxy'
MONTE_CARLO = 'Monte Carlo, 3 standard errors'
THEORY = 'free-boundary theory (qualitative)'
DUALITY = 'strong duality of the discrete problem'


# ---------------------------------------------------------------------------
# Reports and configuration
# ---------------------------------------------------------------------------

@dataclass
class Criterion:
    """One assertable check of a scenario."""
    name: str
    passed: bool
    measured: Any
    expected: Any
    provenance: str
    proxy: bool = False
    informational: bool = False

    def to_dict(self) -> dict:
        return {'name': self.name, 'passed': bool(self.passed), 'measured': self.measured,
                'expected': self.expected, 'provenance': self.provenance,
                'proxy': self.proxy, 'informational': self.informational}


@dataclass
class ScenarioReport:
    """Inputs, measurements, criteria and artifacts of one scenario run."""
    scenario: str
    inputs: Dict[str, Any]
    measured: Dict[str, Any] = field(default_factory=dict)
    criteria: List[Criterion] = field(default_factory=list)
    artifacts: List[Tuple[str, str, Any]] = field(default_factory=list, repr=False)
    files: List[str] = field(default_factory=list)
    elapsed: float = 0.0

    def check(self, name: str, passed: bool, measured: Any, expected: Any, provenance: str,
              proxy: bool = False, informational: bool = False) -> Criterion:
        criterion = Criterion(name, bool(passed), measured, expected, provenance, proxy, informational)
        self.criteria.append(criterion)
        return criterion

    def artifact(self, format_type: str, name: str, payload: Any):
        self.artifacts.append((format_type, name, payload))

    def criterion(self, name: str) -> Criterion:
        for c in self.criteria:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria if not c.informational)

    @property
    def failed(self) -> List[Criterion]:
        return [c for c in self.criteria if not c.passed and not c.informational]

    def to_dict(self) -> dict:
        return {
            'scenario': self.scenario,
            'inputs': self.inputs,
            'measured': self.measured,
            'criteria': [c.to_dict() for c in self.criteria],
            'passed': self.passed,
            'files': list(self.files),
        }


@dataclass
class ScenarioConfig:
    """Run-wide knobs; scenario-pinned resolutions apply where these are None."""
    n: Optional[int] = None
    dt: Optional[float] = None
    paths: int = 100000
    mc_dt: Optional[float] = None
    seed: int = 12345
    solver: SolverOptions = field(default_factory=SolverOptions)
    obstacle: Dict[str, Any] = field(default_factory=dict)
    potential: Dict[str, Any] = field(default_factory=dict)
    chunk_size: int = 4096
    block_steps: int = 256
    threads: int = 1
    quiet: bool = False

    @classmethod
    def from_settings(cls, settings, resolution: Optional[int] = None, quiet: bool = False) -> 'ScenarioConfig':
        mc = settings.monte_carlo_config
        obstacle = dict(settings.obstacle_config)
        dt = obstacle.pop('dt', None)
        return cls(
            n=resolution,
            dt=dt,
            paths=mc.get('paths', 100000),
            mc_dt=mc.get('dt'),
            seed=mc.get('seed', 12345),
            solver=SolverOptions.from_settings(settings.solver_config),
            obstacle=obstacle,
            potential=dict(settings.potential_config),
            chunk_size=mc.get('chunk_size', 4096),
            block_steps=mc.get('block_steps', 256),
            threads=settings.threads,
            quiet=quiet,
        )

    def resolution(self, pinned: int) -> int:
        return self.n if self.n is not None else pinned

    def obstacle_options(self, dt: Optional[float] = None, **overrides) -> ObstacleOptions:
        values = {**self.obstacle, **self.potential}
        values.update({k: v for k, v in overrides.items() if v is not None})
        values['dt'] = self.dt if self.dt is not None else dt
        return ObstacleOptions.from_settings(values, show_progress=not self.quiet)

    def potential_kwargs(self) -> Dict[str, Any]:
        """CG tolerance and cap for ``check_subharmonic_order``."""
        return {'rtol': self.potential.get('cg_rtol', 1e-10), 'maxiter': self.potential.get('cg_maxiter')}

    def stream_key(self) -> Dict[str, int]:
        return {'seed': self.seed, 'chunk_size': self.chunk_size, 'block_steps': self.block_steps}

    def mc_kwargs(self) -> Dict[str, Any]:
        return {'chunk_size': self.chunk_size, 'block_steps': self.block_steps,
                'processor': ParallelProcessor(self.threads), 'show_progress': not self.quiet}


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _domain(kind: str, n: int, dim: int = 2, rho: float = 0.5) -> Tuple[GridGeometry, CellSet]:
    return build_domain(DomainSpec(kind, dim=dim, n=n, rho=rho))


def _perimeter(shell: TargetShell) -> float:
    """Surface measure of the band edges of a shell (point count in 1D)."""
    edges = {r for band in shell.bands() for r in band if r > 0.0}
    if shell.d == 1:
        return float(len(edges))
    return float(sum(2.0 * math.pi * r for r in edges))


def _shell_sigma(shell: TargetShell, geometry: GridGeometry, U: CellSet, kind: str) -> CellSet:
    r = radial_coordinate(geometry, kind)
    return CellSet((shell.nu(r) > 0.5) & U.mask, geometry)


def _radial_symdiff(bands_a: Sequence[Tuple[float, float]], bands_b: Sequence[Tuple[float, float]],
                    d: int = 2) -> float:
    """Exact measure of the symmetric difference of two radial band unions."""
    points = sorted({p for band in list(bands_a) + list(bands_b) for p in band})
    inside = lambda bands, r: any(lo < r < hi for lo, hi in bands)
    sphere = 2.0 * math.pi if d == 2 else 1.0
    total = 0.0
    for lo, hi in zip(points, points[1:]):
        mid = 0.5 * (lo + hi)
        if inside(bands_a, mid) != inside(bands_b, mid):
            total += sphere * band_mass(lo, hi, d)
    return total


def _solve(mu: ScalarField, weight, U: CellSet, cfg: ScenarioConfig):
    solution, certificate = solve_primal_dual(mu, weight, U, cfg.solver)
    zone = extract_transition_zone(solution, certificate, weight, U, cfg.solver.ambiguity_flag)
    return solution, certificate, zone


def _duality_checks(report: ScenarioReport, label: str, solution, certificate, zone):
    P, D = solution.objective, certificate.objective
    gap_tol = 1e-6 * max(1.0, abs(P))
    report.check(f'{label}: duality gap', solution.converged and abs(P - D) <= gap_tol,
                 abs(P - D), f'<= {gap_tol:.3g}', DUALITY)
    sigma_measure = max(zone.sigma.measure(), solution.nu.geometry.cell_volume)
    report.check(f'{label}: binarity defect', solution.binarity_defect <= 0.02 * sigma_measure,
                 solution.binarity_defect, f'<= 2% of |Σ| = {0.02 * sigma_measure:.4g}', DUALITY)
    report.check(f'{label}: Σ reaches every boundary cell', zone.screen.boundary_ok,
                 zone.screen.boundary_cells_near_sigma, zone.screen.boundary_cells, THEORY, proxy=True)


def _obstacle_checks(report: ScenarioReport, label: str, traj: ObstacleTrajectory):
    report.check(f'{label}: time monotone', traj.monotonicity_violations == 0,
                 traj.monotonicity_violations, 0, THEORY)
    report.check(f'{label}: nested active sets', traj.nesting_violations == 0,
                 traj.nesting_violations, 0, THEORY)
    report.check(f'{label}: occupation identity', traj.occupation_defect <= 0.02,
                 traj.occupation_defect, '<= 0.02', OCCUPATION)
    report.check(f'{label}: complementarity', not traj.flagged_steps,
                 traj.max_complementarity, f'no flagged steps ({len(traj.flagged_steps)})', THEORY)


def _quantile_radius(values: np.ndarray, r: np.ndarray, lo: float, hi: float, width: float):
    """Mean of ``values`` in radial bins of ``width`` on ``(lo, hi)``."""
    edges = np.arange(lo, hi + width, width)
    means = []
    for a, b in zip(edges, edges[1:]):
        sel = (r >= a) & (r < b)
        if sel.any():
            means.append((0.5 * (a + b), float(values[sel].mean())))
    return means


# ---------------------------------------------------------------------------
# Radial
# ---------------------------------------------------------------------------

MU_PRESETS = {'half': 0.5, 'three_quarters': 0.75, 'full': 1.0}


def _radial_density(mu: Any, d: int, rho: float) -> RadialDensity:
    if isinstance(mu, RadialDensity):
        return mu
    if isinstance(mu, str):
        if mu not in MU_PRESETS:
            raise ConfigurationError(f"unknown density preset '{mu}'; expected one of {sorted(MU_PRESETS)}")
        mu = MU_PRESETS[mu]
    return RadialDensity.constant(float(mu), d, rho=rho)


def radial_shell(mu: RadialDensity, domain: str, rho: float = 0.5) -> TargetShell:
    if domain == 'interval':
        return targets_1d(mu)
    if domain == 'ball':
        return targets_ball(mu)
    if domain == 'annulus':
        return targets_annulus(mu, rho=rho)
    raise ConfigurationError(f"radial scenarios need an interval, ball or annulus, got '{domain}'")


def scenario_radial(mu: Any = 'half', domain: str = 'ball', d: int = 2, rho: float = 0.5,
                    cfg: Optional[ScenarioConfig] = None, with_obstacle: bool = True,
                    obstacle_n: int = 48) -> ScenarioReport:
    """
    LP transition zone of a radial problem against its closed-form shells.

    The LP is solved with two radial weights; both must reproduce the
    shells within ``4h·perimeter``. A second LP at ``n/2`` checks that the
    binarity defect shrinks with the mesh. With ``with_obstacle`` the
    obstacle problem is run at ``obstacle_n`` and its freezing map is
    checked for radial monotonicity and the absence of nucleation.
    """
    cfg = cfg or ScenarioConfig()
    dim = 1 if domain == 'interval' else d
    n = cfg.resolution(400 if dim == 1 else 128)
    density = _radial_density(mu, dim, rho if domain == 'annulus' else 0.0)
    report = ScenarioReport('radial', {'mu': getattr(density, 'name', str(mu)), 'domain': domain,
                                       'd': dim, 'rho': rho, 'n': n})
    shell = radial_shell(density, domain, rho)
    report.measured['shell'] = shell.to_dict()
    potential = radial_potential(density, shell)
    report.measured['radial_potential'] = potential.to_dict()

    if domain == 'ball' and isinstance(mu, str) and mu == 'half' and dim == 2:
        report.check('closed-form inner radius', abs(shell.r_tilde - 1.0 / math.sqrt(2.0)) <= 1e-9,
                     shell.r_tilde, 1.0 / math.sqrt(2.0), CLOSED_FORM)

    full = shell.degenerate
    report.check('no initial freezing (v > 0 in U)', full or positive_in_domain(potential, shell),
                 potential.min_v, '> 0 inside U' if not full else 'ν = μ', TRIVIAL if full else THEORY)
    report.check('radial potential certificate', potential.monotone, potential.certificate, 'all true', CLOSED_FORM)

    geometry, U = _domain(domain, n, dim, rho)
    center = (0.5,) if domain == 'interval' else (0.0,) * dim
    kind = 'interval' if domain == 'interval' else 'radial'
    mu_field = density_field(density, geometry, U, kind)
    expected_sigma = _shell_sigma(shell, geometry, U, kind)
    tol = 4.0 * geometry.h * _perimeter(shell)

    zones = {}
    for label, weight in (('quadratic', quadratic(center, dim)), ('quadratic_soft', quadratic_soft(center, dim))):
        solution, certificate, zone = _solve(mu_field, weight, U, cfg)
        zones[label] = zone
        _duality_checks(report, label, solution, certificate, zone)
        if label == 'quadratic':
            report.measured['objective'] = solution.objective
            report.measured['binarity_defect'] = solution.binarity_defect
            report.artifact('pgm', 'sigma.pgm', zone.sigma)
            report.artifact('csv', 'sigma.csv', zone.sigma)
            report.artifact('csv', 'nu.csv', solution.nu)
            binarity = solution.binarity_defect

    sym = (zones['quadratic'].sigma ^ expected_sigma).measure()
    report.check('LP Σ matches the closed-form shell', sym <= tol + geometry.cell_volume,
                 sym, f'<= 4h·perimeter = {tol:.4g}', CLOSED_FORM)
    universal = (zones['quadratic'].sigma ^ zones['quadratic_soft'].sigma).measure()
    report.check('universality across radial weights', universal <= tol + geometry.cell_volume,
                 universal, f'<= {tol:.4g}', THEORY)

    if domain == 'ball' and dim == 2 and not full:
        area_fraction = zones['quadratic'].sigma.measure() / U.measure()
        r_est = math.sqrt(max(0.0, 1.0 - area_fraction))
        report.measured['inner_radius_estimate'] = r_est
        report.check('LP inner radius', abs(r_est - shell.r_tilde) <= 2.0 * geometry.h,
                     r_est, f'{shell.r_tilde:.10f} ± 2h', CLOSED_FORM)

    if n // 2 >= 16 and not full:
        coarse_geometry, coarse_U = _domain(domain, n // 2, dim, rho)
        coarse_mu = density_field(density, coarse_geometry, coarse_U, kind)
        coarse, _, _ = _solve(coarse_mu, quadratic(center, dim), coarse_U, cfg)
        report.measured['binarity_defect_coarse'] = coarse.binarity_defect
        report.check('binarity defect does not grow under refinement',
                     binarity <= coarse.binarity_defect + geometry.cell_volume,
                     binarity, f'<= {coarse.binarity_defect:.4g} (n/2)', GRID_PROXY, proxy=True)

    if with_obstacle and not full:
        _radial_obstacle_stage(report, density, shell, domain, dim, rho,
                               cfg.resolution(obstacle_n) if dim == 2 else n, cfg)
    return report


def _radial_obstacle_stage(report: ScenarioReport, density: RadialDensity, shell: TargetShell,
                           domain: str, dim: int, rho: float, n: int, cfg: ScenarioConfig):
    geometry, U = _domain(domain, n, dim, rho)
    kind = 'interval' if domain == 'interval' else 'radial'
    mu_field = density_field(density, geometry, U, kind)
    nu_field = rasterize_shell(shell, geometry, U, mu_field.integral(), kind=kind)
    traj = run_obstacle(mu_field, nu_field, U, cfg.obstacle_options())
    fmap = freezing_map(traj)
    events = detect_nucleation(traj)
    report.measured['obstacle'] = traj.summary()
    report.measured['freezing'] = fmap.summary()
    report.artifact('csv', 'freezing_map.csv', fmap)
    report.artifact('json', 'events.json', [e.to_dict() for e in events])
    _obstacle_checks(report, 'obstacle', traj)

    subcritical = float(density(np.linspace(density.rho, density.outer, 2001)).max()) <= 1.0
    if subcritical:
        nucleations = [e for e in events if e.kind == 'nucleation']
        report.check('no nucleation events', not nucleations, len(nucleations), 0, THEORY)

    if domain == 'ball':
        sigma = fmap.sigma().mask
        r = geometry.radius()
        profile = _quantile_radius(fmap.s[sigma], r[sigma], shell.r_tilde, 1.0, 2.0 * geometry.h)
        values = np.array([m for _, m in profile])
        slack = 2.0 * traj.dt + 0.02 * (values.max() if values.size else 0.0)
        increases = int(np.sum(np.diff(values) > slack)) if values.size > 1 else 0
        report.measured['radial_freezing_profile'] = profile
        report.check('freezing time decreases along the radius', increases == 0,
                     increases, 0, THEORY, proxy=True)
        deep = ndimage.binary_erosion(U.mask, iterations=2)
        early = int((fmap.F0().mask & deep).sum())
        report.check('no initial freezing beyond the boundary layer', early == 0,
                     early, '0 cells more than 2h inside U', GRID_PROXY, proxy=True)


# ---------------------------------------------------------------------------
# Non-universality
# ---------------------------------------------------------------------------

NONUNIVERSAL_CONSTANT = 45.0 / 2048.0
NONUNIVERSAL_BOUNDARY = 90.0 / 2048.0


def harmonic_continuation(func: Callable[..., np.ndarray], radius: float, point: Tuple[float, float],
                          samples: int = 512, max_mode: int = 16) -> float:
    """
    Value at ``point`` of the harmonic function equal to ``func`` on the circle ``radius``.

    Boundary data are sampled at ``samples`` angles; Fourier modes above
    ``max_mode`` are dropped since the continuation amplifies them by
    ``(|point|/radius)^k``.
    """
    theta = 2.0 * math.pi * np.arange(samples) / samples
    data = func(radius * np.cos(theta), radius * np.sin(theta))
    coeffs = np.fft.rfft(data) / samples
    r = math.hypot(*point) / radius
    phase = math.atan2(point[1], point[0])
    value = coeffs[0].real
    for k in range(1, min(max_mode, coeffs.size - 1) + 1):
        value += 2.0 * (r ** k) * (coeffs[k] * np.exp(1j * k * phase)).real
    return float(value)


def scenario_non_universality(eps: Optional[float] = 0.01, cfg: Optional[ScenarioConfig] = None) -> ScenarioReport:
    """
    The quartic weight ``1 − 15x⁴y⁴ − ε|x|²`` breaks the annular transition zone.

    Part (a) continues the weight from the circle of radius ``1/√2`` as a
    harmonic function and evaluates ``ψ − u`` at ``(1, 0)``. Part (b)
    solves the LP for the quadratic, soft quadratic and quartic weights;
    the two radial weights measure the grid noise and the quartic zone must
    differ from the quadratic one by ten times that.
    """
    cfg = cfg or ScenarioConfig()
    if eps is None:
        report = scenario_radial('half', 'ball', 2, cfg=cfg, with_obstacle=False)
        report.scenario = 'non_universality'
        report.inputs['eps'] = None
        report.inputs['reduction'] = 'radial weight'
        return report

    n = cfg.resolution(128)
    report = ScenarioReport('non_universality', {'eps': eps, 'n': n})
    weight = nonuniversal(eps)
    r0 = 1.0 / math.sqrt(2.0)

    psi_at = harmonic_continuation(weight.func, r0, (1.0, 0.0), samples=4 * n)
    gap = psi_at - float(weight.func(1.0, 0.0))
    expected = -NONUNIVERSAL_CONSTANT + eps / 2.0
    report.measured['psi_minus_u'] = gap
    report.check('(ψ−u)(1,0) from the harmonic continuation', abs(gap - expected) <= 5e-3,
                 gap, expected, CLOSED_FORM)
    boundary = eps >= NONUNIVERSAL_BOUNDARY - 1e-12
    report.measured['boundary_case'] = boundary
    if boundary:
        logger.warning(f"⚠️  ε = {eps:g} is at or beyond 90/2048: (ψ−u)(1,0) is no longer negative")
        report.check('boundary case flagged', gap >= -1e-9, gap, '>= 0', CLOSED_FORM, informational=True)
    else:
        report.check('(ψ−u)(1,0) < 0', gap < 0.0, gap, '< 0', CLOSED_FORM)

    geometry, U = _domain('ball', n)
    mu_field = density_field(RadialDensity.constant(0.5, 2), geometry, U, 'radial')
    zones = {}
    for label, w in (('quadratic', quadratic()), ('quadratic_soft', quadratic_soft()), ('nonuniversal', weight)):
        solution, certificate, zone = _solve(mu_field, w, U, cfg)
        zones[label] = zone
        _duality_checks(report, label, solution, certificate, zone)
        report.artifact('pgm', f'sigma_{label}.pgm', zone.sigma)
        report.artifact('csv', f'sigma_{label}.csv', zone.sigma)

    noise = max((zones['quadratic'].sigma ^ zones['quadratic_soft'].sigma).measure(), geometry.cell_volume)
    difference = (zones['quadratic'].sigma ^ zones['nonuniversal'].sigma).measure()
    report.measured['radial_weight_noise'] = noise
    report.measured['nonuniversal_difference'] = difference
    check = report.check('quartic weight changes Σ', difference > 10.0 * noise,
                         difference, f'> 10 × {noise:.4g}', DIRECT_SOLVE, informational=boundary)
    if boundary:
        check.expected = 'informational at the boundary case'
    return report


# ---------------------------------------------------------------------------
# Fourier waiting time
# ---------------------------------------------------------------------------

def fourier_density(mode: str = 'single', k: int = 7, delta0: float = 9.0 / 20.0,
                    mu0: float = 0.5, modes: int = 16) -> Callable[..., np.ndarray]:
    """``μ0 + δ0 r^k cos kθ`` or ``μ0 + δ0 Σ_{j<=K} e^{−√j} cos jθ``."""
    if mode == 'single':
        def func(x, y):
            return mu0 + delta0 * ((x + 1j * y) ** k).real
    elif mode == 'series':
        def func(x, y):
            theta = np.arctan2(y, x)
            return mu0 + delta0 * sum(math.exp(-math.sqrt(j)) * np.cos(j * theta) for j in range(1, modes + 1))
    else:
        raise ConfigurationError(f"unknown Fourier mode '{mode}'; expected 'single' or 'series'")
    return func


def fourier_moment(mode: str, k: int, delta0: float, rho: float) -> float:
    """Closed form of ``∫ r^k cos kθ dμ`` over ``rho < r < 1``."""
    if mode == 'single':
        return delta0 * math.pi * (1.0 - rho ** (2 * k + 2)) / (2 * k + 2)
    return delta0 * math.pi * math.exp(-math.sqrt(k)) * (1.0 - rho ** (k + 2)) / (k + 2)


def fourier_range(mode: str = 'single', k: int = 7, delta0: float = 9.0 / 20.0, mu0: float = 0.5,
                  modes: int = 16, samples: int = 4096) -> Tuple[float, float]:
    """Smallest and largest value of the Fourier density on ``r <= 1``."""
    if mode == 'single':
        return mu0 - abs(delta0), mu0 + abs(delta0)
    theta = 2.0 * math.pi * np.arange(samples) / samples
    values = fourier_density(mode, k, delta0, mu0, modes)(np.cos(theta), np.sin(theta))
    return float(values.min()), float(values.max())


def band_inclusion_bound(k: int, eps: float) -> float:
    """``2π(1−ε)^{k+2}/(k+2)``: largest ``|∫_Σ r^k cos kθ|`` when ``{1−r < ε} ⊂ Σ``."""
    return 2.0 * math.pi * (1.0 - eps) ** (k + 2) / (k + 2)


def band_inclusion_threshold(mode: str, delta0: float, eps: float, rho: float,
                             k_max: int = 10000) -> Optional[int]:
    """
    Smallest mode ``k`` whose μ-moment exceeds :func:`band_inclusion_bound`.

    For that ``k`` the ε-band cannot lie inside Σ; None when no
    ``k <= k_max`` gets there.
    """
    for k in range(1, k_max + 1):
        if fourier_moment(mode, k, delta0, rho) > band_inclusion_bound(k, eps):
            return k
    return None


def _angular_mode(sigma: CellSet, U: CellSet, r_min: float, bins: int = 64) -> Tuple[int, np.ndarray]:
    x, y = U.geometry.centers()
    r = np.hypot(x, y)
    theta = np.arctan2(y, x)
    region = U.mask & (r > r_min)
    index = np.floor((theta[region] + math.pi) / (2.0 * math.pi) * bins).astype(int) % bins
    counts = np.bincount(index, minlength=bins)
    hits = np.bincount(index, weights=sigma.mask[region].astype(float), minlength=bins)
    fraction = hits / np.maximum(counts, 1)
    spectrum = np.abs(np.fft.rfft(fraction - fraction.mean()))
    return int(np.argmax(spectrum[1:]) + 1), spectrum


def scenario_fourier(k: int = 7, delta0: float = 9.0 / 20.0, domain: str = 'ball', rho: float = 0.5,
                     mode: str = 'single', modes: int = 16, mu0: float = 0.5,
                     resolutions: Sequence[int] = (96, 128),
                     cfg: Optional[ScenarioConfig] = None) -> ScenarioReport:
    """
    Waiting-time zones created by an angular mode of μ.

    For each resolution the LP is solved and the measure of the outer band
    ``{1 − r < ε}`` outside Σ is reported. A band outside Σ is expected
    except for the single ``k = 1`` mode, whose band must lie inside Σ up
    to a grid-scale remainder. The harmonic ``r^k cos kθ`` is audited on
    both sides of the moment identity, and the chain comparing the
    moment with the band-inclusion bound is reported for this ``k``.

    Raises:
        ConfigurationError: If the density leaves ``[0, 1]``
    """
    cfg = cfg or ScenarioConfig()
    if delta0 == 0.0:
        report = scenario_radial(mu0, domain, 2, rho=rho, cfg=cfg, with_obstacle=False)
        report.scenario = 'fourier'
        report.inputs['reduction'] = 'δ0 = 0'
        return report
    low, high = fourier_range(mode, k, delta0, mu0, modes)
    if low < 0.0 or high > 1.0:
        raise ConfigurationError(f"Fourier density with δ0 = {delta0:g} ranges over [{low:.3f}, {high:.3f}]; "
                                 f"it must stay inside [0, 1]")
    if cfg.n is not None:
        resolutions = (cfg.n,)
    if mode == 'series' and domain == 'ball':
        domain = 'annulus'
    inner = rho if domain == 'annulus' else 0.0
    report = ScenarioReport('fourier', {'k': k, 'delta0': delta0, 'domain': domain, 'rho': inner,
                                        'mode': mode, 'modes': modes if mode == 'series' else 1,
                                        'resolutions': list(resolutions)})
    report.measured['density_range'] = [low, high]
    func = fourier_density(mode, k, delta0, mu0, modes)
    dominant_mode = k if mode == 'single' else 1
    control = mode == 'single' and k == 1
    bands = (0.02, 0.05, 0.1)
    waiting = {}
    band_measure = {}

    for index, n in enumerate(resolutions):
        geometry, U = _domain(domain, n, 2, rho)
        mu_field = ScalarField.from_function(geometry, func, support=U, value_cap=1.0, name='mu')
        solution, certificate, zone = _solve(mu_field, quadratic(), U, cfg)
        _duality_checks(report, f'n={n}', solution, certificate, zone)
        r = geometry.radius()
        waiting[n] = {eps: CellSet(U.mask & (1.0 - r < eps) & ~zone.sigma.mask, geometry).measure()
                      for eps in bands}
        band_measure[n] = CellSet(U.mask & (1.0 - r < 0.05), geometry).measure()
        report.measured[f'waiting_measure_n{n}'] = waiting[n]

        if index == len(resolutions) - 1:
            report.artifact('pgm', 'sigma.pgm', zone.sigma)
            report.artifact('csv', 'sigma.csv', zone.sigma)
            report.artifact('pgm', 'mu.pgm', mu_field)
            found, spectrum = _angular_mode(zone.sigma, U, r_min=max(inner, 0.5))
            report.measured['angular_spectrum'] = spectrum[:min(spectrum.size, 2 * k + 2)].tolist()
            report.check(f'{dominant_mode}-fold pattern of Σ', found == dominant_mode, found,
                         dominant_mode, THEORY, proxy=True, informational=control)

            rows = moment_audit(zone.sigma, mu_field, [('cos', k)])
            closed = fourier_moment(mode, k, delta0, inner)
            residual_tol = 4.0 * geometry.h * 2.0 * math.pi
            report.measured['moment_audit'] = rows
            report.check('harmonic moment audit', abs(rows[0]['residual']) <= residual_tol,
                         rows[0]['residual'], f'<= 4h·2π = {residual_tol:.4g}', DUALITY)
            report.check('μ-side moment against its closed form',
                         abs(rows[0]['mu_side'] - closed) <= 4.0 * geometry.h * closed + 1e-6,
                         rows[0]['mu_side'], closed, CLOSED_FORM)
            chain = {eps: band_inclusion_bound(k, eps) for eps in bands}
            report.measured['band_inclusion_chain'] = {
                'k': k,
                'moment': closed,
                'bound': chain,
                'contradiction': {eps: closed > chain[eps] for eps in bands},
                'first_contradicting_k': {eps: band_inclusion_threshold(mode, delta0, eps, inner)
                                          for eps in bands},
            }
            report.check('moment exceeds the band-inclusion bound at ε = 0.1', closed > chain[0.1],
                         closed, f'> {chain[0.1]:.4g}', CLOSED_FORM, informational=True)

    for n in resolutions:
        if control:
            limit = 0.01 * band_measure[n]
            report.check(f'|U_0.05 ∖ Σ| ≈ 0 at n={n}', waiting[n][0.05] <= limit, waiting[n][0.05],
                         f'<= 1% of |U_0.05| = {limit:.4g}', THEORY, proxy=True)
        else:
            report.check(f'|U_0.05 ∖ Σ| > 0 at n={n}', waiting[n][0.05] > 0.0, waiting[n][0.05], '> 0',
                         THEORY, proxy=True)
    return report


# ---------------------------------------------------------------------------
# Nucleation on an interval
# ---------------------------------------------------------------------------

QUARTIC_A = 12397.0 / 100500.0
QUARTIC_B = 30353.0 / 100500.0
QUARTIC_MU_SECOND_DERIVATIVE = 2926.0 / 25.0
CUTOFF_SECOND_DERIVATIVE = 71.0
QUARTIC_CUTOFF_EDGE = 0.8


def quartic_density(x):
    x = np.asarray(x, dtype=float)
    return 154.0 * (-x ** 4 / 4.0 + 7.0 * x ** 3 / 15.0 - 7.0 * x ** 2 / 25.0 + 8.0 * x / 125.0)


def quartic_double_integral(x):
    """``∫₀^x ∫₀^y μ`` of the quartic density."""
    x = np.asarray(x, dtype=float)
    return (77.0 / 1500.0) * x ** 3 * (32.0 - 70.0 * x + 70.0 * x ** 2 - 25.0 * x ** 3)


def shell_double_integral(x, a: float = QUARTIC_A, b: float = QUARTIC_B):
    """``∫₀^x ∫₀^y ν`` for ``ν = χ(0, a) + χ(b, 1)``."""
    x = np.asarray(x, dtype=float)
    return np.where(x < a, 0.5 * x * x,
                    np.where(x < b, a * x - 0.5 * a * a,
                             0.5 * x * x + (a - b) * x + 0.5 * (b * b - a * a)))


def quartic_potential(x):
    return shell_double_integral(x) - quartic_double_integral(x)


def quartic_cutoff(x):
    """Quadratic bump vanishing at ``b`` and 0.8 with maximum 1."""
    c = 4.0 / (QUARTIC_CUTOFF_EDGE - QUARTIC_B) ** 2
    return np.clip(c * (np.asarray(x) - QUARTIC_B) * (QUARTIC_CUTOFF_EDGE - np.asarray(x)), 0.0, None)


def quartic_lower_bound(t: float, x):
    return quartic_potential(x) - 0.5 * t * quartic_density(x) - (QUARTIC_MU_SECOND_DERIVATIVE / 8.0) * t * t


def quartic_upper_bound(t: float, x):
    """Valid while no nucleation has happened."""
    return (quartic_potential(x) - 0.5 * t * quartic_cutoff(x) * quartic_density(x)
            + (CUTOFF_SECOND_DERIVATIVE / 8.0) * t * t)


def _first_root(coeffs: Sequence[float]) -> float:
    roots = np.roots(coeffs)
    real = sorted(float(r.real) for r in roots if abs(r.imag) < 1e-14 and r.real > 0)
    return real[0] if real else float('inf')


def scenario_nucleation_1d(cfg: Optional[ScenarioConfig] = None) -> ScenarioReport:
    """
    The quartic density whose freezing time is not monotone.

    Checks the exact shell edges, the closed-form potential, the ordering
    of freezing times at 0.5 and 0.8 with their bounds, at least one
    nucleation event, and the linearized sandwich on the grid trajectory.
    """
    cfg = cfg or ScenarioConfig()
    n = cfg.resolution(2000)
    report = ScenarioReport('nucleation_1d', {'n': n, 'dt': cfg.dt or 1.25e-7})
    density = replace(RadialDensity.from_function(quartic_density, 1, name='quartic'), cap=2.0)
    shell = targets_1d(density)
    report.measured['shell'] = shell.to_dict()
    report.check('a', abs(shell.a - QUARTIC_A) <= 1e-9, shell.a, QUARTIC_A, EXACT_CONSTANTS)
    report.check('b', abs(shell.b - QUARTIC_B) <= 1e-9, shell.b, QUARTIC_B, EXACT_CONSTANTS)

    xs = np.linspace(0.0, 1.0, 20001)
    v_closed = quartic_potential(xs)
    report.check('closed-form potential is nonnegative', v_closed.min() >= -1e-12,
                 float(v_closed.min()), '>= -1e-12', EXACT_CONSTANTS)

    v5, mu5, zeta5 = float(quartic_potential(0.5)), float(quartic_density(0.5)), float(quartic_cutoff(0.5))
    v8, mu8 = float(quartic_potential(0.8)), float(quartic_density(0.8))
    upper_s5 = _first_root([CUTOFF_SECOND_DERIVATIVE / 8.0, -0.5 * zeta5 * mu5, v5])
    lower_s8 = _first_root([-QUARTIC_MU_SECOND_DERIVATIVE / 8.0, -0.5 * mu8, v8])
    report.measured['sandwich_bounds'] = {'s(0.5) upper': upper_s5, 's(0.8) lower': lower_s8}
    report.check('sandwich bound s(0.5) <= 0.0025', upper_s5 <= 0.0025, upper_s5, '<= 0.0025', EXACT_CONSTANTS)
    report.check('sandwich bound s(0.8) >= 0.006', lower_s8 >= 0.006, lower_s8, '>= 0.006', EXACT_CONSTANTS)

    geometry, U = _domain('interval', n, 1)
    mu_field = density_field(density, geometry, U, 'interval')
    nu_field = rasterize_shell(shell, geometry, U, mu_field.integral(), kind='interval')
    traj = run_obstacle(mu_field, nu_field, U, cfg.obstacle_options(dt=1.25e-7))
    fmap = freezing_map(traj)
    events = detect_nucleation(traj)
    report.measured['obstacle'] = traj.summary()
    report.measured['freezing'] = fmap.summary()
    report.artifact('csv', 'freezing_map.csv', fmap)
    report.artifact('json', 'events.json', [e.to_dict() for e in events])
    _obstacle_checks(report, 'obstacle', traj)

    x = geometry.axis_centers(0)
    for point in (0.25, 0.5, 0.8):
        grid_v = float(np.interp(point, x, traj.w0))
        report.check(f'grid potential at {point}', abs(grid_v - float(quartic_potential(point))) <= 1e-6,
                     grid_v, float(quartic_potential(point)), EXACT_CONSTANTS)

    s5, s8 = fmap.value_at((0.5,)), fmap.value_at((0.8,))
    slack = 2.0 * traj.dt
    report.measured['s(0.5)'] = s5
    report.measured['s(0.8)'] = s8
    report.check('s(0.5) < s(0.8)', s5 < s8, [s5, s8], 'strictly ordered', THEORY)
    report.check('s(0.5) <= 0.0025 + 2Δt', s5 <= 0.0025 + slack, s5, 0.0025 + slack, EXACT_CONSTANTS)
    report.check('s(0.8) >= 0.006 − 2Δt', s8 >= 0.006 - slack, s8, 0.006 - slack, EXACT_CONSTANTS)
    nucleations = [e for e in events if e.kind == 'nucleation' and 0.0 < e.t <= s8 + slack]
    report.check('nucleation before s(0.8)', len(nucleations) >= 1, len(nucleations), '>= 1', THEORY)

    band = (x > QUARTIC_B) & (x < QUARTIC_CUTOFF_EDGE) & U.mask
    grid_error = float(np.abs(traj.w0[band] - quartic_potential(x[band])).max())
    tol = 2.0 * grid_error + 10.0 * traj.tol_w
    worst_lower, worst_upper = -np.inf, -np.inf
    for j, t in enumerate(traj.times):
        if t > 0.006:
            break
        w = traj.w_at(j)[band]
        worst_lower = max(worst_lower, float((quartic_lower_bound(t, x[band]) - w).max()))
        if t <= s8:
            worst_upper = max(worst_upper, float((w - quartic_upper_bound(t, x[band])).max()))
    report.measured['sandwich_violation'] = {'lower': worst_lower, 'upper': worst_upper, 'tolerance': tol}
    report.check('lower linearization bound on the grid', worst_lower <= tol, worst_lower,
                 f'<= {tol:.3g}', EXACT_CONSTANTS)
    report.check('upper linearization bound before nucleation', worst_upper <= tol, worst_upper,
                 f'<= {tol:.3g}', EXACT_CONSTANTS, informational=True)
    return report


# ---------------------------------------------------------------------------
# Fractal freezing
# ---------------------------------------------------------------------------

def solve_on_cubes(mu: ScalarField, U: CellSet, F: NullSet, cfg: ScenarioConfig,
                   min_cells: int = 4) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Maximal targets on the dyadic cubes of ``U ∖ F``, glued together.

    Each cube of side at least ``min_cells`` gets its own LP with the
    quadratic weight centred on the cube; smaller cubes keep ``ν = μ``.
    The potentials of the cubes vanish off their interiors, so the glued
    potential is their sum.

    Returns:
        Target values, potential values and the number of cubes
    """
    geometry = mu.geometry
    nu = np.where(U.mask, mu.values, 0.0)
    v = np.zeros(geometry.shape)
    cubes = dyadic_decompose(U, F)
    solved = 0
    for cube in cubes:
        if cube.size < min_cells:
            continue
        sub = geometry.shifted(tuple(i - 1 for i in cube.origin), (cube.size + 2,) * geometry.dim)
        window = tuple(slice(i - 1, i + cube.size + 1) for i in cube.origin)
        inner = np.zeros(sub.shape, dtype=bool)
        inner[(slice(1, -1),) * geometry.dim] = True
        sub_U = CellSet(inner, sub)
        sub_mu = ScalarField(np.where(inner, mu.values[window], 0.0), sub, support=sub_U, name='mu')
        if sub_mu.integral() <= 0.0:
            continue
        (lo, hi) = zip(*cube.bounds(geometry))
        center = tuple(0.5 * (a + b) for a, b in zip(lo, hi))
        solution, _ = solve_primal_dual(sub_mu, quadratic(center, geometry.dim), sub_U, cfg.solver)
        nu[window] = np.where(inner, solution.nu.values, nu[window])
        v[window] += solution.v.values
        solved += 1
    logger.info(f"🧊 {len(cubes)} dyadic cubes, {solved} solved")
    return nu, v, len(cubes)


def scenario_fractal_freezing(T: float = 0.05, segments: Optional[Sequence] = None, mu_value: float = 0.5,
                              cfg: Optional[ScenarioConfig] = None) -> ScenarioReport:
    """
    Freezing programmed on a null set F, at time 0 and at time T.

    At time 0 the domain minus F is split into dyadic cubes with their own
    maximal targets, so the glued potential vanishes next to F. For T > 0
    the plain maximal solution runs to T, the survivors' temperature is
    re-solved on ``{s0 > T} ∖ F`` and the two runs are glued; F then
    freezes exactly at T.
    """
    cfg = cfg or ScenarioConfig()
    n = cfg.resolution(64)
    segments = list(segments) if segments is not None else [((0.5, 0.0), (0.5, 1.0))]
    report = ScenarioReport('fractal_freezing', {'T': T, 'n': n, 'mu': mu_value,
                                                 'segments': [list(map(list, s)) for s in segments]})
    geometry, U = _domain('box', n)
    F = rasterize_null_set(geometry, U, segments)
    adjacent = F.adjacent_cells() & U
    mu_field = ScalarField(np.where(U.mask, mu_value, 0.0), geometry, support=U, value_cap=1.0, name='mu')
    report.check('|F| = 0', F.measure() == 0.0 and F.face_count() > 0,
                 {'measure': F.measure(), 'faces': F.face_count()}, 'zero measure, nonempty', GRID_PROXY, proxy=True)

    nu0, v0, count = solve_on_cubes(mu_field, U, F, cfg)
    report.measured['cubes_T0'] = count
    nu0_field = ScalarField(nu0, geometry, support=U, value_cap=1.0, name='nu')
    order = check_subharmonic_order(mu_field, nu0_field, U, blocked=None, **cfg.potential_kwargs())
    report.check('glued cube targets are admissible', order.verdict, order.min_v, f'>= -{order.tol_v:.3g}', DIRECT_SOLVE)
    report.measured['cube_potential_difference'] = float(np.abs(order.potential.v.values - v0).max())
    options_f = cfg.obstacle_options()
    tol_w = options_f.tol_w_factor * (options_f.dt or 0.5 * geometry.h ** 2)
    v_adjacent = float(np.abs(v0[adjacent.mask]).max()) if adjacent.count() else 0.0
    report.check('v0 = 0 on F-adjacent cells', v_adjacent <= tol_w, v_adjacent, f'<= tol_w = {tol_w:.3g}',
                 DIRECT_SOLVE, proxy=True)

    traj_f = run_obstacle(mu_field, nu0_field, U, options_f, w0=np.maximum(v0, 0.0), blocked=F)
    map_f = freezing_map(traj_f)
    s_adjacent = float(map_f.s[adjacent.mask].max()) if adjacent.count() else 0.0
    report.check('F ⊂ {s = 0}', s_adjacent == 0.0, s_adjacent, 0.0, DIRECT_SOLVE)
    _obstacle_checks(report, 'T=0 run', traj_f)
    report.artifact('csv', 'freezing_map_T0.csv', map_f)
    report.artifact('pgm', 'freezing_map_T0.pgm', np.where(np.isfinite(map_f.s), map_f.s, -1.0))

    if T <= 0.0:
        return report

    solution, _, _ = _solve(mu_field, quadratic((0.5, 0.5)), U, cfg)
    options = cfg.obstacle_options()
    dt = options.dt or 0.5 * geometry.h ** 2
    t1 = dt * max(1, round(T / dt))
    traj0 = run_obstacle(mu_field, solution.nu, U, options, record_times=[t1])
    map0 = freezing_map(traj0)
    recorded = traj0.recorded[min(traj0.recorded, key=lambda t: abs(t - t1))]
    t1 = float(recorded['t'])
    alive = CellSet(U.mask & (map0.s > t1), geometry)
    eta = np.where(alive.mask, np.clip(recorded['eta'], 0.0, None), 0.0)
    report.measured['t1'] = t1
    report.measured['max_mu_t1'] = float(eta.max())
    report.check('μ_{t1} <= 1 − δ', eta.max() <= 0.95, float(eta.max()), '<= 0.95', THEORY)

    mu1 = ScalarField(eta, geometry, support=alive, value_cap=1.0, name='mu_t1')
    F_alive = _restrict_null_set(F, alive)
    nu1_tilde, v1, count1 = solve_on_cubes(mu1, alive, F_alive, cfg)
    report.measured['cubes_T'] = count1
    nu1_field = ScalarField(nu1_tilde, geometry, support=alive, value_cap=1.0, name='nu1')
    traj1 = run_obstacle(mu1, nu1_field, alive, options, w0=np.maximum(v1, 0.0), blocked=F_alive)
    glued = glue_trajectories(traj0, t1, traj1, nu1_tilde=nu1_tilde)
    fmap = glued.freezing_map()
    targets = adjacent.mask & alive.mask
    deviation = float(np.abs(fmap.s[targets] - t1).max()) if targets.any() else 0.0
    report.measured['F_cells_frozen_before_T'] = int((adjacent.mask & ~alive.mask).sum())
    report.check('F ⊂ {s = T} within one Δt', targets.any() and deviation <= dt, deviation, f'<= {dt:.3g}',
                 DIRECT_SOLVE)
    _obstacle_checks(report, 'base run', traj0)
    _obstacle_checks(report, 'continuation', traj1)
    report.artifact('csv', 'freezing_map_T.csv', fmap)
    report.artifact('pgm', 'freezing_map_T.pgm', np.where(np.isfinite(fmap.s), fmap.s, -1.0))
    return report


def _restrict_null_set(F: NullSet, U: CellSet) -> NullSet:
    """Faces of F with both cells in U."""
    faces = []
    for axis, face in enumerate(F.faces):
        lo = [slice(None)] * U.geometry.dim
        hi = [slice(None)] * U.geometry.dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        faces.append(face & U.mask[tuple(lo)] & U.mask[tuple(hi)])
    return NullSet(tuple(faces), F.geometry, F.nodes)


# ---------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------

def _w_at_time(traj: ObstacleTrajectory, t: float) -> np.ndarray:
    if t >= traj.t_end:
        return traj.w_final
    return traj.w_at(traj.snapshot_index(t))


def eta_l1_difference(a: ObstacleTrajectory, b: ObstacleTrajectory, bins: int = 200) -> float:
    """``∫∫|η_a − η_b|`` with η averaged over common time bins."""
    horizon = max(a.decision_time, b.decision_time)
    times = np.linspace(0.0, horizon, bins + 1)
    wa = [_w_at_time(a, t) for t in times]
    wb = [_w_at_time(b, t) for t in times]
    total = 0.0
    for j in range(bins):
        total += 2.0 * np.abs((wa[j] - wa[j + 1]) - (wb[j] - wb[j + 1])).sum()
    return float(total * a.geometry.cell_volume)


def _stability_on_the_disc(report: ScenarioReport, members: Sequence[int], cfg: ScenarioConfig, lp_n: int):
    geometry, U = _domain('ball', cfg.resolution(lp_n), 2)

    def zone_of(value: float):
        density = RadialDensity.constant(value, 2)
        shell = targets_ball(density)
        _, _, zone = _solve(density_field(density, geometry, U, 'radial'), quadratic(), U, cfg)
        mismatch = (zone.sigma ^ _shell_sigma(shell, geometry, U, 'radial')).measure()
        tol = 4.0 * geometry.h * _perimeter(shell) + geometry.cell_volume
        report.check(f'B1, μ = {value:g}: LP Σ matches the shell', mismatch <= tol, mismatch,
                     f'<= {tol:.4g}', CLOSED_FORM)
        return shell, zone.sigma

    limit_shell, limit_sigma = zone_of(0.5)
    sigma_diffs, closed_diffs = [], []
    for m in members:
        shell, sigma = zone_of(0.5 + 1.0 / m)
        sigma_diffs.append((sigma ^ limit_sigma).measure())
        closed_diffs.append(_radial_symdiff(shell.bands(), limit_shell.bands()))
    report.measured['disc_sigma_differences'] = sigma_diffs
    report.measured['disc_closed_form_differences'] = closed_diffs
    report.check('B1: |Σ_m Δ Σ| decreases', all(x > y for x, y in zip(sigma_diffs, sigma_diffs[1:])),
                 sigma_diffs, 'strictly decreasing', CLOSED_FORM, proxy=True)


def scenario_stability(members: Sequence[int] = (4, 8, 16), counterexample: Sequence[int] = (1, 2, 3, 4),
                       cfg: Optional[ScenarioConfig] = None, lp_n: int = 64) -> ScenarioReport:
    """
    Transition zones under convergent data, and a domain sequence where they do not converge.

    (a) ``μ_m = ½ + 1/m`` approaches ``½``. On the unit interval the zone
    and temperature differences of the obstacle runs must shrink along the
    sequence; on the unit disc the LP zones must approach the zone of ``½``
    and match the closed-form shells ``χ(√(1 − μ_m), 1)``.
    (b) On punctured balls ``B1 ∖ B_{2^{−m}}`` with ``μ = ½`` the zones keep
    an inner band and stay a fixed distance from the zone of the ball.
    """
    cfg = cfg or ScenarioConfig()
    n = cfg.resolution(400)
    report = ScenarioReport('stability', {'members': list(members), 'counterexample': list(counterexample),
                                          'n': n, 'lp_n': lp_n})

    geometry, U = _domain('interval', n, 1)

    def run(value: float):
        density = RadialDensity.constant(value, 1)
        shell = targets_1d(density)
        mu_field = density_field(density, geometry, U, 'interval')
        nu_field = rasterize_shell(shell, geometry, U, mu_field.integral(), kind='interval')
        traj = run_obstacle(mu_field, nu_field, U, cfg.obstacle_options())
        return shell, traj, freezing_map(traj)

    limit_shell, limit_traj, limit_map = run(0.5)
    _obstacle_checks(report, 'limit run', limit_traj)
    sigma_diffs, eta_diffs, closed_diffs = [], [], []
    for m in members:
        shell, traj, fmap = run(0.5 + 1.0 / m)
        sigma_diffs.append((fmap.sigma() ^ limit_map.sigma()).measure())
        eta_diffs.append(eta_l1_difference(traj, limit_traj))
        closed_diffs.append(abs(shell.a - limit_shell.a) + abs(shell.b - limit_shell.b))
    report.measured['sigma_differences'] = sigma_diffs
    report.measured['eta_l1_differences'] = eta_diffs
    report.measured['closed_form_differences'] = closed_diffs
    report.check('|Σ_m Δ Σ| decreases', all(x > y for x, y in zip(sigma_diffs, sigma_diffs[1:])),
                 sigma_diffs, 'strictly decreasing', CLOSED_FORM)
    report.check('‖η_m − η‖_L¹ decreases', all(x > y for x, y in zip(eta_diffs, eta_diffs[1:])),
                 eta_diffs, 'strictly decreasing', DIRECT_SOLVE, proxy=True)

    _stability_on_the_disc(report, members, cfg, lp_n)

    half = lambda rho: RadialDensity.constant(0.5, 2, rho=rho)
    ball_sigma = [(1.0 / math.sqrt(2.0), 1.0)]
    limit = targets_annulus(half(0.0), rho=0.0)
    report.measured['punctured_limit_shell'] = limit.to_dict()
    gaps, lp_mismatch = [], []
    for m in counterexample:
        rho = 2.0 ** (-m)
        shell = targets_annulus(half(rho), rho=rho)
        gaps.append(_radial_symdiff(shell.bands(), ball_sigma))
        lp_geometry, lp_U = _domain('annulus', cfg.resolution(lp_n), 2, rho)
        mu_field = density_field(half(rho), lp_geometry, lp_U, 'radial')
        solution, certificate, zone = _solve(mu_field, quadratic(), lp_U, cfg)
        expected = _shell_sigma(shell, lp_geometry, lp_U, 'radial')
        mismatch = (zone.sigma ^ expected).measure()
        tol = 4.0 * lp_geometry.h * _perimeter(shell) + lp_geometry.cell_volume
        lp_mismatch.append(mismatch)
        report.check(f'ρ=2^-{m}: LP Σ matches the two-shell prediction', mismatch <= tol,
                     mismatch, f'<= {tol:.4g}', CLOSED_FORM)
        if m == counterexample[-1]:
            report.artifact('pgm', 'sigma_punctured.pgm', zone.sigma)
    report.measured['counterexample_differences'] = gaps
    report.check('|Σ_m Δ Σ| stays >= 0.1', min(gaps) >= 0.1, gaps, '>= 0.1', CLOSED_FORM)
    limit_gap = _radial_symdiff(limit.bands(), ball_sigma)
    report.measured['limit_difference'] = limit_gap
    report.check('punctured-ball shells differ from the ball zone in the limit', limit_gap >= 0.1,
                 limit_gap, '>= 0.1', CLOSED_FORM)
    return report


# ---------------------------------------------------------------------------
# Initial nucleation
# ---------------------------------------------------------------------------

def scenario_initial_nucleation(n_annuli: int = 3, c: float = 0.5,
                                cfg: Optional[ScenarioConfig] = None) -> ScenarioReport:
    """
    Split a constant density on B1 into annuli ``1/(k+1) < r < 1/k`` and an inner ball.

    Every piece gets its own closed-form target, so the glued potential
    vanishes on the separating circles and ``{w0 > 0}`` has one component
    per piece at time 0.
    """
    cfg = cfg or ScenarioConfig()
    n = cfg.resolution(128)
    report = ScenarioReport('initial_nucleation', {'n_annuli': n_annuli, 'c': c, 'n': n})
    geometry, U = _domain('ball', n)
    r = geometry.radius()
    mu_field = ScalarField(np.where(U.mask, c, 0.0), geometry, support=U, value_cap=1.0, name='mu')
    nu = np.zeros(geometry.shape)
    pieces = []
    for k in range(1, n_annuli + 1):
        outer, inner = 1.0 / k, 1.0 / (k + 1)
        scaled = targets_annulus(RadialDensity.constant(c, 2, rho=inner / outer), rho=inner / outer)
        shell = TargetShell('annulus', 2, inner, outer, outer * scaled.r1, outer * scaled.r2)
        pieces.append((shell, U.mask & (r > inner) & (r < outer)))
    core_radius = 1.0 / (n_annuli + 1)
    scaled = targets_ball(RadialDensity.constant(c, 2))
    pieces.append((TargetShell('ball', 2, 0.0, core_radius, 0.0, core_radius * scaled.r_tilde),
                   U.mask & (r <= core_radius)))

    edges = []
    for shell, mask in pieces:
        piece = CellSet(mask, geometry)
        field_piece = rasterize_shell(shell, geometry, piece, mu_field.integral(piece), kind='radial')
        nu += field_piece.values
        edges.append([shell.r1, shell.r2] if shell.kind == 'annulus' else [0.0, shell.r_tilde])
    report.measured['shell_edges'] = edges
    nu_field = ScalarField(nu, geometry, support=U, value_cap=1.0, name='nu')
    order = check_subharmonic_order(mu_field, nu_field, U, **cfg.potential_kwargs())
    report.check('glued target is admissible', order.verdict, order.min_v, f'>= -{order.tol_v:.3g}', DIRECT_SOLVE)

    v = order.potential.v.values
    positive = geometry.h ** 2
    frozen = 0.125 * geometry.h ** 2
    labels, count = label_components(U.mask & (v > positive), min_cells=3)
    report.measured['components'] = count
    report.check('one positive component per piece', count == n_annuli + 1, count, n_annuli + 1, THEORY, proxy=True)
    circles = {}
    for k in range(2, n_annuli + 2):
        ring = U.mask & (np.abs(r - 1.0 / k) <= geometry.h)
        circles[f'1/{k}'] = float(v[ring].min())
    report.measured['min_v_on_circles'] = circles
    worst = max(circles.values())
    report.check('w0 vanishes on the separating circles', worst <= frozen, worst, f'<= {frozen:.3g}',
                 THEORY, proxy=True)
    report.artifact('pgm', 'w0.pgm', np.where(U.mask, np.maximum(v, 0.0), 0.0))
    report.artifact('csv', 'nu.csv', nu_field)
    return report


# ---------------------------------------------------------------------------
# Monte Carlo and gluing
# ---------------------------------------------------------------------------

def _interval_shell_run(geometry: GridGeometry, U: CellSet, cfg: ScenarioConfig, value: float = 0.5,
                        record_times: Sequence[float] = ()):
    density = RadialDensity.constant(value, 1)
    shell = targets_1d(density)
    mu_field = density_field(density, geometry, U, 'interval')
    nu_field = rasterize_shell(shell, geometry, U, mu_field.integral(), kind='interval')
    traj = run_obstacle(mu_field, nu_field, U, cfg.obstacle_options(), record_times=record_times)
    return mu_field, nu_field, traj


def band_field(geometry: GridGeometry, U: CellSet, bands: Sequence[Tuple[float, float]]) -> ScalarField:
    """Exact cell coverage of a union of intervals."""
    x = geometry.axis_centers(0)
    h = geometry.h
    cover = np.zeros(x.shape)
    for lo, hi in bands:
        cover += np.clip(np.minimum(x + 0.5 * h, hi) - np.maximum(x - 0.5 * h, lo), 0.0, None)
    return ScalarField(np.where(U.mask, np.clip(cover / h, 0.0, 1.0), 0.0), geometry, support=U,
                       value_cap=1.0, name='nu')


def scenario_monte_carlo(cfg: Optional[ScenarioConfig] = None, exit_dt: float = 1e-4) -> ScenarioReport:
    """
    Brownian checks of the barrier on the interval with ``μ = ½``.

    Exit-time sanity, the stopped law against the shell target, the
    expected stopping time against ``2∫w0/‖μ‖``, mass outside the zone,
    determinism across thread counts and the maximality audit against a
    three-band target.
    """
    cfg = cfg or ScenarioConfig()
    n = cfg.resolution(100)
    paths = cfg.paths
    report = ScenarioReport('monte_carlo', {'n': n, 'paths': paths, **cfg.stream_key(),
                                            'mc_dt': cfg.mc_dt, 'exit_dt': exit_dt})
    mc = cfg.mc_kwargs()

    batch = exit_time_batch(paths, dt=exit_dt, seed=cfg.seed, **mc)
    tol = exit_time_tolerance(batch)
    report.measured['exit_time'] = batch.summary()
    report.check('exit time from ½', abs(batch.mean_tau - 0.25) <= tol, batch.mean_tau,
                 f'0.25 ± {tol:.4g}', MONTE_CARLO)

    geometry, U = _domain('interval', n, 1)
    mu_field, nu_field, traj = _interval_shell_run(geometry, U, cfg)
    fmap = freezing_map(traj)
    _obstacle_checks(report, 'shell run', traj)
    barrier = Barrier.from_trajectory(traj)
    batch = sample_hitting(mu_field, barrier, paths, dt=cfg.mc_dt, seed=cfg.seed, **mc)
    report.measured['shell_batch'] = batch.summary()
    report.check('batch not flagged', not batch.flagged, batch.unstopped, f'<= {int(1e-3 * paths)}', MONTE_CARLO)

    distance = law_distance(batch, nu_field)
    report.measured['stopped_law'] = distance
    report.check('stopped law matches the shell target', distance['distance'] <= distance['bound'],
                 distance['distance'], f"<= {distance['bound']:.4g}", MONTE_CARLO)
    report.artifact('csv', 'stopped_histogram.csv', batch.stopped_histogram())

    expected_tau = 2.0 * traj.integral_w0 / mu_field.integral()
    allowance = 3.0 * batch.stderr_tau + OVERSHOOT * math.sqrt(batch.dt) + 5.0 * geometry.h * expected_tau
    report.check('E[τ] = 2∫w0/‖μ‖', abs(batch.mean_tau - expected_tau) <= allowance,
                 batch.mean_tau, f'{expected_tau:.5g} ± {allowance:.3g}', OCCUPATION)

    outside = mass_outside(batch, fmap)
    p_tol = 0.01 + 3.0 * math.sqrt(max(outside * (1.0 - outside), 1e-12) / paths)
    report.check('stopped mass concentrates on Σ ∪ F0', outside <= p_tol, outside, f'<= {p_tol:.4g}', MONTE_CARLO)

    small = min(paths, 8192)
    runs = []
    for threads in (1, 4):
        kwargs = dict(mc, processor=ParallelProcessor(threads), chunk_size=min(cfg.chunk_size, 2048))
        runs.append(sample_hitting(mu_field, barrier, small, dt=cfg.mc_dt, seed=cfg.seed, **kwargs))
    same = bool(np.array_equal(runs[0].tau, runs[1].tau) and np.array_equal(runs[0].positions, runs[1].positions))
    report.check('bit-identical across thread counts', same, same, True, TRIVIAL)

    weight = quadratic((0.5,), 1)
    occupation = weighted_occupation(runs[0], weight.laplacian)
    quad = occupation_quadrature(traj, weight.laplacian, runs[0].mass)
    occ_tol = 3.0 * occupation['stderr'] + 2.0 * OVERSHOOT * math.sqrt(runs[0].dt) + 5.0 * geometry.h * quad
    report.measured['weighted_occupation'] = {**occupation, 'quadrature': quad}
    report.check('weighted occupation against the grid quadrature', abs(occupation['estimate'] - quad) <= occ_tol,
                 occupation['estimate'], f'{quad:.5g} ± {occ_tol:.3g}', OCCUPATION)

    alternative = band_field(geometry, U, [(0.0, 0.125), (0.375, 0.625), (0.875, 1.0)])
    traj_alt = run_obstacle(mu_field, alternative, U, cfg.obstacle_options())
    audit = maximality_audit(mu_field, traj, traj_alt, weight.laplacian, max(paths // 10, 2000),
                             dt=cfg.mc_dt, seed=cfg.seed, **mc)
    report.measured['maximality_audit'] = audit
    report.check('maximal target maximizes the weighted occupation', audit['passed'],
                 audit['maximal']['estimate'], f">= {audit['alternative']['estimate']:.5g} − {audit['margin']:.3g}",
                 MONTE_CARLO)
    return report


def scenario_gluing_1d(t1: float = 0.01, cfg: Optional[ScenarioConfig] = None) -> ScenarioReport:
    """
    Glue the shell run at ``t1`` with the maximal continuation of its temperature.

    The continuation solves, on each interval of ``{s0 > t1}``, the
    interval problem for ``η0(t1)``. The glued potential is compared with
    a direct run for the glued target, and the glued stopping rule is
    simulated against that target.
    """
    cfg = cfg or ScenarioConfig()
    n = cfg.resolution(100)
    report = ScenarioReport('gluing_1d', {'t1': t1, 'n': n, 'paths': cfg.paths, **cfg.stream_key()})
    geometry, U = _domain('interval', n, 1)
    options = cfg.obstacle_options()
    dt = options.dt or 0.5 * geometry.h ** 2
    t1 = dt * max(1, round(t1 / dt))
    mu_field, nu_field, traj0 = _interval_shell_run(geometry, U, cfg, record_times=[t1])
    recorded = traj0.recorded[min(traj0.recorded, key=lambda t: abs(t - t1))]
    t1 = float(recorded['t'])
    map0 = freezing_map(traj0)
    alive = U.mask & (map0.s > t1)
    eta = np.where(alive, np.clip(recorded['eta'], 0.0, 1.0), 0.0)

    labels, count = label_components(alive)
    nu1_tilde = np.zeros(geometry.shape)
    x_edges = geometry.origin[0] + geometry.h * np.arange(geometry.shape[0] + 1)
    intervals = []
    for label in range(1, count + 1):
        cells = np.flatnonzero(labels == label)
        lo, hi = x_edges[cells[0]], x_edges[cells[-1] + 1]
        density = RadialDensity.from_cells(x_edges[cells[0]:cells[-1] + 2], eta[cells], 1, rho=lo, outer=hi)
        shell = targets_1d(density, (lo, hi))
        piece = CellSet(labels == label, geometry)
        mass = float(eta[cells].sum() * geometry.h)
        nu1_tilde += rasterize_shell(shell, geometry, piece, mass, kind='interval').values
        intervals.append(shell.to_dict())
    report.measured['continuation_intervals'] = intervals

    alive_set = CellSet(alive, geometry)
    mu1 = ScalarField(eta, geometry, support=alive_set, value_cap=1.0, name='eta_t1')
    traj1 = run_obstacle(mu1, ScalarField(nu1_tilde, geometry, support=alive_set, value_cap=1.0),
                         alive_set, options)
    nu1 = nu1_tilde + nu_field.values * (U.mask & (map0.s <= t1))
    nu1_field = ScalarField(np.clip(nu1, 0.0, 1.0), geometry, support=U, value_cap=1.0, name='nu1')
    direct = run_obstacle(mu_field, nu1_field, U, options)
    glued = glue_trajectories(traj0, t1, traj1, nu1_tilde=nu1_tilde, direct=direct)
    report.measured['gluing'] = glued.report
    scale = float(traj0.w0.max())
    tol = 5.0 * (geometry.h + dt) * scale
    report.check('glued potential matches the direct run', glued.report['potential_sup_difference'] <= tol,
                 glued.report['potential_sup_difference'], f'<= {tol:.3g}', DIRECT_SOLVE)
    for label, traj in (('base run', traj0), ('continuation', traj1), ('direct run', direct)):
        _obstacle_checks(report, label, traj)

    experiment = gluing_experiment(mu_field, traj0, t1, traj1, nu1_field, cfg.paths, seed=cfg.seed,
                                   dt=cfg.mc_dt, **cfg.mc_kwargs())
    report.measured['experiment'] = experiment
    report.check('glued stopping rule embeds the glued target', experiment['passed'], experiment['distance'],
                 f"<= {experiment['bound']:.4g}", MONTE_CARLO)
    report.artifact('csv', 'glued_freezing_map.csv', glued.freezing_map())
    return report


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioEntry:
    name: str
    func: Callable[..., ScenarioReport]
    description: str
    defaults: Dict[str, Any] = field(default_factory=dict)


SCENARIOS: Dict[str, ScenarioEntry] = {
    entry.name: entry for entry in (
        ScenarioEntry('radial', scenario_radial, 'ball, μ = ½: LP zone vs closed-form shell, obstacle at n=48'),
        ScenarioEntry('radial_annulus', scenario_radial, 'annulus ρ = ½, μ = ½: two-shell target',
                      {'domain': 'annulus'}),
        ScenarioEntry('radial_subcritical', scenario_radial, 'ball, μ = ¾: monotone freezing, no nucleation',
                      {'mu': 'three_quarters'}),
        ScenarioEntry('non_universality', scenario_non_universality, 'quartic weight, ε = 0.01'),
        ScenarioEntry('fourier', scenario_fourier, 'k = 7 angular mode: waiting-time band outside Σ'),
        ScenarioEntry('fourier_k1', scenario_fourier, 'k = 1 control mode: the outer band stays inside Σ',
                      {'k': 1, 'delta0': 0.1}),
        ScenarioEntry('fourier_series', scenario_fourier, 'e^{-√k} cos kθ series on the annulus, audited at k = 7',
                      {'mode': 'series', 'domain': 'annulus', 'delta0': 0.2, 'k': 7}),
        ScenarioEntry('nucleation_1d', scenario_nucleation_1d, 'quartic interval density: non-monotone s'),
        ScenarioEntry('fractal_freezing', scenario_fractal_freezing, 'square with a midline F, T = 0 and 0.05'),
        ScenarioEntry('stability', scenario_stability, 'convergent data on the interval and B1, punctured-ball counterexample'),
        ScenarioEntry('initial_nucleation', scenario_initial_nucleation, 'three annuli and a core: split at t = 0'),
        ScenarioEntry('monte_carlo', scenario_monte_carlo, 'exit time, stopped law, determinism, maximality'),
        ScenarioEntry('gluing_1d', scenario_gluing_1d, 'glue at t1 = 0.01 against a direct run and paths'),
    )
}


def run_scenario(name: str, cfg: Optional[ScenarioConfig] = None, **params) -> ScenarioReport:
    """
    Run a registered scenario.

    Raises:
        ConfigurationError: For unknown scenario names
    """
    if name not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario '{name}'; expected one of {sorted(SCENARIOS)}")
    entry = SCENARIOS[name]
    kwargs = {**entry.defaults, **params}
    start = time.time()
    report = entry.func(cfg=cfg, **kwargs)
    report.scenario = name
    report.elapsed = time.time() - start
    return report
