"""
Discrete primal problem ``min ∫u dν`` over admissible targets, its dual,
transition-zone extraction and harmonic moment audits.

The primal polytope couples ν and v through the exact discrete Laplacian:

    unknowns  w = v/h² on I (cells of U whose neighbours are all in U), ν on U
    rows      (h²Δ_h w)_i - ν_i = -μ_i        for every i in U
    bounds    w >= 0,  0 <= ν <= 1

Every entry of the constraint matrix is O(1) and costs are ``u`` (not
``h^d u``); the reported objectives carry the ``h^d`` factor. The row
multiplier is the dual variable ``ψ`` on U with ``Δ_h ψ >= 0`` on I and
objective ``h^d [Σ ψμ - Σ (ψ - u)⁺]``.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as splinalg
from scipy.optimize import linprog

from ..utils.logger import get_logger
from .errors import DomainError, InfeasibleProblemError, SolverError
from .grid import CellSet, ScalarField, interior_cells, boundary_cells
from .potential import PotentialField, apply_laplacian, laplacian
from .weights import WeightSpec

logger = get_logger('primal_dual')

BACKENDS = ('pdhg', 'highs', 'highs-ds')
_HIGHS_METHODS = {'highs': 'highs-ipm', 'highs-ds': 'highs-ds'}


@dataclass
class SolverOptions:
    """Knobs of :func:`solve_primal_dual`."""
    backend: str = 'pdhg'
    gap_tol: float = 1e-6
    max_iters: int = 200000
    feas_tol: float = 1e-8
    ambiguity_flag: float = 0.05
    check_every: int = 500
    slack_delta: Optional[float] = None

    @classmethod
    def from_settings(cls, solver_config: Dict) -> 'SolverOptions':
        return cls(
            backend=solver_config.get('backend', 'pdhg'),
            gap_tol=solver_config.get('gap_tol', 1e-6),
            max_iters=solver_config.get('max_iters', 200000),
            feas_tol=solver_config.get('feas_tol', 1e-8),
            ambiguity_flag=solver_config.get('ambiguity_flag', 0.05),
            check_every=solver_config.get('pdhg_check_every', 500),
        )


@dataclass
class PrimalSolution:
    """Optimal (or flagged partial) target and its potential."""
    nu: ScalarField
    potential: PotentialField
    objective: float
    binarity_defect: float
    mass_error: float
    constraint_residual: float
    converged: bool
    iterations: int
    backend: str

    @property
    def v(self) -> ScalarField:
        return self.potential.v


@dataclass
class DualCertificate:
    """Projected dual ``ψ >= 0`` and the duality gap it certifies."""
    psi: ScalarField
    objective: float
    gap: float
    relative_gap: float
    subharmonic_violation: float
    l1_norm: float
    l1_bound: Optional[float] = None

    @property
    def certified(self) -> bool:
        return self.gap >= -1e-12 * max(1.0, abs(self.objective))


@dataclass
class _Problem:
    mu: ScalarField
    u_values: np.ndarray
    U: CellSet
    I: CellSet
    u_idx: np.ndarray
    i_idx: np.ndarray
    K: sparse.csr_matrix
    b: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def _build_problem(mu: ScalarField, u_values: np.ndarray, U: CellSet) -> _Problem:
    geometry = mu.geometry
    I = interior_cells(U)
    flat_u = U.mask.ravel()
    flat_i = I.mask.ravel()
    u_idx = np.flatnonzero(flat_u)
    i_idx = np.flatnonzero(flat_i)
    h2 = geometry.h ** 2

    stencil = (laplacian(geometry)[u_idx][:, i_idx] * h2).tocsr()
    K = sparse.hstack([stencil, -sparse.identity(u_idx.size, format='csr')], format='csr')
    b = -mu.values.ravel()[u_idx]
    c = np.concatenate([np.zeros(i_idx.size), u_values.ravel()[u_idx]])
    lower = np.zeros(i_idx.size + u_idx.size)
    upper = np.concatenate([np.full(i_idx.size, np.inf), np.ones(u_idx.size)])
    return _Problem(mu, u_values, U, I, u_idx, i_idx, K, b, c, lower, upper)


def _resolve_weight(weight: Union[WeightSpec, ScalarField, np.ndarray], mu: ScalarField,
                    U: CellSet) -> np.ndarray:
    if isinstance(weight, WeightSpec):
        weight.validate(mu.geometry, U)
        return weight.sample(mu.geometry).values
    values = weight.values if isinstance(weight, ScalarField) else np.asarray(weight, dtype=float)
    if values.shape != mu.geometry.shape:
        raise DomainError("weight field does not match the grid")
    if values[U.mask].min() <= 0.0:
        raise DomainError("weight must be positive on U")
    return values


def solve_primal_dual(mu: ScalarField, weight: Union[WeightSpec, ScalarField, np.ndarray], U: CellSet,
                      options: Optional[SolverOptions] = None) -> Tuple[PrimalSolution, DualCertificate]:
    """
    Minimize ``∫u dν`` over admissible targets and certify with the dual.

    Args:
        mu: Source density, supported in U, ``0 <= μ``
        weight: Strictly superharmonic weight (validated) or a positive field
        U: Domain cells
        options: Backend and tolerances

    Returns:
        Primal solution and dual certificate

    Raises:
        InfeasibleProblemError: If no admissible target exists; ``direction``
            carries a dual ray when one is known
        SolverError: If the backend returns no iterate
    """
    options = options or SolverOptions()
    if options.backend not in BACKENDS:
        raise DomainError(f"unknown solver backend '{options.backend}'; expected one of {BACKENDS}")
    geometry = mu.geometry
    if np.abs(mu.values[~U.mask]).max(initial=0.0) > 1e-12:
        raise DomainError("source density is not supported in U")
    if mu.values.min() < -1e-12:
        raise DomainError("source density is negative somewhere")

    capacity = U.measure()
    mass = mu.integral()
    if mass > capacity * (1.0 + 1e-12):
        direction = ScalarField(U.mask.astype(float), geometry, name='psi')
        raise InfeasibleProblemError(
            f"source mass {mass:.6g} exceeds |U| = {capacity:.6g}; ψ ≡ 1 is an unbounded dual direction",
            direction=direction)

    u_values = _resolve_weight(weight, mu, U)
    problem = _build_problem(mu, u_values, U)
    logger.info(f"🧮 Primal problem: {problem.i_idx.size} potential and {problem.u_idx.size} target unknowns "
                f"({options.backend})")

    if options.backend == 'pdhg':
        x, psi_u, iterations, converged = _solve_pdhg(problem, options)
    else:
        x, y_highs, iterations, converged = _solve_highs(problem, options)
        psi_u = -y_highs

    solution = _primal_from_vector(problem, x, iterations, converged, options.backend)
    certificate = _certificate(problem, psi_u, solution, options)
    if not converged:
        logger.warning(f"⚠️  Solver stopped before convergence after {iterations} iterations "
                       f"(gap {certificate.relative_gap:.2e})")
    else:
        logger.info(f"✅ Converged: P={solution.objective:.10g}, D={certificate.objective:.10g}, "
                    f"relative gap {certificate.relative_gap:.2e}")
    return solution, certificate


def _solve_highs(problem: _Problem, options: SolverOptions):
    method = _HIGHS_METHODS[options.backend]
    bounds = np.column_stack([problem.lower, problem.upper])
    highs_options = {
        'primal_feasibility_tolerance': max(options.feas_tol, 1e-10),
        'dual_feasibility_tolerance': max(options.feas_tol, 1e-10),
        'presolve': True,
    }
    if method == 'highs-ipm':
        highs_options['ipm_optimality_tolerance'] = max(min(options.gap_tol, 1e-8), 1e-12)
    result = linprog(problem.c, A_eq=problem.K, b_eq=problem.b, bounds=bounds,
                     method=method, options=highs_options)

    if result.status == 2:
        raise InfeasibleProblemError(f"primal problem infeasible: {result.message}")
    if result.x is None or result.eqlin is None:
        raise SolverError(f"HiGHS returned no iterate (status {result.status}): {result.message}")
    iterations = int(getattr(result, 'nit', 0) or 0)
    converged = result.status == 0
    return result.x, np.asarray(result.eqlin.marginals), iterations, converged


_STEP_SAFETY = 0.95
_RESTART_SUFFICIENT = 0.2
_RESTART_NECESSARY = 0.8
_RESTART_ARTIFICIAL = 0.36


@dataclass
class _Residuals:
    primal: float
    dual: float
    gap: float

    @property
    def error(self) -> float:
        return float(np.sqrt(self.primal ** 2 + self.dual ** 2 + self.gap ** 2))

    def satisfied(self, options: SolverOptions) -> bool:
        return (self.primal <= 100.0 * options.feas_tol and self.dual <= 100.0 * options.feas_tol
                and abs(self.gap) <= options.gap_tol)


def _residuals(problem: _Problem, KT: sparse.csr_matrix, x: np.ndarray, y: np.ndarray) -> _Residuals:
    """Row residual, ``Δ_h ψ >= 0`` violation (h²-scaled) and relative gap."""
    psi = np.maximum(y, 0.0)
    n_v = problem.i_idx.size
    primal = float(np.abs(problem.K @ x - problem.b).max(initial=0.0))
    dual = float(max(0.0, -(KT @ psi)[:n_v].min(initial=0.0)))
    return _Residuals(primal, dual, _relative_gap(problem, x, psi))


def _operator_norm_bound(K: sparse.csr_matrix) -> float:
    """``sqrt(‖K‖₁ ‖K‖∞)`` bounds the spectral norm from above."""
    return float(np.sqrt(splinalg.norm(K, 1) * splinalg.norm(K, np.inf)))


def _rebalance(omega: float, dx: np.ndarray, dy: np.ndarray) -> float:
    primal_move = float(np.linalg.norm(dx))
    dual_move = float(np.linalg.norm(dy))
    if primal_move < 1e-10 or dual_move < 1e-10:
        return omega
    return float(np.exp(0.5 * np.log(dual_move / primal_move) + 0.5 * np.log(omega)))


def _solve_pdhg(problem: _Problem, options: SolverOptions):
    """
    Restarted primal-dual hybrid gradient iteration for the saddle point
    ``min_x max_y c·x + y·(Kx - b)`` with ``ψ = y``.

    Steps are ``τ = η/ω`` and ``σ = ηω`` with ``η < 1/‖K‖``, so
    ``στ‖K‖² < 1`` holds for every primal weight ``ω``. Every
    ``check_every`` iterations the better of the current and the averaged
    iterate is tested for convergence; it becomes the restart point when
    its KKT error has dropped far enough, and ``ω`` is rebalanced from the
    primal and dual distances travelled since the previous restart.

    Returns:
        Primal vector, ψ on U, iterations and convergence flag
    """
    K, b, c = problem.K, problem.b, problem.c
    KT = K.T.tocsr()
    eta = _STEP_SAFETY / max(_operator_norm_bound(K), 1e-30)
    c_norm, b_norm = float(np.linalg.norm(c)), float(np.linalg.norm(b))
    omega = c_norm / b_norm if c_norm > 0.0 and b_norm > 0.0 else 1.0

    n_v = problem.i_idx.size
    x = np.zeros(K.shape[1])
    x[n_v:] = np.clip(-b, 0.0, 1.0)
    y = np.zeros(K.shape[0])
    anchor_x, anchor_y = x.copy(), y.copy()
    anchor = _residuals(problem, KT, x, y)
    previous = anchor
    x_sum, y_sum = np.zeros_like(x), np.zeros_like(y)
    inner = 0
    converged = False
    iterations = 0
    for iterations in range(1, options.max_iters + 1):
        tau, sigma = eta / omega, eta * omega
        x_new = np.clip(x - tau * (c + KT @ y), problem.lower, problem.upper)
        y = y + sigma * (K @ (2.0 * x_new - x) - b)
        x = x_new
        x_sum += x
        y_sum += y
        inner += 1
        if iterations % options.check_every:
            continue

        x_avg, y_avg = x_sum / inner, y_sum / inner
        current = _residuals(problem, KT, x, y)
        averaged = _residuals(problem, KT, x_avg, y_avg)
        if averaged.error < current.error:
            cand_x, cand_y, cand = x_avg, y_avg, averaged
        else:
            cand_x, cand_y, cand = x.copy(), y.copy(), current
        logger.debug(f"PDHG {iterations}: residual {cand.primal:.2e}, dual {cand.dual:.2e}, "
                     f"gap {cand.gap:.2e}, ω {omega:.3g}")
        if cand.satisfied(options):
            x, y, converged = cand_x, cand_y, True
            break

        restart = (cand.error <= _RESTART_SUFFICIENT * anchor.error
                   or (cand.error <= _RESTART_NECESSARY * anchor.error and cand.error > previous.error)
                   or inner >= _RESTART_ARTIFICIAL * iterations)
        previous = cand
        if restart:
            omega = _rebalance(omega, cand_x - anchor_x, cand_y - anchor_y)
            x, y = cand_x, cand_y
            anchor_x, anchor_y, anchor = x.copy(), y.copy(), cand
            x_sum[:] = 0.0
            y_sum[:] = 0.0
            inner = 0
    return x, y, iterations, converged


def _relative_gap(problem: _Problem, x: np.ndarray, psi_u: np.ndarray) -> float:
    n_v = problem.i_idx.size
    cell_volume = problem.mu.geometry.cell_volume
    u = problem.u_values.ravel()[problem.u_idx]
    mu = problem.mu.values.ravel()[problem.u_idx]
    primal = cell_volume * float(u @ x[n_v:])
    psi = np.maximum(psi_u, 0.0)
    dual = cell_volume * float(psi @ mu - np.maximum(psi - u, 0.0).sum())
    return (primal - dual) / max(1.0, abs(primal))


def _primal_from_vector(problem: _Problem, x: np.ndarray, iterations: int, converged: bool,
                        backend: str) -> PrimalSolution:
    geometry = problem.mu.geometry
    n_v = problem.i_idx.size
    v = np.zeros(geometry.size)
    v[problem.i_idx] = geometry.h ** 2 * np.maximum(x[:n_v], 0.0)
    nu = np.zeros(geometry.size)
    nu[problem.u_idx] = np.clip(x[n_v:], 0.0, 1.0)
    v = v.reshape(geometry.shape)
    nu = nu.reshape(geometry.shape)

    residual_vec = apply_laplacian(v, geometry.h) - (nu - problem.mu.values)
    constraint_residual = float(np.abs(residual_vec).max())
    cell_volume = geometry.cell_volume
    potential = PotentialField(
        v=ScalarField(v, geometry, name='v'),
        boundary_residual=0.0,
        solver_residual=constraint_residual,
        iterations=iterations,
        converged=converged,
    )
    nu_field = ScalarField(nu, geometry, support=problem.U, value_cap=1.0, name='nu')
    return PrimalSolution(
        nu=nu_field,
        potential=potential,
        objective=cell_volume * float((problem.u_values * nu)[problem.U.mask].sum()),
        binarity_defect=cell_volume * float(np.minimum(nu, 1.0 - nu)[problem.U.mask].sum()),
        mass_error=nu_field.integral() - problem.mu.integral(),
        constraint_residual=constraint_residual,
        converged=converged,
        iterations=iterations,
        backend=backend,
    )


def _certificate(problem: _Problem, psi_u: np.ndarray, solution: PrimalSolution,
                 options: SolverOptions) -> DualCertificate:
    geometry = problem.mu.geometry
    psi = np.zeros(geometry.size)
    psi[problem.u_idx] = np.maximum(psi_u, 0.0)
    psi = psi.reshape(geometry.shape)

    u = problem.u_values
    mask = problem.U.mask
    cell_volume = geometry.cell_volume
    dual = cell_volume * float((psi * problem.mu.values)[mask].sum() - np.maximum(psi - u, 0.0)[mask].sum())
    gap = solution.objective - dual
    lap_psi = apply_laplacian(psi, geometry.h)
    violation = float(max(0.0, -(lap_psi[problem.I.mask].min(initial=0.0)) * geometry.h ** 2))
    l1 = cell_volume * float(psi[mask].sum())
    l1_bound = None
    if options.slack_delta:
        l1_bound = cell_volume * float(np.abs(u[mask]).sum()) / options.slack_delta
    return DualCertificate(
        psi=ScalarField(psi, geometry, support=problem.U, name='psi'),
        objective=dual,
        gap=gap,
        relative_gap=gap / max(1.0, abs(solution.objective)),
        subharmonic_violation=violation,
        l1_norm=l1,
        l1_bound=l1_bound,
    )


# ---------------------------------------------------------------------------
# Transition zone
# ---------------------------------------------------------------------------

@dataclass
class SaturationScreen:
    """Cell-scale checks that Σ has no cracks and reaches ∂U."""
    holes_filled: int
    isolated_removed: int
    boundary_cells: int
    boundary_cells_near_sigma: int

    @property
    def boundary_ok(self) -> bool:
        return self.boundary_cells_near_sigma == self.boundary_cells

    def to_dict(self) -> dict:
        return {'holes_filled': self.holes_filled, 'isolated_removed': self.isolated_removed,
                'boundary_cells': self.boundary_cells,
                'boundary_cells_near_sigma': self.boundary_cells_near_sigma,
                'boundary_ok': self.boundary_ok}


@dataclass
class TransitionZone:
    """Σ from the primal threshold, reconciled with the dual set ``{ψ > u}``."""
    sigma: CellSet
    sigma_dual: CellSet
    ambiguity: float
    ambiguity_fraction: float
    flagged: bool
    screen: SaturationScreen

    def to_dict(self) -> dict:
        return {'measure': self.sigma.measure(), 'dual_measure': self.sigma_dual.measure(),
                'ambiguity': self.ambiguity, 'ambiguity_fraction': self.ambiguity_fraction,
                'flagged': self.flagged, 'screen': self.screen.to_dict()}


def saturation_screen(sigma: np.ndarray, U: CellSet, radius: int = 3) -> Tuple[np.ndarray, SaturationScreen]:
    """
    Repair single-cell cracks in Σ and check it reaches every boundary cell.

    Excluded U cells whose face neighbours are all in Σ are filled; Σ cells
    with no Σ face neighbour are removed. Every ∂U cell must then have a Σ
    cell within ``radius`` cells.
    """
    structure = ndimage.generate_binary_structure(sigma.ndim, 1)
    sigma = sigma & U.mask
    neighbours = ndimage.convolve(sigma.astype(np.int32), structure.astype(np.int32), mode='constant') - sigma
    degree = 2 * sigma.ndim
    holes = U.mask & ~sigma & (neighbours == degree)
    isolated = sigma & (neighbours == 0)
    repaired = (sigma | holes) & ~isolated

    boundary = boundary_cells(U).mask
    ball = ndimage.iterate_structure(structure, radius)
    near = ndimage.binary_dilation(repaired, structure=ball)
    screen = SaturationScreen(
        holes_filled=int(holes.sum()),
        isolated_removed=int(isolated.sum()),
        boundary_cells=int(boundary.sum()),
        boundary_cells_near_sigma=int((boundary & near).sum()),
    )
    return repaired, screen


def extract_transition_zone(solution: PrimalSolution, certificate: DualCertificate,
                            weight: Union[WeightSpec, ScalarField, np.ndarray], U: CellSet,
                            ambiguity_flag: float = 0.05) -> TransitionZone:
    """
    Σ = {ν > ½} after the saturation screen, compared with {ψ > u}.

    The symmetric difference is reported as the ambiguity measure and
    flagged when it exceeds ``ambiguity_flag · |Σ|``.
    """
    geometry = solution.nu.geometry
    if isinstance(weight, WeightSpec):
        u = weight.sample(geometry).values
    else:
        u = weight.values if isinstance(weight, ScalarField) else np.asarray(weight)

    primal = (solution.nu.values > 0.5) & U.mask
    sigma, screen = saturation_screen(primal, U)
    psi = certificate.psi.values
    scale = max(1.0, float(np.abs(u[U.mask]).max()))
    dual = (psi - u > 1e-9 * scale) & U.mask

    sigma_set = CellSet(sigma, geometry)
    dual_set = CellSet(dual, geometry)
    ambiguity = (sigma_set ^ dual_set).measure()
    fraction = ambiguity / max(sigma_set.measure(), geometry.cell_volume)
    flagged = fraction > ambiguity_flag
    if flagged:
        logger.warning(f"⚠️  Primal and dual transition zones disagree on {100 * fraction:.1f}% of |Σ|")
    if screen.holes_filled or screen.isolated_removed:
        logger.info(f"🧹 Saturation screen filled {screen.holes_filled} and removed {screen.isolated_removed} cells")
    return TransitionZone(sigma_set, dual_set, ambiguity, fraction, flagged, screen)


# ---------------------------------------------------------------------------
# Harmonic moments
# ---------------------------------------------------------------------------

Harmonic = Union[str, Tuple[str, int], Callable[..., np.ndarray]]


def harmonic_function(spec: Harmonic, center: Sequence[float] = (0.0, 0.0)) -> Tuple[str, Callable]:
    """Name and callable for ``'one'``, ``'x'``, ``('cos', k)`` or ``('sin', k)``."""
    if callable(spec):
        return getattr(spec, '__name__', 'custom'), spec
    if spec == 'one':
        return 'one', lambda *c: np.ones_like(c[0])
    if spec == 'x':
        return 'x', lambda *c: c[0] - center[0]
    kind, k = spec
    if kind not in ('cos', 'sin'):
        raise ValueError(f"unknown harmonic {spec!r}")

    def func(x, y, k=k, kind=kind):
        z = ((x - center[0]) + 1j * (y - center[1])) ** k
        return z.real if kind == 'cos' else z.imag
    return f'r^{k} {kind}({k}θ)', func


def moment_audit(sigma: CellSet, mu: ScalarField, harmonics: Sequence[Harmonic],
                 center: Sequence[float] = (0.0, 0.0)) -> List[Dict[str, float]]:
    """
    ``∫_Σ h − ∫ h dμ`` for each harmonic ``h``.

    Both sides use 3-point Gauss cell averages of ``h``.
    """
    geometry = mu.geometry
    rows = []
    for spec in harmonics:
        name, func = harmonic_function(spec, center)
        h_avg = ScalarField.from_function(geometry, func, quadrature='gauss').values
        sigma_side = float(h_avg[sigma.mask].sum() * geometry.cell_volume)
        mu_side = float((h_avg * mu.values).sum() * geometry.cell_volume)
        rows.append({'harmonic': name, 'sigma_side': sigma_side, 'mu_side': mu_side,
                     'residual': sigma_side - mu_side})
    return rows
