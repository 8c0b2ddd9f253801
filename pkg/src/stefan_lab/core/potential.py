"""
Discrete Laplacian, Newtonian potential on the padded box, subharmonic
order verification and the Green identity residual.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded
from scipy.sparse.linalg import cg

from ..utils.logger import get_logger
from .errors import MassMismatchError, NotSubharmonicError, SolverError
from .grid import CellSet, GridGeometry, NullSet, ScalarField

logger = get_logger('potential')

SUBHARMONIC_TOL_FACTOR = 10.0


@dataclass
class PotentialField:
    """Solution of ``Δ_h v = f`` with zero Dirichlet data on the box."""
    v: ScalarField
    boundary_residual: float
    solver_residual: float
    iterations: int
    converged: bool


@dataclass
class SubharmonicReport:
    """Outcome of the potential test for ``μ <=_SH ν`` on U."""
    min_v: float
    argmin: Tuple[int, ...]
    max_outside: float
    tol_v: float
    verdict: bool
    mass_mu: float
    mass_nu: float
    potential: PotentialField

    def to_dict(self) -> dict:
        return {
            'min_v': self.min_v,
            'argmin': list(self.argmin),
            'max_outside': self.max_outside,
            'tol_v': self.tol_v,
            'verdict': self.verdict,
            'mass_mu': self.mass_mu,
            'mass_nu': self.mass_nu,
            'boundary_residual': self.potential.boundary_residual,
        }


def laplacian(geometry: GridGeometry, blocked: Optional[NullSet] = None) -> sparse.csr_matrix:
    """Cell-centred 3/5-point Laplacian with zero ghost values beyond the box.

    A blocked face acts as a zero-Dirichlet wall half a cell away: the
    coupling across it is dropped and both diagonals lose another 1/h².
    Unknowns are flattened in C order.
    """
    h2 = geometry.h ** 2
    ones = [np.ones(m) for m in geometry.shape]
    second = [sparse.diags([o[:-1], -2.0 * o, o[:-1]], [-1, 0, 1], format='csr') / h2 for o in ones]
    if geometry.dim == 1:
        L = second[0]
    else:
        eye = [sparse.identity(m, format='csr') for m in geometry.shape]
        L = sparse.kron(second[0], eye[1]) + sparse.kron(eye[0], second[1])

    if blocked is not None and not blocked.is_empty():
        L = L.tocsr() + _wall_correction(geometry, blocked)
    return L.tocsr()


def _wall_correction(geometry: GridGeometry, blocked: NullSet) -> sparse.csr_matrix:
    h2 = geometry.h ** 2
    flat = np.arange(geometry.size).reshape(geometry.shape)
    rows, cols, vals = [], [], []
    for axis, face in enumerate(blocked.faces):
        lo = [slice(None)] * geometry.dim
        hi = [slice(None)] * geometry.dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        p = flat[tuple(lo)][face]
        q = flat[tuple(hi)][face]
        rows.extend([p, q, p, q])
        cols.extend([q, p, p, q])
        vals.extend([np.full(p.size, -1.0 / h2)] * 4)
    return sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(geometry.size, geometry.size)).tocsr()


def apply_laplacian(values: np.ndarray, h: float, ghost: str = 'zero') -> np.ndarray:
    """Matrix-free Δ_h on a box array.

    ``ghost='zero'`` matches :func:`laplacian`; ``'linear'`` extrapolates
    one ghost layer linearly, which suits smooth test functions.
    """
    mode = 'constant' if ghost == 'zero' else 'linear'
    padded = _pad_ghost(values, mode)
    core = (slice(1, -1),) * values.ndim
    out = -2.0 * values.ndim * values
    for axis in range(values.ndim):
        for shift in (1, -1):
            out = out + np.roll(padded, shift, axis=axis)[core]
    return out / h ** 2


def _pad_ghost(values: np.ndarray, mode: str) -> np.ndarray:
    padded = np.pad(values, 1, mode='constant', constant_values=0.0)
    if mode == 'linear':
        for axis in range(values.ndim):
            first = [slice(1, -1)] * values.ndim
            second = [slice(1, -1)] * values.ndim
            ghost = [slice(1, -1)] * values.ndim
            for g, f, s in ((0, 1, 2), (-1, -2, -3)):
                first[axis], second[axis], ghost[axis] = f, s, g
                padded[tuple(ghost)] = 2.0 * padded[tuple(first)] - padded[tuple(second)]
    return padded


def newtonian_potential(f: ScalarField, blocked: Optional[NullSet] = None,
                        rtol: float = 1e-10, maxiter: Optional[int] = None) -> PotentialField:
    """
    Solve ``Δ_h v = f`` on the padded box with homogeneous Dirichlet data.

    Args:
        f: Right-hand side, compactly supported inside the box
        blocked: Optional faces acting as zero-Dirichlet walls
        rtol: Relative tolerance of the conjugate-gradient solve (2D)
        maxiter: Iteration cap of the conjugate-gradient solve

    Returns:
        PotentialField with boundary and solver residuals
    """
    geometry = f.geometry
    rhs = f.values.ravel()
    f_scale = float(np.abs(rhs).max()) if rhs.size else 0.0
    if f_scale == 0.0:
        zero = ScalarField.zeros(geometry, name='v')
        return PotentialField(zero, 0.0, 0.0, 0, True)

    L = laplacian(geometry, blocked)
    iterations = 0
    converged = True

    if geometry.dim == 1:
        ab = np.zeros((3, geometry.size))
        ab[0, 1:] = L.diagonal(1)
        ab[1, :] = L.diagonal(0)
        ab[2, :-1] = L.diagonal(-1)
        solution = solve_banded((1, 1), ab, rhs)
    else:
        counter = {'n': 0}

        def _count(_):
            counter['n'] += 1

        solution, info = cg(-L, -rhs, rtol=rtol, maxiter=maxiter or 20 * geometry.size, callback=_count)
        iterations = counter['n']
        if info < 0:
            raise SolverError("conjugate gradient breakdown", residual=float('nan'))
        converged = info == 0

    residual = float(np.abs(L @ solution - rhs).max() / f_scale)
    if not np.isfinite(residual):
        raise SolverError("potential solve produced non-finite values", residual=residual)
    if not converged:
        logger.warning(f"⚠️  Potential solve stopped after {iterations} iterations, relative residual {residual:.2e}")

    v_values = solution.reshape(geometry.shape)
    return PotentialField(
        v=ScalarField(v_values, geometry, name='v'),
        boundary_residual=_boundary_max(v_values),
        solver_residual=residual,
        iterations=iterations,
        converged=converged,
    )


def _boundary_max(values: np.ndarray) -> float:
    ring = np.ones(values.shape, dtype=bool)
    ring[(slice(1, -1),) * values.ndim] = False
    return float(np.abs(values[ring]).max())


def check_subharmonic_order(mu: ScalarField, nu: ScalarField, U: CellSet,
                            mass_tol: Optional[float] = None,
                            tol_factor: float = SUBHARMONIC_TOL_FACTOR,
                            blocked: Optional[NullSet] = None,
                            rtol: float = 1e-10, maxiter: Optional[int] = None) -> SubharmonicReport:
    """
    Test ``μ <=_SH ν`` on U through ``v = Δ⁻¹(ν − μ)``.

    The verdict holds iff ``min v >= -tol_v`` and ``max |v|`` outside U is
    at most ``tol_v``, with ``tol_v = tol_factor * h² * ||ν − μ||_∞``.

    Raises:
        MassMismatchError: If the masses differ by more than ``mass_tol``
    """
    mass_mu = mu.integral()
    mass_nu = nu.integral()
    if mass_tol is None:
        mass_tol = 1e-6 * max(1.0, abs(mass_mu))
    if abs(mass_mu - mass_nu) > mass_tol:
        raise MassMismatchError(mass_mu, mass_nu, mass_tol)

    f = ScalarField(nu.values - mu.values, mu.geometry, name='nu-mu')
    potential = newtonian_potential(f, blocked=blocked, rtol=rtol, maxiter=maxiter)
    v = potential.v.values
    h = mu.geometry.h
    tol_v = tol_factor * h ** 2 * max(f.max_abs(), 0.0)

    argmin = tuple(int(i) for i in np.unravel_index(np.argmin(v), v.shape))
    min_v = float(v[argmin])
    outside = ~U.mask
    max_outside = float(np.abs(v[outside]).max()) if outside.any() else 0.0
    verdict = bool(min_v >= -tol_v and max_outside <= tol_v)
    return SubharmonicReport(min_v, argmin, max_outside, tol_v, verdict, mass_mu, mass_nu, potential)


def evaluate_test_function(psi: Union[Callable[..., np.ndarray], np.ndarray, ScalarField],
                           geometry: GridGeometry) -> Tuple[np.ndarray, np.ndarray]:
    """Values and Δ_h of a test function on the box.

    Callables are sampled on the box extended by one ghost cell, so the
    stencil is exact up to the box edge; arrays get linear ghosts.
    """
    if callable(psi):
        extended = geometry.shifted((-1,) * geometry.dim, tuple(s + 2 for s in geometry.shape))
        padded = np.asarray(psi(*extended.centers()), dtype=float)
        padded = np.broadcast_to(padded, extended.shape).astype(float)
        core = (slice(1, -1),) * geometry.dim
        values = padded[core]
        lap = -2.0 * geometry.dim * values
        for axis in range(geometry.dim):
            for shift in (1, -1):
                lap = lap + np.roll(padded, shift, axis=axis)[core]
        return values, lap / geometry.h ** 2
    values = psi.values if isinstance(psi, ScalarField) else np.asarray(psi, dtype=float)
    return values, apply_laplacian(values, geometry.h, ghost='linear')


def green_identity_terms(mu: ScalarField, nu: ScalarField, psi, potential: PotentialField,
                         U: Optional[CellSet] = None) -> dict:
    """The three terms of ``∫ψ dν = ∫ψ dμ + ∫v Δψ`` and their residual.

    Raises:
        NotSubharmonicError: If ``Δ_h ψ`` is negative on U beyond rounding
    """
    geometry = mu.geometry
    values, lap = evaluate_test_function(psi, geometry)
    scale = max(1.0, float(np.abs(values).max()))
    tol = 64.0 * np.finfo(float).eps * scale / geometry.h ** 2
    region = U.mask if U is not None else np.ones(geometry.shape, dtype=bool)
    lap_on_region = np.where(region, lap, np.inf)
    worst = float(lap_on_region.min())
    if worst < -tol:
        argmin = tuple(int(i) for i in np.unravel_index(np.argmin(lap_on_region), lap.shape))
        raise NotSubharmonicError(worst, argmin, tol)

    dv = geometry.cell_volume
    psi_nu = float((values * nu.values).sum() * dv)
    psi_mu = float((values * mu.values).sum() * dv)
    v_lap = float((potential.v.values * lap).sum() * dv)
    return {
        'psi_nu': psi_nu,
        'psi_mu': psi_mu,
        'v_laplacian_psi': v_lap,
        'residual': abs(psi_nu - psi_mu - v_lap),
    }


def green_identity_residual(mu: ScalarField, nu: ScalarField, psi, U: CellSet,
                            potential: Optional[PotentialField] = None) -> float:
    """
    Residual ``|∫ψν − ∫ψμ − ∫v Δ_h ψ|`` for a subharmonic test function.

    Args:
        mu: Source density
        nu: Target density
        psi: Callable ``psi(*coords)``, array or ScalarField on the box
        U: Domain cells
        potential: Precomputed ``Δ⁻¹(ν − μ)``; solved and order-checked if omitted

    Raises:
        NotSubharmonicError: If the pair is not in subharmonic order or ψ is
            not subharmonic on U
    """
    if potential is None:
        report = check_subharmonic_order(mu, nu, U)
        if not report.verdict:
            raise NotSubharmonicError(report.min_v, report.argmin, report.tol_v)
        potential = report.potential
    return green_identity_terms(mu, nu, psi, potential, U)['residual']
