"""
Closed-form optimal targets for radial and one-dimensional sources.

For a radial density μ(r) with 0 <= μ <= 1 the optimal target is a union
of at most two full shells whose mass and harmonic moment match μ:

* interval (lo, hi):  ν = χ(lo, a) + χ(b, hi)
* ball:               ν = χ(r̃, 1)
* annulus (ρ, 1):     ν = χ(ρ, r1) + χ(r2, 1)

Mass is weighted by r^(d-1); the moment uses φ(r) = r log r in d = 2 and
φ(r) = r otherwise.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.optimize import brentq

from ..utils.logger import get_logger
from .errors import InfeasibleTargetError
from .grid import CellSet, GridGeometry, ScalarField

logger = get_logger('radial_targets')

DEGENERATE_TOL = 1e-12
_GL_NODES, _GL_WEIGHTS = leggauss(10)


def phi(r: np.ndarray, d: int) -> np.ndarray:
    """Moment weight: r log r in d = 2, r otherwise."""
    r = np.asarray(r, dtype=float)
    if d == 2:
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)), 0.0)
    return r


def phi_antiderivative(r: float, d: int) -> float:
    """Antiderivative of :func:`phi` vanishing at 0."""
    if r <= 0:
        return 0.0
    if d == 2:
        return 0.5 * r * r * np.log(r) - 0.25 * r * r
    return 0.5 * r * r


def band_mass(lo: float, hi: float, d: int) -> float:
    """∫_lo^hi r^(d-1) dr."""
    return (hi ** d - lo ** d) / d


def band_moment(lo: float, hi: float, d: int) -> float:
    """∫_lo^hi φ(r) dr."""
    return phi_antiderivative(hi, d) - phi_antiderivative(lo, d)


@dataclass(frozen=True, eq=False)
class RadialDensity:
    """Radial (or 1D) density on ``[rho, outer]``.

    Either a callable with indicator ``breakpoints`` (integrated with
    adaptive Gauss-Kronrod) or piecewise-constant ``cell_values`` on
    ``edges`` (integrated exactly per cell).
    """
    d: int
    rho: float = 0.0
    outer: float = 1.0
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    breakpoints: Tuple[float, ...] = ()
    edges: Optional[np.ndarray] = None
    cell_values: Optional[np.ndarray] = None
    cap: float = 1.0
    name: str = 'mu'

    @classmethod
    def constant(cls, value: float, d: int, rho: float = 0.0, outer: float = 1.0,
                 name: str = '') -> 'RadialDensity':
        return cls(d, rho, outer, func=lambda r, c=value: np.full(np.shape(r), c, dtype=float),
                   name=name or f'const({value:g})')

    @classmethod
    def bands(cls, bands: Sequence[Tuple[float, float, float]], d: int, rho: float = 0.0,
              outer: float = 1.0, name: str = 'bands') -> 'RadialDensity':
        """Piecewise-constant density from ``(lo, hi, value)`` triples."""
        bands = [tuple(map(float, b)) for b in bands]

        def func(r, bands=bands):
            r = np.asarray(r, dtype=float)
            out = np.zeros(r.shape)
            for lo, hi, value in bands:
                out = np.where((r > lo) & (r < hi), value, out)
            return out

        points = sorted({p for lo, hi, _ in bands for p in (lo, hi)})
        return cls(d, rho, outer, func=func, breakpoints=tuple(points), name=name)

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], d: int, rho: float = 0.0,
                      outer: float = 1.0, breakpoints: Sequence[float] = (),
                      name: str = 'mu') -> 'RadialDensity':
        return cls(d, rho, outer, func=func, breakpoints=tuple(breakpoints), name=name)

    @classmethod
    def from_cells(cls, edges: np.ndarray, values: np.ndarray, d: int, rho: float = 0.0,
                   outer: float = 1.0, name: str = 'cells') -> 'RadialDensity':
        edges = np.asarray(edges, dtype=float)
        values = np.asarray(values, dtype=float)
        if edges.size != values.size + 1:
            raise ValueError("edges must have one more entry than values")
        return cls(d, rho, outer, edges=edges, cell_values=values, name=name)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.func is not None:
            values = np.asarray(self.func(r), dtype=float)
            values = np.broadcast_to(values, r.shape)
        else:
            idx = np.clip(np.searchsorted(self.edges, r, side='right') - 1, 0, self.cell_values.size - 1)
            values = np.where((r >= self.edges[0]) & (r <= self.edges[-1]), self.cell_values[idx], 0.0)
        return np.where((r >= self.rho) & (r <= self.outer), values, 0.0)

    def integrate(self, weight: Callable[[np.ndarray], np.ndarray],
                  lo: Optional[float] = None, hi: Optional[float] = None) -> float:
        """∫_lo^hi weight(r) μ(r) dr."""
        lo = self.rho if lo is None else max(lo, self.rho)
        hi = self.outer if hi is None else min(hi, self.outer)
        if hi <= lo:
            return 0.0
        if self.func is None:
            return self._integrate_cells(weight, lo, hi)
        points = [p for p in self.breakpoints if lo < p < hi]
        value, _ = quad(lambda r: float(weight(np.float64(r)) * self(np.float64(r))), lo, hi,
                        points=points or None, limit=500, epsabs=1e-15, epsrel=1e-13)
        return float(value)

    def _integrate_cells(self, weight, lo: float, hi: float) -> float:
        a = np.clip(self.edges[:-1], lo, hi)
        b = np.clip(self.edges[1:], lo, hi)
        keep = b > a
        a, b, vals = a[keep], b[keep], self.cell_values[keep]
        mid = 0.5 * (a + b)[:, None]
        half = 0.5 * (b - a)[:, None]
        nodes = mid + half * _GL_NODES[None, :]
        per_cell = (half[:, 0] * (weight(nodes) * _GL_WEIGHTS[None, :]).sum(axis=1))
        return float((vals * per_cell).sum())

    def mass(self, lo: Optional[float] = None, hi: Optional[float] = None) -> float:
        """∫ r^(d-1) μ dr."""
        return self.integrate(lambda r: np.power(r, self.d - 1), lo, hi)

    def moment(self, lo: Optional[float] = None, hi: Optional[float] = None) -> float:
        """∫ φ(r) μ dr."""
        return self.integrate(lambda r: phi(r, self.d), lo, hi)

    def validate(self, samples: int = 4001):
        """Check 0 <= μ <= cap on a sample grid."""
        r = np.linspace(self.rho, self.outer, samples)
        values = self(r)
        if values.min() < -1e-12 or values.max() > self.cap + 1e-12:
            raise InfeasibleTargetError(
                f"density '{self.name}' leaves [0, {self.cap}]: range [{values.min():.6g}, {values.max():.6g}]")


@dataclass
class TargetShell:
    """Closed-form target: ``ν = χ(lo, inner) + χ(outer_edge, hi)``.

    ``kind='ball'`` has an empty inner band (``inner == lo == 0``).
    """
    kind: str
    d: int
    lo: float
    hi: float
    inner: float
    outer_edge: float
    residuals: Dict[str, float] = field(default_factory=dict)
    degenerate: bool = False

    @property
    def a(self) -> float:
        return self.inner

    @property
    def b(self) -> float:
        return self.outer_edge

    @property
    def r_tilde(self) -> float:
        return self.outer_edge

    @property
    def r1(self) -> float:
        return self.inner

    @property
    def r2(self) -> float:
        return self.outer_edge

    def bands(self) -> List[Tuple[float, float]]:
        bands = []
        if self.inner > self.lo:
            bands.append((self.lo, self.inner))
        if self.hi > self.outer_edge:
            bands.append((self.outer_edge, self.hi))
        return bands

    def nu(self, r) -> np.ndarray:
        """Target density at (radial) coordinate ``r``."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        for lo, hi in self.bands():
            out = np.where((r > lo) & (r < hi), 1.0, out)
        return out

    def breakpoints(self) -> List[float]:
        return sorted({self.lo, self.inner, self.outer_edge, self.hi})

    def to_dict(self) -> dict:
        record = {'kind': self.kind, 'd': self.d, 'domain': [self.lo, self.hi],
                  'residuals': dict(self.residuals), 'degenerate': self.degenerate}
        if self.kind == 'interval':
            record.update(a=self.a, b=self.b)
        elif self.kind == 'ball':
            record.update(r_tilde=self.r_tilde)
        else:
            record.update(rho=self.lo, r1=self.r1, r2=self.r2)
        return record


def _shell_residuals(mu: RadialDensity, shell: TargetShell, mass: float, moment: float) -> Dict[str, float]:
    nu_mass = sum(band_mass(lo, hi, shell.d) for lo, hi in shell.bands())
    nu_moment = sum(band_moment(lo, hi, shell.d) for lo, hi in shell.bands())
    return {'mass': nu_mass - mass, 'moment': nu_moment - moment}


def targets_1d(mu: RadialDensity, interval: Optional[Tuple[float, float]] = None) -> TargetShell:
    """
    Optimal target ``χ(lo, a) + χ(b, hi)`` on an interval.

    With ``c = (hi - lo) - M`` (the gap width) the moment equation is
    linear in ``a``, so the pair is solved in closed form.

    Args:
        mu: Density on the interval (``d`` is treated as 1)
        interval: ``(lo, hi)``; defaults to ``(mu.rho, mu.outer)``

    Raises:
        InfeasibleTargetError: If μ leaves [0, 1] or no ordered pair exists
    """
    lo, hi = interval if interval is not None else (mu.rho, mu.outer)
    mu.validate()
    mass = mu.integrate(lambda r: np.ones_like(r), lo, hi)
    moment = mu.integrate(lambda r: r, lo, hi)
    length = hi - lo
    gap = length - mass

    if gap < -DEGENERATE_TOL * max(1.0, length):
        raise InfeasibleTargetError(f"mass {mass:.12g} exceeds interval length {length:.12g}")
    if gap <= DEGENERATE_TOL * max(1.0, length):
        mid = 0.5 * (lo + hi)
        shell = TargetShell('interval', 1, lo, hi, mid, mid, degenerate=True)
        shell.residuals = _shell_residuals(mu, shell, mass, moment)
        logger.debug("Full-mass interval: target equals the indicator of the interval")
        return shell

    a = (hi * hi - lo * lo - gap * gap - 2.0 * moment) / (2.0 * gap)
    b = a + gap
    slack = 1e-12 * max(1.0, length)
    if a < lo - slack or b > hi + slack:
        raise InfeasibleTargetError(f"no ordered target pair: a={a:.12g}, b={b:.12g} on ({lo}, {hi})")
    a, b = min(max(a, lo), hi), min(max(b, lo), hi)
    shell = TargetShell('interval', 1, lo, hi, a, b)
    shell.residuals = _shell_residuals(mu, shell, mass, moment)
    return shell


def targets_ball(mu: RadialDensity, d: Optional[int] = None) -> TargetShell:
    """
    Optimal target ``χ(r̃, 1)`` on the unit ball: ``1 - r̃^d = d M``.

    Raises:
        InfeasibleTargetError: If μ leaves [0, 1] or its mass exceeds |B_1| in radial units
    """
    d = d or mu.d
    mu.validate()
    mass = mu.mass(0.0, 1.0)
    capacity = 1.0 / d
    if mass > capacity * (1.0 + 1e-12):
        raise InfeasibleTargetError(f"mass {mass:.12g} exceeds capacity {capacity:.12g}")
    remainder = max(0.0, 1.0 - d * mass)
    r_tilde = remainder ** (1.0 / d)
    shell = TargetShell('ball', d, 0.0, 1.0, 0.0, r_tilde, degenerate=remainder <= DEGENERATE_TOL)
    shell.residuals = {'mass': band_mass(r_tilde, 1.0, d) - mass}
    return shell


def targets_annulus(mu: RadialDensity, rho: Optional[float] = None, d: Optional[int] = None) -> TargetShell:
    """
    Optimal target ``χ(ρ, r1) + χ(r2, 1)`` on the annulus ``ρ < r < 1``.

    For fixed ``r2`` the mass equation fixes ``r1``; the moment residual is
    then monotone in ``r2`` and bracketed by ``[(1 - dM)^(1/d), 1]``.
    ``rho = 0`` is accepted and gives the limiting shells of a punctured ball.

    Raises:
        InfeasibleTargetError: If μ leaves [0, 1] or no bracket exists
    """
    d = d or mu.d
    rho = mu.rho if rho is None else rho
    if not 0.0 <= rho < 1.0:
        raise InfeasibleTargetError(f"annulus inner radius {rho} outside [0, 1)")
    mu.validate()
    mass = mu.mass(rho, 1.0)
    moment = mu.moment(rho, 1.0)
    capacity = band_mass(rho, 1.0, d)

    if mass > capacity + 1e-12 * max(1.0, capacity):
        raise InfeasibleTargetError(f"mass {mass:.12g} exceeds annulus capacity {capacity:.12g}")
    if capacity - mass <= DEGENERATE_TOL * max(1.0, capacity):
        shell = TargetShell('annulus', d, rho, 1.0, rho, rho, degenerate=True)
        shell.residuals = _shell_residuals(mu, shell, mass, moment)
        return shell

    r2_min = max(rho, max(0.0, 1.0 - d * mass) ** (1.0 / d))

    def inner_radius(r2: float) -> float:
        return max(0.0, rho ** d + d * mass - (1.0 - r2 ** d)) ** (1.0 / d)

    def moment_gap(r2: float) -> float:
        r1 = inner_radius(r2)
        return band_moment(rho, r1, d) + band_moment(r2, 1.0, d) - moment

    g_lo, g_hi = moment_gap(r2_min), moment_gap(1.0)
    tol = 1e-13
    if abs(g_lo) <= tol:
        r2 = r2_min
    elif abs(g_hi) <= tol:
        r2 = 1.0
    elif g_lo * g_hi > 0:
        raise InfeasibleTargetError(
            f"moment equation not bracketed on [{r2_min:.6g}, 1]: g={g_lo:.3e}, {g_hi:.3e}")
    else:
        r2 = brentq(moment_gap, r2_min, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    r1 = min(inner_radius(r2), r2)
    shell = TargetShell('annulus', d, rho, 1.0, r1, r2)
    shell.residuals = _shell_residuals(mu, shell, mass, moment)
    return shell


# ---------------------------------------------------------------------------
# Radial potential and certificates
# ---------------------------------------------------------------------------

@dataclass
class RadialPotential:
    """Samples of ``v = Δ⁻¹(ν − μ)`` along the radius."""
    r: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    end_residual: float
    certificate: Dict[str, bool]

    @property
    def min_v(self) -> float:
        return float(self.v.min())

    @property
    def monotone(self) -> bool:
        return all(self.certificate.values())

    def __call__(self, r) -> np.ndarray:
        return np.interp(r, self.r, self.v)

    def to_dict(self) -> dict:
        return {'min_v': self.min_v, 'max_v': float(self.v.max()),
                'end_residual': self.end_residual, 'certificate': dict(self.certificate)}


def radial_potential(mu: RadialDensity, shell: TargetShell, samples: int = 20001) -> RadialPotential:
    """
    Integrate ``(r^(d-1) v')' = r^(d-1)(ν − μ)`` on the shell's domain.

    Interval and annulus start from ``v = v' = 0`` at the inner edge; the
    ball starts from ``v'(0) = 0`` and is shifted so that ``v(1) = 0``.
    The certificate records ``v >= 0`` and the monotonicity pattern
    (nondecreasing on the inner band, nonincreasing on the outer band, or
    nonincreasing throughout for the ball).
    """
    d = shell.d
    lo, hi = shell.lo, shell.hi
    nodes = np.linspace(lo, hi, samples)
    extra = [p for p in list(mu.breakpoints) + shell.breakpoints() if lo < p < hi]
    r = np.unique(np.concatenate([nodes, extra]))

    mid = 0.5 * (r[1:] + r[:-1])
    width = np.diff(r)
    q = np.power(mid, d - 1) * (shell.nu(mid) - mu(mid))
    G = np.concatenate([[0.0], np.cumsum(q * width)])
    with np.errstate(divide='ignore', invalid='ignore'):
        weight = np.power(r, d - 1)
        dv = np.where(weight > 0, G / np.where(weight > 0, weight, 1.0), 0.0)
    v = np.concatenate([[0.0], np.cumsum(0.5 * (dv[1:] + dv[:-1]) * width)])

    if shell.kind == 'ball':
        v = v - v[-1]
        end_residual = abs(float(G[-1]))
    else:
        end_residual = max(abs(float(v[-1])), abs(float(G[-1])))

    scale = max(1.0, float(np.abs(v).max()))
    tol = 1e-8 * scale
    certificate = {'nonnegative': bool(v.min() >= -tol)}
    if shell.kind == 'ball':
        certificate['nonincreasing'] = bool(dv.max() <= tol)
    else:
        inner = (r > lo) & (r <= shell.inner)
        outer = (r >= shell.outer_edge) & (r < hi)
        certificate['nondecreasing_inner'] = bool(not inner.any() or dv[inner].min() >= -tol)
        certificate['nonincreasing_outer'] = bool(not outer.any() or dv[outer].max() <= tol)
    return RadialPotential(r, v, dv, end_residual, certificate)


def positive_in_domain(potential: RadialPotential, shell: TargetShell) -> bool:
    """``v > 0`` at every sample strictly inside the domain (no initial freezing).

    For the ball the centre counts as interior.
    """
    interior = (potential.r < shell.hi)
    if shell.kind != 'ball':
        interior &= potential.r > shell.lo
    return bool(interior.any() and potential.v[interior].min() > 0.0)


# ---------------------------------------------------------------------------
# Grid rasterization
# ---------------------------------------------------------------------------

def radial_coordinate(geometry: GridGeometry, kind: str, center: Optional[Sequence[float]] = None) -> np.ndarray:
    """``x`` itself for intervals and boxes in 1D, ``|x - c|`` otherwise."""
    if kind == 'interval':
        return geometry.centers()[0]
    return geometry.radius(center)


def density_field(mu: RadialDensity, geometry: GridGeometry, U: CellSet, kind: str,
                  center: Optional[Sequence[float]] = None) -> ScalarField:
    """Cell averages of a radial density restricted to U."""
    if kind == 'interval':
        func = mu
    else:
        c = center if center is not None else (0.0,) * geometry.dim

        def func(*coords):
            return mu(np.sqrt(sum((x - x0) ** 2 for x, x0 in zip(coords, c))))
    return ScalarField.from_function(geometry, func, support=U, value_cap=mu.cap, name=mu.name)


def rasterize_shell(shell: TargetShell, geometry: GridGeometry, U: CellSet, target_mass: float,
                    kind: Optional[str] = None, supersample: int = 8) -> ScalarField:
    """
    Shell indicator as fractional cell coverage on U with mass ``target_mass``.

    The free edges (a, b / r1, r2 / r̃) are shifted together by a common
    offset until the grid mass matches; remaining discrepancy is spread
    over partially covered cells.
    """
    kind = kind or ('interval' if shell.kind == 'interval' and geometry.dim == 1 else 'radial')
    cell_volume = geometry.cell_volume
    h = geometry.h

    if geometry.dim == 1:
        x = geometry.centers()[0]
        coverage_of = lambda bands: _coverage_1d(x, h, bands, mirrored=(kind != 'interval'))
    else:
        sub = (np.arange(supersample) + 0.5) / supersample - 0.5
        cx, cy = geometry.centers()
        px = cx[..., None, None] + h * sub[:, None]
        py = cy[..., None, None] + h * sub[None, :]
        radius = np.sqrt(px ** 2 + py ** 2)

        def coverage_of(bands):
            inside = np.zeros(radius.shape, dtype=bool)
            for lo, hi in bands:
                inside |= (radius > lo) & (radius < hi)
            return inside.mean(axis=(-2, -1))

    def shifted_bands(t: float) -> List[Tuple[float, float]]:
        bands = []
        if shell.kind != 'ball':
            bands.append((shell.lo, min(shell.inner + t, shell.hi)))
        bands.append((max(shell.outer_edge - t, shell.lo), shell.hi + 1.0))
        return [(lo, hi) for lo, hi in bands if hi > lo]

    def field_for(t: float) -> np.ndarray:
        return np.where(U.mask, coverage_of(shifted_bands(t)), 0.0)

    def excess(t: float) -> float:
        return field_for(t).sum() * cell_volume - target_mass

    t_lo, t_hi = -6.0 * h, 6.0 * h
    e_lo, e_hi = excess(t_lo), excess(t_hi)
    if e_lo > 0 or e_hi < 0:
        logger.warning(f"⚠️  Shell mass not bracketed by edge shifts (excess {e_lo:.3e}, {e_hi:.3e})")
        t = t_lo if e_lo > 0 else t_hi
    else:
        for _ in range(60):
            t = 0.5 * (t_lo + t_hi)
            if excess(t) > 0:
                t_hi = t
            else:
                t_lo = t
        t = 0.5 * (t_lo + t_hi)

    values = field_for(t)
    values = _spread_mass(values, U.mask, target_mass / cell_volume - values.sum())
    return ScalarField(values, geometry, support=U, value_cap=1.0, name='nu')


def _coverage_1d(x: np.ndarray, h: float, bands: List[Tuple[float, float]], mirrored: bool) -> np.ndarray:
    left, right = x - 0.5 * h, x + 0.5 * h
    cover = np.zeros(x.shape)
    pieces = list(bands)
    if mirrored:
        pieces += [(-hi, -lo) for lo, hi in bands]
    for lo, hi in pieces:
        cover += np.clip(np.minimum(right, hi) - np.maximum(left, lo), 0.0, None)
    return np.clip(cover / h, 0.0, 1.0)


def _spread_mass(values: np.ndarray, support: np.ndarray, deficit: float) -> np.ndarray:
    """Add ``deficit`` (in cell units) to partially covered cells, staying in [0, 1]."""
    if deficit == 0.0:
        return values
    partial = support & (values > 0.0) & (values < 1.0)
    if deficit > 0:
        weights = np.where(partial, 1.0 - values, 0.0)
        if weights.sum() < deficit:
            weights = np.where(support, 1.0 - values, 0.0)
    else:
        weights = np.where(partial, values, 0.0)
        if weights.sum() < -deficit:
            weights = np.where(support, values, 0.0)
    total = weights.sum()
    if total <= 0.0:
        return values
    return np.clip(values + deficit * weights / total, 0.0, 1.0)
