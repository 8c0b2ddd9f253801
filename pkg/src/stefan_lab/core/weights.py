"""
Strictly superharmonic weights ``u`` for the primal problem.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError
from .grid import CellSet, GridGeometry, ScalarField
from .potential import evaluate_test_function


@dataclass(frozen=True)
class WeightSpec:
    """Closed-form weight ``u(*coords)`` with its analytic Laplacian."""
    name: str
    func: Callable[..., np.ndarray] = field(compare=False)
    laplacian: Callable[..., np.ndarray] = field(compare=False)
    params: Tuple[Tuple[str, float], ...] = ()

    def sample(self, geometry: GridGeometry, U: Optional[CellSet] = None) -> ScalarField:
        """Cell-centre samples of u, restricted to U if given."""
        values = np.broadcast_to(self.func(*geometry.centers()), geometry.shape).astype(float)
        if U is not None:
            values = np.where(U.mask, values, 0.0)
        return ScalarField(values, geometry, support=U, name=self.name)

    def laplacian_field(self, geometry: GridGeometry) -> np.ndarray:
        return np.broadcast_to(self.laplacian(*geometry.centers()), geometry.shape).astype(float)

    def validate(self, geometry: GridGeometry, U: CellSet) -> Dict[str, float]:
        """Check ``min u > 0`` on U and ``max Δ_h u < 0`` on U and its face neighbours.

        Raises:
            ConfigurationError: If either condition fails
        """
        closure = _with_neighbours(U.mask)
        values, lap = evaluate_test_function(self.func, geometry)
        min_u = float(values[U.mask].min())
        max_lap = float(lap[closure].max())
        if min_u <= 0.0:
            raise ConfigurationError(f"weight '{self.name}' is not positive on U (min {min_u:.3e})")
        if max_lap >= 0.0:
            raise ConfigurationError(f"weight '{self.name}' is not strictly superharmonic (max Δu {max_lap:.3e})")
        return {'min_u': min_u, 'max_laplacian': max_lap}

    def scaled(self, factor: float) -> 'WeightSpec':
        return WeightSpec(f'{factor:g}*{self.name}',
                          lambda *c: factor * self.func(*c),
                          lambda *c: factor * self.laplacian(*c),
                          self.params + (('scale', factor),))


def _with_neighbours(mask: np.ndarray) -> np.ndarray:
    grown = mask.copy()
    for axis in range(mask.ndim):
        for shift in (1, -1):
            rolled = np.roll(mask, shift, axis=axis)
            edge = [slice(None)] * mask.ndim
            edge[axis] = 0 if shift == 1 else -1
            rolled[tuple(edge)] = False
            grown |= rolled
    return grown


def _sq(coords: Sequence[np.ndarray], center: Sequence[float]) -> np.ndarray:
    return sum((x - c) ** 2 for x, c in zip(coords, center))


def quadratic(center: Sequence[float] = (0.0, 0.0), dim: int = 2) -> WeightSpec:
    """``2 - |x - c|²``."""
    center = tuple(center)[:dim]
    return WeightSpec('quadratic',
                      lambda *c: 2.0 - _sq(c, center),
                      lambda *c: np.full(np.shape(c[0]), -2.0 * dim))


def quadratic_soft(center: Sequence[float] = (0.0, 0.0), dim: int = 2) -> WeightSpec:
    """``3 - ½|x - c|²``."""
    center = tuple(center)[:dim]
    return WeightSpec('quadratic_soft',
                      lambda *c: 3.0 - 0.5 * _sq(c, center),
                      lambda *c: np.full(np.shape(c[0]), -1.0 * dim))


def nonuniversal(eps: float = 0.01) -> WeightSpec:
    """``1 - 15 x⁴ y⁴ - ε|x|²`` on the unit disc."""
    def func(x, y):
        return 1.0 - 15.0 * x ** 4 * y ** 4 - eps * (x * x + y * y)

    def lap(x, y):
        return -180.0 * (x ** 2 * y ** 4 + x ** 4 * y ** 2) - 4.0 * eps
    return WeightSpec('nonuniversal', func, lap, (('eps', eps),))


def high_order(amplitude: float = 300.0, power: int = 12, eps: float = 1e-4) -> WeightSpec:
    """``2 - A x^p y^p - ε|x|²``; a weight with square symmetry only."""
    p = power

    def func(x, y):
        return 2.0 - amplitude * x ** p * y ** p - eps * (x * x + y * y)

    def lap(x, y):
        return -amplitude * p * (p - 1) * (x ** (p - 2) * y ** p + x ** p * y ** (p - 2)) - 4.0 * eps
    return WeightSpec('high_order', func, lap, (('amplitude', amplitude), ('power', p), ('eps', eps)))


BUILTIN_WEIGHTS = ('quadratic', 'quadratic_soft', 'nonuniversal', 'high_order')


def weight_by_name(name: str, center: Sequence[float] = (0.0, 0.0), dim: int = 2,
                   eps: float = 0.01) -> WeightSpec:
    """Look up a built-in weight.

    Raises:
        ConfigurationError: For unknown names or 2D-only weights in 1D
    """
    if name == 'quadratic':
        return quadratic(center, dim)
    if name == 'quadratic_soft':
        return quadratic_soft(center, dim)
    if name in ('nonuniversal', 'high_order') and dim != 2:
        raise ConfigurationError(f"weight '{name}' is defined in two dimensions only")
    if name == 'nonuniversal':
        return nonuniversal(eps)
    if name == 'high_order':
        return high_order()
    raise ConfigurationError(f"unknown weight '{name}'; expected one of {BUILTIN_WEIGHTS}")
