"""Exception hierarchy for stefan-lab.

Kernels raise these; non-convergence is reported through result flags
instead of exceptions.
"""

from typing import Optional, Sequence, Tuple

import numpy as np


class StefanLabError(RuntimeError):
    """Base class for all laboratory errors."""


class ConfigurationError(StefanLabError, ValueError):
    """Invalid configuration value or unreadable config file."""


class DomainError(StefanLabError, ValueError):
    """Invalid domain, null-set descriptor or grid parameters."""


class MassMismatchError(StefanLabError, ValueError):
    """Source and target total masses differ beyond tolerance."""

    def __init__(self, mass_mu: float, mass_nu: float, tol: float):
        self.mass_mu = mass_mu
        self.mass_nu = mass_nu
        self.tol = tol
        super().__init__(
            f"mass mismatch: |mu|={mass_mu:.12g}, |nu|={mass_nu:.12g}, tol={tol:.3g}"
        )


class NotSubharmonicError(StefanLabError, ValueError):
    """Potential difference is negative somewhere beyond tolerance."""

    def __init__(self, min_value: float, argmin: Tuple[int, ...], tol: float):
        self.min_value = min_value
        self.argmin = argmin
        self.tol = tol
        super().__init__(
            f"potential difference min {min_value:.3e} at cell {argmin} below -{tol:.3e}"
        )


class InfeasibleProblemError(StefanLabError):
    """The discrete primal program has no feasible point."""

    def __init__(self, message: str, direction: Optional[np.ndarray] = None):
        self.direction = direction
        super().__init__(message)


class InfeasibleTargetError(StefanLabError):
    """No shell of the requested form carries the given density."""


class SolverError(StefanLabError):
    """A linear solve did not reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        self.residual = residual
        super().__init__(message)


class GluingError(StefanLabError, ValueError):
    """Trajectories violate the gluing preconditions."""

    def __init__(self, message: str, cells: Sequence[Tuple[int, ...]] = ()):
        self.cells = list(cells)
        super().__init__(message)
