"""
Cell-centred grids, domains, fields, face-based null sets and dyadic
decomposition.

Arrays are indexed ``[ix]`` in 1D and ``[ix, iy]`` in 2D; axis 0 is x.
A cell belongs to U iff its centre lies in the continuum domain.
"""

from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DomainError

DOMAIN_KINDS = ('interval', 'ball', 'annulus', 'box', 'masked')


@dataclass(frozen=True)
class GridGeometry:
    """A uniform cell-centred box grid with spacing ``h = 1/n``."""
    dim: int
    n: int
    shape: Tuple[int, ...]
    origin: Tuple[float, ...]

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.h

    def centers(self) -> Tuple[np.ndarray, ...]:
        """Cell-centre coordinate arrays, one per axis, each of ``shape``."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing='ij'))

    def radius(self, center: Sequence[float] = None) -> np.ndarray:
        center = center if center is not None else (0.0,) * self.dim
        coords = self.centers()
        return np.sqrt(sum((c - c0) ** 2 for c, c0 in zip(coords, center)))

    def index_of(self, point: Sequence[float]) -> Tuple[int, ...]:
        """Index of the cell containing ``point`` (clipped to the box)."""
        idx = []
        for axis, x in enumerate(point):
            i = int(np.floor((x - self.origin[axis]) / self.h))
            idx.append(min(max(i, 0), self.shape[axis] - 1))
        return tuple(idx)

    def shifted(self, lo: Sequence[int], shape: Sequence[int]) -> 'GridGeometry':
        """A grid aligned with this one, starting at cell index ``lo``.

        ``lo`` may be negative or extend past the box.
        """
        origin = tuple(o + i * self.h for o, i in zip(self.origin, lo))
        return GridGeometry(self.dim, self.n, tuple(int(s) for s in shape), origin)

    def empty_mask(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=bool)

    def to_dict(self) -> dict:
        return {'dim': self.dim, 'n': self.n, 'h': self.h,
                'shape': list(self.shape), 'origin': list(self.origin)}


@dataclass(frozen=True, eq=False)
class CellSet:
    """Boolean cell mask on a grid; measure is ``count * h^d``."""
    mask: np.ndarray
    geometry: GridGeometry

    def __post_init__(self):
        if self.mask.shape != self.geometry.shape:
            raise DomainError(f"mask shape {self.mask.shape} != grid shape {self.geometry.shape}")
        if self.mask.dtype != bool:
            object.__setattr__(self, 'mask', self.mask.astype(bool))

    def _check(self, other: 'CellSet'):
        if self.geometry != other.geometry:
            raise DomainError("cell sets live on different grids")

    def __or__(self, other: 'CellSet') -> 'CellSet':
        self._check(other)
        return CellSet(self.mask | other.mask, self.geometry)

    def __and__(self, other: 'CellSet') -> 'CellSet':
        self._check(other)
        return CellSet(self.mask & other.mask, self.geometry)

    def __xor__(self, other: 'CellSet') -> 'CellSet':
        self._check(other)
        return CellSet(self.mask ^ other.mask, self.geometry)

    def __sub__(self, other: 'CellSet') -> 'CellSet':
        self._check(other)
        return CellSet(self.mask & ~other.mask, self.geometry)

    def complement(self) -> 'CellSet':
        return CellSet(~self.mask, self.geometry)

    def count(self) -> int:
        return int(self.mask.sum())

    def measure(self) -> float:
        return self.count() * self.geometry.cell_volume

    def is_empty(self) -> bool:
        return not self.mask.any()

    def cells(self) -> np.ndarray:
        """Indices of member cells, shape ``(count, dim)``."""
        return np.argwhere(self.mask)

    def bounding_box(self) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        """Inclusive-exclusive index bounds of the member cells."""
        idx = self.cells()
        if idx.size == 0:
            raise DomainError("bounding box of an empty cell set")
        return tuple(idx.min(axis=0)), tuple(idx.max(axis=0) + 1)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Grid function on a box grid.

    ``value_cap`` marks density fields bounded by ``0 <= values <= cap``.
    """
    values: np.ndarray
    geometry: GridGeometry
    support: Optional[CellSet] = None
    value_cap: Optional[float] = None
    name: str = ''

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.geometry.shape:
            raise DomainError(f"field shape {values.shape} != grid shape {self.geometry.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError(f"field '{self.name}' has non-finite values")
        if self.value_cap is not None:
            tol = 1e-9 * max(1.0, self.value_cap)
            if values.min() < -tol or values.max() > self.value_cap + tol:
                raise DomainError(
                    f"density '{self.name}' outside [0, {self.value_cap}]: "
                    f"range [{values.min():.3g}, {values.max():.3g}]")
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, geometry: GridGeometry, name: str = '') -> 'ScalarField':
        return cls(np.zeros(geometry.shape), geometry, name=name)

    @classmethod
    def from_function(cls, geometry: GridGeometry, func: Callable[..., np.ndarray],
                      support: Optional[CellSet] = None, value_cap: Optional[float] = None,
                      quadrature: str = 'gauss', name: str = '') -> 'ScalarField':
        """Sample ``func(*coords)`` as cell averages.

        ``quadrature='gauss'`` uses 3-point Gauss-Legendre per axis, exact for
        polynomials up to degree 5; ``'center'`` samples the cell centre.
        Values outside ``support`` are zero. With ``value_cap`` the samples
        must already lie in ``[0, cap]``; out-of-range values raise
        :class:`DomainError` rather than being clipped.
        """
        if quadrature == 'center':
            values = np.asarray(func(*geometry.centers()), dtype=float)
        elif quadrature == 'gauss':
            nodes, weights = leggauss(3)
            centers = geometry.centers()
            values = np.zeros(geometry.shape)
            half = 0.5 * geometry.h
            if geometry.dim == 1:
                for xi, wi in zip(nodes, weights):
                    values += 0.5 * wi * func(centers[0] + half * xi)
            else:
                for xi, wi in zip(nodes, weights):
                    for yj, wj in zip(nodes, weights):
                        values += 0.25 * wi * wj * func(centers[0] + half * xi, centers[1] + half * yj)
        else:
            raise ValueError(f"unknown quadrature '{quadrature}'")
        values = np.broadcast_to(values, geometry.shape).astype(float)
        if support is not None:
            values = np.where(support.mask, values, 0.0)
        return cls(values, geometry, support=support, value_cap=value_cap, name=name)

    def with_values(self, values: np.ndarray, name: Optional[str] = None) -> 'ScalarField':
        return ScalarField(values, self.geometry, support=self.support,
                           value_cap=self.value_cap, name=self.name if name is None else name)

    def integral(self, mask: Optional[CellSet] = None) -> float:
        values = self.values if mask is None else self.values[mask.mask]
        return float(values.sum() * self.geometry.cell_volume)

    def inner(self, other: Union['ScalarField', np.ndarray]) -> float:
        other_values = other.values if isinstance(other, ScalarField) else other
        return float((self.values * other_values).sum() * self.geometry.cell_volume)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def __add__(self, other: 'ScalarField') -> 'ScalarField':
        return ScalarField(self.values + other.values, self.geometry)

    def __sub__(self, other: 'ScalarField') -> 'ScalarField':
        return ScalarField(self.values - other.values, self.geometry)


@dataclass(frozen=True)
class DomainSpec:
    """Continuum domain plus resolution.

    ``kind`` is one of interval (0,1), ball (radius 1 about the origin),
    annulus ``rho < |x| < 1``, box (unit cube (0,1)^d) or masked (a
    predicate on the unit box).
    """
    kind: str
    dim: int = 2
    n: int = 128
    pad: Optional[int] = None
    rho: float = 0.5
    predicate: Optional[Callable[..., np.ndarray]] = field(default=None, compare=False)

    @property
    def pad_width(self) -> int:
        return self.pad if self.pad is not None else self.n // 2

    def validate(self):
        if self.kind not in DOMAIN_KINDS:
            raise DomainError(f"unknown domain kind '{self.kind}'; expected one of {DOMAIN_KINDS}")
        if self.dim not in (1, 2):
            raise DomainError(f"grid dimension must be 1 or 2, got {self.dim}")
        if self.kind == 'interval' and self.dim != 1:
            raise DomainError("interval domains are one-dimensional")
        if self.n < 16:
            raise DomainError(f"resolution n={self.n} below minimum 16")
        if 4 * self.pad_width < self.n:
            raise DomainError(f"pad_width {self.pad_width} smaller than n/4 = {self.n / 4:g}")
        if self.kind == 'annulus':
            if not 0.0 < self.rho < 1.0:
                raise DomainError(f"annulus inner radius must satisfy 0 < rho < 1, got {self.rho}")
            if (1.0 - self.rho) * self.n < 4:
                raise DomainError(
                    f"annulus gap {1.0 - self.rho:g} spans fewer than 4 cells at n={self.n}")
        if self.kind == 'masked' and self.predicate is None:
            raise DomainError("masked domain requires a predicate")

    def center(self) -> Tuple[float, ...]:
        if self.kind in ('ball', 'annulus'):
            return (0.0,) * self.dim
        return (0.5,) * self.dim


def build_domain(spec: DomainSpec) -> Tuple[GridGeometry, CellSet]:
    """Rasterize a domain onto its padded box.

    Returns:
        Grid geometry and the cell set U
    """
    spec.validate()
    n, pad = spec.n, spec.pad_width
    h = 1.0 / n
    if spec.kind in ('ball', 'annulus'):
        lo, cells = -1.0, 2 * n
    else:
        lo, cells = 0.0, n
    shape = (cells + 2 * pad,) * spec.dim
    origin = (lo - pad * h,) * spec.dim
    geometry = GridGeometry(spec.dim, n, shape, origin)

    coords = geometry.centers()
    if spec.kind == 'ball':
        mask = geometry.radius() < 1.0
    elif spec.kind == 'annulus':
        r = geometry.radius()
        mask = (r > spec.rho) & (r < 1.0)
    else:
        mask = np.ones(shape, dtype=bool)
        for c in coords:
            mask &= (c > 0.0) & (c < 1.0)
        if spec.kind == 'masked':
            mask &= np.asarray(spec.predicate(*coords), dtype=bool)
    return geometry, CellSet(mask, geometry)


def interior_cells(U: CellSet) -> CellSet:
    """Cells of U whose 2d face neighbours all lie in U."""
    padded = np.pad(U.mask, 1, constant_values=False)
    inner = U.mask.copy()
    for axis in range(U.geometry.dim):
        for shift in (1, -1):
            inner &= np.roll(padded, shift, axis=axis)[_unpad(U.geometry.dim)]
    return CellSet(inner, U.geometry)


def boundary_cells(U: CellSet) -> CellSet:
    """Cells of U with at least one face neighbour outside U."""
    return U - interior_cells(U)


def _unpad(dim: int) -> Tuple[slice, ...]:
    return (slice(1, -1),) * dim


# ---------------------------------------------------------------------------
# Face-based null sets
# ---------------------------------------------------------------------------

Segment = Tuple[Tuple[float, ...], Tuple[float, ...]]


@dataclass(frozen=True, eq=False)
class NullSet:
    """Closed null set stored as blocked grid faces.

    ``faces[a]`` flags the face between cell ``i`` and ``i + e_a``; its
    shape is the grid shape with axis ``a`` shortened by one. ``nodes``
    holds the grid-node indices touched by the descriptor.
    """
    faces: Tuple[np.ndarray, ...]
    geometry: GridGeometry
    nodes: frozenset = frozenset()

    @classmethod
    def empty(cls, geometry: GridGeometry) -> 'NullSet':
        faces = tuple(np.zeros(_face_shape(geometry.shape, a), dtype=bool) for a in range(geometry.dim))
        return cls(faces, geometry)

    def measure(self) -> float:
        return 0.0

    def face_count(self) -> int:
        return int(sum(f.sum() for f in self.faces))

    def node_count(self) -> int:
        return len(self.nodes)

    def is_empty(self) -> bool:
        return self.face_count() == 0

    def __or__(self, other: 'NullSet') -> 'NullSet':
        if self.geometry != other.geometry:
            raise DomainError("null sets live on different grids")
        faces = tuple(a | b for a, b in zip(self.faces, other.faces))
        return NullSet(faces, self.geometry, self.nodes | other.nodes)

    def adjacent_cells(self) -> CellSet:
        """Cells sharing at least one blocked face."""
        mask = self.geometry.empty_mask()
        for axis, face in enumerate(self.faces):
            lo = [slice(None)] * self.geometry.dim
            hi = [slice(None)] * self.geometry.dim
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            mask[tuple(lo)] |= face
            mask[tuple(hi)] |= face
        return CellSet(mask, self.geometry)


def _face_shape(shape: Tuple[int, ...], axis: int) -> Tuple[int, ...]:
    return tuple(s - 1 if a == axis else s for a, s in enumerate(shape))


def rasterize_null_set(geometry: GridGeometry, U: CellSet,
                       descriptor: Iterable[Union[float, Segment]]) -> NullSet:
    """Snap points (1D) or axis-aligned segments (2D) onto grid faces.

    A 2D segment on the line ``x = c`` blocks the faces on the nearest
    face line for every cell whose centre lies within the segment's
    y-range; horizontal segments likewise.

    Raises:
        DomainError: If a piece is not axis aligned or leaves U
    """
    faces = [np.zeros(_face_shape(geometry.shape, a), dtype=bool) for a in range(geometry.dim)]
    nodes = set()
    h = geometry.h

    for piece in descriptor:
        if geometry.dim == 1:
            x = float(piece[0] if isinstance(piece, (tuple, list)) else piece)
            k = int(round((x - geometry.origin[0]) / h)) - 1
            _check_face_in_U(U, 0, (k,), piece)
            faces[0][k] = True
            nodes.add((k + 1,))
            continue

        (x0, y0), (x1, y1) = piece
        if np.isclose(x0, x1):
            axis, line, span = 0, x0, sorted((y0, y1))
        elif np.isclose(y0, y1):
            axis, line, span = 1, y0, sorted((x0, x1))
        else:
            raise DomainError(f"segment {piece} is not axis aligned")
        other = 1 - axis
        k = int(round((line - geometry.origin[axis]) / h)) - 1
        centers = geometry.axis_centers(other)
        eps = 1e-12
        rows = np.nonzero((centers >= span[0] - eps) & (centers <= span[1] + eps))[0]
        if rows.size == 0:
            raise DomainError(f"segment {piece} covers no grid face")
        for j in rows:
            index = (k, j) if axis == 0 else (j, k)
            _check_face_in_U(U, axis, index, piece)
            faces[axis][index] = True
        node_lo = int(round((span[0] - geometry.origin[other]) / h))
        node_hi = int(round((span[1] - geometry.origin[other]) / h))
        for m in range(node_lo, node_hi + 1):
            nodes.add((k + 1, m) if axis == 0 else (m, k + 1))

    return NullSet(tuple(faces), geometry, frozenset(nodes))


def _check_face_in_U(U: CellSet, axis: int, index: Tuple[int, ...], piece):
    shape = U.geometry.shape
    if not 0 <= index[axis] < shape[axis] - 1 or any(
            not 0 <= i < s for a, (i, s) in enumerate(zip(index, shape)) if a != axis):
        raise DomainError(f"null-set piece {piece} lies outside the grid")
    upper = list(index)
    upper[axis] += 1
    if not (U.mask[tuple(index)] and U.mask[tuple(upper)]):
        raise DomainError(f"null-set piece {piece} leaves the domain U")


# ---------------------------------------------------------------------------
# Connectivity
# ---------------------------------------------------------------------------

def label_components(mask: np.ndarray, blocked: Optional[NullSet] = None,
                     min_cells: int = 1) -> Tuple[np.ndarray, int]:
    """Face-adjacency components of ``mask`` with blocked faces cut.

    Components with fewer than ``min_cells`` cells are dropped (label 0).

    Returns:
        Label array (0 = background) and component count
    """
    if blocked is None or blocked.is_empty():
        structure = ndimage.generate_binary_structure(mask.ndim, 1)
        labels, count = ndimage.label(mask, structure=structure)
    else:
        labels, count = _label_with_faces(mask, blocked)

    if min_cells > 1 and count:
        sizes = np.bincount(labels.ravel(), minlength=count + 1)
        keep = sizes >= min_cells
        keep[0] = False
        remap = np.zeros(count + 1, dtype=labels.dtype)
        remap[keep] = np.arange(1, keep.sum() + 1)
        labels = remap[labels]
        count = int(keep.sum())
    return labels, int(count)


def _label_with_faces(mask: np.ndarray, blocked: NullSet) -> Tuple[np.ndarray, int]:
    flat_index = np.arange(mask.size).reshape(mask.shape)
    rows, cols = [], []
    for axis, face in enumerate(blocked.faces):
        lo = [slice(None)] * mask.ndim
        hi = [slice(None)] * mask.ndim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        linked = mask[tuple(lo)] & mask[tuple(hi)] & ~face
        rows.append(flat_index[tuple(lo)][linked])
        cols.append(flat_index[tuple(hi)][linked])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)),
                       shape=(mask.size, mask.size)).tocsr()
    _, raw = connected_components(graph, directed=False)
    raw = raw.reshape(mask.shape)

    # relabel masked cells 1..k in order of first appearance
    labels = np.zeros(mask.shape, dtype=np.int64)
    members = raw[mask]
    unique, first, inverse = np.unique(members, return_index=True, return_inverse=True)
    rank = np.empty(unique.size, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(1, unique.size + 1)
    labels[mask] = rank[inverse.ravel()]
    return labels, int(unique.size)


# ---------------------------------------------------------------------------
# Dyadic decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cube:
    """Axis-aligned dyadic cube given by its lowest cell index and side in cells."""
    origin: Tuple[int, ...]
    size: int

    def slices(self) -> Tuple[slice, ...]:
        return tuple(slice(i, i + self.size) for i in self.origin)

    def mask(self, geometry: GridGeometry) -> CellSet:
        mask = geometry.empty_mask()
        mask[self.slices()] = True
        return CellSet(mask, geometry)

    def bounds(self, geometry: GridGeometry) -> Tuple[Tuple[float, float], ...]:
        h = geometry.h
        return tuple((o + i * h, o + (i + self.size) * h) for o, i in zip(geometry.origin, self.origin))

    def measure(self, geometry: GridGeometry) -> float:
        return (self.size * geometry.h) ** geometry.dim


def dyadic_decompose(U: CellSet, F: Optional[NullSet] = None) -> List[Cube]:
    """Quadtree decomposition of U into disjoint cubes not crossing F.

    A cube is accepted when all its cells lie in U and no blocked face
    lies in its interior; otherwise it splits into 2^d children down to
    single cells.
    """
    geometry = U.geometry
    F = F if F is not None else NullSet.empty(geometry)
    if U.is_empty():
        return []
    lo, hi = U.bounding_box()
    extent = max(b - a for a, b in zip(lo, hi))
    root = 1 << int(np.ceil(np.log2(extent))) if extent > 1 else 1

    cubes: List[Cube] = []
    stack = [Cube(tuple(lo), root)]
    while stack:
        cube = stack.pop()
        clipped = tuple(slice(max(i, 0), min(i + cube.size, s))
                        for i, s in zip(cube.origin, geometry.shape))
        inside = U.mask[clipped]
        if inside.size == 0 or not inside.any():
            continue
        fits = all(i >= 0 and i + cube.size <= s for i, s in zip(cube.origin, geometry.shape))
        if cube.size == 1 or (fits and inside.all() and not _crosses_faces(cube, F)):
            cubes.append(cube)
            continue
        half = cube.size // 2
        for offset in np.ndindex(*(2,) * geometry.dim):
            child = tuple(i + o * half for i, o in zip(cube.origin, offset))
            stack.append(Cube(child, half))

    cubes.sort(key=lambda c: (c.origin, c.size))
    return cubes


def _crosses_faces(cube: Cube, F: NullSet) -> bool:
    for axis, face in enumerate(F.faces):
        window = []
        for a, i in enumerate(cube.origin):
            if a == axis:
                window.append(slice(i, i + cube.size - 1))
            else:
                window.append(slice(i, i + cube.size))
        if face[tuple(window)].any():
            return True
    return False
