"""
Monte Carlo check of the barrier picture: Brownian paths started from μ
stop at the first time ``t >= s(W_t)``.

Paths are simulated in fixed chunks. Chunk ``c`` draws from its own
``Philox`` stream keyed by ``(seed, c)`` and results are concatenated in
chunk order, so batch statistics do not depend on the thread count. A
batch is reproducible from ``(seed, chunk_size, block_steps)``: chunk
boundaries decide which paths share a stream and ``block_steps`` the order
of draws inside it. ``McBatch.stream_key`` carries the triple into reports
and run manifests.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy import ndimage, stats
from scipy.interpolate import RegularGridInterpolator

from ..utils.logger import get_logger
from ..utils.performance import ParallelProcessor
from .errors import GluingError
from .grid import CellSet, DomainSpec, GridGeometry, ScalarField, build_domain
from .obstacle import FreezingMap, ObstacleTrajectory, freezing_map

logger = get_logger('stochastic')

NEVER = 1e30
OVERSHOOT = 0.5826
UNSTOPPED_LIMIT = 1e-3


class Barrier:
    """Space-time set ``{(t, x): t >= s(x) + shift}`` from grid freezing times.

    ``s`` is interpolated (bi)linearly between cell centres; points whose
    cell lies outside U stop immediately.
    """

    def __init__(self, s: np.ndarray, U: CellSet, shift: float = 0.0, horizon: float = 0.0):
        self.geometry = U.geometry
        self.U = U
        self.shift = shift
        self.horizon = horizon
        values = np.where(np.isinf(s), NEVER, s)
        self.s = np.where(U.mask, values, 0.0)
        self._axes = tuple(self.geometry.axis_centers(a) for a in range(self.geometry.dim))
        self._interp = RegularGridInterpolator(self._axes, self.s, method='linear',
                                               bounds_error=False, fill_value=0.0)

    @classmethod
    def from_freezing_map(cls, fmap: FreezingMap, horizon: float = 0.0) -> 'Barrier':
        if not fmap.undecided().is_empty():
            logger.warning(f"⚠️  Barrier built from a freezing map with {fmap.undecided().count()} undecided cells")
        return cls(fmap.s, fmap.U, horizon=horizon)

    @classmethod
    def from_trajectory(cls, traj: ObstacleTrajectory) -> 'Barrier':
        """Barrier of a run; its horizon is the time the run decayed to."""
        return cls.from_freezing_map(freezing_map(traj), horizon=traj.t_end)

    @classmethod
    def exit_only(cls, U: CellSet) -> 'Barrier':
        """No freezing inside U; paths stop on leaving it."""
        return cls(np.full(U.geometry.shape, np.inf), U)

    @property
    def max_finite(self) -> float:
        finite = self.U.mask & (self.s < NEVER)
        return float(self.s[finite].max()) if finite.any() else 0.0

    def freezing_time(self, points: np.ndarray) -> np.ndarray:
        """Interpolated ``s`` at ``points`` of shape ``(N, d)``."""
        if self.geometry.dim == 1:
            values = np.interp(points[:, 0], self._axes[0], self.s)
        else:
            values = self._interp(points)
        g = self.geometry
        idx = np.floor((points - np.asarray(g.origin)) / g.h).astype(np.int64)
        inside_box = np.all((idx >= 0) & (idx < np.asarray(g.shape)), axis=1)
        in_U = np.zeros(points.shape[0], dtype=bool)
        clipped = np.clip(idx, 0, np.asarray(g.shape) - 1)
        in_U[inside_box] = self.U.mask[tuple(clipped[inside_box].T)]
        return np.where(in_U, values, 0.0)

    def hit(self, times: np.ndarray, points: np.ndarray) -> np.ndarray:
        return times >= self.freezing_time(points) + self.shift


class GluedBarrier:
    """Follow ``first`` up to ``t1``, then ``second`` restarted at ``t1``."""

    def __init__(self, first: Barrier, t1: float, second: Barrier):
        self.first = first
        self.t1 = t1
        self.second = second
        self.geometry = first.geometry

    @property
    def max_finite(self) -> float:
        return max(self.first.max_finite, self.t1 + self.second.max_finite)

    @property
    def horizon(self) -> float:
        return max(self.first.horizon, self.t1 + self.second.horizon)

    def hit(self, times: np.ndarray, points: np.ndarray) -> np.ndarray:
        early = times <= self.t1
        out = np.empty(times.shape, dtype=bool)
        if early.any():
            out[early] = self.first.hit(times[early], points[early])
        if (~early).any():
            out[~early] = self.second.hit(times[~early] - self.t1, points[~early])
        return out


BarrierLike = Union[Barrier, GluedBarrier]


@dataclass
class McBatch:
    """Stopped positions and times of one Monte Carlo run."""
    tau: np.ndarray
    positions: np.ndarray
    n_paths: int
    dt: float
    seed: int
    mass: float
    t_cap: float
    unstopped: int
    geometry: GridGeometry
    chunk_size: int = 4096
    block_steps: int = 256
    integrals: Dict[Callable[..., np.ndarray], np.ndarray] = field(default_factory=dict, repr=False)
    replay: Optional[Callable[[Callable[..., np.ndarray]], np.ndarray]] = field(default=None, repr=False)

    @property
    def flagged(self) -> bool:
        return self.unstopped > UNSTOPPED_LIMIT * self.n_paths

    @property
    def mean_tau(self) -> float:
        return float(self.tau.mean())

    @property
    def stderr_tau(self) -> float:
        return float(self.tau.std(ddof=1) / math.sqrt(self.n_paths)) if self.n_paths > 1 else 0.0

    @property
    def stream_key(self) -> Dict[str, int]:
        """Everything the random draws depend on, besides the inputs."""
        return {'seed': self.seed, 'chunk_size': self.chunk_size, 'block_steps': self.block_steps}

    def stopped_histogram(self) -> np.ndarray:
        """Empirical stopped law as a probability per grid cell."""
        g = self.geometry
        edges = [g.origin[a] + g.h * np.arange(g.shape[a] + 1) for a in range(g.dim)]
        counts, _ = np.histogramdd(self.positions, bins=edges)
        return counts / self.n_paths

    def summary(self) -> dict:
        return {
            'n_paths': self.n_paths, 'dt': self.dt, **self.stream_key, 'mass': self.mass,
            'mean_tau': self.mean_tau, 'stderr_tau': self.stderr_tau,
            't_cap': self.t_cap, 'unstopped': self.unstopped, 'flagged': self.flagged,
        }


def _start_sampler(mu: Union[ScalarField, Sequence[float]], geometry: GridGeometry):
    if isinstance(mu, ScalarField):
        weights = np.clip(mu.values.ravel(), 0.0, None)
        total = weights.sum()
        if total <= 0.0:
            raise ValueError("cannot sample from a zero density")
        prob = weights / total
        centers = np.stack([c.ravel() for c in geometry.centers()], axis=1)

        def sample(rng: np.random.Generator, n: int) -> np.ndarray:
            cells = rng.choice(prob.size, size=n, p=prob)
            return centers[cells] + (rng.random((n, geometry.dim)) - 0.5) * geometry.h
        return sample, float(mu.integral())

    point = np.asarray(mu, dtype=float).reshape(1, -1)

    def sample_point(rng: np.random.Generator, n: int) -> np.ndarray:
        return np.repeat(point, n, axis=0)
    return sample_point, 1.0


def _simulate_chunk(rng: np.random.Generator, n: int, sample_start, barrier: BarrierLike,
                    dt: float, t_cap: float, block_steps: int,
                    integrand: Optional[Callable[..., np.ndarray]] = None):
    dim = barrier.geometry.dim
    pos = sample_start(rng, n)
    tau = np.zeros(n)
    acc = np.zeros(n)
    alive = ~barrier.hit(np.zeros(n), pos)
    t = 0.0
    sqrt_dt = math.sqrt(dt)
    while alive.any() and t < t_cap:
        idx = np.flatnonzero(alive)
        m = idx.size
        steps = block_steps
        increments = rng.standard_normal((steps, m, dim)) * sqrt_dt
        path = pos[idx][None, :, :] + np.cumsum(increments, axis=0)
        times = t + dt * np.arange(1, steps + 1)
        hit = barrier.hit(np.repeat(times, m), path.reshape(-1, dim)).reshape(steps, m)
        any_hit = hit.any(axis=0)
        first = np.where(any_hit, hit.argmax(axis=0), steps - 1)

        if integrand is not None:
            # left-point rule over [t_k, t_{k+1}) for every step before stopping
            left = np.concatenate([pos[idx][None, :, :], path[:-1]], axis=0)
            f = integrand(*left.reshape(-1, dim).T).reshape(steps, m)
            taken = np.arange(steps)[:, None] <= first[None, :]
            acc[idx] += (f * taken).sum(axis=0) * dt

        pos[idx] = path[first, np.arange(m)]
        tau[idx[any_hit]] = times[first[any_hit]]
        alive[idx[any_hit]] = False
        t += steps * dt
    tau[alive] = t
    return tau, pos, acc, int(alive.sum())


def sample_hitting(mu: Union[ScalarField, Sequence[float]], barrier: BarrierLike, n_paths: int,
                   dt: Optional[float] = None, seed: int = 12345,
                   chunk_size: int = 4096, block_steps: int = 256,
                   t_cap: Optional[float] = None,
                   processor: Optional[ParallelProcessor] = None,
                   show_progress: bool = False) -> McBatch:
    """
    Hitting times of the barrier for Brownian paths started from μ.

    Args:
        mu: Source density, sampled as ``μ/‖μ‖``, or a single start point
        barrier: Space-time stopping set
        n_paths: Number of paths
        dt: Time step (default ``(h/4)²``)
        seed: Root seed of the per-chunk streams
        chunk_size: Paths per chunk
        block_steps: Increments drawn per cumulative sum
        t_cap: Simulation horizon (default ``max(4·max finite s, 2·horizon)``)
        processor: Worker pool for the chunks
        show_progress: Show a tqdm bar over chunks

    Returns:
        McBatch; flagged when more than 0.1% of paths are unstopped at ``t_cap``
    """
    geometry = barrier.geometry
    dt = dt or (geometry.h / 4.0) ** 2
    t_cap = t_cap if t_cap is not None else max(4.0 * barrier.max_finite, 2.0 * barrier.horizon)
    sample_start, mass = _start_sampler(mu, geometry)
    processor = processor or ParallelProcessor(1)
    chunks = [(c, min(chunk_size, n_paths - c * chunk_size))
              for c in range(math.ceil(n_paths / chunk_size))]

    def run(integrand=None, progress=False):
        def one(chunk):
            index, n = chunk
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))
            return _simulate_chunk(rng, n, sample_start, barrier, dt, t_cap, block_steps, integrand)
        return processor.map_ordered(one, chunks, show_progress=progress, description='path chunks')

    results = run(progress=show_progress)
    tau = np.concatenate([r[0] for r in results])
    positions = np.concatenate([r[1] for r in results])
    unstopped = sum(r[3] for r in results)
    batch = McBatch(tau, positions, n_paths, dt, seed, mass, t_cap, unstopped, geometry,
                    chunk_size=chunk_size, block_steps=block_steps)
    batch.replay = lambda integrand: np.concatenate([r[2] for r in run(integrand)])
    if batch.flagged:
        logger.warning(f"⚠️  {unstopped}/{n_paths} paths unstopped at t={t_cap:.4g}")
    logger.debug(f"MC batch: E[tau]={batch.mean_tau:.6g} ± {batch.stderr_tau:.2g}")
    return batch


def exit_time_batch(n_paths: int, n: int = 64, dt: Optional[float] = None, seed: int = 12345,
                    start: float = 0.5, t_cap: float = 10.0, **kwargs) -> McBatch:
    """Exit times of (0, 1) from a fixed start point, without freezing."""
    _, U = build_domain(DomainSpec('interval', dim=1, n=n))
    return sample_hitting((start,), Barrier.exit_only(U), n_paths, dt=dt, seed=seed, t_cap=t_cap, **kwargs)


def exit_time_tolerance(batch: McBatch) -> float:
    """``3·stderr`` plus the discrete-monitoring overshoot ``0.5826·√dt``."""
    return 3.0 * batch.stderr_tau + OVERSHOOT * math.sqrt(batch.dt)


def weighted_occupation(batch: McBatch, laplacian_u: Callable[..., np.ndarray]) -> dict:
    """
    Estimate ``E[∫₀^τ −Δu(W_t) dt]`` by replaying the batch streams.

    Args:
        batch: Completed batch
        laplacian_u: ``Δu(*coords)``, e.g. ``WeightSpec.laplacian``

    Returns:
        Dict with ``estimate`` and ``stderr`` per path
    """
    if laplacian_u not in batch.integrals:
        if batch.replay is None:
            raise ValueError("batch cannot be replayed")
        batch.integrals[laplacian_u] = batch.replay(lambda *c: -np.asarray(laplacian_u(*c), dtype=float)
                                            * np.ones_like(c[0]))
    values = batch.integrals[laplacian_u]
    return {
        'estimate': float(values.mean()),
        'stderr': float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0,
    }


def occupation_quadrature(traj: ObstacleTrajectory, laplacian_u: Callable[..., np.ndarray],
                          mass: float) -> float:
    """Grid value of ``∫∫(−Δu)η / ‖μ‖ = 2∫(−Δu)(w0 − w_final) / ‖μ‖``."""
    lap = np.broadcast_to(laplacian_u(*traj.geometry.centers()), traj.geometry.shape)
    return float(2.0 * (-lap * (traj.w0 - traj.w_final)).sum() * traj.geometry.cell_volume / mass)


# ---------------------------------------------------------------------------
# Stopped-law comparisons
# ---------------------------------------------------------------------------

def kolmogorov_distance(positions: np.ndarray, target: ScalarField) -> float:
    """Sup distance between the empirical CDF and the cell-wise linear CDF of ``target``."""
    g = target.geometry
    edges = g.origin[0] + g.h * np.arange(g.shape[0] + 1)
    cdf_nodes = np.concatenate([[0.0], np.cumsum(target.values)])
    cdf_nodes = cdf_nodes / cdf_nodes[-1]

    def cdf(x):
        return np.interp(x, edges, cdf_nodes)
    return float(stats.kstest(np.asarray(positions).ravel(), cdf).statistic)


def total_variation(batch: McBatch, target: ScalarField) -> float:
    """``½ Σ |p_emp − p_target|`` over grid cells."""
    p = batch.stopped_histogram()
    q = np.clip(target.values, 0.0, None)
    q = q / q.sum()
    return float(0.5 * np.abs(p - q).sum())


def law_distance(batch: McBatch, target: ScalarField) -> Dict[str, float]:
    """Kolmogorov distance in 1D, total variation in 2D, with the acceptance bound."""
    g = target.geometry
    bound = 2.0 / math.sqrt(batch.n_paths) + 2.0 * g.h
    if g.dim == 1:
        return {'metric': 'kolmogorov', 'distance': kolmogorov_distance(batch.positions, target), 'bound': bound}
    return {'metric': 'total_variation', 'distance': total_variation(batch, target), 'bound': bound}


def mass_outside(batch: McBatch, fmap: FreezingMap, dilation: int = 2) -> float:
    """Fraction of stopped positions outside ``Σ ∪ F0`` dilated by ``dilation`` cells."""
    support = (fmap.sigma() | fmap.F0()).mask
    if dilation > 0:
        support = ndimage.binary_dilation(support, iterations=dilation)
    p = batch.stopped_histogram()
    return float(p[~support].sum())


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def maximality_audit(mu: ScalarField, traj_max: ObstacleTrajectory, traj_alt: ObstacleTrajectory,
                     laplacian_u: Callable[..., np.ndarray], n_paths: int, dt: Optional[float] = None,
                     seed: int = 12345, **kwargs) -> dict:
    """Weighted occupation of the maximal target against an admissible alternative.

    Both batches share the seed. The maximal value must not fall below the
    alternative by more than three combined standard errors.
    """
    rows = {}
    for label, traj in (('maximal', traj_max), ('alternative', traj_alt)):
        batch = sample_hitting(mu, Barrier.from_trajectory(traj), n_paths,
                               dt=dt, seed=seed, **kwargs)
        value = weighted_occupation(batch, laplacian_u)
        value['quadrature'] = occupation_quadrature(traj, laplacian_u, batch.mass)
        value['mean_tau'] = batch.mean_tau
        rows[label] = value
    margin = 3.0 * math.hypot(rows['maximal']['stderr'], rows['alternative']['stderr'])
    rows['passed'] = rows['maximal']['estimate'] >= rows['alternative']['estimate'] - margin
    rows['margin'] = margin
    return rows


def gluing_experiment(mu: ScalarField, traj0: ObstacleTrajectory, t1: float,
                      traj1: Optional[ObstacleTrajectory], target: ScalarField, n_paths: int,
                      seed: int = 12345, dt: Optional[float] = None, **kwargs) -> dict:
    """
    Simulate the glued stopping rule and compare its law with the glued target.

    Paths follow the barrier of ``traj0`` up to ``t1``; survivors continue
    against the barrier of ``traj1`` shifted by ``t1``.

    Raises:
        GluingError: If ``{s1 > 0} ⊂ {s0 > t1}`` fails on some cell
    """
    map0 = freezing_map(traj0)
    barrier0 = Barrier.from_freezing_map(map0, horizon=traj0.t_end)
    if traj1 is None or t1 >= traj0.t_end:
        barrier = barrier0
        mode = 'first'
    else:
        map1 = freezing_map(traj1)
        bad = traj1.U.mask & (map1.s > 0.0) & ~(map0.s > t1)
        if bad.any():
            raise GluingError("continuation starts on cells frozen by t1",
                              [tuple(int(i) for i in c) for c in np.argwhere(bad)[:20]])
        barrier1 = Barrier.from_freezing_map(map1, horizon=traj1.t_end)
        if t1 <= 0.0:
            barrier, mode = barrier1, 'second'
        else:
            barrier, mode = GluedBarrier(barrier0, t1, barrier1), 'glued'

    batch = sample_hitting(mu, barrier, n_paths, dt=dt, seed=seed, **kwargs)
    distance = law_distance(batch, target)
    report = {'t1': t1, 'mode': mode, **distance, 'batch': batch.summary()}
    report['passed'] = bool(distance['distance'] <= distance['bound'] and not batch.flagged)
    return report
