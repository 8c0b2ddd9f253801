"""
Parabolic obstacle problem for the potential ``w``:

    ∂_t w − ½Δw = −½ν χ{w > 0},   w(0) = max(Δ⁻¹(ν − μ), 0)

Each backward-Euler step is the box complementarity problem

    0 <= z <= w_k,   A z − b ⟂ z,   A = I/Δt − ½Δ_h,   b = w_k/Δt − ½ν

solved by red-black projected SOR while cells of the transition zone are
still freezing, then by a direct active-set solve with doubling Δt while
the never-freezing remainder decays.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import splu
from tqdm import tqdm

from ..utils.logger import get_logger
from .errors import GluingError, NotSubharmonicError
from .grid import CellSet, GridGeometry, NullSet, ScalarField, label_components
from .potential import check_subharmonic_order, laplacian

logger = get_logger('obstacle')


@dataclass
class ObstacleOptions:
    """Time stepping and tolerance knobs of :func:`run_obstacle`."""
    dt: Optional[float] = None
    t_max: float = 4.0
    tol_w_factor: float = 0.25
    promotion_factor: float = 100.0
    max_sweeps: int = 5000
    omega: float = 1.2
    sweep_tol_factor: float = 1e-3
    snapshot_every: int = 50
    min_component_cells: Optional[int] = None
    tail_coarsening: bool = True
    tail_fraction: float = 1e-3
    cg_rtol: float = 1e-10
    cg_maxiter: Optional[int] = None
    show_progress: bool = False

    @classmethod
    def from_settings(cls, obstacle_config: Dict, **overrides) -> 'ObstacleOptions':
        keys = ('dt', 't_max', 'tol_w_factor', 'promotion_factor', 'max_sweeps', 'omega',
                'sweep_tol_factor', 'snapshot_every', 'min_component_cells', 'tail_coarsening',
                'tail_fraction', 'cg_rtol', 'cg_maxiter')
        values = {k: obstacle_config[k] for k in keys if k in obstacle_config}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class NucleationEvent:
    """A jump in the component count of the active set between two steps."""
    kind: str  # 'nucleation' or 'jump'
    t: float
    step: int
    before: int
    after: int
    diameter: int = 0

    def to_dict(self) -> dict:
        return {'kind': self.kind, 't': self.t, 'step': self.step,
                'before': self.before, 'after': self.after, 'diameter': self.diameter}


@dataclass
class ObstacleTrajectory:
    """Time-discrete solution restricted to a window around ``{w0 > 0}``.

    Snapshots are window arrays; :meth:`w_at` embeds them in the box.
    """
    geometry: GridGeometry
    U: CellSet
    window: Tuple[slice, ...]
    nu: np.ndarray
    w0: np.ndarray
    w_final: np.ndarray
    dt: float
    tol_w: float
    promotion_tol: float
    times: List[float]
    snapshots: List[np.ndarray]
    s_recorded: np.ndarray
    w_at_decision: np.ndarray
    decision_time: float
    t_end: float
    steps: int
    flagged_steps: List[int]
    max_complementarity: float
    component_history: List[Tuple[float, int, int]]
    jumps: List[NucleationEvent]
    integral_history: List[Tuple[float, float]]
    monotonicity_violations: int
    nesting_violations: int
    stop_reason: str
    recorded: Dict[float, Dict[str, np.ndarray]] = field(default_factory=dict)

    def w_at(self, index: int) -> np.ndarray:
        full = np.zeros(self.geometry.shape)
        full[self.window] = self.snapshots[index]
        return full

    def snapshot_index(self, t: float) -> int:
        """Index of the last snapshot taken at or before ``t``."""
        idx = int(np.searchsorted(np.asarray(self.times), t + 1e-12, side='right') - 1)
        return max(idx, 0)

    @property
    def integral_w0(self) -> float:
        return float(self.w0.sum() * self.geometry.cell_volume)

    @property
    def integral_w_final(self) -> float:
        return float(self.w_final.sum() * self.geometry.cell_volume)

    @property
    def occupation(self) -> float:
        """``∫∫η dt dx = 2∫(w0 − w_final)`` by telescoping the backward differences."""
        return 2.0 * (self.integral_w0 - self.integral_w_final)

    @property
    def occupation_defect(self) -> float:
        """``|∫∫η − 2∫w0| / 2∫w0``."""
        if self.integral_w0 <= 0.0:
            return 0.0
        return abs(self.occupation - 2.0 * self.integral_w0) / (2.0 * self.integral_w0)

    @property
    def converged(self) -> bool:
        return not self.flagged_steps and self.stop_reason != 't_max'

    def eta_between(self, i: int, j: int) -> np.ndarray:
        """Time-averaged ``η`` over snapshot interval ``[t_i, t_j]``."""
        return 2.0 * (self.w_at(i) - self.w_at(j)) / (self.times[j] - self.times[i])

    def summary(self) -> dict:
        return {
            'dt': self.dt, 'tol_w': self.tol_w, 'steps': self.steps, 't_end': self.t_end,
            'decision_time': self.decision_time, 'stop_reason': self.stop_reason,
            'integral_w0': self.integral_w0, 'integral_w_final': self.integral_w_final,
            'occupation': self.occupation, 'occupation_defect': self.occupation_defect,
            'flagged_steps': len(self.flagged_steps), 'max_complementarity': self.max_complementarity,
            'monotonicity_violations': self.monotonicity_violations,
            'nesting_violations': self.nesting_violations,
        }


@dataclass
class FreezingMap:
    """Freezing times on U; ``np.inf`` marks cells that never freeze."""
    s: np.ndarray
    U: CellSet
    undecided_mask: np.ndarray
    t_max: float

    def F0(self) -> CellSet:
        return CellSet(self.U.mask & (self.s == 0.0), self.U.geometry)

    def sigma(self) -> CellSet:
        return CellSet(self.U.mask & (self.s > 0.0) & np.isfinite(self.s), self.U.geometry)

    def never(self) -> CellSet:
        return CellSet(self.U.mask & np.isinf(self.s), self.U.geometry)

    def undecided(self) -> CellSet:
        return CellSet(self.undecided_mask & self.U.mask, self.U.geometry)

    def value_at(self, point: Sequence[float]) -> float:
        """Freezing time at a point; 1D values interpolate finite neighbours."""
        geometry = self.U.geometry
        if geometry.dim == 1:
            x = geometry.axis_centers(0)
            finite = np.isfinite(self.s) & self.U.mask
            i = geometry.index_of(point)[0]
            if not finite[i]:
                return float(self.s[i])
            return float(np.interp(point[0], x[finite], self.s[finite]))
        return float(self.s[geometry.index_of(point)])

    def csv_values(self) -> np.ndarray:
        """``s`` with the never-freezing sentinel written as −1 and cells off U as NaN."""
        out = np.where(np.isinf(self.s), -1.0, self.s)
        return np.where(self.U.mask, out, np.nan)

    def summary(self) -> dict:
        finite = self.U.mask & np.isfinite(self.s)
        return {
            'F0_measure': self.F0().measure(),
            'sigma_measure': self.sigma().measure(),
            'never_measure': self.never().measure(),
            'undecided_measure': self.undecided().measure(),
            'max_finite_s': float(self.s[finite].max()) if finite.any() else 0.0,
        }


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------

def initial_potential(mu: ScalarField, nu: ScalarField, U: CellSet,
                      blocked: Optional[NullSet] = None, rtol: float = 1e-10,
                      maxiter: Optional[int] = None) -> np.ndarray:
    """``w0 = max(Δ⁻¹(ν − μ), 0)`` on U after the subharmonic order check.

    Raises:
        NotSubharmonicError: If ``μ <=_SH ν`` fails on the grid
    """
    report = check_subharmonic_order(mu, nu, U, blocked=blocked, rtol=rtol, maxiter=maxiter)
    if not report.verdict:
        raise NotSubharmonicError(report.min_v, report.argmin, report.tol_v)
    return np.where(U.mask, np.maximum(report.potential.v.values, 0.0), 0.0)


def _neighbour_sum(z: np.ndarray) -> np.ndarray:
    out = np.zeros_like(z)
    for axis in range(z.ndim):
        lo = [slice(None)] * z.ndim
        hi = [slice(None)] * z.ndim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        out[tuple(hi)] += z[tuple(lo)]
        out[tuple(lo)] += z[tuple(hi)]
    return out


def _apply_A(z: np.ndarray, dt: float, h: float) -> np.ndarray:
    return z / dt - 0.5 * (_neighbour_sum(z) - 2 * z.ndim * z) / h ** 2


def _psor_step(w_prev: np.ndarray, nu: np.ndarray, guess: np.ndarray, dt: float, h: float,
               omega: float, tol: float, max_sweeps: int, colors: Tuple[np.ndarray, np.ndarray]
               ) -> Tuple[np.ndarray, int, bool]:
    diag = 1.0 / dt + w_prev.ndim / h ** 2
    coupling = 0.5 / h ** 2
    b = w_prev / dt - 0.5 * nu
    z = np.clip(guess, 0.0, w_prev)
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for color in colors:
            gauss_seidel = (b + coupling * _neighbour_sum(z)) / diag
            updated = np.clip(z + omega * (gauss_seidel - z), 0.0, w_prev)
            delta = np.abs(updated - z)[color]
            if delta.size:
                change = max(change, float(delta.max()))
            z[color] = updated[color]
        if change < tol:
            return z, sweep, True
    return z, max_sweeps, False


class _TailSolver:
    """Active-set solve of the box complementarity problem for large Δt."""

    def __init__(self, shape: Tuple[int, ...], h: float):
        geometry = GridGeometry(len(shape), int(round(1.0 / h)), shape, (0.0,) * len(shape))
        self.L = laplacian(geometry)
        self.shape = shape
        self.size = int(np.prod(shape))

    def step(self, w_prev: np.ndarray, nu: np.ndarray, dt: float, max_rounds: int = 20) -> np.ndarray:
        b = (w_prev / dt - 0.5 * nu).ravel()
        upper = w_prev.ravel()
        A = (sparse.identity(self.size, format='csr') / dt - 0.5 * self.L).tocsc()
        free = upper > 0.0
        z = np.zeros(self.size)
        for _ in range(max_rounds):
            idx = np.flatnonzero(free)
            z = np.zeros(self.size)
            if idx.size:
                sub = A[idx][:, idx].tocsc()
                z[idx] = splu(sub).solve(b[idx])
            clipped = np.clip(z, 0.0, upper)
            new_free = clipped > 0.0
            if np.array_equal(new_free, free):
                z = clipped
                break
            free = new_free
            z = clipped
        return z.reshape(self.shape)


def _window_for(w0: np.ndarray) -> Tuple[slice, ...]:
    positive = np.argwhere(w0 > 0.0)
    if positive.size == 0:
        return tuple(slice(0, 0) for _ in w0.shape)
    lo = np.maximum(positive.min(axis=0) - 1, 0)
    hi = np.minimum(positive.max(axis=0) + 2, w0.shape)
    return tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))


def _crop_faces(blocked: Optional[NullSet], window: Tuple[slice, ...], geometry: GridGeometry) -> Optional[NullSet]:
    if blocked is None or blocked.is_empty():
        return None
    faces = []
    for axis, face in enumerate(blocked.faces):
        sl = list(window)
        sl[axis] = slice(window[axis].start, window[axis].stop - 1)
        faces.append(face[tuple(sl)])
    shape = tuple(s.stop - s.start for s in window)
    return NullSet(tuple(faces), geometry.shifted(tuple(s.start for s in window), shape))


def run_obstacle(mu: ScalarField, nu: ScalarField, U: CellSet,
                 options: Optional[ObstacleOptions] = None,
                 w0: Optional[np.ndarray] = None,
                 blocked: Optional[NullSet] = None,
                 record_times: Sequence[float] = ()) -> ObstacleTrajectory:
    """
    Evolve the obstacle problem from ``w0 = max(Δ⁻¹(ν − μ), 0)``.

    Args:
        mu: Source density
        nu: Target density (admissible for μ)
        U: Domain cells
        options: Time stepping and tolerances
        w0: Initial potential; computed and order-checked if omitted
        blocked: Null-set faces cutting connectivity of active sets
        record_times: Times at which ``w`` and ``η`` are kept in full

    Returns:
        ObstacleTrajectory with freezing data, component history and checks
    """
    options = options or ObstacleOptions()
    geometry = mu.geometry
    h = geometry.h
    dt0 = options.dt or 0.5 * h * h
    tol_w = options.tol_w_factor * dt0
    promotion_tol = options.promotion_factor * tol_w
    min_cells = options.min_component_cells or (1 if geometry.dim == 1 else 3)

    if w0 is None:
        w0 = initial_potential(mu, nu, U, blocked, rtol=options.cg_rtol, maxiter=options.cg_maxiter)
    w0 = np.where(U.mask, np.maximum(w0, 0.0), 0.0)

    window = _window_for(w0)
    W = w0[window].copy()
    nu_w = nu.values[window]
    heavy = (nu_w >= 0.5) & U.mask[window]
    faces = _crop_faces(blocked, window, geometry)

    s = np.full(geometry.shape, np.inf)
    s[U.mask & (w0 <= tol_w)] = 0.0
    s_win = s[window]
    s_win[W <= tol_w] = 0.0

    grids = np.indices(W.shape).sum(axis=0) if W.size else np.zeros(W.shape, dtype=int)
    colors = ((grids % 2) == 0, (grids % 2) == 1)
    sweep_tol = options.sweep_tol_factor * tol_w
    complementarity_tol = 0.1 * tol_w

    active = W > tol_w
    labels, count = label_components(active, faces, min_cells) if W.size else (None, 0)
    component_history = [(0.0, 0, count)]
    jumps: List[NucleationEvent] = []
    times, snapshots = [0.0], [W.copy()]
    integral_history = [(0.0, float(W.sum() * geometry.cell_volume))]
    integral0 = integral_history[0][1]
    recorded: Dict[float, Dict[str, np.ndarray]] = {}
    pending = sorted(float(t) for t in record_times)
    while pending and pending[0] <= 0.0:
        recorded[pending.pop(0)] = {'t': np.float64(0.0), 'w': w0.copy(), 'eta': np.zeros(geometry.shape)}

    flagged: List[int] = []
    max_comp = 0.0
    mono_violations = 0
    nest_violations = 0
    t, step, dt = 0.0, 0, dt0
    prev = W.copy()
    phase = 'freezing'
    decision_time = 0.0
    w_decision = None
    stop_reason = 'frozen'
    tail_solver = None

    progress = tqdm(total=options.t_max, desc='obstacle', unit='t', disable=not options.show_progress, leave=False)
    while W.size and W.max() > tol_w:
        if phase == 'freezing' and not (active & heavy).any():
            phase = 'tail'
            decision_time = t
            w_decision = W.copy()
            logger.debug(f"Transition zone frozen at t={t:.6g}; decaying remainder")
        if t >= options.t_max - 1e-15:
            stop_reason = 't_max'
            break
        if phase == 'tail':
            if integral_history[-1][1] <= options.tail_fraction * integral0:
                stop_reason = 'decayed'
                break
            if options.tail_coarsening:
                dt = min(2.0 * dt, max(options.t_max - t, dt0))
        step_dt = min(dt, options.t_max - t) if phase == 'tail' else dt

        if phase == 'tail' and step_dt / h ** 2 > 4.0:
            if tail_solver is None:
                tail_solver = _TailSolver(W.shape, h)
            Z = tail_solver.step(W, nu_w, step_dt)
            converged = True
        else:
            guess = np.clip(2.0 * W - prev, 0.0, W)
            Z, _, converged = _psor_step(W, nu_w, guess, step_dt, h, options.omega,
                                         sweep_tol, options.max_sweeps, colors)
        residual = Z - np.clip(Z - step_dt * (_apply_A(Z, step_dt, h) - (W / step_dt - 0.5 * nu_w)), 0.0, W)
        comp = float(np.abs(residual).max()) if residual.size else 0.0
        max_comp = max(max_comp, comp)
        step += 1
        t += step_dt
        progress.update(step_dt)
        if not converged or comp > complementarity_tol:
            flagged.append(step)

        mono_violations += int((Z > W + 1e-14).sum())
        new_active = Z > tol_w
        nest_violations += int((new_active & ~active).sum())

        if phase == 'freezing':
            crossing = (W > tol_w) & ~new_active
            s_win[crossing & np.isinf(s_win)] = t

        if new_active.sum() != active.sum():
            new_labels, new_count = label_components(new_active, faces, min_cells)
            if new_count > count and phase == 'freezing':
                logger.debug(f"Active set split at t={t:.6g}: {count} -> {new_count} components")
            jumps.extend(_vanished_components(labels, count, new_active, t, step))
            labels, count = new_labels, new_count
            component_history.append((t, step, count))

        while pending and t >= pending[0] - 0.5 * step_dt:
            key = pending.pop(0)
            w_full = np.zeros(geometry.shape)
            w_full[window] = Z
            eta_full = np.zeros(geometry.shape)
            eta_full[window] = np.where(Z > 0.0, -2.0 * (Z - W) / step_dt, 0.0)
            recorded[key] = {'t': np.float64(t), 'w': w_full, 'eta': eta_full}

        prev, W, active = W, Z, new_active
        integral_history.append((t, float(W.sum() * geometry.cell_volume)))
        if step % options.snapshot_every == 0 or phase == 'tail':
            times.append(t)
            snapshots.append(W.copy())
    progress.close()

    if times[-1] != t:
        times.append(t)
        snapshots.append(W.copy())
    if w_decision is None:
        decision_time = t
        w_decision = W.copy()

    w_final = np.zeros(geometry.shape)
    w_final[window] = W
    w_dec_full = np.zeros(geometry.shape)
    w_dec_full[window] = w_decision
    s[window] = s_win
    if flagged:
        logger.warning(f"⚠️  {len(flagged)} obstacle steps exceeded the complementarity tolerance")

    return ObstacleTrajectory(
        geometry=geometry, U=U, window=window, nu=nu.values, w0=w0, w_final=w_final,
        dt=dt0, tol_w=tol_w, promotion_tol=promotion_tol, times=times, snapshots=snapshots,
        s_recorded=s, w_at_decision=w_dec_full, decision_time=decision_time, t_end=t,
        steps=step, flagged_steps=flagged, max_complementarity=max_comp,
        component_history=component_history, jumps=jumps, integral_history=integral_history,
        monotonicity_violations=mono_violations, nesting_violations=nest_violations,
        stop_reason=stop_reason, recorded=recorded,
    )


def _vanished_components(labels: Optional[np.ndarray], count: int, new_active: np.ndarray,
                         t: float, step: int) -> List[NucleationEvent]:
    if labels is None or count == 0:
        return []
    alive = np.unique(labels[new_active])
    events = []
    for index, box in enumerate(ndimage.find_objects(labels), start=1):
        if box is None or index in alive:
            continue
        diameter = max(sl.stop - sl.start for sl in box)
        if diameter > 2:
            events.append(NucleationEvent('jump', t, step, count, count - 1, diameter))
    return events


def freezing_map(traj: ObstacleTrajectory) -> FreezingMap:
    """
    First times with ``w <= tol_w``.

    Cells that never crossed get ``∞`` when ``w`` at the decision time
    exceeds the promotion tolerance; the others are promoted to the
    decision time and reported as undecided.
    """
    s = traj.s_recorded.copy()
    uncrossed = traj.U.mask & np.isinf(s)
    undecided = uncrossed & (traj.w_at_decision <= traj.promotion_tol)
    s[undecided] = traj.decision_time
    s[~traj.U.mask] = 0.0
    if undecided.any():
        logger.info(f"🔍 {int(undecided.sum())} cells between tol_w and the promotion tolerance marked undecided")
    return FreezingMap(s, traj.U, undecided, traj.t_end)


def detect_nucleation(traj: ObstacleTrajectory) -> List[NucleationEvent]:
    """Steps where the active set gains components, plus recorded jumps."""
    events = []
    for (_, _, before), (t, step, after) in zip(traj.component_history, traj.component_history[1:]):
        if after > before:
            events.append(NucleationEvent('nucleation', t, step, before, after))
    events.extend(traj.jumps)
    events.sort(key=lambda e: (e.t, e.kind))
    return events


# ---------------------------------------------------------------------------
# Gluing
# ---------------------------------------------------------------------------

@dataclass
class GluedTrajectory:
    """Concatenation of a base run up to ``t1`` and a continuation."""
    t1: float
    w0: np.ndarray
    s: np.ndarray
    nu: np.ndarray
    U: CellSet
    degenerate: str = ''
    report: Dict[str, float] = field(default_factory=dict)

    def freezing_map(self) -> FreezingMap:
        return FreezingMap(self.s, self.U, np.zeros(self.s.shape, dtype=bool), float('inf'))


def glue_trajectories(traj0: ObstacleTrajectory, t1: float, traj1: Optional[ObstacleTrajectory],
                      nu1_tilde: Optional[np.ndarray] = None,
                      direct: Optional[ObstacleTrajectory] = None) -> GluedTrajectory:
    """
    Glue ``traj0`` on ``[0, t1]`` with ``traj1`` shifted by ``t1``.

    The glued potential at time 0 is ``w0(0) − w0(t1) + w1(0)`` and the
    glued target is ``ν̃1 + ν0 χ{s0 <= t1}``. When ``direct`` (a run for
    the glued target) is given, the report carries the sup-norm potential
    difference and the L¹ freezing-time difference on cells finite in both.

    Raises:
        GluingError: If ``{s1 > 0} ⊂ {s0 > t1}`` fails on some cell
    """
    map0 = freezing_map(traj0)
    U = traj0.U
    if t1 <= 0.0 and traj1 is not None:
        map1 = freezing_map(traj1)
        return GluedTrajectory(0.0, traj1.w0.copy(), map1.s.copy(), traj1.nu.copy(), U, 'start')
    all_frozen = map0.never().is_empty() and t1 >= _last_finite(map0.s)
    if traj1 is None or all_frozen or t1 >= traj0.t_end:
        return GluedTrajectory(t1, traj0.w0.copy(), map0.s.copy(), traj0.nu.copy(), U, 'end')

    map1 = freezing_map(traj1)
    started = traj1.U.mask & (map1.s > 0.0)
    alive0 = map0.s > t1
    bad = started & ~alive0
    if bad.any():
        raise GluingError("continuation starts on cells frozen by t1",
                          [tuple(int(i) for i in c) for c in np.argwhere(bad)[:20]])

    w0_t1 = _w_recorded(traj0, t1)
    glued_w0 = traj0.w0 - w0_t1 + traj1.w0
    s = np.where(map0.s <= t1, map0.s, t1 + map1.s)
    s = np.where(U.mask, s, 0.0)
    frozen_early = (map0.s <= t1) & U.mask
    nu_tilde = traj1.nu if nu1_tilde is None else nu1_tilde
    nu1 = nu_tilde + traj0.nu * frozen_early

    report: Dict[str, float] = {'t1': t1, 'glued_target_mass': float(nu1.sum() * U.geometry.cell_volume)}
    if direct is not None:
        direct_map = freezing_map(direct)
        both = U.mask & np.isfinite(s) & np.isfinite(direct_map.s)
        report['potential_sup_difference'] = float(np.abs(glued_w0 - direct.w0).max())
        report['freezing_l1_difference'] = float(np.abs(s - direct_map.s)[both].sum() * U.geometry.cell_volume)
        report['freezing_mismatch_cells'] = int((np.isfinite(s) != np.isfinite(direct_map.s))[U.mask].sum())
    return GluedTrajectory(t1, glued_w0, s, nu1, U, '', report)


def _w_recorded(traj: ObstacleTrajectory, t: float) -> np.ndarray:
    """Recorded ``w`` within half a step of ``t``, else the last snapshot before it."""
    for entry in traj.recorded.values():
        if abs(float(entry['t']) - t) <= 0.5 * traj.dt:
            return entry['w']
    return traj.w_at(traj.snapshot_index(t))


def _last_finite(s: np.ndarray) -> float:
    finite = np.isfinite(s)
    return float(s[finite].max()) if finite.any() else 0.0
