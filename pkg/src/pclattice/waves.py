"""Front tracking, wave-speed estimation, pinning detection and sign maps.

Speeds are measured from initial-value runs started at step data: the
interface position (level crossing, linearly interpolated between layers) is
regressed on time over the second half of the run.  A front is *pinned* when
both the slope and the distance travelled are negligible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .equilibria import equilibrium_branches
from .errors import InconclusiveError, MissingBranchError, ModelError, NotApplicableError, TrackingError
from .lattice import (
    DEFAULT_DT,
    DEFAULT_GUARD,
    DEFAULT_SAMPLE_EVERY,
    InputSignal,
    Method,
    Simulation,
    Topology,
    Trajectory,
    make_step_initial,
    normalize_direction,
)
from .model import ParamSet, make_params
from .parallel import ordered_map

MONOTONE_TOL = 1e-6


@dataclass(frozen=True)
class SpeedOptions:
    extent: int = 200
    t_end: float = 200.0
    dt: float = DEFAULT_DT
    sample_every: int = DEFAULT_SAMPLE_EVERY
    method: Method = Method.RK4
    guard: int = DEFAULT_GUARD
    c_tol: float = 1e-3
    pin_displacement: float = 1.0

    def as_dict(self) -> dict:
        d = self.__dict__.copy()
        d["method"] = Method(self.method).value
        return d


@dataclass
class FrontTrack:
    times: np.ndarray
    positions: np.ndarray
    level: float
    flagged: np.ndarray

    def window(self, start: int) -> FrontTrack:
        return FrontTrack(self.times[start:], self.positions[start:], self.level, self.flagged[start:])


@dataclass
class SpeedEstimate:
    c: float
    fit_residual: float
    displacement: float
    pinned: bool
    direction: str
    extent: int = 0
    t_end: float = 0.0
    retried: bool = False
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    @property
    def sign(self) -> str:
        if self.pinned:
            return "0"
        return "+" if self.c > 0 else "-"


def crossings(values: np.ndarray, layers: np.ndarray, level: float) -> np.ndarray:
    """Every interpolated position where ``values`` crosses ``level``."""
    s = values - level
    sign = np.sign(s)
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    pos = layers[idx] + s[idx] / (s[idx] - s[idx + 1]) * (layers[idx + 1] - layers[idx])
    exact = layers[np.nonzero(sign == 0)[0]]
    if exact.size:
        pos = np.sort(np.concatenate((pos, exact.astype(float))))
    return pos.astype(float)


def is_monotone(values: np.ndarray, tol: float = MONOTONE_TOL) -> bool:
    d = np.diff(values)
    return bool(np.all(d <= tol) or np.all(d >= -tol))


def track_front(trajectory: Trajectory, level: float | None = None) -> FrontTrack:
    """Locate the level crossing of every snapshot.

    Non-monotone snapshots and snapshots with several crossings are flagged;
    for those the crossing nearest the previous position is kept.
    """
    if level is None:
        branches = equilibrium_branches(trajectory.params)
        if not branches.complete:
            raise MissingBranchError("default tracking level needs x_d and x_u")
        level = 0.5 * (branches.x_d + branches.x_u)
    layers = trajectory.layers
    positions = np.empty(len(trajectory.times))
    flagged = np.zeros(len(trajectory.times), dtype=bool)
    previous = None
    for i, (t, snap) in enumerate(zip(trajectory.times, trajectory.states)):
        pos = crossings(snap, layers, level)
        if pos.size == 0:
            raise TrackingError(
                f"level {level:.6g} not crossed at t={t:.6g} "
                f"(range {snap.min():.6g}..{snap.max():.6g}); the front left the window or never formed"
            )
        if pos.size > 1 or not is_monotone(snap):
            flagged[i] = True
        if pos.size > 1 and previous is not None:
            positions[i] = pos[np.argmin(np.abs(pos - previous))]
        else:
            positions[i] = pos[0]
        previous = positions[i]
    return FrontTrack(np.asarray(trajectory.times, dtype=float), positions, level, flagged)


def _fit(track: FrontTrack) -> tuple[float, float]:
    t, x = track.times, track.positions
    if len(t) < 2:
        raise InconclusiveError("too few samples to fit a speed")
    slope, intercept = np.polyfit(t, x, 1)
    resid = x - (slope * t + intercept)
    return float(slope), float(np.sqrt(np.mean(resid**2)))


def _run_front(direction: str, params: ParamSet, opts: SpeedOptions, extent: int, t_end: float) -> Trajectory:
    topo = Topology.bi_infinite(extent, guard=opts.guard)
    sim = Simulation(make_step_initial(direction, params, topo), topo, InputSignal.none(), params,
                     opts.dt, opts.method)
    return sim.run(t_end, opts.sample_every, stop_on_guard=True)


def _speed_hint(traj: Trajectory) -> float:
    track = track_front(traj)
    half = len(track.times) // 2
    if len(track.times) - half < 2:
        return (track.positions[-1] - track.positions[0]) / max(track.times[-1] - track.times[0], 1e-12)
    return _fit(track.window(half))[0]


def estimate_speed(direction: str, params: ParamSet, options: SpeedOptions | None = None) -> SpeedEstimate:
    """Speed of the front started from step data in ``direction`` ('u->d' or 'd->u').

    A run whose front reaches the guard buffer is repeated once with twice the
    duration on a lattice wide enough for the speed seen so far; a second guard
    hit is inconclusive.
    """
    opts = options or SpeedOptions()
    direction = normalize_direction(direction)
    extent, t_end, retried = opts.extent, opts.t_end, False
    traj = _run_front(direction, params, opts, extent, t_end)
    if traj.guard_triggered:
        hint = abs(_speed_hint(traj))
        t_end = 2 * opts.t_end
        extent = max(2 * opts.extent, int(math.ceil(1.1 * hint * t_end)) + 2 * opts.guard + 10)
        retried = True
        traj = _run_front(direction, params, opts, extent, t_end)
        if traj.guard_triggered:
            raise InconclusiveError(
                f"front reached the truncation edge twice ({direction}, extent={extent}, t_end={t_end})"
            )
    track = track_front(traj)
    window = track.window(len(track.times) // 2)
    if window.flagged.any():
        raise InconclusiveError("non-monotone or multi-crossing profile inside the regression window")
    c, rms = _fit(window)
    displacement = float(window.positions.max() - window.positions.min())
    pinned = abs(c) < opts.c_tol and displacement < opts.pin_displacement
    return SpeedEstimate(c, rms, displacement, pinned, direction, extent, t_end, retried, traj)


@dataclass
class ConvergenceReport:
    times: np.ndarray
    distances: np.ndarray
    shift_layers: int
    non_increasing: bool
    final_distance: float
    converged: bool
    tolerance: float


def profile_convergence(trajectory: Trajectory, estimate: SpeedEstimate, lag: float = 10.0,
                        tolerance: float = 1e-3, slack: float = 1e-6) -> ConvergenceReport:
    """Sup-distance between each snapshot and an earlier one translated onto it.

    A profile moving at speed c satisfies v_j(t) = v_{j-k}(t - k/c), so the
    sub-layer part of the translate is carried by time: the earlier snapshot
    is evaluated on a cubic spline in time, at the instant that minimises the
    mismatch near t - k/c.  ``k`` is the whole number of layers travelled in
    roughly ``lag`` time units.
    """
    if estimate.pinned:
        raise NotApplicableError("a pinned front has no translate to align")
    c = estimate.c
    k_abs = max(1, int(round(abs(c) * lag)))
    k = k_abs if c > 0 else -k_abs
    delay = k_abs / abs(c)
    times = np.asarray(trajectory.times, dtype=float)
    states = np.asarray(trajectory.states, dtype=float)
    spline = CubicSpline(times, states, axis=0)
    n = states.shape[1]
    later = slice(k, n) if k > 0 else slice(0, n + k)
    earlier = slice(0, n - k) if k > 0 else slice(-k, n)

    def mismatch(t1, target):
        return float(np.sum((spline(t1)[earlier] - target) ** 2))

    out_t, out_d = [], []
    for t2, snap in zip(times, states):
        guess = t2 - delay
        if guess - 1.0 < times[0]:
            continue
        target = snap[later]
        res = minimize_scalar(mismatch, bounds=(guess - 1.0, guess + 1.0), args=(target,),
                              method="bounded", options={"xatol": 1e-10})
        out_t.append(t2)
        out_d.append(float(np.max(np.abs(spline(res.x)[earlier] - target))))
    dist = np.array(out_d)
    if dist.size == 0:
        raise ModelError("trajectory too short for the requested lag")
    tail = dist[len(dist) // 2:]
    non_increasing = bool(np.all(np.diff(tail) <= slack))
    final = float(dist[-1])
    return ConvergenceReport(np.array(out_t), dist, k, non_increasing, final,
                             non_increasing and final < tolerance, tolerance)


AXES = ("theta", "q", "p")


@dataclass
class SignCell:
    index: tuple[int, int]
    theta: float
    q: float
    p: float
    mu: float
    speeds: dict
    signs: dict
    flags: list

    def row(self) -> dict:
        return {
            "theta": self.theta, "q": self.q, "p": self.p, "mu": self.mu,
            "c_ud": self.speeds.get("u->d"), "c_du": self.speeds.get("d->u"),
            "sign_ud": self.signs.get("u->d", ""), "sign_du": self.signs.get("d->u", ""),
            "flags": ";".join(self.flags),
        }


@dataclass
class SignMap:
    axes: tuple[str, str]
    values: tuple[list, list]
    fixed: dict
    directions: tuple
    cells: list
    options: SpeedOptions

    def cell(self, **coords) -> SignCell:
        for c in self.cells:
            if all(math.isclose(getattr(c, k), v, abs_tol=1e-12) for k, v in coords.items()):
                return c
        raise KeyError(coords)

    def rows(self) -> list[dict]:
        return [c.row() for c in self.cells]


def _cell_task(task, directions, options):
    index, coords = task
    flags = []
    speeds, signs = {}, {}
    try:
        params = make_params(coords["theta"], coords["mu"], coords["p"], coords["q"])
    except ModelError as exc:
        return SignCell(index, coords["theta"], coords["q"], coords["p"], coords["mu"], {}, {},
                        [f"invalid:{exc}"])
    for d in directions:
        try:
            est = estimate_speed(d, params, options)
        except (InconclusiveError, TrackingError) as exc:
            flags.append(f"inconclusive-{'ud' if d == 'u->d' else 'du'}")
            speeds[d] = float("nan")
            signs[d] = "?"
            continue
        speeds[d] = est.c
        signs[d] = est.sign
        if est.retried:
            flags.append(f"retried-{'ud' if d == 'u->d' else 'du'}")
    return SignCell(index, coords["theta"], coords["q"], coords["p"], coords["mu"], speeds, signs, flags)


def sign_map(grid: dict, fixed: dict, directions=("u->d", "d->u"), options: SpeedOptions | None = None,
             jobs: int | None = 1) -> SignMap:
    """Sign classes of the wave speeds over a two-axis grid.

    ``grid`` maps two of ``theta``, ``q``, ``p`` to value lists; ``fixed`` holds
    the remaining parameters including ``mu``.  Cells are ordered row-major by
    grid index whatever the degree of parallelism.
    """
    if len(grid) != 2 or not set(grid) <= set(AXES):
        raise ValueError(f"grid needs exactly two of {AXES}")
    opts = options or SpeedOptions()
    directions = tuple(normalize_direction(d) for d in directions)
    (ax1, vals1), (ax2, vals2) = grid.items()
    tasks = []
    for (i, a), (j, b) in itertools.product(enumerate(vals1), enumerate(vals2)):
        coords = dict(fixed)
        coords[ax1] = float(a)
        coords[ax2] = float(b)
        tasks.append(((i, j), coords))
    cells = ordered_map(partial(_cell_task, directions=directions, options=opts), tasks, jobs)
    return SignMap((ax1, ax2), (list(vals1), list(vals2)), dict(fixed), directions, cells, opts)


def with_options(options: SpeedOptions | None, **changes) -> SpeedOptions:
    return replace(options or SpeedOptions(), **changes)
