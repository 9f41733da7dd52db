"""Driven semi-infinite networks: outcome classification and sharp thresholds.

Both semi-infinite topologies are handled through one code path.  Values are
reordered by distance |j| from the driven boundary, so "outward" always means
increasing index.  In that frame the bottom-up network has leading speed
c_{u->d} and trailing speed c_{d->u}; the top-down network has leading speed
-c_{d->u} and trailing speed -c_{u->d}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache, partial

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels
from .equilibria import equilibrium_branches
from .errors import (
    InconclusiveError,
    MissingBranchError,
    ModelError,
    NoProfileError,
    NotApplicableError,
    PreconditionError,
)
from .lattice import (
    DEFAULT_DT,
    DEFAULT_GUARD,
    InputSignal,
    Method,
    Simulation,
    Topology,
    TopologyKind,
    make_rest_initial,
)
from .model import ParamSet, make_params, rhs_nonlinearity, sigmoid, sigmoid_deriv, sigmoid_second_deriv
from .parallel import ordered_map
from .waves import SpeedOptions, estimate_speed


class Outcome(str, Enum):
    STAGNATION = "Stagnation"
    FRONT = "FrontPropagation"
    STACKED = "StackedPropagation"
    PULSE = "PulsePropagation"
    FAILURE = "PropagationFailure"


@dataclass(frozen=True)
class OutcomeClass:
    label: Outcome
    evidence: dict = field(default_factory=dict, compare=False)

    @property
    def propagating(self) -> bool:
        return self.label not in (Outcome.STAGNATION, Outcome.FAILURE)


class Marker(str, Enum):
    FINITE = "finite"
    ABOVE_CAP = "above-cap"
    NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class ThresholdOptions:
    extent: int = 200
    t_end: float = 1000.0
    dt: float = DEFAULT_DT
    check_every: int = 20
    method: Method = Method.RK4
    guard: int = DEFAULT_GUARD
    conv_tol: float = 1e-6
    residual_tol: float = 1e-8
    s0_max: float = 5.0
    s0_width: float = 1e-4
    tau_max: float = 500.0
    tau_width: float = 1e-3
    speed_tol: float = 2e-3
    pulse_theta_tol: float = 1e-3
    speed_options: SpeedOptions = field(default_factory=SpeedOptions)

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "speed_options"}
        d["method"] = Method(self.method).value
        d["speed_options"] = self.speed_options.as_dict()
        return d


@dataclass(frozen=True)
class ThresholdResult:
    value: float
    marker: Marker
    lower: float | None = None
    upper: float | None = None
    evidence: dict = field(default_factory=dict, compare=False)

    @property
    def finite(self) -> bool:
        return self.marker is Marker.FINITE


@dataclass(frozen=True)
class BoundaryProfile:
    s0: float
    asymptote: str
    values: np.ndarray = field(repr=False)
    residual: float


def _topology(kind, options: ThresholdOptions) -> Topology:
    if isinstance(kind, Topology):
        return kind
    kind = TopologyKind(kind)
    if kind is TopologyKind.BOTTOM_UP:
        return Topology.bottom_up(options.extent, guard=options.guard)
    if kind is TopologyKind.TOP_DOWN:
        return Topology.top_down(options.extent, guard=options.guard)
    raise PreconditionError("thresholds are defined on semi-infinite topologies only")


def _outward(values: np.ndarray, topology: Topology) -> np.ndarray:
    return values if topology.kind is TopologyKind.BOTTOM_UP else values[::-1]


def _branches(params: ParamSet):
    b = equilibrium_branches(params)
    if not b.complete:
        raise MissingBranchError("all three branches are required")
    return b


def directional_speeds(params: ParamSet, topology: Topology, options: SpeedOptions | None = None) -> dict:
    """Leading and trailing outward speeds for ``topology`` from bi-infinite runs."""
    ud = estimate_speed("u->d", params, options)
    du = estimate_speed("d->u", params, options)
    if topology.kind is TopologyKind.BOTTOM_UP:
        lead, trail, lead_pinned = ud.c, du.c, ud.pinned
    else:
        lead, trail, lead_pinned = -du.c, -ud.c, du.pinned
    return {"c_ud": ud.c, "c_du": du.c, "lead": lead, "trail": trail, "lead_pinned": lead_pinned,
            "pinned_ud": ud.pinned, "pinned_du": du.pinned}


# ---------------------------------------------------------------- stationary profiles

def _ghosts(topology: Topology, s0: float, far: float) -> tuple[float, float]:
    return (s0, far) if topology.kind is TopologyKind.BOTTOM_UP else (far, s0)


def _stationary_residual(v, left, right, params):
    padded = np.concatenate(([left], v, [right]))
    return rhs_nonlinearity(padded[:-2], padded[1:-1], padded[2:], params)


def _stationary_jacobian(v, left, right, params):
    padded = np.concatenate(([left], v, [right]))
    u, w = padded[:-2], padded[2:]
    a = 1.0 - params.p - params.q
    p, q = params.p, params.q
    sp_v = sigmoid_deriv(v, params)
    ab = np.zeros((3, len(v)))
    ab[0, 1:] = (q * sigmoid_deriv(w, params))[:-1]
    ab[1] = -a - q - p * sp_v**2 + p * sigmoid_second_deriv(v, params) * (u - sigmoid(v, params))
    ab[2, :-1] = (a * sigmoid_deriv(u, params) + p * sp_v)[1:]
    return ab


def _relax(v, left, right, params, t, dt):
    nsteps = int(round(t / dt))
    ok = _kernels.advance(v, 0, nsteps, dt, _kernels.RK4, params.mu, params.theta, params.p, params.q,
                          _kernels.FIXED, left, left, _kernels.FIXED, right, right, math.inf)
    if not ok:
        raise NoProfileError("relaxation diverged")
    return v


def stationary_boundary_profile(s0: float, params: ParamSet, topology, asymptote: str = "d",
                                options: ThresholdOptions | None = None, relax_time: float = 500.0,
                                tol: float = 1e-12, max_iter: int = 60) -> BoundaryProfile:
    """Stationary solution with v_0 = s0 decaying to the ``asymptote`` branch.

    The far end is held at the asymptote.  A relaxation run supplies the
    starting point of a damped Newton iteration on the tridiagonal system.
    Values are returned in natural layer order.
    """
    opts = options or ThresholdOptions()
    topo = _topology(topology, opts)
    b = _branches(params)
    if s0 < b.x_d:
        raise PreconditionError(f"s0 must be at least x_d = {b.x_d!r}")
    if asymptote not in ("d", "u"):
        raise ValueError("asymptote is 'd' or 'u'")
    far = b.get(asymptote)
    left, right = _ghosts(topo, s0, far)
    v = _relax(np.full(topo.size, far), left, right, params, relax_time, opts.dt)
    res = _stationary_residual(v, left, right, params)
    norm = np.max(np.abs(res))
    for _ in range(max_iter):
        if norm < tol:
            break
        delta = solve_banded((1, 1), _stationary_jacobian(v, left, right, params), -res)
        lam = 1.0
        while lam > 1e-6:
            trial = v + lam * delta
            trial_res = _stationary_residual(trial, left, right, params)
            trial_norm = np.max(np.abs(trial_res))
            if trial_norm < norm:
                break
            lam *= 0.5
        else:
            break
        v, res, norm = trial, trial_res, trial_norm
    if not norm < 1e-10:
        raise NoProfileError(f"Newton stalled at residual {norm:.3e}")
    tail = _outward(v, topo)[-opts.guard:]
    if np.max(np.abs(tail - far)) > 1e-6:
        raise NoProfileError(f"no profile decaying to x_{asymptote} (tail off by {np.max(np.abs(tail - far)):.3e})")
    return BoundaryProfile(float(s0), asymptote, v, float(norm))


@lru_cache(maxsize=64)
def _cached_profile(s0, params, topology, asymptote, dt):
    try:
        return stationary_boundary_profile(s0, params, topology, asymptote, ThresholdOptions(dt=dt))
    except NoProfileError:
        return None


# ---------------------------------------------------------------- classification helpers

class _Probe:
    """Bookkeeping of interfaces in the outward frame."""

    def __init__(self, topology: Topology, level: float):
        self.topology = topology
        self.level = level
        self.k = np.arange(1, topology.extent + 1)
        self.history: list[tuple[float, float | None, float | None, int, int]] = []

    def observe(self, t: float, values: np.ndarray):
        r = _outward(values, self.topology)
        s = r - self.level
        idx = np.nonzero(np.sign(s[:-1]) * np.sign(s[1:]) < 0)[0]
        pos = self.k[idx] + s[idx] / (s[idx] - s[idx + 1])
        falling = pos[s[idx] > 0]
        rising = pos[s[idx] < 0]
        lead = float(falling.max()) if falling.size else None
        trail = float(rising[rising < lead].max()) if (rising.size and lead is not None and
                                                       np.any(rising < lead)) else None
        self.history.append((t, lead, trail, int(falling.size), int(rising.size)))
        return r, lead, trail

    def speed(self, which: int, t_from: float) -> float | None:
        pts = [(h[0], h[which]) for h in self.history if h[0] >= t_from]
        if len(pts) < 3 or any(x is None for _, x in pts):
            return None
        t, x = np.array(pts).T
        return float(np.polyfit(t.astype(float), x.astype(float), 1)[0])

    def mean_gap(self, t_from: float) -> float:
        gaps = [h[1] - h[2] for h in self.history if h[0] >= t_from and h[1] is not None and h[2] is not None]
        return float(np.mean(gaps))


def _fit_from(t_now: float, t_start: float) -> float:
    return t_now - max(20.0, 0.5 * (t_now - t_start))


def _budget(opts: ThresholdOptions, topo: Topology, lead_speed: float | None, offset: float = 0.0) -> float:
    t_end = opts.t_end + offset
    if lead_speed is not None and lead_speed > 0:
        t_end = max(t_end, offset + 1.5 * topo.extent / lead_speed)
    return t_end


# ---------------------------------------------------------------- constant input

def classify_constant_input(s0: float, params: ParamSet, topology, options: ThresholdOptions | None = None,
                            lead_speed: float | None = None) -> OutcomeClass:
    """Stagnation or FrontPropagation for a network at rest driven by v_0 = s0.

    Propagation needs the outermost interface past J/2 moving outward and the
    distal probe window (3J/4 .. J-B) above x_m.  Stagnation needs the
    residual below ``residual_tol`` with the probe below x_m.  ``lead_speed``
    only sizes the time budget.
    """
    opts = options or ThresholdOptions()
    topo = _topology(topology, opts)
    b = _branches(params)
    sim = Simulation(make_rest_initial(params, topo), topo, InputSignal.constant(s0), params, opts.dt, opts.method)
    probe = _Probe(topo, 0.5 * (b.x_d + b.x_u))
    J, B = topo.extent, topo.guard
    window = slice(int(math.ceil(3 * J / 4)) - 1, J - B)
    t_end = _budget(opts, topo, lead_speed)
    for attempt in range(2):
        while sim.t < t_end - 1e-9:
            sim.advance(opts.check_every)
            r, lead, _ = probe.observe(sim.t, sim.values)
            res = float(np.max(np.abs(sim.residual())))
            distal = r[window]
            evidence = {"t": sim.t, "s0": s0, "lead": lead, "probe_min": float(distal.min()),
                        "probe_max": float(distal.max()), "residual": res, "x_m": b.x_m}
            if res < opts.residual_tol and distal.max() < b.x_m:
                return OutcomeClass(Outcome.STAGNATION, evidence)
            if lead is not None and lead > J / 2 and distal.min() > b.x_m:
                c = probe.speed(1, _fit_from(sim.t, 0.0))
                evidence["lead_speed"] = c
                if c is None or c > 0:
                    return OutcomeClass(Outcome.FRONT, evidence)
            if lead is None and r.min() > b.x_m and distal.min() > b.x_m:
                # the whole network sits above x_m: the interface has already left
                return OutcomeClass(Outcome.FRONT, evidence)
        t_end *= 2
    raise InconclusiveError(f"constant input s0={s0!r} undecided by t={sim.t:.6g}")


def find_s0_star(params: ParamSet, topology, options: ThresholdOptions | None = None,
                 speeds: dict | None = None) -> ThresholdResult:
    """Sharp activity threshold between stagnation and propagation.

    Bisects over [x_m, s0_max].  When the leading speed is not positive the
    marker is not-applicable; when s0_max still stagnates it is above-cap.
    """
    opts = options or ThresholdOptions()
    topo = _topology(topology, opts)
    b = _branches(params)
    speeds = speeds or directional_speeds(params, topo, opts.speed_options)
    if speeds["lead_pinned"] or speeds["lead"] <= 0:
        return ThresholdResult(math.inf, Marker.NOT_APPLICABLE, evidence={"speeds": speeds})
    classify = partial(classify_constant_input, params=params, topology=topo, options=opts,
                       lead_speed=speeds["lead"])
    top = classify(opts.s0_max)
    if not top.propagating:
        return ThresholdResult(math.inf, Marker.ABOVE_CAP, evidence={"speeds": speeds, "at_cap": top.evidence})
    lo, hi = b.x_m, opts.s0_max
    while hi - lo > opts.s0_width:
        mid = 0.5 * (lo + hi)
        if classify(mid).propagating:
            hi = mid
        else:
            lo = mid
    return ThresholdResult(0.5 * (lo + hi), Marker.FINITE, lo, hi, {"speeds": speeds})


# ---------------------------------------------------------------- flashed input

def classify_flashed(tau: float, params: ParamSet, topology, options: ThresholdOptions | None = None,
                     speeds: dict | None = None, check_threshold: bool = True) -> OutcomeClass:
    """Long-time outcome for an input held at x_u for ``tau`` and reset to x_d.

    With ``check_threshold`` a constant input at x_u is classified first; if
    that already stagnates, a flash (which stays below it by comparison)
    cannot propagate and is reported as PropagationFailure.
    """
    opts = options or ThresholdOptions()
    topo = _topology(topology, opts)
    b = _branches(params)
    if speeds is None:
        speeds = directional_speeds(params, topo, opts.speed_options)
    lead_hint = speeds["lead"] if speeds["lead"] > 0 else None
    if check_threshold:
        const = classify_constant_input(b.x_u, params, topo, opts, lead_hint)
        if not const.propagating:
            return OutcomeClass(Outcome.FAILURE, {"constant_x_u": const.evidence, "speeds": speeds})
    signal = InputSignal.flashed(b.x_u, tau, params)
    sim = Simulation(make_rest_initial(params, topo), topo, signal, params, opts.dt, opts.method)
    probe = _Probe(topo, 0.5 * (b.x_d + b.x_u))
    J = topo.extent
    local = slice(0, max(1, J // 4))
    near_pulse = abs(params.theta - 0.5) < opts.pulse_theta_tol
    t_end = _budget(opts, topo, lead_hint, tau)
    profile = None
    for attempt in range(2):
        while sim.t < t_end - 1e-9:
            sim.advance(opts.check_every)
            t = sim.t
            r, lead, trail = probe.observe(t, sim.values)
            if t <= tau:
                continue
            res = float(np.max(np.abs(sim.residual())))
            sup_d = float(np.max(np.abs(r - b.x_d)))
            evidence = {"t": t, "tau": tau, "lead": lead, "trail": trail, "residual": res,
                        "sup_to_x_d": sup_d, "speeds": speeds}
            if sup_d < opts.conv_tol and res < opts.residual_tol:
                return OutcomeClass(Outcome.FAILURE, evidence)
            if lead is None or lead <= J / 2:
                continue
            t_from = _fit_from(t, tau)
            c_lead = probe.speed(1, t_from)
            if c_lead is None or c_lead <= 0:
                continue
            evidence["lead_speed"] = c_lead
            c_trail = probe.speed(2, t_from)
            if c_trail is not None and c_trail > 0:
                evidence["trail_speed"] = c_trail
                gap = c_lead - c_trail
                if near_pulse and abs(gap) < opts.speed_tol:
                    evidence["width"] = probe.mean_gap(t_from)
                    return OutcomeClass(Outcome.PULSE, evidence)
                if gap > opts.speed_tol:
                    return OutcomeClass(Outcome.STACKED, evidence)
                continue
            if profile is None:
                profile = _cached_profile(b.x_d, params, topo, "u", opts.dt) or False
            if profile:
                dist = float(np.max(np.abs(r[local] - _outward(profile.values, topo)[local])))
                evidence["local_distance"] = dist
                if dist < opts.conv_tol:
                    return OutcomeClass(Outcome.FRONT, evidence)
        t_end = 2 * t_end - tau
    raise InconclusiveError(f"flashed input tau={tau!r} undecided by t={sim.t:.6g}")


def flashed_preconditions(speeds: dict, c_tol: float = 1e-3) -> bool:
    return (not speeds["lead_pinned"]) and speeds["lead"] > c_tol and speeds["trail"] < speeds["lead"]


def find_tau_star(params: ParamSet, topology, options: ThresholdOptions | None = None,
                  speeds: dict | None = None) -> ThresholdResult:
    """Shortest flash that launches a propagating state.

    A doubling ladder 1, 2, 4, ... up to tau_max brackets the switch, which is
    then bisected to ``tau_width``.
    """
    opts = options or ThresholdOptions()
    topo = _topology(topology, opts)
    speeds = speeds or directional_speeds(params, topo, opts.speed_options)
    if not flashed_preconditions(speeds, opts.speed_options.c_tol):
        raise NotApplicableError(
            f"needs 0 < leading speed and trailing < leading (lead={speeds['lead']:.4g}, trail={speeds['trail']:.4g})"
        )
    b = _branches(params)
    const = classify_constant_input(b.x_u, params, topo, opts, speeds["lead"])
    if not const.propagating:
        return ThresholdResult(math.inf, Marker.ABOVE_CAP, evidence={"speeds": speeds, "constant_x_u": const.evidence})
    classify = partial(classify_flashed, params=params, topology=topo, options=opts, speeds=speeds,
                       check_threshold=False)
    lo, hi, outcome = 0.0, None, None
    tau = 1.0
    while True:
        tau = min(tau, opts.tau_max)
        outcome = classify(tau)
        if outcome.propagating:
            hi = tau
            break
        lo = tau
        if tau >= opts.tau_max:
            return ThresholdResult(math.inf, Marker.ABOVE_CAP, evidence={"speeds": speeds})
        tau *= 2
    labels = {hi: outcome.label.value}
    while hi - lo > opts.tau_width:
        mid = 0.5 * (lo + hi)
        out = classify(mid)
        if out.propagating:
            hi = mid
            labels[mid] = out.label.value
        else:
            lo = mid
    return ThresholdResult(0.5 * (lo + hi), Marker.FINITE, lo, hi,
                           {"speeds": speeds, "upper_label": labels.get(hi)})


# ---------------------------------------------------------------- sweeps

JOINT_LABELS = ("both-stagnate", "both-propagate", "bottom-up-only", "top-down-only")


def joint_label(bottom_up: bool, top_down: bool) -> str:
    if bottom_up and top_down:
        return "both-propagate"
    if bottom_up:
        return "bottom-up-only"
    if top_down:
        return "top-down-only"
    return "both-stagnate"


def _propagates_at(result: ThresholdResult, s0: float) -> bool:
    return result.finite and s0 > result.value


def _s0_task(q, theta, mu, p, kind, options):
    params = make_params(theta, mu, p, q)
    try:
        return find_s0_star(params, kind, options)
    except (InconclusiveError, ModelError) as exc:
        return ThresholdResult(math.nan, Marker.NOT_APPLICABLE, evidence={"error": f"{type(exc).__name__}: {exc}"})


def s0_threshold_curve(q_values, theta: float, mu: float, p: float, topology=TopologyKind.BOTTOM_UP,
                       options: ThresholdOptions | None = None, jobs: int | None = 1) -> list[ThresholdResult]:
    opts = options or ThresholdOptions()
    return ordered_map(partial(_s0_task, theta=theta, mu=mu, p=p, kind=TopologyKind(topology), options=opts),
                       [float(q) for q in q_values], jobs)


def _tau_task(q, theta, mu, p, kind, options):
    params = make_params(theta, mu, p, q)
    try:
        return find_tau_star(params, kind, options)
    except NotApplicableError as exc:
        return ThresholdResult(math.nan, Marker.NOT_APPLICABLE, evidence={"reason": str(exc)})
    except (InconclusiveError, ModelError) as exc:
        return ThresholdResult(math.nan, Marker.NOT_APPLICABLE, evidence={"error": f"{type(exc).__name__}: {exc}"})


def tau_threshold_curve(q_values, theta: float, mu: float, p: float, topology=TopologyKind.BOTTOM_UP,
                        options: ThresholdOptions | None = None, jobs: int | None = 1) -> list[ThresholdResult]:
    opts = options or ThresholdOptions()
    return ordered_map(partial(_tau_task, theta=theta, mu=mu, p=p, kind=TopologyKind(topology), options=opts),
                       [float(q) for q in q_values], jobs)


@dataclass
class RegimeCell:
    q: float
    s0: float
    label: str
    s0_star_bottom_up: ThresholdResult
    s0_star_top_down: ThresholdResult


def combined_regime_map(q_values, s0_levels, theta: float, mu: float, p: float,
                        options: ThresholdOptions | None = None, jobs: int | None = 1) -> list[RegimeCell]:
    """Joint bottom-up/top-down label for every (q, s0) pair, q-major order.

    One threshold per topology and q is computed and reused for every s0 level.
    """
    opts = options or ThresholdOptions()
    qs = [float(q) for q in q_values]
    bu = s0_threshold_curve(qs, theta, mu, p, TopologyKind.BOTTOM_UP, opts, jobs)
    td = s0_threshold_curve(qs, theta, mu, p, TopologyKind.TOP_DOWN, opts, jobs)
    cells = []
    for q, rb, rt in zip(qs, bu, td):
        for s0 in s0_levels:
            label = joint_label(_propagates_at(rb, s0), _propagates_at(rt, s0))
            cells.append(RegimeCell(q, float(s0), label, rb, rt))
    return cells


def with_options(options: ThresholdOptions | None, **changes) -> ThresholdOptions:
    return replace(options or ThresholdOptions(), **changes)
