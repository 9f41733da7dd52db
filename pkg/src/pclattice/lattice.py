"""Time integration of the lattice ODE on truncated domains.

Three truncations are supported: a window -J..J of the bi-infinite lattice,
the bottom-up network 1..J driven through v_0 = s0(t), and the top-down
network -J..-1 driven through the same v_0 from above.  ``step`` is a plain
numpy reference implementation; ``Simulation`` and ``integrate`` run the
compiled kernel and are what the analysis modules use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .equilibria import equilibrium_branches
from .errors import DivergenceError, MissingBranchError, ParameterError, PreconditionError
from .model import ParamSet, clamp_unit, rhs_nonlinearity, sigmoid_inverse

DEFAULT_DT = 0.05
DEFAULT_SAMPLE_EVERY = 20
DEFAULT_GUARD = 10
MIN_EXTENT = 8


class TopologyKind(str, Enum):
    BI_INFINITE = "bi-infinite"
    BOTTOM_UP = "bottom-up"
    TOP_DOWN = "top-down"


class Closure(str, Enum):
    DIRICHLET = "dirichlet-equilibrium"
    INVERSE_SIGMOID = "inverse-sigmoid"


class Method(str, Enum):
    EULER = "euler"
    RK4 = "rk4"


@dataclass(frozen=True)
class Topology:
    """Lattice truncation: kind, layer count J and far-end closure."""

    kind: TopologyKind
    extent: int
    closure: Closure | None = None
    guard: int = DEFAULT_GUARD

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TopologyKind(self.kind))
        if self.extent < MIN_EXTENT:
            raise ParameterError(f"extent must be at least {MIN_EXTENT}, got {self.extent}")
        if self.closure is None:
            default = Closure.INVERSE_SIGMOID if self.kind is TopologyKind.BOTTOM_UP else Closure.DIRICHLET
            object.__setattr__(self, "closure", default)
        else:
            object.__setattr__(self, "closure", Closure(self.closure))
        if self.kind is TopologyKind.BI_INFINITE and self.closure is not Closure.DIRICHLET:
            raise ParameterError("the bi-infinite window only supports Dirichlet closure")

    @classmethod
    def bi_infinite(cls, extent: int = 200, guard: int = DEFAULT_GUARD) -> Topology:
        return cls(TopologyKind.BI_INFINITE, extent, guard=guard)

    @classmethod
    def bottom_up(cls, extent: int = 300, closure=Closure.INVERSE_SIGMOID, guard: int = DEFAULT_GUARD) -> Topology:
        return cls(TopologyKind.BOTTOM_UP, extent, closure, guard)

    @classmethod
    def top_down(cls, extent: int = 300, closure=Closure.DIRICHLET, guard: int = DEFAULT_GUARD) -> Topology:
        return cls(TopologyKind.TOP_DOWN, extent, closure, guard)

    @property
    def layers(self) -> np.ndarray:
        J = self.extent
        if self.kind is TopologyKind.BI_INFINITE:
            return np.arange(-J, J + 1)
        if self.kind is TopologyKind.BOTTOM_UP:
            return np.arange(1, J + 1)
        return np.arange(-J, 0)

    @property
    def size(self) -> int:
        return 2 * self.extent + 1 if self.kind is TopologyKind.BI_INFINITE else self.extent

    def with_extent(self, extent: int) -> Topology:
        return Topology(self.kind, extent, self.closure, self.guard)

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "extent": self.extent, "closure": self.closure.value, "guard": self.guard}


class InputKind(str, Enum):
    CONSTANT = "constant"
    FLASHED = "flashed"
    NONE = "none"


@dataclass(frozen=True)
class InputSignal:
    """Boundary drive s0(t).

    A flashed signal equals ``s0`` on [0, tau] and ``reset`` (the down state)
    afterwards.  ``NONE`` leaves a semi-infinite network clamped at rest.
    """

    kind: InputKind
    s0: float | None = None
    tau: float | None = None
    reset: float | None = None

    @classmethod
    def constant(cls, s0: float) -> InputSignal:
        return cls(InputKind.CONSTANT, float(s0))

    @classmethod
    def flashed(cls, s0: float, tau: float, params: ParamSet) -> InputSignal:
        if not tau > 0:
            raise ParameterError(f"flash duration must be positive, got {tau!r}")
        return cls(InputKind.FLASHED, float(s0), float(tau), _down_state(params))

    @classmethod
    def none(cls) -> InputSignal:
        return cls(InputKind.NONE)

    def value(self, t: float) -> float | None:
        if self.kind is InputKind.CONSTANT:
            return self.s0
        if self.kind is InputKind.FLASHED:
            return self.s0 if t <= self.tau else self.reset
        return None

    def validate(self, params: ParamSet) -> None:
        if self.kind is InputKind.NONE:
            return
        x_d = _down_state(params)
        if self.kind is InputKind.CONSTANT and not self.s0 >= x_d:
            raise PreconditionError(f"constant input needs s0 >= x_d = {x_d!r}")
        if self.kind is InputKind.FLASHED and not self.s0 > x_d:
            raise PreconditionError(f"flashed input needs s0 > x_d = {x_d!r}")

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "s0": self.s0, "tau": self.tau, "reset": self.reset}


@dataclass(frozen=True)
class LatticeState:
    """Activities at time ``t``; ``far_field`` pins the bi-infinite ghosts."""

    t: float
    values: np.ndarray
    far_field: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"non-finite activity at t={self.t}")
        object.__setattr__(self, "values", values)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    layers: np.ndarray
    dt: float
    method: Method
    guard_triggered: bool
    params: ParamSet
    topology: Topology
    signal: InputSignal
    far_field: tuple[float, float] | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    def final_state(self) -> LatticeState:
        return LatticeState(float(self.times[-1]), self.states[-1], self.far_field)

    def sidecar(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "topology": self.topology.as_dict(),
            "input": self.signal.as_dict(),
            "dt": self.dt,
            "method": self.method.value,
            "guard_triggered": self.guard_triggered,
            "samples": len(self.times),
        }


def _down_state(params: ParamSet) -> float:
    x_d = equilibrium_branches(params).x_d
    if x_d is None:
        raise MissingBranchError("the down state x_d does not exist for these parameters")
    return x_d


def make_step_initial(direction: str, params: ParamSet, topology: Topology) -> LatticeState:
    """Up state on j <= 0 and down state on j >= 1 ('u->d'), or the mirror ('d->u')."""
    if topology.kind is not TopologyKind.BI_INFINITE:
        raise PreconditionError("step initial data lives on the bi-infinite window")
    branches = equilibrium_branches(params)
    if not branches.complete:
        raise MissingBranchError("step initial data needs all three branches")
    x_d, x_u = branches.x_d, branches.x_u
    direction = normalize_direction(direction)
    left, right = (x_u, x_d) if direction == "u->d" else (x_d, x_u)
    values = np.where(topology.layers <= 0, left, right).astype(float)
    return LatticeState(0.0, values, (left, right))


def normalize_direction(direction: str) -> str:
    d = direction.replace("→", "->").replace("_", "->").lower()
    if d in ("u->d", "ud", "u-d"):
        return "u->d"
    if d in ("d->u", "du", "d-u"):
        return "d->u"
    raise ValueError(f"unknown front direction {direction!r}")


def make_rest_initial(params: ParamSet, topology: Topology) -> LatticeState:
    x_d = _down_state(params)
    far = (x_d, x_d) if topology.kind is TopologyKind.BI_INFINITE else None
    return LatticeState(0.0, np.full(topology.size, x_d), far)


@dataclass(frozen=True)
class _Boundary:
    lmode: int
    lpre: float
    lpost: float
    rmode: int
    rpre: float
    rpost: float
    t_switch: float


def _input_side(signal: InputSignal, params: ParamSet) -> tuple[float, float, float]:
    if signal.kind is InputKind.CONSTANT:
        return signal.s0, signal.s0, math.inf
    if signal.kind is InputKind.FLASHED:
        return signal.s0, signal.reset, signal.tau
    x_d = _down_state(params)
    return x_d, x_d, math.inf


def _boundary(topology: Topology, signal: InputSignal, params: ParamSet,
              far_field: tuple[float, float] | None, values: np.ndarray) -> _Boundary:
    if topology.kind is TopologyKind.BI_INFINITE:
        left, right = far_field if far_field is not None else (values[0], values[-1])
        return _Boundary(_kernels.FIXED, left, left, _kernels.FIXED, right, right, math.inf)
    pre, post, t_switch = _input_side(signal, params)
    if topology.closure is Closure.INVERSE_SIGMOID:
        far_mode, far_value = _kernels.INVERSE_SIGMOID, 0.0
    else:
        far_mode, far_value = _kernels.FIXED, _down_state(params)
    if topology.kind is TopologyKind.BOTTOM_UP:
        return _Boundary(_kernels.FIXED, pre, post, far_mode, far_value, far_value, t_switch)
    return _Boundary(far_mode, far_value, far_value, _kernels.FIXED, pre, post, t_switch)


def _side_value(mode: int, value: float, edge: float, params: ParamSet) -> float:
    if mode == _kernels.INVERSE_SIGMOID:
        return float(sigmoid_inverse(clamp_unit(edge), params.sigmoid))
    return value


def ghost_values(state: LatticeState, topology: Topology, signal: InputSignal,
                 t: float, params: ParamSet) -> tuple[float, float]:
    """Left and right ghost activities closing the truncated lattice at time ``t``."""
    b = _boundary(topology, signal, params, state.far_field, state.values)
    after = t > b.t_switch
    left = _side_value(b.lmode, b.lpost if after else b.lpre, state.values[0], params)
    right = _side_value(b.rmode, b.rpost if after else b.rpre, state.values[-1], params)
    return left, right


def _field(values: np.ndarray, b: _Boundary, after: bool, params: ParamSet) -> np.ndarray:
    left = _side_value(b.lmode, b.lpost if after else b.lpre, values[0], params)
    right = _side_value(b.rmode, b.rpost if after else b.rpre, values[-1], params)
    padded = np.concatenate(([left], values, [right]))
    return rhs_nonlinearity(padded[:-2], padded[1:-1], padded[2:], params)


def step(state: LatticeState, topology: Topology, signal: InputSignal, params: ParamSet,
         dt: float, method: str | Method = Method.RK4) -> LatticeState:
    """One explicit Euler or RK4 step of dv_j/dt = N(v_{j-1}, v_j, v_{j+1})."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    method = Method(method)
    b = _boundary(topology, signal, params, state.far_field, state.values)
    t0, t1 = state.t, state.t + dt
    eps = 1e-9 * dt
    if t1 <= b.t_switch + eps:
        pieces = [(dt, False)]
    elif t0 >= b.t_switch - eps:
        pieces = [(dt, True)]
    else:
        pieces = [(b.t_switch - t0, False), (t1 - b.t_switch, True)]
    v = state.values.copy()
    for h, after in pieces:
        k1 = _field(v, b, after, params)
        if method is Method.EULER:
            v = v + h * k1
            continue
        k2 = _field(v + 0.5 * h * k1, b, after, params)
        k3 = _field(v + 0.5 * h * k2, b, after, params)
        k4 = _field(v + h * k3, b, after, params)
        v = v + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(v)):
        raise DivergenceError(f"non-finite activity after step at t={t1}")
    return LatticeState(t1, v, state.far_field)


def lattice_residual(state: LatticeState, topology: Topology, signal: InputSignal,
                     params: ParamSet) -> np.ndarray:
    """Vector field N at every layer of ``state`` (zero at a stationary state)."""
    b = _boundary(topology, signal, params, state.far_field, state.values)
    after = state.t > b.t_switch
    return _kernels.residual(
        state.values, b.lmode, b.lpost if after else b.lpre,
        b.rmode, b.rpost if after else b.rpre, params.mu, params.theta, params.p, params.q,
    )


class Simulation:
    """Stateful driver around the compiled kernel.

    Time is kept as an integer step count so that sample times are exact
    multiples of ``dt``.  ``guard_triggered`` latches once a front comes within
    ``topology.guard`` layers of a far truncation edge.
    """

    def __init__(self, initial: LatticeState, topology: Topology, signal: InputSignal,
                 params: ParamSet, dt: float = DEFAULT_DT, method: str | Method = Method.RK4):
        if not dt > 0:
            raise ParameterError("dt must be positive")
        if len(initial.values) != topology.size:
            raise PreconditionError(
                f"state has {len(initial.values)} layers, topology expects {topology.size}"
            )
        signal.validate(params)
        self.topology = topology
        self.signal = signal
        self.params = params
        self.dt = float(dt)
        self.method = Method(method)
        self.far_field = initial.far_field
        self.values = initial.values.copy()
        self.t0 = float(initial.t)
        self.steps = 0
        self._bnd = _boundary(topology, signal, params, initial.far_field, initial.values)
        self._method_code = _kernels.EULER if self.method is Method.EULER else _kernels.RK4
        branches = equilibrium_branches(params)
        if branches.complete:
            self.half_gap = 0.5 * (branches.x_u - branches.x_d)
        else:
            self.half_gap = 0.25
        self._edge_ref = (float(initial.values[0]), float(initial.values[-1]))
        self.guard_triggered = False

    @property
    def t(self) -> float:
        return self.t0 + self.steps * self.dt

    @property
    def state(self) -> LatticeState:
        return LatticeState(self.t, self.values, self.far_field)

    def advance(self, nsteps: int) -> None:
        if nsteps <= 0:
            return
        b = self._bnd
        # the kernel measures time from the initial state; shift the switch accordingly
        ok = _kernels.advance(
            self.values, self.steps, nsteps, self.dt, self._method_code,
            self.params.mu, self.params.theta, self.params.p, self.params.q,
            b.lmode, b.lpre, b.lpost, b.rmode, b.rpre, b.rpost, b.t_switch - self.t0,
        )
        self.steps += nsteps
        if not ok:
            raise DivergenceError(f"non-finite activity before t={self.t}")
        self._check_guard()

    def _check_guard(self) -> None:
        B = self.topology.guard
        v = self.values
        hit = False
        kind = self.topology.kind
        if kind in (TopologyKind.BI_INFINITE, TopologyKind.TOP_DOWN):
            hit |= bool(np.any(np.abs(v[:B] - self._edge_ref[0]) > self.half_gap))
        if kind in (TopologyKind.BI_INFINITE, TopologyKind.BOTTOM_UP):
            hit |= bool(np.any(np.abs(v[-B:] - self._edge_ref[1]) > self.half_gap))
        self.guard_triggered |= hit

    def residual(self) -> np.ndarray:
        return lattice_residual(self.state, self.topology, self.signal, self.params)

    def run(self, t_end: float, sample_every: int = DEFAULT_SAMPLE_EVERY, stop_on_guard: bool = False,
            callback=None) -> Trajectory:
        """Integrate to ``t_end`` collecting a snapshot every ``sample_every`` steps.

        ``callback(sim)`` is invoked after each sample; returning True stops early.
        """
        if sample_every < 1:
            raise ParameterError("sample_every must be at least 1")
        total = int(math.floor((t_end - self.t0) / self.dt + 1e-9))
        times = [self.t]
        states = [self.values.copy()]
        done = 0
        while done < total:
            n = min(sample_every, total - done)
            self.advance(n)
            done += n
            if n == sample_every:
                times.append(self.t)
                states.append(self.values.copy())
                if stop_on_guard and self.guard_triggered:
                    break
                if callback is not None and callback(self):
                    break
        return Trajectory(
            np.array(times), np.array(states), self.topology.layers, self.dt, self.method,
            self.guard_triggered, self.params, self.topology, self.signal, self.far_field,
        )


def integrate(initial: LatticeState, topology: Topology, signal: InputSignal, params: ParamSet,
              t_end: float, dt: float = DEFAULT_DT, sample_every: int = DEFAULT_SAMPLE_EVERY,
              method: str | Method = Method.RK4) -> Trajectory:
    """Integrate from ``initial`` to ``t_end``; snapshots at multiples of sample_every*dt."""
    if not t_end > 0:
        raise ParameterError("t_end must be positive")
    sim = Simulation(initial, topology, signal, params, dt, method)
    return sim.run(t_end, sample_every)
