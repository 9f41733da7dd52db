"""Sigmoid nonlinearity, parameter validation and the lattice vector field.

The one-population model evolves each layer as

    v_j' = N(v_{j-1}, v_j, v_{j+1})
    N(u, v, w) = (1-p-q) (S(u) - v) + p S'(v) (u - S(v)) + q (S(w) - v)

with the logistic S(x) = 1 / (1 + exp(-mu (x - theta))).  Every function here
accepts scalars or numpy arrays and returns the same kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateParametersError, DomainError, NoBistabilityError, ParameterError

#: Clamp applied before inverting the sigmoid near saturation.
CLAMP_EPS = 1e-12


def _as_output(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


@dataclass(frozen=True)
class SigmoidParams:
    mu: float
    theta: float

    def __post_init__(self) -> None:
        if not self.mu > 4:
            raise NoBistabilityError(f"mu must exceed 4, got {self.mu!r}")
        if not self.theta >= 0:
            raise ParameterError(f"theta must be non-negative, got {self.theta!r}")


@dataclass(frozen=True)
class CouplingParams:
    """Fractions p (feedforward error) and q (feedback) of the time budget."""

    p: float
    q: float

    def __post_init__(self) -> None:
        if not (0 <= self.p < 1):
            raise ParameterError(f"p must lie in [0, 1), got {self.p!r}")
        if not (0 <= self.q <= 1):
            raise ParameterError(f"q must lie in [0, 1], got {self.q!r}")
        if self.p + self.q > 1 + 1e-15:
            raise ParameterError(f"p + q must not exceed 1, got {self.p + self.q!r}")

    @property
    def drive(self) -> float:
        """Weight 1 - p - q of the instantaneous feedforward drive."""
        return 1.0 - self.p - self.q


def fold_data(mu: float) -> tuple[float, float, float, float]:
    """Closed-form ``(x_star, x_sup_star, theta_star, theta_sup_star)``."""
    if not mu > 4:
        raise NoBistabilityError(f"fold points need mu > 4, got {mu!r}")
    r = math.sqrt(0.25 - 1.0 / mu)
    x_lo, x_hi = 0.5 - r, 0.5 + r
    return x_lo, x_hi, threshold_of_root(x_lo, mu), threshold_of_root(x_hi, mu)


def threshold_of_root(x: float, mu: float) -> float:
    """The threshold for which ``x`` solves x = S(x): f(x) = x + ln((1-x)/x)/mu."""
    return x + math.log((1.0 - x) / x) / mu


@dataclass(frozen=True)
class ParamSet:
    """Validated model parameters together with the fold data of mu.

    Build instances with :func:`make_params`.  A relaxed instance may have a
    threshold outside the bistable window; ``bistable`` tells which.
    """

    sigmoid: SigmoidParams
    coupling: CouplingParams
    relaxed: bool = False
    x_star: float = field(init=False)
    x_sup_star: float = field(init=False)
    theta_star: float = field(init=False)
    theta_sup_star: float = field(init=False)

    def __post_init__(self) -> None:
        mu, p = self.sigmoid.mu, self.coupling.p
        if not p < 4.0 / (4.0 + mu):
            raise ParameterError(f"p={p!r} violates p < 4/(4+mu) = {4.0 / (4.0 + mu)!r}")
        xs, xS, ts, tS = fold_data(mu)
        object.__setattr__(self, "x_star", xs)
        object.__setattr__(self, "x_sup_star", xS)
        object.__setattr__(self, "theta_star", ts)
        object.__setattr__(self, "theta_sup_star", tS)
        if not self.relaxed and not self.bistable:
            raise ParameterError(
                f"theta={self.theta!r} outside the bistable window ({ts!r}, {tS!r}); "
                "use relaxed=True to allow it"
            )

    @property
    def theta(self) -> float:
        return self.sigmoid.theta

    @property
    def mu(self) -> float:
        return self.sigmoid.mu

    @property
    def p(self) -> float:
        return self.coupling.p

    @property
    def q(self) -> float:
        return self.coupling.q

    @property
    def bistable(self) -> bool:
        return self.theta_star < self.theta < self.theta_sup_star

    def replace(self, **changes) -> ParamSet:
        """Copy with some of theta, mu, p, q or relaxed changed."""
        values = dict(theta=self.theta, mu=self.mu, p=self.p, q=self.q, relaxed=self.relaxed)
        values.update(changes)
        return make_params(**values)

    def as_dict(self) -> dict:
        return {"theta": self.theta, "mu": self.mu, "p": self.p, "q": self.q}


def make_params(theta: float, mu: float, p: float, q: float, relaxed: bool = False) -> ParamSet:
    """Validate ``(theta, mu, p, q)``; the single gate every computation goes through."""
    return ParamSet(SigmoidParams(float(mu), float(theta)), CouplingParams(float(p), float(q)), relaxed)


def coupling_fractions(alpha: float, beta: float, lam: float) -> CouplingParams:
    """Normalise the raw rates (alpha, beta, lambda) to the fractions (p, q)."""
    if min(alpha, beta, lam) < 0:
        raise ParameterError("alpha, beta and lambda must be non-negative")
    total = alpha + beta + lam
    if not total > 0:
        raise DegenerateParametersError("alpha + beta + lambda must be positive")
    return CouplingParams(alpha / total, lam / total)


def sigmoid(x, s):
    """Logistic S(x), evaluated without overflow for any mu*(x - theta)."""
    z = s.mu * (np.asarray(x, dtype=float) - s.theta)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _as_output(out)


def sigmoid_deriv(x, s):
    """S'(x) = mu S (1 - S), computed from exp(-|z|) so the tails keep precision."""
    z = s.mu * (np.asarray(x, dtype=float) - s.theta)
    e = np.exp(-np.abs(z))
    return _as_output(s.mu * e / (1.0 + e) ** 2)


def sigmoid_second_deriv(x, s):
    # S'' = mu^2 S (1-S) (1-2S) and 1 - 2S = -tanh(z/2)
    z = s.mu * (np.asarray(x, dtype=float) - s.theta)
    e = np.exp(-np.abs(z))
    return _as_output(-(s.mu**2) * e / (1.0 + e) ** 2 * np.tanh(0.5 * z))


def sigmoid_inverse(y, s):
    """theta + ln(y / (1 - y)) / mu for y in (0, 1)."""
    y = np.asarray(y, dtype=float)
    if np.any(~((y > 0) & (y < 1))):
        raise DomainError("sigmoid_inverse needs values strictly inside (0, 1)")
    return _as_output(s.theta + np.log(y / (1.0 - y)) / s.mu)


def clamp_unit(y, eps: float = CLAMP_EPS):
    return _as_output(np.clip(np.asarray(y, dtype=float), eps, 1.0 - eps))


def rhs_nonlinearity(u, v, w, params: ParamSet):
    """The lattice vector field N(u, v, w) for one layer and its two neighbours."""
    sig = params.sigmoid
    p, q = params.p, params.q
    sv = sigmoid(v, sig)
    return _as_output(
        (1.0 - p - q) * (sigmoid(u, sig) - np.asarray(v))
        + p * sigmoid_deriv(v, sig) * (np.asarray(u) - sv)
        + q * (sigmoid(w, sig) - np.asarray(v))
    )


def bistable_reaction(x, params: ParamSet):
    """F_p(x) = (S(x) - x)(1 - p - p S'(x)), the diagonal of N."""
    sig = params.sigmoid
    p = params.p
    return _as_output((sigmoid(x, sig) - np.asarray(x)) * (1.0 - p - p * sigmoid_deriv(x, sig)))
