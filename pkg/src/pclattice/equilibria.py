"""Homogeneous equilibria, fold points and linear stability.

The equilibria solve x = S(x), equivalently theta = f(x) with
f(x) = x + ln((1-x)/x)/mu.  For mu > 4, f decreases on (0, x_star), increases
on (x_star, x_sup_star) and decreases again on (x_sup_star, 1), so each
interval contributes at most one root: x_d, x_m and x_u respectively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import MissingBranchError, PreconditionError
from .model import ParamSet, fold_data, sigmoid_deriv, threshold_of_root

#: Tolerance under which theta counts as sitting on a fold.
FOLD_TOL = 1e-10
#: Points in the phi-grid used to cross-check the dispersion maximum.
PHI_GRID_POINTS = 721

BRANCH_LABELS = ("d", "m", "u")


def fold_points(mu: float) -> tuple[float, float, float, float]:
    """Return ``(x_star, x_sup_star, theta_star, theta_sup_star)`` for slope mu.

    Raises NoBistabilityError when mu <= 4.
    """
    return fold_data(mu)


class Stability(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class BranchSet:
    """The three homogeneous equilibria; absent branches are ``None``."""

    x_d: float | None
    x_m: float | None
    x_u: float | None
    residuals: dict

    def get(self, label: str) -> float:
        value = {"d": self.x_d, "m": self.x_m, "u": self.x_u}[label]
        if value is None:
            raise MissingBranchError(f"branch x_{label} does not exist here")
        return value

    @property
    def complete(self) -> bool:
        return None not in (self.x_d, self.x_m, self.x_u)


def _root_on(theta: float, mu: float, lo: float, hi: float, decreasing: bool) -> float:
    # f(x) - theta changes sign exactly once on (lo, hi)
    def g(x):
        val = threshold_of_root(x, mu) - theta
        return -val if decreasing else val

    a, b = lo, hi
    while b - a > 1e-14:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if g(mid) < 0:
            a = mid
        else:
            b = mid
    x = 0.5 * (a + b)
    # Newton polish on x - S(x), kept inside the bracket
    sig_mu = mu
    for _ in range(5):
        z = sig_mu * (x - theta)
        e = math.exp(-abs(z))
        s = 1.0 / (1.0 + e) if z >= 0 else e / (1.0 + e)
        h = x - s
        dh = 1.0 - sig_mu * e / (1.0 + e) ** 2
        if h == 0.0 or dh == 0.0:
            break
        nxt = x - h / dh
        if not (lo < nxt < hi):
            break
        x = nxt
    return x


def _residual(x: float, theta: float, mu: float) -> float:
    z = mu * (x - theta)
    e = math.exp(-abs(z))
    s = 1.0 / (1.0 + e) if z >= 0 else e / (1.0 + e)
    return abs(x - s)


def equilibrium_branches(params: ParamSet) -> BranchSet:
    """Solve x = S(x) on each monotonicity interval of f."""
    theta, mu = params.theta, params.mu
    xs, xS, ts, tS = fold_data(mu)
    x_d = x_m = x_u = None
    if abs(theta - ts) < FOLD_TOL:
        x_d = x_m = xs
    elif theta > ts:
        x_d = _root_on(theta, mu, 5e-324, xs, decreasing=True)
    if abs(theta - tS) < FOLD_TOL:
        x_m = x_u = xS
    elif theta < tS:
        x_u = _root_on(theta, mu, xS, 1.0 - 1e-16, decreasing=True)
    if ts + FOLD_TOL <= theta <= tS - FOLD_TOL:
        x_m = _root_on(theta, mu, xs, xS, decreasing=False)
    residuals = {
        label: _residual(x, theta, mu)
        for label, x in zip(BRANCH_LABELS, (x_d, x_m, x_u))
        if x is not None
    }
    return BranchSet(x_d, x_m, x_u, residuals)


def dispersion_relation(x: float, phi, params: ParamSet):
    """Complex growth rate nu(phi) of the Fourier mode exp(nu t + i phi j) at x = S(x)."""
    if _residual(x, params.theta, params.mu) >= 1e-8:
        raise PreconditionError(f"x={x!r} is not a homogeneous equilibrium")
    sp = sigmoid_deriv(x, params.sigmoid)
    p, q = params.p, params.q
    phi = np.asarray(phi, dtype=float)
    nu = (1 - q) * sp * np.exp(-1j * phi) - (1 - p) - p * sp**2 + q * sp * np.exp(1j * phi)
    return complex(nu) if nu.ndim == 0 else nu


def max_growth_rate(x: float, params: ParamSet) -> tuple[float, float]:
    """Largest Re nu over the phi-grid together with its argmax."""
    phis = np.linspace(-np.pi, np.pi, PHI_GRID_POINTS)
    re = dispersion_relation(x, phis, params).real
    k = int(np.argmax(re))
    re0 = dispersion_relation(x, 0.0, params).real
    if re0 >= re[k]:
        return re0, 0.0
    return float(re[k]), float(phis[k])


def classify_stability(label: str, params: ParamSet) -> Stability:
    """Linear stability of branch ``label`` in {'d', 'm', 'u'}."""
    x = equilibrium_branches(params).get(label)
    # the maximum over phi sits at phi = 0; the grid in max_growth_rate only cross-checks it
    re0 = dispersion_relation(x, 0.0, params).real
    return Stability.STABLE if re0 < 0 else Stability.UNSTABLE
