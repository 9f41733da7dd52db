"""Acceptance criteria, one test per criterion.

Each test evaluates every clause of its criterion, prints a line per clause
and fails if any clause fails.  The terminal summary then lists one PASS/FAIL
line per criterion.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import random_params
from pclattice import cli
from pclattice.equilibria import Stability, classify_stability, equilibrium_branches, fold_points, max_growth_rate
from pclattice.lattice import Topology, TopologyKind
from pclattice.model import make_params, sigmoid
from pclattice.thresholds import (
    Marker,
    Outcome,
    classify_constant_input,
    classify_flashed,
    directional_speeds,
    find_s0_star,
    find_tau_star,
)
from pclattice.waves import SpeedOptions, estimate_speed, sign_map
import test_lattice

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

MU, P = 16.0, 0.1
C_TOL = 1e-3


class Clauses:
    def __init__(self, label: str):
        self.label = label
        self.items: list[tuple[str, bool, str]] = []
        self.t0 = time.perf_counter()

    def check(self, name: str, ok, detail="") -> bool:
        ok = bool(ok)
        self.items.append((name, ok, str(detail)))
        print(f"[{self.label}] {'ok  ' if ok else 'FAIL'} {name} {detail}")
        return ok

    def runtime(self, limit: float) -> None:
        elapsed = time.perf_counter() - self.t0
        self.check(f"runtime < {limit:g} s", elapsed < limit, f"{elapsed:.1f} s")

    def conclude(self) -> None:
        failed = [f"{n} ({d})" for n, ok, d in self.items if not ok]
        assert not failed, f"{self.label}: " + "; ".join(failed)


def _speed(direction, theta, q):
    return estimate_speed(direction, make_params(theta, MU, P, q), SpeedOptions())


@pytest.mark.criterion(1, "fold points for mu=16")
def test_fold_points():
    c = Clauses("fold")
    x_star = 0.5 - math.sqrt(3) / 4
    theta_star = x_star + math.log(1 / x_star - 1) / MU
    xs, xS, ts, tS = fold_points(MU)
    c.check("x_* closed form", abs(xs - x_star) < 1e-12, xs)
    c.check("x^* closed form", abs(xS - (1 - x_star)) < 1e-12, xS)
    c.check("theta_* = 0.231607", abs(ts - theta_star) < 1e-9 and abs(ts - 0.231607) < 1e-6, ts)
    c.check("theta^* = 0.768393", abs(tS - (1 - theta_star)) < 1e-9 and abs(tS - 0.768393) < 1e-6, tS)
    c.runtime(1.0)
    c.conclude()


@pytest.mark.criterion(2, "branch and stability suite")
def test_branch_stability_suite():
    c = Clauses("branches")
    rng = np.random.default_rng(2024)
    worst, bad_order, bad_pattern, bad_argmax = 0.0, 0, 0, 0
    for params in random_params(rng, 100):
        b = equilibrium_branches(params)
        xs = (b.x_d, b.x_m, b.x_u)
        worst = max(worst, *(abs(float(sigmoid(x, params)) - x) for x in xs))
        bad_order += not (b.x_d < b.x_m < b.x_u)
        pattern = tuple(classify_stability(k, params) for k in "dmu")
        bad_pattern += pattern != (Stability.STABLE, Stability.UNSTABLE, Stability.STABLE)
        bad_argmax += any(max_growth_rate(x, params)[1] != 0.0 for x in xs)
    c.check("branch residual < 1e-12", worst < 1e-12, worst)
    c.check("ordering x_d < x_m < x_u", bad_order == 0, f"{bad_order} violations")
    c.check("stability (stable, unstable, stable)", bad_pattern == 0, f"{bad_pattern} violations")
    c.check("dispersion argmax at phi=0", bad_argmax == 0, f"{bad_argmax} violations")
    c.runtime(5.0)
    c.conclude()


@pytest.mark.criterion(3, "speed signs at (0.5, 16, 0.1)")
def test_symmetric_speed_signs():
    c = Clauses("signs")
    c_06 = _speed("u->d", 0.5, 0.6).c
    c_04 = _speed("u->d", 0.5, 0.4).c
    c.check("c_ud(q=0.6) < -c_tol", c_06 < -C_TOL, c_06)
    c.check("c_ud(q=0.4) > c_tol", c_04 > C_TOL, c_04)
    for d in ("u->d", "d->u"):
        est = _speed(d, 0.5, 0.5)
        c.check(f"{d} pinned at q=0.5", est.pinned and abs(est.c) < C_TOL, f"c={est.c:.5f}")
    c.runtime(120.0)
    c.conclude()


@pytest.mark.criterion(4, "speed symmetry theta <-> 1-theta")
def test_speed_symmetry():
    c = Clauses("symmetry")
    worst = 0.0
    for theta in (0.3, 0.4, 0.5, 0.6, 0.7):
        for q in (0.2, 0.4, 0.6):
            ud = _speed("u->d", theta, q).c
            du = _speed("d->u", 1 - theta, q).c
            worst = max(worst, abs(ud - du))
    c.check("|c_ud(theta) - c_du(1-theta)| < 2e-3 on 5x3", worst < 2e-3, worst)
    for q in (0.2, 0.4, 0.6):
        gap = abs(_speed("u->d", 0.5, q).c - _speed("d->u", 0.5, q).c)
        c.check(f"c_ud = c_du at theta=0.5, q={q}", gap < 2e-3, gap)
    c.runtime(600.0)
    c.conclude()


@pytest.mark.criterion(5, "sign regions on a 5x5 (q, theta) grid")
def test_sign_regions():
    c = Clauses("regions")
    qs = list(np.linspace(0.1, 0.9, 5))
    thetas = list(np.linspace(0.3, 0.7, 5))
    smap = sign_map({"q": qs, "theta": thetas}, {"mu": MU, "p": P})
    by_q = {}
    for cell in smap.cells:
        by_q.setdefault(round(cell.q, 12), []).append(cell)
    low = [(cell.signs["u->d"], cell.signs["d->u"]) for cell in by_q[0.1]]
    high = [(cell.signs["u->d"], cell.signs["d->u"]) for cell in by_q[0.9]]
    c.check("q=0.1 row is (+,+)", all(s == ("+", "+") for s in low), low)
    c.check("q=0.9 row is (-,-)", all(s == ("-", "-") for s in high), high)
    # "near" = within one grid step in both q and theta
    dq, dtheta = qs[1] - qs[0], thetas[1] - thetas[0]
    near = [cell for cell in smap.cells
            if abs(cell.q - 0.5) <= dq + 1e-12 and abs(cell.theta - 0.5) <= dtheta + 1e-12]
    pinned = [(round(x.q, 3), round(x.theta, 3)) for x in near if "0" in x.signs.values()]
    everywhere = [(round(x.q, 3), round(x.theta, 3)) for x in smap.cells if "0" in x.signs.values()]
    c.check("pinned cell near (0.5, 0.5)", pinned, f"near={pinned} all pinned cells={everywhere}")
    c.runtime(900.0)
    c.conclude()


@pytest.mark.criterion(6, "comparison principle property suite")
def test_comparison_suite():
    c = Clauses("comparison")
    suite = test_lattice.TestComparison()
    for name in ("test_bi_infinite_ordering", "test_bottom_up_ordering", "test_top_down_ordering",
                 "test_monotone_preservation"):
        try:
            getattr(suite, name)()
            c.check(name, True)
        except AssertionError as exc:
            c.check(name, False, exc)
    c.runtime(300.0)
    c.conclude()


def _threshold_dichotomy(c: Clauses, topology: str, q0: float, ladder) -> None:
    params = make_params(0.35, MU, P, q0)
    b = equilibrium_branches(params)
    res = find_s0_star(params, topology)
    c.check("s0* finite in (x_m, s0_max)", res.marker is Marker.FINITE and b.x_m < res.value < 5.0, res.value)
    if res.marker is Marker.FINITE:
        below = classify_constant_input(res.value - 2e-4, params, topology).label
        above = classify_constant_input(res.value + 2e-4, params, topology).label
        c.check("stagnation at s0*-2e-4", below is Outcome.STAGNATION, below.value)
        c.check("propagation at s0*+2e-4", above is Outcome.FRONT, above.value)
    results = []
    for q in ladder:
        r = find_s0_star(params.replace(q=q), topology)
        lead = directional_speeds(params.replace(q=q), Topology(TopologyKind(topology), 200))["lead"]
        results.append((q, r.value, r.marker.value, lead))
    print(f"[{c.label}] ladder (q, s0*, marker, lead speed): {results}")
    finite = [v for _, v, m, _ in results if m == Marker.FINITE.value]
    c.check("s0* non-decreasing along ladder", all(np.diff(finite) >= 0) and len(finite) >= 2, finite)
    before_zero = [m for _, _, m, lead in results if lead > C_TOL]
    c.check("above-cap marker before the lead speed reaches 0", Marker.ABOVE_CAP.value in before_zero, results)


@pytest.mark.criterion(7, "s0 threshold dichotomy, bottom-up")
def test_threshold_dichotomy_bottom_up():
    c = Clauses("s0* bottom-up")
    _threshold_dichotomy(c, "bottom-up", 0.2, (0.2, 0.5, 0.65, 0.6606))
    c.runtime(1200.0)
    c.conclude()


def _flashed_cases(c: Clauses, topology: str, grid_q, pulse_q) -> None:
    smap = sign_map({"theta": [0.35, 0.5, 0.65], "q": list(grid_q)}, {"mu": MU, "p": P})
    cases = {}
    for cell in smap.cells:
        ud, du = cell.speeds["u->d"], cell.speeds["d->u"]
        lead, trail = (ud, du) if topology == "bottom-up" else (-du, -ud)
        if abs(cell.theta - 0.5) < 1e-12:
            continue
        if trail > lead:
            kind = "i"
        elif 0 < trail < lead:
            kind = "ii"
        elif trail <= 0 < lead:
            kind = "iii"
        else:
            continue
        cases.setdefault(kind, (cell.theta, cell.q))
    expected = {"i": Outcome.FAILURE, "ii": Outcome.STACKED, "iii": Outcome.FRONT}
    for kind, outcome in expected.items():
        if not c.check(f"case ({kind}) present in sign map", kind in cases, cases):
            continue
        theta, q = cases[kind]
        params = make_params(theta, MU, P, q)
        speeds = directional_speeds(params, Topology(TopologyKind(topology), 200))
        out = classify_flashed(20.0, params, topology, speeds=speeds)
        c.check(f"case ({kind}) at theta={theta}, q={q} -> {outcome.value}", out.label is outcome, out.label.value)
        if kind == "ii" and out.label is Outcome.STACKED:
            indep = {d: _speed(d, theta, q).c for d in ("u->d", "d->u")}
            lead_c, trail_c = ((indep["u->d"], indep["d->u"]) if topology == "bottom-up"
                               else (-indep["d->u"], -indep["u->d"]))
            gaps = (abs(out.evidence["lead_speed"] - lead_c), abs(out.evidence["trail_speed"] - trail_c))
            c.check("stacked speeds match independent estimates within 5e-3", max(gaps) < 5e-3, gaps)
    params = make_params(0.5, MU, P, pulse_q)
    speeds = directional_speeds(params, Topology(TopologyKind(topology), 200))
    widths, labels = [], []
    for tau in (16.0, 20.0, 24.0, 28.0, 32.0):
        out = classify_flashed(tau, params, topology, speeds=speeds, check_threshold=False)
        labels.append(out.label.value)
        widths.append(out.evidence.get("width", math.nan))
    c.check("pulse at theta=0.5", all(lab == Outcome.PULSE.value for lab in labels), labels)
    c.check("plateau width non-decreasing over tau ladder", all(np.diff(widths) >= 0), widths)


@pytest.mark.criterion(8, "flashed-input classification, bottom-up")
def test_flashed_bottom_up():
    c = Clauses("flashed bottom-up")
    _flashed_cases(c, "bottom-up", (0.2, 0.5), 0.2)
    c.runtime(1200.0)
    c.conclude()


@pytest.mark.criterion(9, "top-down mirror and tau* comparison")
def test_top_down_mirror():
    c = Clauses("top-down")
    _threshold_dichotomy(c, "top-down", 0.9, (0.9, 0.6, 0.45, 0.4))
    _flashed_cases(c, "top-down", (0.5, 0.85), 0.85)
    params = make_params(0.35, MU, P, 0.65)
    td = find_tau_star(params, "top-down")
    bu = find_tau_star(params, "bottom-up")
    c.check("tau*_top-down < tau*_bottom-up at q=0.65, theta=0.35",
            td.marker is Marker.FINITE and bu.marker is Marker.FINITE and td.value < bu.value,
            f"top-down={td.value:.4f} bottom-up={bu.value:.4f}")
    c.runtime(1500.0)
    c.conclude()


@pytest.mark.criterion(10, "RK4 order and byte-identical CSV output")
def test_integrator_order_and_reproducibility(tmp_path):
    c = Clauses("rk4")
    dts = [0.2, 0.1, 0.05, 0.025]
    errs = [test_lattice._homogeneous_error(dt) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    c.check("log-log slope 4 +- 0.2", abs(slope - 4) < 0.2, slope)
    runs = {
        "equilibria.csv": ["equilibria", "--theta-steps", "21"],
        "trajectory.csv": ["simulate", "--layers", "40", "--t-end", "10", "--q", "0.3"],
        "speed.csv": ["speed", "--q", "0.4"],
    }
    for name, args in runs.items():
        blobs = []
        for k in range(2):
            out = tmp_path / f"{name}-{k}"
            assert cli.main([*args, "--out", str(out)]) == 0
            blobs.append((out / name).read_bytes())
        c.check(f"{name} byte-identical", blobs[0] == blobs[1])
    c.runtime(60.0)
    c.conclude()
