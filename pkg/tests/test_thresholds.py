from __future__ import annotations

import math

import numpy as np
import pytest

from pclattice import _kernels
from pclattice.equilibria import equilibrium_branches
from pclattice.errors import NoProfileError, NotApplicableError, PreconditionError
from pclattice.lattice import Topology
from pclattice.model import make_params, rhs_nonlinearity
from pclattice.thresholds import (
    Marker,
    Outcome,
    ThresholdOptions,
    classify_constant_input,
    classify_flashed,
    combined_regime_map,
    directional_speeds,
    find_s0_star,
    find_tau_star,
    joint_label,
    stationary_boundary_profile,
)

MU, P = 16.0, 0.1


def _relaxed(s0, params, far, J=200, t=2000.0, dt=0.05):
    v = np.full(J, far)
    _kernels.advance(v, 0, int(round(t / dt)), dt, _kernels.RK4, params.mu, params.theta, params.p, params.q,
                     _kernels.FIXED, s0, s0, _kernels.FIXED, far, far, math.inf)
    return v


@pytest.fixture(scope="module")
def bu_speeds():
    params = make_params(0.35, MU, P, 0.2)
    return params, directional_speeds(params, Topology.bottom_up(200))


class TestBoundaryProfile:
    def test_down_state_input(self, bu_reference):
        b = equilibrium_branches(bu_reference)
        prof = stationary_boundary_profile(b.x_d, bu_reference, "bottom-up", "d")
        np.testing.assert_allclose(prof.values, b.x_d, atol=1e-12)

    def test_up_profile_matches_relaxation(self, bu_reference):
        b = equilibrium_branches(bu_reference)
        prof = stationary_boundary_profile(0.8, bu_reference, "bottom-up", "u")
        assert prof.residual < 1e-10
        assert abs(prof.values[-1] - b.x_u) < 1e-6
        assert np.max(np.abs(prof.values - _relaxed(0.8, bu_reference, b.x_u))) < 1e-6

    def test_middle_input_decays_to_down_state(self, bu_reference):
        # a layer-0 value of x_m does not make the whole sequence x_m once the far end is x_d
        b = equilibrium_branches(bu_reference)
        prof = stationary_boundary_profile(b.x_m, bu_reference, "bottom-up", "d")
        assert prof.residual < 1e-10
        assert np.all(np.diff(prof.values) <= 1e-12) and prof.values[0] < b.x_m
        assert np.max(np.abs(prof.values - _relaxed(b.x_m, bu_reference, b.x_d))) < 1e-6

    def test_residual_recomputed(self, bu_reference):
        prof = stationary_boundary_profile(0.25, bu_reference, "bottom-up", "d")
        b = equilibrium_branches(bu_reference)
        padded = np.concatenate(([0.25], prof.values, [b.x_d]))
        res = rhs_nonlinearity(padded[:-2], padded[1:-1], padded[2:], bu_reference)
        assert np.max(np.abs(res)) < 1e-10

    def test_top_down_orientation(self):
        params = make_params(0.35, MU, P, 0.8)
        prof = stationary_boundary_profile(0.3, params, "top-down", "d")
        # the driven layer is the last entry in natural order
        assert prof.values[-1] > prof.values[0]

    def test_no_profile_above_threshold(self, bu_reference):
        with pytest.raises(NoProfileError):
            stationary_boundary_profile(0.9, bu_reference, "bottom-up", "d")

    def test_preconditions(self, bu_reference):
        with pytest.raises(PreconditionError):
            stationary_boundary_profile(0.0, bu_reference, "bottom-up", "d")
        with pytest.raises(PreconditionError):
            stationary_boundary_profile(0.5, bu_reference, "bi-infinite", "d")


class TestConstantInput:
    def test_sub_middle_inputs_stagnate(self, bu_reference):
        b = equilibrium_branches(bu_reference)
        for s0 in (b.x_d, 0.5 * (b.x_d + b.x_m), b.x_m):
            assert classify_constant_input(s0, bu_reference, "bottom-up").label is Outcome.STAGNATION

    def test_strong_input_propagates(self, bu_reference):
        out = classify_constant_input(0.9, bu_reference, "bottom-up")
        assert out.label is Outcome.FRONT and out.evidence["probe_min"] > out.evidence["x_m"]

    def test_negative_speed_stagnates(self):
        params = make_params(0.5, MU, P, 0.6)
        assert classify_constant_input(3.0, params, "bottom-up").label is Outcome.STAGNATION

    def test_ladder_is_monotone(self, bu_reference):
        labels = [classify_constant_input(s0, bu_reference, "bottom-up").propagating
                  for s0 in np.linspace(0.28, 0.34, 10)]
        first = labels.index(True)
        assert all(labels[first:]) and not any(labels[:first])


class TestS0Threshold:
    def test_dichotomy(self, bu_speeds):
        params, speeds = bu_speeds
        res = find_s0_star(params, "bottom-up", speeds=speeds)
        b = equilibrium_branches(params)
        assert res.marker is Marker.FINITE and res.value >= b.x_m
        assert res.upper - res.lower <= 1e-4
        assert not classify_constant_input(res.value - 2e-4, params, "bottom-up").propagating
        assert classify_constant_input(res.value + 2e-4, params, "bottom-up").propagating

    def test_not_applicable_when_receding(self):
        res = find_s0_star(make_params(0.5, MU, P, 0.6), "bottom-up")
        assert res.marker is Marker.NOT_APPLICABLE and math.isinf(res.value)


class TestFlashed:
    @pytest.mark.parametrize("theta,q,expected", [
        (0.65, 0.2, Outcome.FAILURE),
        (0.35, 0.2, Outcome.STACKED),
        (0.35, 0.5, Outcome.FRONT),
        (0.5, 0.2, Outcome.PULSE),
    ])
    def test_cases_bottom_up(self, theta, q, expected):
        out = classify_flashed(20.0, make_params(theta, MU, P, q), "bottom-up")
        assert out.label is expected

    def test_stacked_speeds(self, bu_speeds):
        params, speeds = bu_speeds
        out = classify_flashed(20.0, params, "bottom-up", speeds=speeds)
        assert out.label is Outcome.STACKED
        assert abs(out.evidence["lead_speed"] - speeds["c_ud"]) < 5e-3
        assert abs(out.evidence["trail_speed"] - speeds["c_du"]) < 5e-3

    def test_short_flash_fails(self, bu_speeds):
        params, speeds = bu_speeds
        out = classify_flashed(0.05, params, "bottom-up", speeds=speeds, check_threshold=False)
        assert out.label is Outcome.FAILURE

    def test_pulse_width_grows(self):
        params = make_params(0.5, MU, P, 0.2)
        speeds = directional_speeds(params, Topology.bottom_up(200))
        widths = [classify_flashed(tau, params, "bottom-up", speeds=speeds, check_threshold=False).evidence["width"]
                  for tau in (12.0, 20.0, 30.0)]
        assert widths == sorted(widths)


class TestTauThreshold:
    def test_bracket_verification(self):
        params = make_params(0.35, MU, P, 0.5)
        speeds = directional_speeds(params, Topology.bottom_up(200))
        res = find_tau_star(params, "bottom-up", speeds=speeds)
        assert res.marker is Marker.FINITE and res.upper - res.lower <= 1e-3
        below = classify_flashed(res.value - 2e-3, params, "bottom-up", speeds=speeds, check_threshold=False)
        above = classify_flashed(res.value + 2e-3, params, "bottom-up", speeds=speeds, check_threshold=False)
        assert below.label is Outcome.FAILURE and above.propagating

    def test_precondition(self):
        with pytest.raises(NotApplicableError):
            find_tau_star(make_params(0.65, MU, P, 0.2), "bottom-up")


class TestCombined:
    def test_joint_label(self):
        assert joint_label(True, True) == "both-propagate"
        assert joint_label(True, False) == "bottom-up-only"
        assert joint_label(False, True) == "top-down-only"
        assert joint_label(False, False) == "both-stagnate"

    def test_four_regions(self):
        cells = combined_regime_map([0.2, 0.5, 0.8], [0.2, 1.0], 0.35, MU, P,
                                    ThresholdOptions(s0_width=1e-2))
        labels = {(c.q, c.s0): c.label for c in cells}
        assert labels[(0.2, 1.0)] == "bottom-up-only"
        assert labels[(0.5, 1.0)] == "both-propagate"
        assert labels[(0.8, 1.0)] == "top-down-only"
        assert all(labels[(q, 0.2)] == "both-stagnate" for q in (0.2, 0.5, 0.8))


def test_flash_below_stagnating_constant_input_fails():
    # receding lead: a constant x_u input already stagnates
    out = classify_flashed(20.0, make_params(0.65, MU, P, 0.5), "top-down")
    assert out.label is Outcome.FAILURE and "constant_x_u" in out.evidence
