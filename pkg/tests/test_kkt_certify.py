import dataclasses
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.analysis import l_max
from src.kkt_certify import (
    BallSet, IntervalBundle, UncertifiableError, certify, subdiff_l1, subdiff_l2, subdiff_linf,
)
from src.lti_core import discretize
from src.solver import Duals, ProblemSpec, solve


@pytest.fixture
def short_integrator(integrator):
    return discretize(integrator, 20)


@pytest.fixture
def clot_solution(short_integrator):
    spec = ProblemSpec.build(short_integrator, "clot", 0.1)
    return spec, solve(spec)


# ── subdifferentials ────────────────────────────────────────────────────────

def test_subdiff_l1_intervals():
    sd = subdiff_l1([0.0, 2.0, -1.0])
    assert_array_equal(sd.lower, [-1.0, 1.0, -1.0])
    assert_array_equal(sd.upper, [1.0, 1.0, -1.0])


def test_subdiff_l2():
    at_zero = subdiff_l2(np.zeros(3))
    assert at_zero.radius == 1.0
    assert_array_equal(at_zero.center, np.zeros(3))
    away = subdiff_l2([3.0, 4.0])
    assert away.radius == 0.0
    assert_allclose(away.center, [0.6, 0.8])


def test_subdiff_linf_active_signs():
    assert_array_equal(subdiff_linf([0.5, -1.0, 1.0]).signs, [0.0, -1.0, 1.0])
    assert subdiff_linf(np.zeros(2)).at_origin


def test_set_distances():
    bundle = IntervalBundle(lower=np.array([-1.0, 1.0]), upper=np.array([1.0, 1.0]))
    assert_allclose(bundle.distance([1.5, 0.5]), [0.5, 0.5])
    assert_allclose(bundle.scaled(2.0).distance([1.5, 0.5]), [0.0, 1.5])
    assert BallSet(center=np.zeros(2), radius=1.0).distance([3.0, 4.0]) == pytest.approx(4.0)
    assert BallSet(center=np.zeros(2), radius=1.0).distance([0.3, 0.4]) == 0.0


# ── certify ─────────────────────────────────────────────────────────────────

def test_converged_solution_is_certified(clot_solution):
    spec, sol = clot_solution
    assert sol.ok
    cert = certify(spec, sol)
    assert cert.passed
    assert cert.stationarity_residual <= 1e-5
    assert cert.eq_violation <= cert.tolerance
    assert cert.slackness_residual <= 1e-12
    assert json.loads(cert.to_json())["passed"] is True


def test_perturbed_control_fails_equality(clot_solution):
    spec, sol = clot_solution
    u = sol.u.copy()
    u[0] += 0.02
    cert = certify(spec, dataclasses.replace(sol, u=u))
    assert cert.eq_violation > 1e-3
    assert not cert.passed


def test_verdict_is_monotone_in_tolerance(clot_solution):
    spec, sol = clot_solution
    assert certify(spec, sol, tol=1e-4).passed
    assert certify(spec, sol, tol=1e-3).passed
    u = sol.u.copy()
    u[0] += 0.02
    bad = dataclasses.replace(sol, u=u)
    assert not certify(spec, bad, tol=1e-4).passed
    assert certify(spec, bad, tol=0.1).passed


def test_certificate_without_duals_is_rejected(clot_solution):
    spec, sol = clot_solution
    with pytest.raises(UncertifiableError, match="uncertifiable"):
        certify(spec, dataclasses.replace(sol, duals=None))


def test_certificate_is_invariant_under_sample_permutation(clot_solution):
    # Every column of Φ_N equals h for the scalar integrator
    spec, sol = clot_solution
    perm = np.random.default_rng(7).permutation(sol.u.size)
    shuffled = dataclasses.replace(
        sol, u=sol.u[perm], duals=Duals(terminal=sol.duals.terminal, box=sol.duals.box[perm]))
    a, b = certify(spec, sol), certify(spec, shuffled)
    for name in ("stationarity_residual", "eq_violation", "box_violation", "slackness_residual", "dual_negativity"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-9, abs=1e-12)


def test_slack_state_constraint_has_zero_multipliers(short_integrator, clot_solution):
    _, free = clot_solution
    spec = ProblemSpec.build(short_integrator, "clot", 0.1, theta=10.0 * l_max(free))
    sol = solve(spec)
    cert = certify(spec, sol)
    assert cert.passed
    assert cert.slackness_residual <= 1e-9
    assert cert.state_violation == 0.0


def test_active_state_constraint_is_certified(short_integrator):
    # |x_1| <= 0.93 forces u_0 <= -0.7; the remaining controls share the rest equally
    spec = ProblemSpec.build(short_integrator, "clot", 0.1, theta=0.93)
    sol = solve(spec)
    assert sol.ok
    assert sol.u[0] == pytest.approx(-0.7, abs=1e-3)
    assert_allclose(sol.u[1:], -9.3 / 19, atol=1e-3)
    assert sol.duals.state[0, 0] > 0
    cert = certify(spec, sol)
    assert cert.passed
    assert cert.state_violation <= cert.tolerance
