"""
Numerical KKT certificates for solutions of the discretized programs.

The Lagrangian is

    f(u) + β^T (A_d^N xi + Φ_N u) + γ (||u||_inf - u_max) + Σ_i α_i (||A_d^i xi + Ψ_N^i u|| - θ)

and a solution is certified when 0 lies (within tolerance) in ∂f(u) plus the multiplier
terms, the constraints hold, the multipliers have the right signs and every multiplier of a
slack constraint vanishes. Set-valued subdifferentials are turned into residuals by taking
the distance from the required vector to the set, coordinate by coordinate.
"""
import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from config import CERTIFY_TOL
from src.prox_ops import RegularizerKind, prox_l1
from src.solver import ProblemSpec, Solution, simulate

logger = logging.getLogger(__name__)

ACTIVE_BAND = 10.0  # constraint counts as active within ACTIVE_BAND * tol of its bound


class UncertifiableError(ValueError):
    """Solution carries no dual estimates."""


@dataclass(frozen=True, eq=False)
class IntervalBundle:
    """Product of per-coordinate intervals [lower_k, upper_k]."""

    lower: np.ndarray
    upper: np.ndarray

    def scaled(self, c):
        return IntervalBundle(c * self.lower, c * self.upper)

    def distance(self, v):
        """Per-coordinate distance from v to the intervals."""
        v = np.asarray(v, dtype=float)
        return np.maximum(self.lower - v, 0.0) + np.maximum(v - self.upper, 0.0)


@dataclass(frozen=True, eq=False)
class BallSet:
    """Closed Euclidean ball; radius 0 is a single point."""

    center: np.ndarray
    radius: float

    def distance(self, v):
        return max(float(np.linalg.norm(np.asarray(v, dtype=float) - self.center)) - self.radius, 0.0)


@dataclass(frozen=True, eq=False)
class FaceSet:
    """conv{signs_k e_k : signs_k != 0}; at the origin the whole unit l1 ball."""

    signs: np.ndarray
    at_origin: bool = False


def subdiff_l1(u, zero_tol=0.0):
    """[-1, 1] on zero coordinates, {sign(u_k)} elsewhere."""
    u = np.asarray(u, dtype=float)
    zero = np.abs(u) <= zero_tol
    sign = np.sign(u)
    return IntervalBundle(lower=np.where(zero, -1.0, sign), upper=np.where(zero, 1.0, sign))


def subdiff_l2(u):
    """Unit ball at the origin, the point u / ||u|| elsewhere."""
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u)
    if norm == 0.0:
        return BallSet(center=np.zeros_like(u), radius=1.0)
    return BallSet(center=u / norm, radius=0.0)


def subdiff_linf(u, tol=0.0):
    """Sign pattern of the coordinates attaining ||u||_inf (within tol)."""
    u = np.asarray(u, dtype=float)
    peak = np.max(np.abs(u)) if u.size else 0.0
    if peak == 0.0:
        return FaceSet(signs=np.zeros_like(u), at_origin=True)
    active = np.abs(u) >= peak - tol
    return FaceSet(signs=np.where(active, np.sign(u), 0.0))


@dataclass(frozen=True)
class Certificate:
    stationarity_residual: float
    eq_violation: float
    box_violation: float
    state_violation: float
    slackness_residual: float
    dual_negativity: float
    tolerance: float
    passed: bool

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _stationarity(spec: ProblemSpec, u, g):
    """Distance from 0 to ∂f(u) + g."""
    w1, w2 = spec.reg.weights
    kind = spec.reg.kind
    target = -np.asarray(g, dtype=float)
    if kind is RegularizerKind.EN:
        target = target - 2.0 * w2 * u
    elif kind is RegularizerKind.CLOT:
        l2 = subdiff_l2(u)
        if l2.radius == 0.0:
            target = target - w2 * l2.center
        else:
            # distance to w1*[-1,1]^N + w2*ball
            return max(float(np.linalg.norm(prox_l1(target, w1))) - w2, 0.0)
    dist = subdiff_l1(u).scaled(w1).distance(target)
    return float(np.linalg.norm(dist))


def certify(spec: ProblemSpec, sol: Solution, tol=CERTIFY_TOL) -> Certificate:
    """
    Check a solution against the KKT conditions of its program.

    Args:
        spec (ProblemSpec): The program the solution was computed for
        sol (Solution): Candidate with dual estimates
        tol (float): Base tolerance, scaled by 1 + ||A_d^N xi||

    Returns:
        Certificate: Residuals and the pass/fail verdict
    """
    if sol.duals is None:
        raise UncertifiableError("uncertifiable: solution carries no dual estimates")
    d = spec.discrete
    u = np.asarray(sol.u, dtype=float)
    duals = sol.duals
    u_max = d.plant.u_max
    t = tol * (1.0 + np.linalg.norm(d.terminal_free_response))
    band = ACTIVE_BAND * t

    eq_violation = float(np.linalg.norm(d.terminal_free_response + d.PhiN @ u))
    box_violation = float(max(np.max(np.abs(u)) - u_max, 0.0))

    g = d.PhiN.T @ duals.terminal + duals.box
    state_violation = slack_state = neg_state = 0.0
    if spec.theta is not None and d.N > 1:
        states = simulate(d, u)[1:d.N]
        norms = np.linalg.norm(states, axis=1)
        state_violation = float(max(np.max(norms) - spec.theta, 0.0))
        if duals.state is not None:
            A = np.asarray(duals.state).reshape(d.N - 1, d.n)
            g[:d.N - 1] += d.PsiN.rmatvec(A.reshape(-1))
            alpha = np.linalg.norm(A, axis=1)
            near = norms >= spec.theta - band
            if np.any(~near):
                slack_state = float(np.max(alpha[~near]))
            if np.any(near):
                direction = states[near] / np.maximum(norms[near], np.finfo(float).tiny)[:, None]
                along = np.maximum(np.sum(A[near] * direction, axis=1), 0.0)
                neg_state = float(np.max(np.linalg.norm(A[near] - along[:, None] * direction, axis=1)))

    near_box = np.abs(u) >= u_max - band
    slack_box = float(np.max(np.abs(duals.box[~near_box]))) if np.any(~near_box) else 0.0
    neg_box = 0.0
    if np.any(near_box):
        neg_box = float(max(np.max(-np.sign(u[near_box]) * duals.box[near_box]), 0.0))

    stationarity = _stationarity(spec, u, g)
    slackness = max(slack_box, slack_state)
    negativity = max(neg_box, neg_state)
    residuals = (stationarity, eq_violation, box_violation, state_violation, slackness, negativity)
    passed = all(r <= t for r in residuals)

    logger.info(f"Certificate for {spec.reg.kind.value}: passed={passed} "
                f"(stationarity={stationarity:.3e}, eq={eq_violation:.3e}, tol={t:.3e})")
    return Certificate(
        stationarity_residual=stationarity,
        eq_violation=eq_violation,
        box_violation=box_violation,
        state_violation=state_violation,
        slackness_residual=slackness,
        dual_negativity=negativity,
        tolerance=float(t),
        passed=bool(passed),
    )
