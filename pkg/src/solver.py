"""
Primal-dual hybrid gradient solver for the discretized hands-off control programs.

    minimize   f(u)                          f = LASSO / EN / CLOT regularizer
    subject to A_d^N xi + Φ_N u = 0           (terminal block, dual set: a point)
               |u_k| <= u_max                 (box block, identity operator)
               ||A_d^i xi + Ψ_N^i u|| <= θ    (state block, only when θ is given)

K is preconditioned before iterating: the terminal rows are whitened so that W Φ_N has
orthonormal rows, and every state step is scaled by the inverse norm of its own row group
(one factor per ball, so each dual set stays a ball). The iteration restarts adaptively
from the running average or the current iterate, and the primal weight that splits the
step between τ and σ is re-estimated at each restart. Duals stored in a Solution are
expressed in the original constraint units.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import svd

from config import (
    CHECK_EVERY, EPS_ABS, EPS_REL, INFEASIBILITY_WINDOW, MAX_ITERS, MAX_WORKERS,
    OVER_RELAXATION, POWER_ITERATIONS, SEED,
)
from src.lti_core import DiscreteProblem
from src.prox_ops import Regularizer, RegularizerKind, project_balls, project_box, project_point

logger = logging.getLogger(__name__)

# Adaptive restarts: error decay that forces a restart, decay that allows one once progress
# stalls, and the cycle length (as a fraction of all iterations) that forces one anyway
RESTART_SUFFICIENT = 0.2
RESTART_NECESSARY = 0.8
RESTART_ARTIFICIAL = 0.36
# Primal weight: smoothing of the restart update and the band around its starting value
PRIMAL_WEIGHT_SMOOTHING = 0.5
PRIMAL_WEIGHT_LIMIT = 1e4
# Singular values of Φ_N below this fraction of the largest are floored when whitening
WHITEN_FLOOR = 1e-12
# Consecutive stagnant windows before declaring infeasibility
INFEASIBLE_WINDOWS = 3


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = MAX_ITERS
    eps_abs: float = EPS_ABS
    eps_rel: float = EPS_REL
    check_every: int = CHECK_EVERY
    infeasibility_window: int = INFEASIBILITY_WINDOW
    over_relaxation: float = OVER_RELAXATION
    seed: int = SEED
    power_iterations: int = POWER_ITERATIONS
    adaptive: bool = True  # restarts and primal weight updates

    def __post_init__(self):
        for name in ("max_iters", "check_every", "infeasibility_window", "power_iterations"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.eps_abs < 1 and 0 < self.eps_rel < 1):
            raise ValueError("eps_abs and eps_rel must lie in (0, 1)")
        if not 1.0 <= self.over_relaxation < 2.0:
            raise ValueError(f"over_relaxation must lie in [1, 2), got {self.over_relaxation}")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One discretized program: regularizer plus optional state threshold θ on x_1..x_{N-1}."""

    discrete: DiscreteProblem
    reg: Regularizer
    theta: Optional[float] = None

    def __post_init__(self):
        if self.theta is not None and not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if not math.isclose(self.reg.h, self.discrete.h, rel_tol=1e-12):
            raise ValueError(f"Regularizer h={self.reg.h} does not match the sampling period {self.discrete.h}")

    @classmethod
    def build(cls, discrete, kind, lam, theta=None, scale=1.0):
        return cls(discrete=discrete, reg=Regularizer(kind=kind, lam=lam, h=discrete.h, scale=scale), theta=theta)

    @property
    def feasibility_tol(self):
        return 1e-5 * (1.0 + np.linalg.norm(self.discrete.terminal_free_response))


@dataclass(frozen=True, eq=False)
class Duals:
    """KKT multipliers: terminal equality (β direction), box (γ direction), per-step states (α_i direction)."""

    terminal: np.ndarray
    box: np.ndarray
    state: Optional[np.ndarray] = None

    def to_dict(self):
        return {
            "terminal": self.terminal.tolist(),
            "box": self.box.tolist(),
            "state": None if self.state is None else self.state.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        state = doc.get("state")
        return cls(
            terminal=np.asarray(doc["terminal"], dtype=float),
            box=np.asarray(doc["box"], dtype=float),
            state=None if state is None else np.asarray(state, dtype=float),
        )


@dataclass(frozen=True, eq=False)
class Solution:
    u: np.ndarray
    states: np.ndarray = field(repr=False)
    duals: Optional[Duals] = field(repr=False)
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: SolveStatus
    kind: Optional[RegularizerKind] = None
    step_ratio: float = 1.0  # final tau/sigma (1 / primal_weight^2), reused by warm starts

    @property
    def ok(self):
        return self.status is SolveStatus.OPTIMAL

    def to_dict(self):
        return {
            "u": self.u.tolist(),
            "states": self.states.tolist(),
            "duals": None if self.duals is None else self.duals.to_dict(),
            "objective": self.objective,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "iterations": self.iterations,
            "status": self.status.value,
            "kind": None if self.kind is None else self.kind.value,
            "step_ratio": self.step_ratio,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            u=np.asarray(doc["u"], dtype=float),
            states=np.asarray(doc["states"], dtype=float),
            duals=None if doc.get("duals") is None else Duals.from_dict(doc["duals"]),
            objective=float(doc["objective"]),
            primal_residual=float(doc["primal_residual"]),
            dual_residual=float(doc["dual_residual"]),
            iterations=int(doc["iterations"]),
            status=SolveStatus(doc["status"]),
            kind=None if doc.get("kind") is None else RegularizerKind(doc["kind"]),
            step_ratio=float(doc.get("step_ratio", 1.0)),
        )


def simulate(discrete: DiscreteProblem, u):
    """
    Forward recursion x_{k+1} = A_d x_k + B_d u_k from x_0 = xi.

    Args:
        discrete (DiscreteProblem): Sampled plant
        u (ndarray): Controls u_0..u_{N-1}

    Returns:
        ndarray: (N+1, n) trajectory x_0..x_N
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != discrete.N:
        raise ValueError(f"Control has length {u.shape[0]}, expected {discrete.N}")
    traj = np.empty((discrete.N + 1, discrete.n))
    traj[0] = discrete.plant.xi
    for k in range(discrete.N):
        traj[k + 1] = discrete.Ad @ traj[k] + discrete.Bd * u[k]
    return traj


def estimate_norm(apply, apply_t, dim, iters, rng):
    """
    Power iteration on apply_t(apply(.)) for the largest singular value.

    Returns:
        float: Estimated operator norm
    """
    x = rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    for _ in range(iters):
        z = apply_t(apply(x))
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        x = z / nz
    return float(np.linalg.norm(apply(x)))


def step_group_norms(markov, m):
    """
    Spectral norm of each state row group Ψ_N^i, i = 1..m.

    Ψ_N^i Ψ_N^i^T is the running sum of g_j g_j^T over the first i Markov parameters, so all
    m norms come from one cumulative sum and one batched eigenvalue call.
    """
    g = np.asarray(markov, dtype=float)[:m]
    gram = np.cumsum(np.einsum("ki,kj->kij", g, g), axis=0)
    return np.sqrt(np.maximum(np.linalg.eigvalsh(gram)[:, -1], 0.0))


class ConstraintStack:
    """Stacked, preconditioned operator K and the projection onto its dual-side sets."""

    def __init__(self, spec: ProblemSpec, cfg: SolverConfig):
        d = spec.discrete
        self.spec = spec
        self.N, self.n = d.N, d.n
        self.m = d.N - 1
        self.target = np.asarray(d.b_terminal)
        self.u_max = d.plant.u_max
        self.theta = spec.theta
        self.has_state = spec.theta is not None and self.m > 0
        self.psi = d.PsiN if self.has_state else None
        self.centers = -np.asarray(d.c_state)
        tiny = np.finfo(float).tiny

        U, s_raw, Vt = svd(np.asarray(d.PhiN), full_matrices=False)
        s = np.maximum(s_raw, max(s_raw[0] * WHITEN_FLOOR, tiny))
        self.whiten = (U / s) @ U.T
        self.unwhiten = (U * s) @ U.T
        self.M = (U * (s_raw / s)) @ Vt
        self.target_w = self.whiten @ self.target

        self.row_scale = None
        if self.has_state:
            groups = step_group_norms(d.markov, self.m)
            groups = np.maximum(groups, max(groups.max() * WHITEN_FLOOR, tiny))
            scale = 1.0 / groups
            block = estimate_norm(lambda v: self._psi_apply(v, scale), lambda w: self._psi_apply_t(w, scale),
                                  self.m, cfg.power_iterations, np.random.default_rng(cfg.seed))
            self.row_scale = scale / max(block, tiny)

        self.term = slice(0, self.n)
        self.box = slice(self.n, self.n + self.N)
        end = self.n + self.N + (self.m * self.n if self.has_state else 0)
        self.state = slice(self.n + self.N, end)
        self.dim = end

    def _psi_apply(self, v, scale):
        return (self.psi.matvec(v).reshape(self.m, self.n) * scale[:, None]).reshape(-1)

    def _psi_apply_t(self, w, scale):
        return self.psi.rmatvec((w.reshape(self.m, self.n) * scale[:, None]).reshape(-1))

    def forward(self, u):
        out = np.empty(self.dim)
        out[self.term] = self.M @ u
        out[self.box] = u
        if self.has_state:
            out[self.state] = self._psi_apply(u[:self.m], self.row_scale)
        return out

    def adjoint(self, y):
        z = self.M.T @ y[self.term] + y[self.box]
        if self.has_state:
            z[:self.m] += self._psi_apply_t(y[self.state], self.row_scale)
        return z

    def project(self, w):
        out = np.empty(self.dim)
        out[self.term] = project_point(w[self.term], self.target_w)
        out[self.box] = project_box(w[self.box], self.u_max)
        if self.has_state:
            P = w[self.state].reshape(self.m, self.n)
            scale = self.row_scale[:, None]
            out[self.state] = project_balls(P, self.centers * scale, self.theta * scale).reshape(-1)
        return out

    def rhs_norm(self):
        """Size of the dual-side data, used for the starting primal weight."""
        parts = [np.linalg.norm(self.target_w), self.u_max * math.sqrt(self.N)]
        if self.has_state:
            reach = np.linalg.norm(self.centers, axis=1) + self.theta
            parts.append(np.linalg.norm(self.row_scale * reach))
        return float(np.linalg.norm(parts))

    def violations(self, Ku):
        """Unscaled (terminal, box, state) constraint violations at the point with image Ku."""
        term = float(np.linalg.norm(self.unwhiten @ Ku[self.term] - self.target))
        box = float(max(np.max(np.abs(Ku[self.box])) - self.u_max, 0.0))
        state = 0.0
        if self.has_state:
            X = Ku[self.state].reshape(self.m, self.n) / self.row_scale[:, None] - self.centers
            state = float(max(np.max(np.linalg.norm(X, axis=1)) - self.theta, 0.0))
        return term, box, state

    def to_duals(self, y):
        state = None
        if self.has_state:
            state = y[self.state].reshape(self.m, self.n) * self.row_scale[:, None]
        return Duals(terminal=self.whiten @ y[self.term], box=y[self.box].copy(), state=state)

    def from_duals(self, duals: Optional[Duals]):
        y = np.zeros(self.dim)
        if duals is None:
            return y
        y[self.term] = self.unwhiten @ duals.terminal
        y[self.box] = duals.box
        if self.has_state and duals.state is not None:
            y[self.state] = (np.reshape(duals.state, (self.m, self.n)) / self.row_scale[:, None]).reshape(-1)
        return y


class _Iterate(NamedTuple):
    x: np.ndarray
    Kx: np.ndarray
    y: np.ndarray
    KTy: np.ndarray


def initial_primal_weight(reg: Regularizer, ops: ConstraintStack):
    """Ratio of objective size to dual-side data size, the usual cold-start primal weight."""
    w1, w2 = reg.weights
    objective = w1 * math.sqrt(ops.N) + w2
    rhs = ops.rhs_norm()
    if objective > 0 and rhs > 0:
        return objective / rhs
    return 1.0


def _relax(z, z_new, rho):
    return _Iterate(*(a + rho * (b - a) for a, b in zip(z, z_new)))


def solve(spec: ProblemSpec, cfg: Optional[SolverConfig] = None, warm: Optional[Solution] = None) -> Solution:
    """
    Solve one discretized program with over-relaxed, adaptively restarted PDHG.

    A warm start reuses the primal/dual pair and the primal weight of `warm` unchanged, and
    is checked after its first iteration, so a converged pair returns at once.

    Args:
        spec (ProblemSpec): Discrete problem, regularizer and optional θ
        cfg (SolverConfig, optional): Tolerances and iteration limits
        warm (Solution, optional): Start from this primal/dual pair

    Returns:
        Solution: Controls, trajectory, duals, residuals and status
    """
    cfg = cfg or SolverConfig()
    d = spec.discrete
    reg = spec.reg
    ops = ConstraintStack(spec, cfg)

    x = np.zeros(d.N)
    if warm is not None:
        if warm.u.shape != (d.N,):
            raise ValueError(f"Warm start has length {warm.u.shape[0]}, expected {d.N}")
        x = np.array(warm.u, dtype=float)
    y = ops.from_duals(warm.duals if warm is not None else None)

    K_norm = estimate_norm(ops.forward, ops.adjoint, d.N, cfg.power_iterations,
                           np.random.default_rng(cfg.seed)) * 1.01
    eta = 0.99 / max(K_norm, np.finfo(float).tiny)
    weight = 1.0 / math.sqrt(warm.step_ratio) if warm is not None else initial_primal_weight(reg, ops)
    weight_lo, weight_hi = weight / PRIMAL_WEIGHT_LIMIT, weight * PRIMAL_WEIGHT_LIMIT
    tau, sigma = eta / weight, eta * weight
    rho = cfg.over_relaxation
    feas_tol = spec.feasibility_tol

    def step(z):
        x_new = reg.prox(z.x - tau * z.KTy, tau)
        Kx_new = ops.forward(x_new)
        w = z.y + sigma * (2.0 * Kx_new - z.Kx)
        y_new = w - sigma * ops.project(w / sigma)
        return _Iterate(x_new, Kx_new, y_new, ops.adjoint(y_new))

    def residuals(z, z_new):
        subgrad = (z.x - z_new.x) / tau - z.KTy
        r_d = float(np.linalg.norm(subgrad + z_new.KTy))
        r_p = float(np.linalg.norm((z.y - z_new.y) / sigma - (z.Kx - z_new.Kx)))
        tol_d = cfg.eps_abs * math.sqrt(d.N) + cfg.eps_rel * max(np.linalg.norm(subgrad), np.linalg.norm(z_new.KTy))
        tol_p = cfg.eps_abs * math.sqrt(ops.dim) + cfg.eps_rel * max(np.linalg.norm(z_new.Kx),
                                                                    np.linalg.norm(ops.project(z_new.Kx)))
        violation = max(ops.violations(z_new.Kx))
        converged = r_p <= tol_p and r_d <= tol_d and violation <= feas_tol
        return r_p, r_d, converged, violation

    def restart_error(r_p, r_d):
        return math.sqrt(weight * r_p ** 2 + r_d ** 2 / weight)

    z = _Iterate(x, ops.forward(x), y, ops.adjoint(y))
    z_new = z
    anchor = z
    sums = [np.zeros_like(part) for part in z]
    count = 0
    restart_err = last_candidate_err = math.inf
    restart_it = 0
    restarts = 0
    r_p = r_d = math.inf
    status = SolveStatus.MAX_ITERS

    window_start = 0
    window_ref = None
    last_growth = None
    stagnant_windows = 0

    it = 0
    for it in range(1, cfg.max_iters + 1):
        z_new = step(z)
        for acc, part in zip(sums, z_new):
            acc += part
        count += 1

        regular_check = it % cfg.check_every == 0
        if regular_check or (warm is not None and it == 1):
            r_p, r_d, converged, violation = residuals(z, z_new)
            logger.debug(f"iter {it}: r_p={r_p:.3e} r_d={r_d:.3e} viol={violation:.3e} weight={weight:.3e}")
            if converged:
                status = SolveStatus.OPTIMAL
                break

        if regular_check:
            if it - window_start >= cfg.infeasibility_window:
                window_start = it
                dual_norm = float(np.linalg.norm(z_new.y))
                if window_ref is not None:
                    ref_violation, ref_dual = window_ref
                    growth = dual_norm - ref_dual
                    stagnant = violation > feas_tol and violation > 0.999 * ref_violation
                    diverging = growth > 0 and (last_growth is None or growth >= 0.5 * last_growth)
                    stagnant_windows = stagnant_windows + 1 if (stagnant and diverging) else 0
                    last_growth = growth
                    if stagnant_windows >= INFEASIBLE_WINDOWS:
                        status = SolveStatus.INFEASIBLE
                        break
                window_ref = (violation, dual_norm)

            if cfg.adaptive:
                candidate, candidate_err = z_new, restart_error(r_p, r_d)
                if count > 1:
                    z_bar = _Iterate(*(acc / count for acc in sums))
                    z_bar_new = step(z_bar)
                    a_p, a_d, a_converged, _ = residuals(z_bar, z_bar_new)
                    if a_converged:
                        z_new, r_p, r_d = z_bar_new, a_p, a_d
                        status = SolveStatus.OPTIMAL
                        break
                    average_err = restart_error(a_p, a_d)
                    if average_err < candidate_err:
                        candidate, candidate_err = z_bar_new, average_err

                if (candidate_err <= RESTART_SUFFICIENT * restart_err
                        or (candidate_err <= RESTART_NECESSARY * restart_err and candidate_err > last_candidate_err)
                        or it - restart_it >= RESTART_ARTIFICIAL * it):
                    dx = float(np.linalg.norm(candidate.x - anchor.x))
                    dy = float(np.linalg.norm(candidate.y - anchor.y))
                    if dx > 1e-10 and dy > 1e-10:
                        weight = math.exp(PRIMAL_WEIGHT_SMOOTHING * math.log(dy / dx)
                                          + (1.0 - PRIMAL_WEIGHT_SMOOTHING) * math.log(weight))
                        weight = min(max(weight, weight_lo), weight_hi)
                        tau, sigma = eta / weight, eta * weight
                    z = anchor = candidate
                    sums = [np.zeros_like(part) for part in z]
                    count = 0
                    restart_err = candidate_err
                    last_candidate_err = math.inf
                    restart_it = it
                    restarts += 1
                    continue
                last_candidate_err = candidate_err

        z = _relax(z, z_new, rho)

    if status is SolveStatus.MAX_ITERS:
        logger.warning(f"{reg.kind.value} solve stopped at max_iters={cfg.max_iters} (r_p={r_p:.3e}, r_d={r_d:.3e})")

    u = z_new.x
    traj = simulate(d, u)
    solution = Solution(
        u=u,
        states=traj[1:d.N],
        duals=ops.to_duals(z_new.y),
        objective=reg.value(u),
        primal_residual=r_p,
        dual_residual=r_d,
        iterations=it,
        status=status,
        kind=reg.kind,
        step_ratio=tau / sigma,
    )
    logger.info(f"{reg.kind.value} N={d.N} theta={spec.theta}: {status.value} after {it} iterations "
                f"({restarts} restarts), objective={solution.objective:.6g}")
    return solution


def solve_all(discrete: DiscreteProblem, lam, cfg: Optional[SolverConfig] = None, theta=None, warm=None):
    """
    Solve the LASSO, EN and CLOT programs for one discrete problem in parallel.

    Args:
        discrete (DiscreteProblem): Sampled plant
        lam (float): Weight λ (ignored by LASSO)
        cfg (SolverConfig, optional): Solver settings
        theta (float, optional): State threshold
        warm (dict, optional): RegularizerKind -> Solution warm starts

    Returns:
        dict: RegularizerKind -> Solution, ordered LASSO, EN, CLOT
    """
    warm = warm or {}
    results = {}
    with ThreadPoolExecutor(max_workers=min(MAX_WORKERS, len(RegularizerKind))) as executor:
        futures = {
            executor.submit(solve, ProblemSpec.build(discrete, kind, lam, theta), cfg, warm.get(kind)): kind
            for kind in RegularizerKind
        }
        for future in as_completed(futures):
            kind = futures[future]
            results[kind] = future.result()
    return {kind: results[kind] for kind in RegularizerKind}
