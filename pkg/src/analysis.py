"""Sparsity, support and continuity measures, θ sweeps with per-point certificates."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from sklearn.linear_model import LinearRegression

from config import CERTIFY_TOL, MAX_WORKERS, SPARSITY_THRESHOLD
from src.kkt_certify import certify
from src.lti_core import DiscreteProblem, Plant, discretize
from src.prox_ops import RegularizerKind
from src.solver import ProblemSpec, Solution, SolveStatus, SolverConfig, solve, solve_all

logger = logging.getLogger(__name__)

CERT_PASSED = "passed"
CERT_FAILED = "failed"
CERT_SKIPPED = "skipped"  # solve did not reach Optimal


class InfeasibleProblemError(RuntimeError):
    """A solve needed by an analysis came back Infeasible."""


@dataclass(frozen=True)
class SparsityReport:
    density: float
    threshold: float
    nonzero_count: int
    N: int

    def to_dict(self):
        return {"density": self.density, "threshold": self.threshold,
                "nonzero_count": self.nonzero_count, "N": self.N}


@dataclass(frozen=True)
class ThetaPoint:
    theta: float
    density_lasso: float
    density_en: float
    density_clot: float
    status: str
    cert_lasso: str = CERT_SKIPPED
    cert_en: str = CERT_SKIPPED
    cert_clot: str = CERT_SKIPPED

    @property
    def certified(self):
        return all(c == CERT_PASSED for c in (self.cert_lasso, self.cert_en, self.cert_clot))


@dataclass
class ThetaRange:
    theta_max: float
    theta_min: Optional[float]
    step: float
    per_theta_densities: List[ThetaPoint] = field(default_factory=list)


@dataclass
class ContinuityStudy:
    h_values: List[float]
    max_diffs: List[float]
    fitted_exponent: float
    kind: RegularizerKind = RegularizerKind.CLOT


def sparsity_density(u, threshold=SPARSITY_THRESHOLD):
    """
    Fraction of samples whose magnitude exceeds the threshold.

    Args:
        u (ndarray): Control samples
        threshold (float): Magnitudes at or below this are treated as zero

    Returns:
        SparsityReport: density = nonzero_count / N
    """
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    u = np.asarray(u, dtype=float).reshape(-1)
    count = int(np.count_nonzero(np.abs(u) > threshold))
    return SparsityReport(density=count / u.size, threshold=threshold, nonzero_count=count, N=u.size)


def support_intervals(u, h, threshold=SPARSITY_THRESHOLD):
    """Time intervals [start, end) on which the control is nonzero."""
    active = np.abs(np.asarray(u, dtype=float)) > threshold
    edges = np.diff(np.concatenate(([0], active.astype(int), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [(s * h, e * h) for s, e in zip(starts, ends)]


def switching_count(u, threshold=SPARSITY_THRESHOLD):
    """Number of zero / nonzero transitions."""
    active = np.abs(np.asarray(u, dtype=float)) > threshold
    return int(np.count_nonzero(active[1:] != active[:-1]))


def max_adjacent_diff(u):
    """max_k |u_k - u_{k+1}|, without the wraparound pair."""
    u = np.asarray(u, dtype=float)
    if u.size < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(u))))


def l_max(sol: Solution):
    """Largest ||x_k||_2 over k = 1..N-1."""
    if sol.states is None or len(sol.states) == 0:
        return 0.0
    return float(np.max(np.linalg.norm(sol.states, axis=1)))


def theta_max_from(discrete: DiscreteProblem, lam, cfg: Optional[SolverConfig] = None, kind=RegularizerKind.CLOT):
    """θ_max: l_max of the unconstrained solve."""
    sol = solve(ProblemSpec.build(discrete, kind, lam), cfg)
    if sol.status is SolveStatus.INFEASIBLE:
        raise InfeasibleProblemError("Unconstrained problem is infeasible; no θ range exists")
    return l_max(sol)


def _sweep_status(solutions):
    statuses = {sol.status for sol in solutions.values()}
    if SolveStatus.INFEASIBLE in statuses:
        return SolveStatus.INFEASIBLE.value
    if SolveStatus.MAX_ITERS in statuses:
        return SolveStatus.MAX_ITERS.value
    return SolveStatus.OPTIMAL.value


def _certificate_flags(discrete, lam, theta, solutions, tol):
    """Certify every Optimal solution of one θ point; other statuses are skipped."""
    flags = {}
    for kind, sol in solutions.items():
        if not sol.ok:
            flags[kind] = CERT_SKIPPED
            continue
        cert = certify(ProblemSpec.build(discrete, kind, lam, theta), sol, tol)
        flags[kind] = CERT_PASSED if cert.passed else CERT_FAILED
        if not cert.passed:
            logger.warning(f"theta={theta:.6g}: {kind.value} certificate failed {cert.to_dict()}")
    return flags


def theta_sweep(discrete: DiscreteProblem, lam, theta_max, step, cfg: Optional[SolverConfig] = None,
                theta_floor=0.0, threshold=SPARSITY_THRESHOLD, on_point=None, tol=CERTIFY_TOL):
    """
    Decrease θ from theta_max in fixed steps until the programs become infeasible.

    Each θ is warm-started from the previous one, and every Optimal solution is certified.

    Args:
        discrete (DiscreteProblem): Sampled plant
        lam (float): Weight λ for EN and CLOT
        theta_max (float): First θ to solve
        step (float): Decrement between θ values
        cfg (SolverConfig, optional): Solver settings
        theta_floor (float): Stop once θ would drop to or below this value
        threshold (float): Sparsity threshold
        on_point (callable, optional): Called with (ThetaPoint, solutions) after each θ
        tol (float): Certificate tolerance

    Returns:
        ThetaRange: Recorded densities; theta_min is the last θ where every method was feasible
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    result = ThetaRange(theta_max=float(theta_max), theta_min=None, step=float(step))
    warm = {}
    k = 0
    while True:
        theta = theta_max - k * step
        if theta <= max(theta_floor, 0.0):
            break
        solutions = solve_all(discrete, lam, cfg, theta=theta, warm=warm)
        status = _sweep_status(solutions)
        densities = {kind: sparsity_density(sol.u, threshold).density for kind, sol in solutions.items()}
        if status == SolveStatus.INFEASIBLE.value:
            densities = {kind: math.nan for kind in solutions}
        flags = _certificate_flags(discrete, lam, theta, solutions, tol)
        point = ThetaPoint(
            theta=float(theta),
            density_lasso=densities[RegularizerKind.LASSO],
            density_en=densities[RegularizerKind.EN],
            density_clot=densities[RegularizerKind.CLOT],
            status=status,
            cert_lasso=flags[RegularizerKind.LASSO],
            cert_en=flags[RegularizerKind.EN],
            cert_clot=flags[RegularizerKind.CLOT],
        )
        result.per_theta_densities.append(point)
        if on_point is not None:
            on_point(point, solutions)
        logger.info(f"theta={theta:.6g}: {status} (lasso={point.density_lasso:.4f}, "
                    f"en={point.density_en:.4f}, clot={point.density_clot:.4f})")
        if status == SolveStatus.INFEASIBLE.value:
            break
        if status == SolveStatus.MAX_ITERS.value:
            logger.warning(f"theta={theta:.6g} did not converge; point kept and flagged")
        result.theta_min = float(theta)
        warm = {kind: sol for kind, sol in solutions.items() if sol.status is not SolveStatus.INFEASIBLE}
        k += 1
    return result


def fit_exponent(h_values, max_diffs):
    """Least-squares slope of log(max_diff) against log(h); nan with fewer than two positive points."""
    h = np.asarray(h_values, dtype=float)
    diffs = np.asarray(max_diffs, dtype=float)
    mask = (diffs > 0) & (h > 0)
    if np.count_nonzero(mask) < 2:
        return math.nan
    model = LinearRegression().fit(np.log(h[mask]).reshape(-1, 1), np.log(diffs[mask]))
    return float(model.coef_[0])


def continuity_study(plant: Plant, lam, h_values: Sequence[float], cfg: Optional[SolverConfig] = None,
                     kind=RegularizerKind.CLOT) -> ContinuityStudy:
    """
    Max adjacent control difference as the sampling period shrinks.

    Args:
        plant (Plant): Continuous-time plant
        lam (float): Weight λ
        h_values (sequence): Sampling periods, each dividing T
        cfg (SolverConfig, optional): Solver settings
        kind (RegularizerKind): Program to study (CLOT by default)

    Returns:
        ContinuityStudy: Per-h max differences and the fitted log-log exponent
    """
    h_values = sorted((float(h) for h in h_values), reverse=True)
    if len(h_values) < 3:
        raise ValueError("continuity_study needs at least three h values")
    sizes = []
    for h in h_values:
        N = int(round(plant.T / h))
        if N < 1 or not math.isclose(N * h, plant.T, rel_tol=1e-9):
            raise ValueError(f"h={h} does not divide T={plant.T}")
        sizes.append(N)

    def run(N):
        return solve(ProblemSpec.build(discretize(plant, N), kind, lam), cfg)

    solutions = {}
    with ThreadPoolExecutor(max_workers=MAX_WORKERS) as executor:
        futures = {executor.submit(run, N): N for N in sizes}
        for future in as_completed(futures):
            solutions[futures[future]] = future.result()

    max_diffs = []
    for h, N in zip(h_values, sizes):
        sol = solutions[N]
        if sol.status is SolveStatus.INFEASIBLE:
            raise InfeasibleProblemError(f"{kind.value} problem with N={N} is infeasible at T={plant.T}")
        max_diffs.append(max_adjacent_diff(sol.u))
        logger.info(f"h={h:.6g} (N={N}): max adjacent diff {max_diffs[-1]:.6g}")

    for coarse, fine in zip(max_diffs, max_diffs[1:]):
        if fine > 1.05 * coarse:
            logger.warning(f"Max adjacent difference grew under refinement ({coarse:.4g} -> {fine:.4g})")

    exponent = fit_exponent(h_values, max_diffs)
    logger.info(f"Fitted exponent for {kind.value}: {exponent:.4f}")
    return ContinuityStudy(h_values=h_values, max_diffs=max_diffs, fitted_exponent=exponent, kind=kind)
