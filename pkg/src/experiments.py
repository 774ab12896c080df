"""
Plant catalog and the reproduction suites for the sparsity tables and the θ sweeps.
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from config import CATALOG_PATH, DEFAULT_N, MAX_WORKERS, SPARSITY_THRESHOLD, USE_SOLUTION_CACHE
from src.analysis import ThetaRange, sparsity_density, theta_sweep
from src.cache_manager import SolutionCache, solution_key
from src.lti_core import Plant, TransferFunctionSpec, discretize, realize
from src.prox_ops import RegularizerKind
from src.solver import SolverConfig, solve_all

logger = logging.getLogger(__name__)

ORDERING_SLACK = 0.02


@dataclass(frozen=True)
class CatalogEntry:
    """One experiment row: plant, horizon, initial state, λ and optional θ range."""

    id: str
    plant: str
    T: float
    x0: tuple
    lam: float
    spec: Optional[TransferFunctionSpec] = None
    matrices: Optional[dict] = None
    theta_range: Optional[tuple] = None
    expected: Optional[tuple] = None

    def __post_init__(self):
        if (self.spec is None) == (self.matrices is None):
            raise ValueError(f"Entry {self.id} needs exactly one of a transfer function or raw matrices")

    def build_plant(self) -> Plant:
        if self.spec is not None:
            A, B = realize(self.spec)
        else:
            A, B = self.matrices["A"], self.matrices["B"]
        return Plant(A=A, B=B, xi=self.x0, T=self.T)

    def to_dict(self):
        doc = {"id": self.id, "plant": self.plant, "T": self.T, "x0": list(self.x0), "lambda": self.lam}
        if self.spec is not None:
            doc["spec"] = self.spec.to_dict()
        else:
            doc["matrices"] = self.matrices
        if self.theta_range is not None:
            doc["theta_range"] = list(self.theta_range)
        if self.expected is not None:
            doc["expected"] = list(self.expected)
        return doc

    @classmethod
    def from_dict(cls, doc, plants=None):
        spec = matrices = None
        if "spec" in doc:
            spec = TransferFunctionSpec.from_dict(doc["spec"])
        elif "matrices" in doc:
            matrices = doc["matrices"]
        else:
            spec = TransferFunctionSpec.from_dict((plants or {})[doc["plant"]])
        return cls(
            id=str(doc["id"]),
            plant=doc["plant"],
            T=float(doc["T"]),
            x0=tuple(float(v) for v in doc["x0"]),
            lam=float(doc["lambda"]),
            spec=spec,
            matrices=matrices,
            theta_range=None if doc.get("theta_range") is None else tuple(float(v) for v in doc["theta_range"]),
            expected=None if doc.get("expected") is None else tuple(float(v) for v in doc["expected"]),
        )


@dataclass
class Catalog:
    entries: List[CatalogEntry]
    aliases: Dict[str, str] = field(default_factory=dict)
    table2: dict = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def resolve(self, ident) -> CatalogEntry:
        """
        Find an entry by id ("3", "row3", "P1-theta"), plant name or alias.

        A plant name resolves to the first entry using that plant.
        """
        ident = str(ident)
        if ident.startswith("row"):
            ident = ident[3:]
        for entry in self.entries:
            if entry.id == ident:
                return entry
        plant = self.aliases.get(ident, ident)
        for entry in self.entries:
            if entry.plant == plant:
                return entry
        raise KeyError(f"Unknown catalog id: {ident}")

    def table_rows(self):
        """Entries of the unconstrained sparsity table, in row order."""
        return [e for e in self.entries if e.theta_range is None]

    def sweep_entries(self):
        return [e for e in self.entries if e.theta_range is not None]

    def to_dict(self):
        return {
            "aliases": dict(self.aliases),
            "notes": list(self.notes),
            "entries": [e.to_dict() for e in self.entries],
            "table2": self.table2,
        }

    @classmethod
    def from_dict(cls, doc):
        plants = doc.get("plants", {})
        return cls(
            entries=[CatalogEntry.from_dict(e, plants) for e in doc["entries"]],
            aliases=dict(doc.get("aliases", {})),
            table2=doc.get("table2", {}),
            notes=list(doc.get("notes", [])),
        )


def load_catalog(path=CATALOG_PATH) -> Catalog:
    """Load the plant catalog asset."""
    with open(path, "r", encoding="utf-8") as f:
        catalog = Catalog.from_dict(json.load(f))
    logger.info(f"Loaded catalog with {len(catalog.entries)} entries")
    return catalog


@dataclass(frozen=True)
class SparsityCell:
    entry_id: str
    N: int
    lam: float
    kind: RegularizerKind
    density: float
    status: str
    objective: float = math.nan
    iterations: int = 0


def solve_entry(entry: CatalogEntry, N=DEFAULT_N, lam=None, theta=None, cfg: Optional[SolverConfig] = None,
                use_cache=USE_SOLUTION_CACHE):
    """
    Solve LASSO, EN and CLOT for one catalog entry.

    Args:
        entry (CatalogEntry): Catalog row
        N (int): Number of samples
        lam (float, optional): Overrides the entry's λ
        theta (float, optional): State threshold
        cfg (SolverConfig, optional): Solver settings
        use_cache (bool): Read and write the solution cache

    Returns:
        tuple: (DiscreteProblem, dict RegularizerKind -> Solution)
    """
    cfg = cfg or SolverConfig()
    lam = entry.lam if lam is None else lam
    discrete = discretize(entry.build_plant(), N)
    keys = {kind: solution_key(discrete, kind, lam, theta, cfg) for kind in RegularizerKind}
    if use_cache:
        cached = {kind: SolutionCache.load(key) for kind, key in keys.items()}
        if all(sol is not None for sol in cached.values()):
            logger.info(f"Loaded entry {entry.id} (N={N}, lambda={lam}) from cache")
            return discrete, cached
    solutions = solve_all(discrete, lam, cfg, theta=theta)
    if use_cache:
        for kind, sol in solutions.items():
            SolutionCache.save(keys[kind], sol)
    return discrete, solutions


def _cells_for(entry, N, lam, solutions, threshold):
    return [
        SparsityCell(
            entry_id=entry.id, N=N, lam=lam, kind=kind,
            density=sparsity_density(sol.u, threshold).density,
            status=sol.status.value, objective=sol.objective, iterations=sol.iterations,
        )
        for kind, sol in solutions.items()
    ]


def _error_cells(entry, N, lam):
    return [SparsityCell(entry_id=entry.id, N=N, lam=lam, kind=kind, density=math.nan, status="error")
            for kind in RegularizerKind]


def _run_jobs(jobs, cfg, threshold):
    """
    Run (entry, N, lam) jobs in parallel; results come back in job order.

    Args:
        jobs (list): (entry, N, lam) tuples
        cfg (SolverConfig): Solver settings
        threshold (float): Sparsity threshold

    Returns:
        list: SparsityCell rows, three per job
    """
    results = {}
    logger.info(f"Running {len(jobs)} jobs with max {MAX_WORKERS} workers")

    with ThreadPoolExecutor(max_workers=MAX_WORKERS) as executor:
        futures = {executor.submit(solve_entry, entry, N, lam, None, cfg): i
                   for i, (entry, N, lam) in enumerate(jobs)}

        for future in as_completed(futures):
            i = futures[future]
            entry, N, lam = jobs[i]
            try:
                _, solutions = future.result()
                results[i] = _cells_for(entry, N, lam, solutions, threshold)
                summary = ", ".join(f"{c.kind.value}={c.density:.4f}" for c in results[i])
                logger.info(f"Entry {entry.id} N={N} lambda={lam}: {summary}")
            except Exception as e:
                logger.error(f"Error processing entry {entry.id} N={N}: {e}", exc_info=True)
                results[i] = _error_cells(entry, N, lam)

    return [cell for i in range(len(jobs)) for cell in results[i]]


def run_table2(catalog: Optional[Catalog] = None, N=DEFAULT_N, cfg=None, threshold=SPARSITY_THRESHOLD):
    """Fourth-order integrator, ξ = (1,1,1,1), T = 20, all three methods for each λ."""
    catalog = catalog or load_catalog()
    entry = catalog.resolve(catalog.table2.get("entry", "1"))
    lambdas = catalog.table2.get("lambdas", [1.0, 0.1])
    return _run_jobs([(entry, N, float(lam)) for lam in lambdas], cfg, threshold)


def run_table3(catalog: Optional[Catalog] = None, N_values=(2000, 4000), cfg=None, threshold=SPARSITY_THRESHOLD):
    """Every unconstrained catalog row at each N."""
    catalog = catalog or load_catalog()
    jobs = [(entry, N, entry.lam) for entry in catalog.table_rows() for N in N_values]
    return _run_jobs(jobs, cfg, threshold)


def run_table4_sweeps(catalog: Optional[Catalog] = None, N=DEFAULT_N, cfg=None, threshold=SPARSITY_THRESHOLD,
                      floor_fraction=0.5) -> Dict[str, ThetaRange]:
    """
    θ sweeps for the state-constrained entries, starting at the top of each range.

    The sweep continues below the listed lower bound, down to floor_fraction times that bound,
    so the observed infeasibility point is recorded even when it lies under the listed range.
    """
    catalog = catalog or load_catalog()
    entries = catalog.sweep_entries()
    results = {}

    def run(entry):
        hi, lo, step = max(entry.theta_range[:2]), min(entry.theta_range[:2]), entry.theta_range[2]
        discrete = discretize(entry.build_plant(), N)
        return theta_sweep(discrete, entry.lam, hi, step, cfg, theta_floor=floor_fraction * lo, threshold=threshold)

    with ThreadPoolExecutor(max_workers=MAX_WORKERS) as executor:
        futures = {executor.submit(run, entry): entry for entry in entries}
        for future in as_completed(futures):
            entry = futures[future]
            try:
                results[entry.id] = future.result()
                points = results[entry.id].per_theta_densities
                logger.info(f"Sweep {entry.id}: theta_min={results[entry.id].theta_min}, "
                            f"{sum(p.certified for p in points)}/{len(points)} points certified")
            except Exception as e:
                logger.error(f"Error in sweep {entry.id}: {e}", exc_info=True)

    return {entry.id: results[entry.id] for entry in entries if entry.id in results}


@dataclass(frozen=True)
class RefinementDelta:
    entry_id: str
    kind: RegularizerKind
    coarse: float
    fine: float

    @property
    def delta(self):
        return abs(self.fine - self.coarse)


def run_refinement_check(cells, coarse_N=2000, fine_N=4000):
    """Density change between two sample counts for every (entry, method) present at both."""
    by_key = {(c.entry_id, c.kind, c.N): c for c in cells}
    deltas = []
    for (entry_id, kind, N), cell in by_key.items():
        if N != coarse_N or (entry_id, kind, fine_N) not in by_key:
            continue
        deltas.append(RefinementDelta(entry_id, kind, cell.density, by_key[(entry_id, kind, fine_N)].density))
    return deltas


def density_ordering_violations(cells, slack=ORDERING_SLACK):
    """(entry_id, N, lam) groups breaking density(LASSO) <= density(CLOT) <= density(EN) + slack."""
    groups = {}
    for cell in cells:
        groups.setdefault((cell.entry_id, cell.N, cell.lam), {})[cell.kind] = cell.density
    violations = []
    for key, dens in groups.items():
        if len(dens) < 3 or any(math.isnan(v) for v in dens.values()):
            continue
        lasso, en, clot = dens[RegularizerKind.LASSO], dens[RegularizerKind.EN], dens[RegularizerKind.CLOT]
        if not (lasso <= clot + 1e-12 and clot <= en + slack):
            violations.append(key)
    return violations
