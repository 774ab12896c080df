"""
Command-line surface.

    solve        solve one or all programs for a plant, write controls and state norms
    certify      solve and write the KKT certificate as JSON
    sweep-theta  decrease θ from θ_max until the programs become infeasible
    continuity   max adjacent control difference against the sampling period
    reproduce    run the sparsity-table and θ-sweep reproduction suites

Exit codes: 0 ok, 1 error, 2 infeasible, 64 usage.
"""
import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import (
    CERTIFY_TOL, CONTINUITY_DIVISORS, DEFAULT_LAMBDA, DEFAULT_N, USE_SOLUTION_CACHE,
)
from src.analysis import InfeasibleProblemError, continuity_study, sparsity_density, theta_max_from, theta_sweep
from src import initialize_cache
from src.experiments import load_catalog, run_table2, run_table3, run_table4_sweeps
from src.kkt_certify import certify
from src.lti_core import discretize, load_plant
from src.prox_ops import RegularizerKind
from src.solver import ProblemSpec, SolveStatus, SolverConfig, solve
from src.utils import ensure_directory_exists, format_float

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_USAGE = 64

COMMANDS = ("solve", "sweep-theta", "continuity", "reproduce", "certify")
METHODS = ("lasso", "en", "clot", "all")

CONTROL_HEADER = ["k", "t", "u"]
STATE_HEADER = ["k", "t", "state_norm"]
SWEEP_HEADER = ["theta", "density_lasso", "density_en", "density_clot", "status", "cert_lasso", "cert_en", "cert_clot"]
CONTINUITY_HEADER = ["h", "max_adjacent_diff"]
TABLE2_HEADER = ["lambda", "density_lasso", "density_en", "density_clot"]
TABLE3_HEADER = ["row", "N", "density_lasso", "density_en", "density_clot"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    command: str
    plant_source: Optional[str]
    method: str
    lam: Optional[float]
    N: int
    theta: Optional[float]
    out: Optional[str]
    format: str

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command}")
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method}")
        if self.theta is not None and self.command not in ("solve", "certify", "sweep-theta"):
            raise UsageError("--theta is only valid with solve, certify and sweep-theta")
        if self.theta is not None and not self.theta > 0:
            raise UsageError("--theta must be positive")
        if self.N <= 0:
            raise UsageError("--N must be positive")
        if self.command != "reproduce" and not self.plant_source:
            raise UsageError(f"{self.command} requires --plant")

    @property
    def kinds(self):
        if self.method == "all":
            return list(RegularizerKind)
        return [RegularizerKind(self.method)]


def build_parser():
    parser = _Parser(prog="handsoff", description="Sparse (hands-off) control for LTI plants")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, theta=True):
        p.add_argument("--plant", dest="plant_source", help="catalog:<id> or path to a plant JSON file")
        p.add_argument("--lambda", dest="lam", type=float, default=None, help="weight λ (ignored by lasso)")
        p.add_argument("--N", type=int, default=DEFAULT_N, help="number of samples")
        p.add_argument("--out", default=None, help="output file or directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if theta:
            p.add_argument("--theta", type=float, default=None, help="state threshold θ")

    p = sub.add_parser("solve", help="solve and write controls")
    common(p)
    p.add_argument("--method", choices=METHODS, default="clot")

    p = sub.add_parser("certify", help="solve and write KKT certificates")
    common(p)
    p.add_argument("--method", choices=METHODS, default="clot")
    p.add_argument("--tol", type=float, default=CERTIFY_TOL)

    p = sub.add_parser("sweep-theta", help="θ sweep for LASSO, EN and CLOT")
    common(p)
    p.add_argument("--step", type=float, default=0.5)
    p.add_argument("--theta-min", dest="theta_floor", type=float, default=0.0,
                   help="stop once θ reaches this value")

    p = sub.add_parser("continuity", help="max adjacent difference against h")
    common(p, theta=False)
    p.add_argument("--method", choices=("lasso", "en", "clot"), default="clot")
    p.add_argument("--h-list", dest="h_list", default=None,
                   help="comma-separated h values, e.g. T/250,T/500,T/1000")

    p = sub.add_parser("reproduce", help="run table reproductions")
    common(p, theta=False)
    p.add_argument("--table", choices=("2", "3", "4", "all"), default="all")
    return parser


def _run_config(args):
    return RunConfig(
        command=args.command,
        plant_source=getattr(args, "plant_source", None),
        method=getattr(args, "method", "all"),
        lam=args.lam,
        N=args.N,
        theta=getattr(args, "theta", None),
        out=args.out,
        format=args.format,
    )


def resolve_plant(source, catalog=None):
    """
    Load a plant from "catalog:<id>" or a JSON path.

    Returns:
        tuple: (Plant, default λ)
    """
    if source.startswith("catalog:"):
        catalog = catalog or load_catalog()
        entry = catalog.resolve(source.split(":", 1)[1])
        return entry.build_plant(), entry.lam
    return load_plant(source), DEFAULT_LAMBDA


def parse_h_list(text, T):
    """Parse "T/250,T/500,0.01" into sampling periods."""
    values = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token.upper().startswith("T/"):
            values.append(T / float(token[2:]))
        else:
            values.append(float(token))
    return values


def write_csv(path, header, rows):
    ensure_directory_exists(os.path.dirname(os.path.abspath(path)))
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_json(path, doc):
    ensure_directory_exists(os.path.dirname(os.path.abspath(path)))
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _suffixed(path, suffix):
    stem, ext = os.path.splitext(path)
    return f"{stem}_{suffix}{ext}"


def _write_solution(path, fmt, discrete, sol, density, cert):
    times = discrete.times
    norms = np.concatenate(([np.linalg.norm(discrete.plant.xi)], np.linalg.norm(sol.states, axis=1)))
    if fmt == "json":
        doc = {
            "method": sol.kind.value,
            "N": discrete.N,
            "h": format_float(discrete.h),
            "t": [format_float(t) for t in times],
            "u": [format_float(v) for v in sol.u],
            "state_norm": [format_float(v) for v in norms],
            "objective": format_float(sol.objective),
            "density": format_float(density),
            "iterations": sol.iterations,
            "status": sol.status.value,
            "certificate": None if cert is None else cert.to_dict(),
        }
        write_json(path, doc)
        return
    write_csv(path, CONTROL_HEADER, ((k, float(t), float(v)) for k, (t, v) in enumerate(zip(times, sol.u))))
    write_csv(_suffixed(path, "states"), STATE_HEADER,
              ((k, float(t), float(v)) for k, (t, v) in enumerate(zip(times, norms))))


def _summary(kind, sol, density, cert):
    cert_text = "n/a" if cert is None else ("passed" if cert.passed else "failed")
    return (f"{kind.value}: objective={format_float(sol.objective)} density={format_float(density)} "
            f"iterations={sol.iterations} status={sol.status.value} certificate={cert_text}")


def _solve_kinds(run, plant, lam, tol=CERTIFY_TOL):
    discrete = discretize(plant, run.N)
    cfg = SolverConfig()
    out = {}
    for kind in run.kinds:
        spec = ProblemSpec.build(discrete, kind, lam, run.theta)
        out[kind] = (spec, solve(spec, cfg))
    certs = {kind: (certify(spec, sol, tol) if sol.ok else None) for kind, (spec, sol) in out.items()}
    return discrete, out, certs


def cmd_solve(run: RunConfig, plant, lam):
    discrete, out, certs = _solve_kinds(run, plant, lam)
    target = run.out or f"controls.{run.format}"
    infeasible = False
    for kind, (spec, sol) in out.items():
        density = sparsity_density(sol.u).density
        path = _suffixed(target, kind.value) if run.method == "all" else target
        _write_solution(path, run.format, discrete, sol, density, certs[kind])
        print(_summary(kind, sol, density, certs[kind]))
        infeasible |= sol.status is SolveStatus.INFEASIBLE
    if run.method == "all":
        print("method,density")
        for kind, (_, sol) in out.items():
            print(f"{kind.value},{format_float(sparsity_density(sol.u).density)}")
    return EXIT_INFEASIBLE if infeasible else EXIT_OK


def cmd_certify(run: RunConfig, plant, lam, tol):
    _, out, certs = _solve_kinds(run, plant, lam, tol)
    if any(sol.status is SolveStatus.INFEASIBLE for _, sol in out.values()):
        for kind, (_, sol) in out.items():
            print(_summary(kind, sol, sparsity_density(sol.u).density, certs[kind]))
        return EXIT_INFEASIBLE
    doc = {kind.value: (None if cert is None else cert.to_dict()) for kind, cert in certs.items()}
    write_json(run.out or "certificate.json", doc)
    for kind, (_, sol) in out.items():
        print(_summary(kind, sol, sparsity_density(sol.u).density, certs[kind]))
    passed = all(cert is not None and cert.passed for cert in certs.values())
    return EXIT_OK if passed else EXIT_ERROR


def _sweep_rows(result):
    return [(p.theta, p.density_lasso, p.density_en, p.density_clot, p.status, p.cert_lasso, p.cert_en, p.cert_clot)
            for p in result.per_theta_densities]


def cmd_sweep(run: RunConfig, plant, lam, step, theta_floor):
    discrete = discretize(plant, run.N)
    cfg = SolverConfig()
    theta_max = run.theta if run.theta is not None else theta_max_from(discrete, lam, cfg)
    result = theta_sweep(discrete, lam, theta_max, step, cfg, theta_floor=theta_floor)
    target = run.out or f"sweep.{run.format}"
    if run.format == "json":
        write_json(target, {
            "theta_max": format_float(result.theta_max),
            "theta_min": None if result.theta_min is None else format_float(result.theta_min),
            "step": format_float(result.step),
            "points": [dict(zip(SWEEP_HEADER, [format_float(v) if isinstance(v, float) else v for v in row]))
                       for row in _sweep_rows(result)],
        })
    else:
        write_csv(target, SWEEP_HEADER, _sweep_rows(result))
    print(f"theta_max={format_float(result.theta_max)} theta_min="
          f"{'none' if result.theta_min is None else format_float(result.theta_min)} "
          f"points={len(result.per_theta_densities)} "
          f"certified={sum(p.certified for p in result.per_theta_densities)}")
    return EXIT_OK if result.theta_min is not None else EXIT_INFEASIBLE


def cmd_continuity(run: RunConfig, plant, lam, h_list):
    if h_list:
        h_values = parse_h_list(h_list, plant.T)
    else:
        h_values = [plant.T / d for d in CONTINUITY_DIVISORS]
    study = continuity_study(plant, lam, h_values, SolverConfig(), kind=run.kinds[0])
    target = run.out or f"continuity.{run.format}"
    rows = list(zip(study.h_values, study.max_diffs))
    if run.format == "json":
        write_json(target, {
            "method": study.kind.value,
            "points": [{"h": format_float(h), "max_adjacent_diff": format_float(d)} for h, d in rows],
            "fitted_exponent": format_float(study.fitted_exponent),
        })
    else:
        write_csv(target, CONTINUITY_HEADER, rows)
        write_json(f"{os.path.splitext(target)[0]}_fit.json", {
            "method": study.kind.value,
            "h": [format_float(h) for h in study.h_values],
            "fitted_exponent": format_float(study.fitted_exponent),
        })
    print(f"{study.kind.value}: fitted_exponent={format_float(study.fitted_exponent)}")
    return EXIT_OK


def _pivot(cells, key_fn):
    """Group cells into rows keyed by key_fn with one density per method."""
    rows = {}
    for cell in cells:
        rows.setdefault(key_fn(cell), {})[cell.kind] = cell.density
    return [(*key, *(dens.get(kind, math.nan) for kind in RegularizerKind)) for key, dens in rows.items()]


def cmd_reproduce(run: RunConfig, table):
    out_dir = run.out or "results"
    ensure_directory_exists(out_dir)
    catalog = load_catalog()
    if USE_SOLUTION_CACHE:
        initialize_cache()
    failed = False
    if table in ("2", "all"):
        cells = run_table2(catalog, N=run.N)
        write_csv(os.path.join(out_dir, "table2.csv"), TABLE2_HEADER, _pivot(cells, lambda c: (c.lam,)))
        failed |= any(c.status == "error" for c in cells)
    if table in ("3", "all"):
        cells = run_table3(catalog)
        write_csv(os.path.join(out_dir, "table3.csv"), TABLE3_HEADER, _pivot(cells, lambda c: (c.entry_id, c.N)))
        failed |= any(c.status == "error" for c in cells)
    if table in ("4", "all"):
        sweeps = run_table4_sweeps(catalog, N=run.N)
        for entry_id, result in sweeps.items():
            write_csv(os.path.join(out_dir, f"sweep_{entry_id}.csv"), SWEEP_HEADER, _sweep_rows(result))
            print(f"{entry_id}: theta_max={format_float(result.theta_max)} theta_min="
                  f"{'none' if result.theta_min is None else format_float(result.theta_min)}")
        failed |= len(sweeps) != len(catalog.sweep_entries())
    print(f"results written to {out_dir}")
    return EXIT_ERROR if failed else EXIT_OK


def main(argv=None):
    """
    Parse flags and run one command.

    Args:
        argv (list, optional): Arguments without the program name

    Returns:
        int: Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        run = _run_config(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if run.command == "reproduce":
            return cmd_reproduce(run, args.table)
        plant, default_lam = resolve_plant(run.plant_source)
        lam = run.lam if run.lam is not None else default_lam
        if run.command == "solve":
            return cmd_solve(run, plant, lam)
        if run.command == "certify":
            return cmd_certify(run, plant, lam, args.tol)
        if run.command == "sweep-theta":
            return cmd_sweep(run, plant, lam, args.step, args.theta_floor)
        return cmd_continuity(run, plant, lam, args.h_list)
    except InfeasibleProblemError as e:
        logger.error(f"Infeasible problem in {run.command}: {e}")
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as e:
        logger.error(f"Error in {run.command}: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
