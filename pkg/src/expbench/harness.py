"""Experiment runner: work-precision sweeps, reference solutions, CSV output.

An experiment is the Cartesian product of (method, tau, tol, zeta) on one
problem instance.  Every cell integrates to t_end, measures the relative
l2 error against a reference solution and captures the operation counter.
Unstable or non-convergent cells are recorded with the "inf" error sentinel
rather than dropped.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .counting import CSV_PRIMITIVES
from .integrators import IntegrationError, MethodConfig, METHODS, integrate, rk4_step
from .linalg import dense_expm
from .problems import AdvDiffProblem, NavierStokesProblem, advdiff_kappa

CSV_HEADER = (
    "method,tau,tol,zeta,error,total_cost,steps,"
    "matvec,jacvec,rhs,dot,lincomb,scale,fetch,store,converged"
)

REFERENCE_DENSE_CAP = 512
REFERENCE_STEP_CAP = 2**20


@dataclass(frozen=True)
class ExperimentSpec:
    problem: str  # "advdiff" | "ns"
    n: int
    methods: tuple
    taus: tuple
    tols: tuple
    zetas: tuple
    t_end: float
    kappa: object = ("const", 1.0 / 80.0)  # advdiff only
    nu: float = 1e-6  # ns only

    def __post_init__(self):
        if self.problem not in ("advdiff", "ns"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if not (self.methods and self.taus and self.tols and self.zetas):
            raise ValueError("methods, taus, tols and zetas must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if any(t <= 0 for t in self.taus):
            raise ValueError("tau values must be positive")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")


@dataclass
class WorkPrecisionRecord:
    method: str
    tau: float
    tol: float
    zeta: float
    error: float
    total_cost: float
    steps: int
    counts: dict = field(default_factory=dict)
    converged: bool = True


def build_problem(spec: ExperimentSpec):
    if spec.problem == "advdiff":
        return AdvDiffProblem(spec.n, advdiff_kappa(spec.kappa))
    return NavierStokesProblem(spec.n, spec.nu)


def error_norm(u, ref) -> float:
    """Relative discrete l2 error over the full state."""
    u = np.asarray(u, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if u.shape != ref.shape:
        raise ValueError("length mismatch")
    rnorm = float(np.linalg.norm(ref))
    if rnorm == 0.0:
        raise ValueError("reference norm is zero")
    return float(np.linalg.norm(u - ref)) / rnorm


def compute_reference(problem, t_end: float, tau_hint: float | None = None) -> np.ndarray:
    """Reference solution at t_end.

    Linear 1D problem: exact dense propagator exp(t_end L) u0 (n <= 512).
    Navier-Stokes: uncounted RK4 with successively halved step sizes until
    two references differ by less than 1e-10 in relative l2.
    """
    u0 = problem.initial_state()
    if t_end == 0.0:
        return u0
    if isinstance(problem, AdvDiffProblem):
        if problem.n > REFERENCE_DENSE_CAP:
            raise ValueError("dense reference capped at n = 512")
        L = problem.operator.to_dense()
        return dense_expm(t_end * L) @ u0
    tau = (tau_hint if tau_hint is not None else t_end / 64.0) / 16.0
    prev = None
    while True:
        steps = max(1, math.ceil(t_end / tau))
        if steps > REFERENCE_STEP_CAP:
            raise RuntimeError("reference solution did not converge within step cap")
        dt = t_end / steps
        u = u0.copy()
        for _k in range(steps):
            u = rk4_step(problem, u, dt)
        if prev is not None and error_norm(u, prev) < 1e-10:
            return u
        prev = u
        tau /= 2.0


def run_experiment(spec: ExperimentSpec, reference=None, problem=None):
    """All work-precision records for the spec, in grid iteration order.

    zeta only re-weights the inner-product cost, so each (method, tau, tol)
    cell is integrated once and its counter re-totaled per zeta.
    """
    if problem is None:
        problem = build_problem(spec)
    if reference is None:
        reference = compute_reference(problem, spec.t_end, tau_hint=min(spec.taus))
    u0 = problem.initial_state()
    records = []
    cell_cache: dict = {}
    for method in spec.methods:
        for tau in spec.taus:
            for tol in spec.tols:
                # RK methods ignore tol; reuse the identical run
                key = (method, tau, None if method in ("rk2", "rk4") else tol)
                if key not in cell_cache:
                    cell_cache[key] = _run_cell(problem, method, tau, tol, u0, spec.t_end, reference)
                error, counter, steps, converged = cell_cache[key]
                for zeta in spec.zetas:
                    records.append(
                        WorkPrecisionRecord(
                            method=method,
                            tau=tau,
                            tol=tol,
                            zeta=zeta,
                            error=error,
                            total_cost=counter.total_cost(zeta) if counter else 0.0,
                            steps=steps,
                            counts=counter.breakdown() if counter else {p: 0 for p in CSV_PRIMITIVES},
                            converged=converged,
                        )
                    )
    return records


def _run_cell(problem, method, tau, tol, u0, t_end, reference):
    config = MethodConfig(
        method=method,
        tau=tau,
        tol=None if method in ("rk2", "rk4") else tol,
    )
    try:
        result = integrate(problem, config, u0, t_end)
    except IntegrationError as exc:
        return math.inf, exc.counter, exc.steps, False
    err = error_norm(result.final_state, reference)
    if not math.isfinite(err) or err > 1.0:
        # stable arithmetic but no meaningful accuracy: flag as not converged
        return (err if math.isfinite(err) else math.inf), result.counter, result.steps_taken, err <= 1.0
    return err, result.counter, result.steps_taken, True


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:.17g}"


def write_csv(records, path) -> None:
    """Deterministic CSV serialization (grid iteration order, 17 digits)."""
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            counts = r.counts
            row = [
                r.method,
                _fmt(r.tau),
                _fmt(r.tol),
                _fmt(r.zeta),
                _fmt(r.error),
                _fmt(r.total_cost),
                str(r.steps),
            ]
            row += [str(counts.get(p, 0)) for p in CSV_PRIMITIVES]
            row.append("true" if r.converged else "false")
            fh.write(",".join(row) + "\n")


def read_csv(path):
    """Round-trip helper: parse a results CSV back into records."""
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                WorkPrecisionRecord(
                    method=row["method"],
                    tau=float(row["tau"]),
                    tol=float(row["tol"]),
                    zeta=float(row["zeta"]),
                    error=float(row["error"]),
                    total_cost=float(row["total_cost"]),
                    steps=int(row["steps"]),
                    counts={p: int(row[p]) for p in CSV_PRIMITIVES},
                    converged=row["converged"] == "true",
                )
            )
    return records


def dump_fields(problem: NavierStokesProblem, state, outdir) -> None:
    """Write rho.csv, u.csv, v.csv, omega.csv as n x n comma-separated grids."""
    os.makedirs(outdir, exist_ok=True)
    rho, u, v, omega = problem.fields(state)
    for name, grid in (("rho", rho), ("u", u), ("v", v), ("omega", omega)):
        with open(os.path.join(outdir, f"{name}.csv"), "w") as fh:
            for row in grid:
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


# ---------------------------------------------------------------------------
# presets


ALL_METHODS = METHODS
_EXP_TOLS = (1e-4, 1e-7)
_ZETAS = (1.0, 10.0)


def preset(name: str, full: bool = False) -> ExperimentSpec:
    """Named experiment presets mirroring the benchmark setups.

    Desk-scale defaults keep runtimes in the minutes range; ``full`` enables
    the full-scale parameters (finer tau grids, n = 160 / t_end = 12 for the
    shear flow).
    """
    if name == "diffusion":
        taus = _tau_grid(0.25, 9 if full else 5)
        return ExperimentSpec(
            problem="advdiff", n=159, kappa=("const", 1.0 / 80.0),
            methods=ALL_METHODS, taus=taus, tols=_EXP_TOLS, zetas=_ZETAS, t_end=1.0,
        )
    if name == "advection":
        taus = _tau_grid(0.25, 9 if full else 5)
        return ExperimentSpec(
            problem="advdiff", n=159, kappa=("const", 1.0 / 2560.0),
            methods=ALL_METHODS, taus=taus, tols=_EXP_TOLS, zetas=_ZETAS, t_end=1.0,
        )
    if name == "mixed":
        taus = _tau_grid(0.1, 7 if full else 4)
        return ExperimentSpec(
            problem="advdiff", n=159, kappa="mixed",
            methods=ALL_METHODS, taus=taus, tols=_EXP_TOLS, zetas=_ZETAS, t_end=1.0,
        )
    if name == "shearflow":
        taus = _tau_grid(1.0, 8)
        return ExperimentSpec(
            problem="ns", n=160 if full else 40, nu=1e-6,
            methods=ALL_METHODS, taus=taus, tols=_EXP_TOLS, zetas=_ZETAS,
            t_end=12.0 if full else 1.0,
        )
    raise ValueError(f"unknown preset {name!r}")


def _tau_grid(tau_max: float, count: int) -> tuple:
    return tuple(tau_max / 2**m for m in range(count))
