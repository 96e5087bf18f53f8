"""Benchmark command line interface.

Subcommands:
  run      one experiment grid with explicit parameters, CSV output
  preset   named experiment presets (diffusion, advection, mixed, shearflow)
  selftest oracle-equivalence checks of the iterative evaluators
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .harness import (
    ExperimentSpec,
    build_problem,
    compute_reference,
    dump_fields,
    preset,
    run_experiment,
    write_csv,
)
from .integrators import METHODS, MethodConfig, integrate
from .linalg import dense_phi
from .matfunc import PhiActionRequest, krylov_phi_action, leja_phi_action
from .problems import AdvDiffProblem, NavierStokesProblem, advdiff_kappa


def _parse_kappa(text: str):
    if text == "mixed":
        return "mixed"
    if text.startswith("const:"):
        return ("const", float(text.split(":", 1)[1]))
    raise argparse.ArgumentTypeError("kappa must be 'mixed' or 'const:<value>'")


def _parse_floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _parse_methods(text: str) -> tuple:
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise argparse.ArgumentTypeError(
                f"unknown method {m!r}; choose from {', '.join(METHODS)}"
            )
    return methods


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expbench",
        description="Work-precision benchmarks for exponential integrators "
        "on advection-dominated problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a fully specified experiment grid")
    run.add_argument("--problem", choices=("advdiff", "ns"), required=True)
    run.add_argument("--kappa", type=_parse_kappa, default=("const", 1.0 / 80.0),
                     help="advdiff diffusion profile: const:<v> or mixed")
    run.add_argument("--nu", type=float, default=1e-6, help="NS kinematic viscosity")
    run.add_argument("--n", type=int, required=True, help="grid points (per axis for ns)")
    run.add_argument("--methods", type=_parse_methods, default=METHODS)
    run.add_argument("--tau", type=_parse_floats, required=True)
    run.add_argument("--tol", type=_parse_floats, default=(1e-4, 1e-7))
    run.add_argument("--zeta", type=_parse_floats, default=(1.0, 10.0))
    run.add_argument("--t-end", type=float, required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--dump-fields", metavar="DIR", default=None,
                     help="write rho/u/v/omega grids of the first cell's final state")

    pre = sub.add_parser("preset", help="run a named preset")
    pre.add_argument("--name", choices=("diffusion", "advection", "mixed", "shearflow"),
                     required=True)
    pre.add_argument("--out", required=True)
    pre.add_argument("--full", action="store_true",
                     help="full-scale parameters (slow)")
    pre.add_argument("--dump-fields", metavar="DIR", default=None)

    sub.add_parser("selftest", help="oracle-equivalence checks (fast)")
    return parser


def _do_run(spec: ExperimentSpec, out, dump_dir) -> int:
    problem = build_problem(spec)
    reference = compute_reference(problem, spec.t_end, tau_hint=min(spec.taus))
    records = run_experiment(spec, reference=reference, problem=problem)
    write_csv(records, out)
    print(f"wrote {len(records)} records to {out}")
    if dump_dir is not None:
        if not isinstance(problem, NavierStokesProblem):
            print("--dump-fields is only meaningful for the ns problem", file=sys.stderr)
            return 2
        config = MethodConfig(
            method=spec.methods[0],
            tau=spec.taus[0],
            tol=None if spec.methods[0] in ("rk2", "rk4") else spec.tols[0],
        )
        result = integrate(problem, config, problem.initial_state(), spec.t_end)
        dump_fields(problem, result.final_state, dump_dir)
        print(f"wrote field snapshots to {dump_dir}")
    return 0


def selftest() -> int:
    """Check both evaluators against the dense oracle on small operators."""
    rng = np.random.default_rng(7)
    failures = 0
    from .linalg import gershgorin_bounds

    for n in (16, 32):
        for kappa in (1.0 / 80.0, 1.0 / 2560.0):
            problem = AdvDiffProblem(n, advdiff_kappa(("const", kappa)))
            dense = problem.operator.to_dense()
            v = rng.standard_normal(n)
            for tau in (1.0 / 64.0, 1.0 / 4.0):
                for p in (0, 1, 3):
                    oracle = dense_phi(tau * dense, p) @ v
                    scale_ref = float(np.linalg.norm(oracle))
                    for backend in ("krylov", "leja"):
                        req = PhiActionRequest(
                            p=p, tau=tau, v=v, tol=1e-12,
                            bounds=gershgorin_bounds(problem.operator),
                        )
                        fn = krylov_phi_action if backend == "krylov" else leja_phi_action
                        res = fn(lambda w, pb=problem: pb.rhs(w), req)
                        err = float(np.linalg.norm(res.y - oracle)) / scale_ref
                        ok = res.converged and err <= 1e-10
                        status = "pass" if ok else "FAIL"
                        print(
                            f"[{status}] n={n:3d} kappa={kappa:.6g} tau={tau:g} "
                            f"p={p} {backend:6s} rel_err={err:.3e}"
                        )
                        if not ok:
                            failures += 1
    print("selftest:", "PASS" if failures == 0 else f"{failures} FAILURES")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return selftest()
    try:
        if args.command == "run":
            spec = ExperimentSpec(
                problem=args.problem,
                n=args.n,
                kappa=args.kappa,
                nu=args.nu,
                methods=args.methods,
                taus=args.tau,
                tols=args.tol,
                zetas=args.zeta,
                t_end=args.t_end,
            )
        else:
            spec = preset(args.name, full=args.full)
        return _do_run(spec, args.out, args.dump_fields)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
