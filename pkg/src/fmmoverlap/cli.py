"""Command-line entry point: ``fmm-overlap <command> ...``.

Exit status is 0 on success, 1 on an internal invariant failure and 2 on bad
user input.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import costmodel, fileio
from .engine import FmmConfig, compute_velocities, flop_report
from .kernel import direct_sum_all
from .quadtree import OutOfDomainError, build_tree, uniform_lattice, uniform_random
from .scheduler import build_dag, execute, validate_trace

ORACLE_GUARD = 100_000


class UsageError(Exception):
    pass


def _count(text: str) -> int:
    """Integer flag that also accepts scientific notation such as ``1e6``."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value.is_integer() or value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(value)


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def _add_source(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", type=Path, help="particle file with rows x,y,gamma")
    src.add_argument("--gen", choices=["lattice", "random"],
                     help="synthetic particle generator")
    p.add_argument("--n", type=_count, help="particle count for --gen")
    p.add_argument("--seed", type=int, help="generator seed (required for random)")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--sigma", type=_positive, default=None,
                   help="core radius (default: finest box width / 10)")


def _load_particles(args):
    if args.input is not None:
        return fileio.read_particles(args.input)
    if args.n is None:
        raise UsageError("--gen needs --n")
    if args.gen == "random":
        if args.seed is None:
            raise UsageError("--gen random needs --seed")
        return uniform_random(args.n, args.seed)
    per_box, rem = divmod(args.n, 4**args.levels)
    if rem:
        raise UsageError(f"--gen lattice needs --n divisible by 4**levels = {4**args.levels}")
    return uniform_lattice(args.levels, per_box, seed=0 if args.seed is None else args.seed)


def _source_params(args) -> dict:
    if args.input is not None:
        return {"input": str(args.input)}
    return {"generator": args.gen, "n": args.n, "seed": args.seed}


def cmd_run(args) -> dict:
    particles = _load_particles(args)
    config = FmmConfig(levels=args.levels, order=args.order, sigma=args.sigma,
                       mode=args.mode, workers=args.workers)
    trace = None
    if config.workers > 1:
        graph = build_dag(build_tree(config.levels))
        result = execute(graph, particles, config)
        verdict = validate_trace(graph, result.trace)
        if not verdict.ok:
            raise AssertionError("invalid execution trace: " + verdict.violations[0])
        velocities, report, trace = result.velocities, result.report, result.trace
    else:
        velocities, report = compute_velocities(particles, config)
    stages = {}
    for check in flop_report(report):
        st = report.stages[check.stage]
        entry = {"name": check.name, "flops": check.counted, "tasks": st.tasks,
                 "model_flops": check.predicted, "reconciled": check.reconciled,
                 "matches_model": check.matches}
        if args.timings:
            entry["wall_time_s"] = st.wall_time
        stages[str(check.stage)] = entry
    doc = {
        "command": "run",
        "parameters": {**_source_params(args), "levels": config.levels,
                       "order": config.order, "sigma": config.kernel_params().sigma,
                       "mode": config.mode, "workers": config.workers},
        "n_particles": len(particles),
        "near_pairs": report.near_pairs,
        "stages": stages,
    }
    if args.out_dir is not None:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fileio.write_velocities(out / "velocities.csv", velocities)
        doc["velocities"] = str(out / "velocities.csv")
        if trace is not None:
            fileio.write_trace(out / "trace.csv", trace)
            doc["trace"] = str(out / "trace.csv")
        (out / "report.json").write_text(fileio.dumps(doc), encoding="utf-8")
    return doc


def cmd_oracle(args) -> dict:
    particles = _load_particles(args)
    if len(particles) > ORACLE_GUARD and not args.force:
        raise UsageError(
            f"N = {len(particles)} exceeds {ORACLE_GUARD}; the direct sum is O(N^2). "
            "Pass --force to run it anyway.")
    results = []
    reference = None
    for order in args.order:
        config = FmmConfig(levels=args.levels, order=order, sigma=args.sigma)
        if reference is None:
            reference = direct_sum_all(particles, config.kernel_params())
        fmm, _ = compute_velocities(particles, config)
        err = np.abs(fmm - reference)
        scale = np.abs(reference)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(scale > 0, err / scale, err)
        results.append({"order": order,
                        "max_abs_error": float(err.max(initial=0.0)),
                        "max_rel_error": float(rel.max(initial=0.0)),
                        "rms_rel_error": float(np.sqrt(np.mean(rel**2))) if rel.size else 0.0})
    return {"command": "oracle",
            "parameters": {**_source_params(args), "levels": args.levels,
                           "orders": list(args.order),
                           "sigma": FmmConfig(levels=args.levels, sigma=args.sigma)
                           .kernel_params().sigma},
            "n_particles": len(particles),
            "results": results}


def cmd_model(args) -> dict:
    machine = costmodel.MachineModel(rate=args.rate)
    coeffs = costmodel.coefficients(args.order, machine)
    params = {"order": args.order, "rate": args.rate}
    if args.query == "coeffs":
        values = {k: {"value": getattr(coeffs, k), "rounded": round(getattr(coeffs, k), 2)}
                  for k in "abcd"}
        values["b/d"] = {"value": coeffs.b / coeffs.d, "rounded": round(coeffs.b / coeffs.d, 2)}
    elif args.query == "bopt":
        b = costmodel.optimal_B(coeffs)
        values = {"B_opt": {"value": b, "rounded": round(b)}}
    elif args.query == "cover":
        if args.n is None or args.p is None:
            raise UsageError("model cover needs --n and --p")
        lroot = args.lroot if args.lroot is not None else costmodel.log4(args.p)
        params.update(n=args.n, p=args.p, L_root=lroot)
        b = costmodel.min_B_cover(args.n, args.p, coeffs, lroot)
        values = {"min_B": {"value": b, "rounded": round(b, 2)}}
    else:
        if args.p is None:
            raise UsageError("model minsize needs --p")
        params.update(p=args.p, B=args.B)
        m = costmodel.min_particles_per_process(args.p, args.B, coeffs)
        values = {"min_N_per_P": {"value": m, "rounded": round(m, 1)},
                  "log4P_coefficient": {"value": coeffs.b / coeffs.d / args.B,
                                        "rounded": round(coeffs.b / coeffs.d / args.B)}}
    return {"command": "model", "query": args.query, "parameters": params,
            "values": values}


def cmd_sweep(args) -> dict:
    ps = costmodel.powers_of_four(args.p_min, args.p_max)
    curve = costmodel.sweep_min_size(ps, args.B, args.order)
    if args.output is not None:
        fileio.write_curve(args.output, curve)
    return {"command": "sweep",
            "parameters": {"p_min": args.p_min, "p_max": args.p_max, "B": args.B,
                           "order": args.order},
            "curve": [[p, v] for p, v in curve],
            **({"output": str(args.output)} if args.output is not None else {})}


def cmd_simulate(args) -> dict:
    rep = costmodel.timeline_simulate(args.n, args.p, args.B, args.order,
                                      costmodel.MachineModel(rate=args.rate), args.mode)
    coeffs = costmodel.coefficients(args.order, costmodel.MachineModel(rate=args.rate))
    return {"command": "simulate",
            "parameters": {"n": args.n, "p": args.p, "B": args.B, "order": args.order,
                           "rate": args.rate, "mode": args.mode},
            "levels": rep.levels,
            "makespan": rep.makespan,
            "idle": rep.idle,
            "utilization": rep.utilization,
            "bottleneck_covered": rep.bottleneck_covered,
            "min_B_cover": costmodel.min_B_cover(args.n, args.p, coeffs)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmm-overlap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the FMM and write velocities")
    _add_source(run)
    run.add_argument("--order", type=int, default=15)
    run.add_argument("--mode", choices=["sequential", "overlapped"], default="sequential")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--out-dir", type=Path, default=None)
    run.add_argument("--timings", action="store_true",
                     help="include wall-clock times (makes output non-reproducible)")
    run.set_defaults(func=cmd_run)

    oracle = sub.add_parser("oracle", help="compare the FMM against the direct sum")
    _add_source(oracle)
    oracle.add_argument("--order", type=int, nargs="+", default=[15])
    oracle.add_argument("--force", action="store_true")
    oracle.set_defaults(func=cmd_oracle)

    model = sub.add_parser("model", help="cost-model queries")
    model.add_argument("query", choices=["coeffs", "bopt", "cover", "minsize"])
    model.add_argument("--order", type=int, default=15)
    model.add_argument("--rate", type=_positive, default=1.0)
    model.add_argument("--n", type=_count)
    model.add_argument("--p", type=_count)
    model.add_argument("--B", type=_positive, default=18.0)
    model.add_argument("--lroot", type=float, default=None)
    model.set_defaults(func=cmd_model)

    sweep = sub.add_parser("sweep", help="minimum N/P curve at powers of four")
    sweep.add_argument("--p-min", type=_count, default=4)
    sweep.add_argument("--p-max", type=_count, default=4**10)
    sweep.add_argument("--B", type=_positive, default=18.0)
    sweep.add_argument("--order", type=int, default=15)
    sweep.add_argument("--output", type=Path, default=None)
    sweep.set_defaults(func=cmd_sweep)

    sim = sub.add_parser("simulate", help="P-process timeline of the cost model")
    sim.add_argument("--n", type=_count, required=True)
    sim.add_argument("--p", type=_count, required=True)
    sim.add_argument("--B", type=_positive, required=True)
    sim.add_argument("--order", type=int, default=15)
    sim.add_argument("--rate", type=_positive, default=1.0)
    sim.add_argument("--mode", choices=["sequential", "overlapped"], default="overlapped")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        doc = args.func(args)
    except (UsageError, fileio.ParticleFileError, OutOfDomainError, ValueError, OSError) as exc:
        print(f"fmm-overlap: error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"fmm-overlap: internal error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(fileio.dumps(doc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
