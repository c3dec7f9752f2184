"""Command-line entry point: ``admmri <subcommand> ...``.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines whose keys
are long option names. Options given on the command line win over the file,
which wins over built-in defaults.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, parallel
from .metrics import Problem, nrmse, run_benchmark
from .model import Dims, TransferOperator
from .phantom import (MaskSpec, PhantomSpec, generate_mask, generate_phantom,
                      generate_sensitivities, simulate_acquisition)
from .pipeline import PRESETS, build_problem
from .solvers import SOLVERS, TIGHT_FRAME_ONLY, SolverConfig, run_solver
from .spectral import precompute_cache

log = logging.getLogger("admmri")


class UsageError(Exception):
    pass


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_float(s: str) -> float:
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def _solver_args(p: argparse.ArgumentParser, max_iters=200, tol=1e-3):
    p.add_argument("--lambda", dest="lam", type=_nonneg_float, default=0.002)
    p.add_argument("--mu", type=float, default=0.06)
    p.add_argument("--mu-ratio", type=float, default=0.5)
    p.add_argument("--cg-iters", type=_positive_int, default=10)
    p.add_argument("--max-iters", type=_positive_int, default=max_iters)
    p.add_argument("--tol", type=_nonneg_float, default=tol)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="admmri", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", metavar="FILE", help="key=value defaults")
        return p

    p = add("phantom", "synthesize a cine phantom and coil maps")
    p.add_argument("--nv", type=_positive_int, default=32)
    p.add_argument("--nh", type=_positive_int, default=32)
    p.add_argument("--nt", type=_positive_int, default=8)
    p.add_argument("--nc", type=_positive_int, default=4)
    p.add_argument("--period", type=_positive_int, default=None,
                   help="motion period in frames (default: nt)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-sens", required=True)

    p = add("mask", "draw a variable-density line mask")
    p.add_argument("--nv", type=_positive_int, default=32)
    p.add_argument("--nt", type=_positive_int, default=8)
    p.add_argument("--accel", type=float, default=4.0)
    p.add_argument("--center", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("acquire", "simulate noisy undersampled k-space")
    p.add_argument("--image", required=True)
    p.add_argument("--sens", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--noise-sigma", type=_nonneg_float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("recon", "reconstruct an image sequence")
    p.add_argument("--kspace", required=True)
    p.add_argument("--sens", required=True)
    p.add_argument("--mask", help="mask file; must agree with the mask stored in the k-space file")
    p.add_argument("--algorithm", choices=sorted(SOLVERS), default="admm-synthesis")
    p.add_argument("--regularizer", choices=["tdft", "ttv"], default=None,
                   help="default: tdft for admm-synthesis and fista, ttv otherwise")
    _solver_args(p)
    p.add_argument("--log-every", type=_positive_int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--frames", metavar="DIR")

    p = add("bench", "time every solver on a simulated problem")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta-target", type=float, default=1e-3)
    p.add_argument("--repeats", type=_positive_int, default=3)
    p.add_argument("--solvers", default=None,
                   help="comma-separated labels to run (default: all)")
    _solver_args(p, tol=0.0)
    p.add_argument("--out-report", required=True)
    p.add_argument("--no-figures", action="store_true")

    p = add("metrics", "print the NRMSE of a reconstruction")
    p.add_argument("--recon", required=True)
    p.add_argument("--reference", required=True)
    return parser


def _config_argv(argv: list[str]) -> list[str]:
    """Insert ``--key value`` pairs from ``--config`` right after the subcommand."""
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None:
        return argv
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    extra = []
    for key, val in io.read_config(path).items():
        flag = "--" + key.replace("_", "-")
        if key == "no_figures":
            if val.lower() in ("1", "true", "yes"):
                extra.append(flag)
        else:
            extra += [flag, val]
    # subcommand is the first non-option token
    pos = next((i for i, t in enumerate(argv) if not t.startswith("-")), len(argv))
    return argv[:pos + 1] + extra + argv[pos + 1:]


def _need_files(parser, *paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            parser.error(f"file not found: {p}")


def _load(path, kind: io.Kind, **kw):
    got, obj = io.read_dataset(path, **kw)
    if got is not kind:
        raise io.DatasetError(f"{path}: expected {kind.name.lower()} data, found {got.name.lower()}")
    return obj


def _config(args) -> SolverConfig:
    return SolverConfig(lam=args.lam, mu=args.mu, mu_ratio=args.mu_ratio, cg_iters=args.cg_iters,
                        max_iters=args.max_iters, tol=args.tol,
                        log_every=getattr(args, "log_every", 1))


def cmd_phantom(args):
    dims = Dims(args.nv, args.nh, args.nt, args.nc)
    x = generate_phantom(PhantomSpec(dims, args.period or args.nt, 0.0, args.seed))
    io.write_dataset(args.out_image, x, io.Kind.IMAGE)
    io.write_dataset(args.out_sens, generate_sensitivities(dims, args.seed + 1), io.Kind.SENSITIVITIES)


def cmd_mask(args):
    io.write_dataset(args.out, generate_mask(MaskSpec(args.nv, args.nt, args.accel, args.center, args.seed)))


def cmd_acquire(args):
    x = _load(args.image, io.Kind.IMAGE)
    sens = _load(args.sens, io.Kind.SENSITIVITIES)
    mask = _load(args.mask, io.Kind.MASK)
    io.write_dataset(args.out, simulate_acquisition(x, sens, mask, args.noise_sigma, args.seed))


def cmd_recon(args):
    mask = _load(args.mask, io.Kind.MASK) if args.mask else None
    y = _load(args.kspace, io.Kind.KSPACE, mask=mask)
    if mask is not None and not np.array_equal(mask, y.mask):
        raise io.DatasetError(f"{args.mask} disagrees with the mask stored in {args.kspace}")
    sens = _load(args.sens, io.Kind.SENSITIVITIES)
    op = TransferOperator(sens, y.mask)
    cfg = _config(args)
    reg = args.regularizer or SOLVERS[args.algorithm]

    blocks = op.build_normal_blocks()
    cache = precompute_cache(blocks) if args.algorithm != "p1" else None
    res = run_solver(args.algorithm, Problem(y, op, blocks, cache, reference=None), cfg, reg)

    io.write_dataset(args.out, res.x, io.Kind.IMAGE)
    meta = {"algorithm": args.algorithm, "regularizer": reg, "lambda": cfg.lam, "mu": cfg.mu,
            "mu_ratio": cfg.mu_ratio, "cg_iters": cfg.cg_iters, "max_iters": cfg.max_iters,
            "tol": cfg.tol, "converged": res.converged}
    io.write_trace(args.trace, res.trace, meta)
    if args.frames:
        io.export_frames(res.x, args.frames)
    print(f"{args.algorithm}/{reg}: {res.iterations} iterations, "
          f"objective {res.trace.objective[-1]:.12g}, converged={res.converged}")


def bench_suite(cfg: SolverConfig):
    """Default solver line-up: (label, solver, regularizer, config)."""
    def with_cg(n):
        return SolverConfig(**{**cfg.__dict__, "cg_iters": n})
    return [
        ("admm-synthesis", "admm-synthesis", "tdft", cfg),
        ("fista", "fista", "tdft", cfg),
        ("p1-cg10-tdft", "p1", "tdft", with_cg(10)),
        ("admm-analysis", "admm-analysis", "ttv", cfg),
        ("p1-cg5", "p1", "ttv", with_cg(5)),
        ("p1-cg10", "p1", "ttv", with_cg(10)),
        ("p1-cg20", "p1", "ttv", with_cg(20)),
    ]


def cmd_bench(args):
    suite = bench_suite(_config(args))
    if args.solvers:
        wanted = [s.strip() for s in args.solvers.split(",") if s.strip()]
        known = {s[0] for s in suite}
        unknown = sorted(set(wanted) - known)
        if unknown:
            raise UsageError(f"unknown solver label(s) {unknown}; choose from {sorted(known)}")
        suite = [s for s in suite if s[0] in wanted]
    problem = build_problem(args.preset, seed=args.seed)
    print(f"preset {args.preset}: spectral precompute {problem.precompute_ms:.1f} ms")
    reports = run_benchmark(problem, [(s[1], s[2]) for s in suite], [s[3] for s in suite],
                            args.delta_target, args.repeats, labels=[s[0] for s in suite])
    out = Path(args.out_report)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_report(out, reports)
    trace_dir = out.with_name(out.stem + "_traces")
    trace_dir.mkdir(exist_ok=True)
    for r in reports:
        io.write_trace(trace_dir / f"{r.label}.csv", r.trace,
                       {"solver": r.solver, "regularizer": r.regularizer, "lambda": r.config["lam"],
                        "mu": r.config["mu"], "cg_iters": r.config["cg_iters"]})
    if not args.no_figures:
        from .plotting import plot_objective_traces, plot_time_to_target
        plot_objective_traces(reports, out.with_name(out.stem + "_objective.png"), args.delta_target)
        plot_time_to_target(reports, out.with_name(out.stem + "_time_to_target.png"))
    for r in reports:
        status = f"{r.iters_to_target:4d} it {r.time_to_target_ms:10.1f} ms" if r.reached else "not reached"
        print(f"{r.label:16s} {r.regularizer:5s} {status}  J={r.final_objective:.6g}  nrmse={r.nrmse:.4f}")


def cmd_metrics(args):
    x = _load(args.recon, io.Kind.IMAGE)
    ref = _load(args.reference, io.Kind.IMAGE)
    print(f"{nrmse(x, ref):.12g}")


COMMANDS = {"phantom": cmd_phantom, "mask": cmd_mask, "acquire": cmd_acquire,
            "recon": cmd_recon, "bench": cmd_bench, "metrics": cmd_metrics}

_INPUTS = {"acquire": ("image", "sens", "mask"), "recon": ("kspace", "sens", "mask"),
           "metrics": ("recon", "reference")}


def cli_main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        try:
            argv = _config_argv(argv)
        except (UsageError, ValueError) as err:
            parser.error(str(err))
        args = parser.parse_args(argv)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _need_files(sub, *(getattr(args, k) for k in _INPUTS.get(args.command, ())))
        if args.command == "recon":
            reg = args.regularizer or SOLVERS[args.algorithm]
            if args.algorithm in TIGHT_FRAME_ONLY and reg != "tdft":
                sub.error(f"--algorithm {args.algorithm} requires a tight-frame regularizer (tdft), "
                          f"got {reg}")
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with parallel.num_threads(getattr(args, "threads", None)):
            COMMANDS[args.command](args)
    except UsageError as err:
        print(f"admmri {args.command}: error: {err}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, OSError, RuntimeError, np.linalg.LinAlgError) as err:
        print(f"admmri {args.command}: error: {err}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
