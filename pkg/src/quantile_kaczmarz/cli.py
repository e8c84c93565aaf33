"""Command-line front end: generate, solve, experiment, check-theory.

Exit codes: 0 success, 1 a theory check failed, 2 bad usage or input.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__, diagnostics, experiments, io
from .problems import MATRIX_KINDS, CorruptionModel, MatrixModel, build_system, generate_matrix, load_system
from .seeding import derive_seed, stream
from .solvers import METHODS, SolverConfig, solve

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2

CHECKS = ("quantile-sandwich", "markov-count", "submatrix", "quantile-bounds", "eta-approximation",
          "opt-identity", "streaming-feasible")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_dir(path) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")


# --- generate ----------------------------------------------------------------

def cmd_generate(args) -> int:
    try:
        corruption = CorruptionModel.parse(args.corruption, args.beta, args.count)
        matrix = MatrixModel(args.model, args.rows, args.cols, args.seed)
        system = build_system(matrix, corruption, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = args.out or "."
    _ensure_dir(out)
    io.write_matrix(os.path.join(out, "A.mtx"), system.A)
    io.write_vector(os.path.join(out, "b.csv"), system.b)
    io.write_vector(os.path.join(out, "b_clean.csv"), system.b_clean)
    io.write_vector(os.path.join(out, "x_star.csv"), system.x_star)
    io.write_vector(os.path.join(out, "support.csv"), system.corrupt_support)
    manifest = {
        "version": __version__,
        "command": "generate",
        "matrix": {"model": args.model, "rows": args.rows, "cols": args.cols},
        "corruption": corruption.describe(),
        "seed": args.seed,
        "corrupted_indices": system.corrupt_support.tolist(),
        "num_corrupted": int(system.corrupt_support.size),
        "files": ["A.mtx", "b.csv", "b_clean.csv", "x_star.csv", "support.csv"],
    }
    if system.x_adv is not None:
        io.write_vector(os.path.join(out, "x_adv.csv"), system.x_adv)
        manifest["files"].append("x_adv.csv")
    _dump_json(os.path.join(out, "manifest.json"), manifest)
    print(f"wrote {system.A.shape[0]}x{system.A.shape[1]} system with "
          f"{system.corrupt_support.size} corrupted entries to {out}")
    return EXIT_OK


# --- solve -------------------------------------------------------------------

def cmd_solve(args) -> int:
    if args.method == "opt-sgd" and not args.x_star:
        raise UsageError("opt-sgd needs the true solution: pass --x-star")
    try:
        loaded = load_system(args.matrix, args.rhs, normalize=not args.no_normalize)
        x_star = io.read_vector(args.x_star) if args.x_star else None
        config = SolverConfig(
            method=args.method, q=args.quantile, sample_size=args.sample_size, window=args.window,
            full_residual=args.full_residual, iterations=args.iterations, seed=args.seed,
            target_rel_error=args.target, clamp_step=args.clamp_step,
        )
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if x_star is not None and x_star.shape[0] != loaded.A.shape[1]:
        raise UsageError(f"x_star has {x_star.shape[0]} entries but the matrix has {loaded.A.shape[1]} columns")
    if loaded.dropped.size:
        print(f"dropped {loaded.dropped.size} zero rows", file=sys.stderr)
    start = time.perf_counter()
    x, trace = solve(loaded.A, loaded.b, config, x_star=x_star)
    elapsed = time.perf_counter() - start
    out = args.out or "."
    _ensure_dir(out)
    trace_path = os.path.join(out, args.trace_name)
    io.write_trace(trace_path, trace)
    io.write_vector(os.path.join(out, "x.csv"), x)
    if x_star is not None:
        print(f"final relative error: {trace.final_relative_error:.6e}")
    print(f"iterations: {len(trace) - 1}")
    print(f"wall time: {elapsed:.3f} s")
    print(f"trace: {trace_path}")
    return EXIT_OK


# --- experiment --------------------------------------------------------------

_EXPERIMENT_FLAGS = ("trials", "iterations", "rows", "cols", "beta", "matrix", "rhs", "stride")


def cmd_experiment(args) -> int:
    overrides = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(overrides, dict):
            raise UsageError("config file must hold a flat JSON object")
    seed = overrides.pop("seed", 0)
    if args.seed_given:
        seed = args.seed
    for key in _EXPERIMENT_FLAGS:
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    try:
        result = experiments.run_sweep(args.sweep, overrides, seed=seed, threads=args.threads)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    out = args.out or "."
    _ensure_dir(out)
    path = os.path.join(out, f"{result.name}.csv")
    io.write_rows(path, result.rows, result.columns)
    _dump_json(os.path.join(out, f"{result.name}.json"),
               {"version": __version__, "sweep": result.name, "seed": seed, "params": result.params})
    print(f"wrote {len(result.rows)} rows to {path}")
    return EXIT_OK


# --- check-theory ------------------------------------------------------------

def _random_systems(args, count, rows, cols, beta, tag):
    return [
        build_system(MatrixModel(args.model, rows, cols, derive_seed(args.seed, tag, i)),
                     CorruptionModel.parse(args.corruption, beta))
        for i in range(count)
    ]


def _run_check(name, args) -> diagnostics.CheckReport:
    rows, cols = args.rows, args.cols
    if name == "quantile-sandwich":
        systems = _random_systems(args, args.systems, rows, cols, args.beta, "sandwich")
        return diagnostics.check_quantile_sandwich(systems, points=args.points, seed=args.seed)
    if name == "markov-count":
        systems = _random_systems(args, args.systems, rows, cols, args.beta, "markov")
        return diagnostics.check_markov_count(systems, points=args.points, seed=args.seed)
    if name == "submatrix":
        A = generate_matrix(MatrixModel(args.model, rows, cols, args.seed))
        return diagnostics.check_submatrix_conditioning(A, args.alpha, trials=args.trials, seed=args.seed)
    if name == "quantile-bounds":
        A = generate_matrix(MatrixModel(args.model, rows, cols, args.seed))
        return diagnostics.check_quantile_bounds(A, args.q, args.alpha, trials=args.trials, seed=args.seed)
    if name == "eta-approximation":
        system = _random_systems(args, 1, rows, cols, args.beta, "eta")[0]
        return diagnostics.check_eta_approximation(system, args.trials, seed=args.seed)
    if name == "opt-identity":
        system = _random_systems(args, 1, rows, cols, args.beta, "opt")[0]
        rng = stream(args.seed, "probe", "opt-point")
        x = system.x_star + rng.standard_normal(cols) / np.sqrt(cols)
        eta = diagnostics.opt_sgd_step_size(x, system.A, system.b, system.x_star)
        return diagnostics.check_opt_sgd_identity(system, x, [0.0, eta / 2, eta, 2 * eta, 3 * eta],
                                                  samples=args.samples, seed=args.seed)
    if name == "streaming-feasible":
        return diagnostics.check_streaming_feasible(args.q, args.beta, args.C)
    raise UsageError(f"unknown check {name!r}; available checks: {', '.join(CHECKS)}")


def cmd_check_theory(args) -> int:
    names = args.check or list(CHECKS)
    reports = []
    for name in names:
        try:
            reports.append(_run_check(name, args))
        except ValueError as exc:
            raise UsageError(f"{name}: {exc}") from exc
    records = [r.to_dict() for r in reports]
    for r in reports:
        flag = "PASS" if r.passed else "FAIL"
        extra = " (warning)" if r.warning else ""
        print(f"{flag} {r.name}{extra}")
    if args.out:
        _ensure_dir(args.out)
        _dump_json(os.path.join(args.out, "check-theory.json"), {"version": __version__, "reports": records})
    else:
        print(json.dumps(records, indent=2, sort_keys=True))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


# --- parser ------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand from resetting a value given before it
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: current directory)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker processes for independent trials (default 1)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="quantile-kaczmarz", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a random corrupted system")
    g.add_argument("--model", choices=MATRIX_KINDS, default="gaussian")
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--cols", type=int, required=True)
    g.add_argument("--beta", type=float, default=0.0)
    g.add_argument("--count", type=int, default=None, help="number of corrupted entries (overrides --beta)")
    g.add_argument("--corruption", default="uniform:5", help="uniform:C | mag:X | adversarial:S")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", parents=[common], help="run one solver and write its trace")
    s.add_argument("--matrix", required=True, help="MatrixMarket or CSV matrix")
    s.add_argument("--rhs", required=True, help="right-hand side vector")
    s.add_argument("--x-star", default=None, help="true solution, for relative errors and opt-sgd")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--quantile", type=float, default=None)
    est = s.add_mutually_exclusive_group()
    est.add_argument("--sample-size", type=int, default=None)
    est.add_argument("--window", type=int, default=None)
    est.add_argument("--full-residual", action="store_true", help="use every residual entry for the quantile")
    s.add_argument("--iterations", type=int, default=2000)
    s.add_argument("--target", type=float, default=None, help="stop once the relative error reaches this")
    s.add_argument("--clamp-step", action="store_true", help="clamp the opt-sgd step size at zero")
    s.add_argument("--no-normalize", action="store_true", help="use the rows as given")
    s.add_argument("--trace-name", default="trace.csv")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", parents=[common], help="run a named sweep")
    e.add_argument("sweep", help=f"one of: {experiments.available_sweeps()}")
    e.add_argument("--config", default=None, help="flat JSON object of sweep parameters")
    e.add_argument("--trials", type=int, default=None)
    e.add_argument("--iterations", type=int, default=None)
    e.add_argument("--rows", type=int, default=None)
    e.add_argument("--cols", type=int, default=None)
    e.add_argument("--beta", type=float, default=None)
    e.add_argument("--matrix", default=None)
    e.add_argument("--rhs", default=None)
    e.add_argument("--stride", type=int, default=None, help="keep every k-th iteration in curve sweeps")
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("check-theory", parents=[common], help="run empirical theory checks")
    c.add_argument("--check", action="append", choices=CHECKS, help="repeatable; default runs all")
    c.add_argument("--model", choices=MATRIX_KINDS, default="gaussian")
    c.add_argument("--rows", type=int, default=None)
    c.add_argument("--cols", type=int, default=None)
    c.add_argument("--beta", type=float, default=None)
    c.add_argument("--corruption", default="uniform:5")
    c.add_argument("--q", type=float, default=0.5)
    c.add_argument("--alpha", type=float, default=0.5)
    c.add_argument("--C", type=float, default=1.99)
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--systems", type=int, default=20)
    c.add_argument("--points", type=int, default=10)
    c.add_argument("--samples", type=int, default=100_000)
    c.set_defaults(func=cmd_check_theory)
    return parser


def _fill_defaults(args) -> None:
    args.seed_given = hasattr(args, "seed")
    args.seed = getattr(args, "seed", 0)
    args.out = getattr(args, "out", None)
    args.threads = getattr(args, "threads", 1)
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    if args.command == "check-theory":
        only_streaming = args.check == ["streaming-feasible"]
        if args.rows is None:
            args.rows = 400 if args.check == ["submatrix"] else 200
        if args.cols is None:
            args.cols = 20 if args.check == ["submatrix"] else 10
        if args.beta is None:
            args.beta = 0.18 if only_streaming else 0.1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _fill_defaults(args)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
