"""End-to-end acceptance criteria, one test each, at the stated tolerances.

Run ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion lines
as they happen; they are also repeated in the terminal summary.
"""
import json
import math
import os

import numpy as np
import pytest

from quantile_kaczmarz import diagnostics as dg
from quantile_kaczmarz import experiments as ex
from quantile_kaczmarz.cli import main as cli_main
from quantile_kaczmarz.problems import CorruptionModel, MatrixModel, build_system
from quantile_kaczmarz.seeding import derive_seed
from quantile_kaczmarz.solvers import SolverConfig, solve
from quantile_kaczmarz.streaming import StreamSource, streaming_feasible, streaming_quantile_sgd

RESULTS = {}


def record(number, title, passed, detail):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    RESULTS[number] = line
    print(line)
    assert passed, line


def desk_system(beta, seed, kind="uniform", param=5.0, m=2000, n=100):
    return build_system(MatrixModel("gaussian", m, n, seed), CorruptionModel(kind, param, beta))


# 1 -----------------------------------------------------------------------------

def test_criterion_1_quantile_sweep_shape():
    res = ex.run_sweep("quantile-sweep", {}, seed=2024)
    table = {}
    for r in res.rows:
        table.setdefault((r["method"], r["beta"]), []).append((r["q"], r["median_log10_rel_error"]))
    best_q = {}
    ok_a = True
    for beta in (0.1, 0.2, 0.3):
        q, _ = min(table[("quantile-rk", beta)], key=lambda t: t[1])
        best_q[beta] = q
        ok_a &= (1 - beta - 0.15) - 1e-9 <= q < 1 - beta
    sgd = table[("quantile-sgd", 0.1)]
    best = min(v for _, v in sgd)
    band = [v for q, v in sgd if 0.3 - 1e-9 <= q <= 0.7 + 1e-9]
    worst_gap = max(band) - best
    ok_b = worst_gap < 1.0
    record(1, "quantile sweep",
           ok_a and ok_b,
           f"QuantileRK best q per beta {best_q}; QuantileSGD beta=0.1 worst gap on [0.3,0.7] "
           f"{worst_gap:.2f} decades (< 1)")


# 2 -----------------------------------------------------------------------------

def test_criterion_2_convergence_vs_baseline():
    s = desk_system(0.2, derive_seed(2024, "criterion-2"))
    target, N = 1e-4, 10_000
    _, rk = solve(s.A, s.b, SolverConfig("rk", iterations=N, seed=1), x_star=s.x_star)
    hits = {}
    for label, cfg in {
        "quantile-rk": SolverConfig("quantile-rk", q=0.7, iterations=N, seed=2, target_rel_error=target),
        "quantile-sgd": SolverConfig("quantile-sgd", q=0.5, iterations=N, seed=3, target_rel_error=target),
        "opt-sgd": SolverConfig("opt-sgd", iterations=N, seed=4, target_rel_error=target),
    }.items():
        _, trace = solve(s.A, s.b, cfg, x_star=s.x_star)
        hits[label] = trace.iterations_to(target)
    opt = hits["opt-sgd"]
    ok = rk.final_relative_error > 0.1 and opt is not None
    for label in ("quantile-rk", "quantile-sgd"):
        k = hits[label]
        ok &= k is not None and k <= 5 * opt and opt <= 5 * k
    record(2, "convergence vs RK and OptSGD", ok,
           f"RK final rel. error {rk.final_relative_error:.3g} (> 0.1); iterations to 1e-4: {hits}")


# 3 -----------------------------------------------------------------------------

def test_criterion_3_linear_rate_form():
    details, ok = [], True
    for method in ("quantile-rk", "quantile-sgd"):
        for beta in (0.0, 0.1):
            scaled = {}
            for n in (25, 50, 100):
                N = 100 * n
                curves = []
                for trial in range(5):
                    s = desk_system(beta, derive_seed(2024, "criterion-3", method, beta, n, trial), n=n)
                    cfg = SolverConfig(method, iterations=N, seed=derive_seed(2024, "c3-solver", trial))
                    curves.append(solve(s.A, s.b, cfg, x_star=s.x_star)[1])
                fit = dg.fit_rate(dg.median_curve(curves), burn_in=N // 10)
                ok &= fit.r_squared > 0.95 and fit.rho < 1
                scaled[n] = (1 - fit.rho) * n
                details.append(f"{method} beta={beta} n={n}: R2={fit.r_squared:.4f} rho={fit.rho:.6f}")
            ratio = max(scaled.values()) / min(scaled.values())
            ok &= min(scaled.values()) > 0 and ratio < 3
            details.append(f"{method} beta={beta}: (1-rho)n = "
                           + ", ".join(f"{v:.3f}" for v in scaled.values()) + f" ratio {ratio:.2f}")
    print("\n".join(details))
    record(3, "linear rate form", ok, "; ".join(d for d in details if "ratio" in d))


# 4 -----------------------------------------------------------------------------

def test_criterion_4_corruption_magnitude_insensitivity():
    res = ex.run_sweep("corruption-size", {"exponents": [0, 1, 2, 3]}, seed=2024)
    spreads = {}
    for method in ("quantile-rk", "quantile-sgd"):
        vals = [r["median_log10_rel_error"] for r in res.rows if r["method"] == method]
        spreads[method] = max(vals) - min(vals)
    ok = all(v < 1.0 for v in spreads.values())
    record(4, "corruption magnitude insensitivity", ok,
           "spread of final log10 error over x in 0..3: " + ", ".join(f"{k} {v:.2f}" for k, v in spreads.items()))


# 5 -----------------------------------------------------------------------------

def test_criterion_5_opt_sgd_identity():
    s = build_system(MatrixModel("gaussian", 200, 10, 55), CorruptionModel("uniform", 5.0, 0.1))
    rng = np.random.default_rng(derive_seed(2024, "criterion-5"))
    x = s.x_star + rng.standard_normal(10) / math.sqrt(10)
    eta = dg.opt_sgd_step_size(x, s.A, s.b, s.x_star)
    rep = dg.check_opt_sgd_identity(s, x, [0.0, eta / 2, eta, 1.5 * eta, 2 * eta], samples=100_000, seed=2024)
    parts = []
    for r in rep.stats["results"]:
        gap = abs(r["mc_mean"] - r["expected"])
        if r["std_error"] <= dg.ROUNDOFF * (1 + abs(r["expected"])):
            # eta = 0 leaves x unchanged, so every sample is identical
            parts.append(f"exact (gap {gap:.1e})")
        else:
            parts.append(f"{gap / r['std_error']:.2f}")
    record(5, "OptSGD expectation identity", rep.passed,
           "|MC - formula| / SE at 5 step sizes: " + ", ".join(parts) + " (each <= 3)")


# 6 -----------------------------------------------------------------------------

def test_criterion_6_streaming_feasibility_and_convergence():
    expected = {(1e-9, 0.35): True, (0.1, 0.32): True, (0.3, 0.25): True, (0.5, 0.18): True, (0.5, 0.35): False}
    got = {k: streaming_feasible(*k) for k in expected}
    x_star = np.random.default_rng(derive_seed(2024, "criterion-6")).standard_normal(20)
    src = StreamSource(20, beta=0.3, adversary="uniform", param=5.0, seed=2024)
    _, trace = streaming_quantile_sgd(src, 0.1, 100_000, x_star, target_rel_error=1e-2)
    hit = trace.iterations_to(1e-2)
    ok = got == expected and hit is not None
    record(6, "streaming feasibility and convergence", ok,
           f"feasibility {['T' if v else 'F' for v in got.values()]} matches; "
           f"2-decade reduction after {hit} iterations (<= 100000)")


# 7 -----------------------------------------------------------------------------

def test_criterion_7_exact_order_statistics():
    systems = []
    kinds = [("uniform", 5.0), ("magnitude", 3.0), ("adversarial", 1.0)]
    for i in range(100):
        kind, param = kinds[i % 3]
        model = MatrixModel(("gaussian", "coherent", "bernoulli")[i % 3 if i % 2 else 0],
                            50 + 10 * (i % 16), 3 + i % 8, derive_seed(2024, "criterion-7", i))
        beta = (0.05, 0.1, 0.2, 0.3, 0.4)[i % 5]
        systems.append(build_system(model, CorruptionModel(kind, param, beta)))
    sw = dg.check_quantile_sandwich(systems, points=10, seed=2024)
    mk = dg.check_markov_count(systems, points=10, seed=2024)
    ok = sw.stats["violations"] == 0 and mk.stats["violations"] == 0 and sw.stats["tested"] > 0
    record(7, "quantile sandwich and Markov count", ok,
           f"sandwich {sw.stats['violations']} violations in {sw.stats['tested']} cases; "
           f"Markov {mk.stats['violations']} violations in {mk.stats['tested']} cases")


# 8 -----------------------------------------------------------------------------

def test_criterion_8_acceptance_probability():
    m, n, q, N = 200, 10, 0.7, 10_000
    rng = np.random.default_rng(derive_seed(2024, "criterion-8"))
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    b = rng.standard_normal(m)
    x, trace = solve(A, b, SolverConfig("quantile-rk", q=q, full_residual=True, iterations=N, seed=8))
    mags = np.abs(A @ x - b)
    distinct = np.unique(mags).size == m
    p = math.floor(q * m) / m
    se = math.sqrt(p * (1 - p) / N)
    rate = trace.acceptance_rate()
    ok = distinct and abs(rate - p) <= 3 * se
    record(8, "acceptance probability with full residual", ok,
           f"rate {rate:.4f} vs floor(qm)/m = {p:.4f} +- {3 * se:.4f}")


# 9 -----------------------------------------------------------------------------

def _snapshot(path):
    out = {}
    for root, _, names in os.walk(path):
        for name in names:
            full = os.path.join(root, name)
            with open(full, "rb") as fh:
                out[os.path.relpath(full, path)] = fh.read()
    return out


def _all_commands(base):
    sysdir = os.path.join(base, "sys")
    cfg = os.path.join(base, "cfg.json")
    with open(cfg, "w") as fh:
        json.dump({"rows": 150, "cols": 8, "trials": 2, "iterations": 60}, fh)
    cmds = [
        ["generate", "--model", "gaussian", "--rows", "300", "--cols", "10", "--beta", "0.2", "--seed", "3",
         "--out", sysdir],
        ["generate", "--model", "bernoulli", "--rows", "120", "--cols", "6", "--beta", "0.2",
         "--corruption", "adversarial:1", "--seed", "4", "--out", os.path.join(base, "sys-adv")],
    ]
    solve_base = ["solve", "--matrix", os.path.join(sysdir, "A.mtx"), "--rhs", os.path.join(sysdir, "b.csv"),
                  "--x-star", os.path.join(sysdir, "x_star.csv"), "--iterations", "300", "--seed", "5"]
    for i, extra in enumerate([["--method", "rk"], ["--method", "quantile-rk", "--sample-size", "50"],
                               ["--method", "quantile-rk", "--window", "50"],
                               ["--method", "quantile-sgd", "--full-residual"],
                               ["--method", "opt-sgd"]]):
        cmds.append(solve_base + extra + ["--out", os.path.join(base, f"solve{i}")])
    for sweep in ("quantile-sweep", "convergence", "aspect-ratio", "corruption-size"):
        extra = ["--config", cfg] if sweep != "aspect-ratio" else ["--cols", "8", "--trials", "2", "--iterations", "60"]
        cmds.append(["experiment", sweep, *extra, "--seed", "6", "--out", os.path.join(base, "exp")])
    cmds.append(["experiment", "real-data", "--matrix", os.path.join(sysdir, "A.mtx"), "--trials", "2",
                 "--iterations", "60", "--seed", "6", "--out", os.path.join(base, "exp")])
    cmds.append(["check-theory", "--seed", "7", "--systems", "5", "--trials", "20", "--samples", "2000",
                 "--out", os.path.join(base, "check")])
    return cmds


def test_criterion_9_reproducibility(tmp_path):
    snaps, codes = [], []
    for run in ("first", "second"):
        base = str(tmp_path / "run")
        if os.path.exists(base):
            import shutil
            shutil.rmtree(base)
        os.makedirs(base)
        codes.append([cli_main(cmd) for cmd in _all_commands(base)])
        snaps.append(_snapshot(base))
    first, second = snaps
    differing = sorted(k for k in set(first) | set(second) if first.get(k) != second.get(k))
    ok = not differing and all(c == 0 for c in codes[0]) and codes[0] == codes[1]
    record(9, "byte-identical reruns", ok,
           f"{len(first)} output files from {len(codes[0])} commands, {len(differing)} differ; exit codes {set(codes[0])}")
