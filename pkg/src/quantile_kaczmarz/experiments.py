"""Named experiment sweeps that emit tidy rows for external plotting.

Each sweep takes a flat parameter dict (defaults below, overridable from JSON
or flags) and a master seed.  Every random system and every solver run gets
a seed derived from the master seed and its coordinates in the sweep, so a
sweep's output does not depend on how the work is scheduled.  Trials run
sequentially, or in a process pool when ``threads > 1``; results are always
aggregated in trial order.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .problems import (
    CorruptionModel,
    MatrixModel,
    build_system,
    corrupt,
    load_system,
    make_consistent_rhs,
)
from .seeding import derive_seed
from .solvers import SolverConfig, solve

# method label -> (solver method, uses sliding window)
METHOD_LABELS = {
    "rk": ("rk", False),
    "quantile-rk": ("quantile-rk", False),
    "quantile-rk-sw": ("quantile-rk", True),
    "quantile-sgd": ("quantile-sgd", False),
    "quantile-sgd-sw": ("quantile-sgd", True),
    "opt-sgd": ("opt-sgd", False),
}

DEFAULTS = {
    "quantile-sweep": {
        "model": "gaussian", "rows": 2000, "cols": 100, "corruption": "uniform:5",
        "betas": [0.1, 0.2, 0.3], "quantiles": [round(0.05 * i, 2) for i in range(1, 20)],
        "methods": ["quantile-rk", "quantile-sgd"], "sample_size": 400,
        "trials": 10, "iterations": 2000,
    },
    "convergence": {
        "models": ["gaussian", "coherent", "bernoulli", "adversarial"], "rows": 2000, "cols": 100,
        "beta": 0.2, "corruption": "uniform:5", "adversarial_scale": 1.0,
        "methods": ["rk", "quantile-rk", "quantile-rk-sw", "quantile-sgd", "quantile-sgd-sw", "opt-sgd"],
        "q_rk": 0.7, "q_sgd": 0.5, "sample_size": 400, "window": 400,
        "trials": 10, "iterations": 10000, "stride": 1,
    },
    "aspect-ratio": {
        "cols": 100, "ratios": [2, 3, 5, 10, 20, 50], "beta": 0.2, "corruption": "uniform:5",
        "methods": ["quantile-rk", "quantile-sgd"], "q_rk": 0.7, "q_sgd": 0.5, "sample_size": 400,
        "trials": 100, "iterations": 1000,
    },
    "corruption-size": {
        "rows": 2000, "cols": 100, "beta": 0.2, "exponents": [-2, -1, 0, 1, 2, 3, 4],
        "methods": ["quantile-rk", "quantile-sgd"], "q_rk": 0.7, "q_sgd": 0.5, "sample_size": 400,
        "trials": 10, "iterations": 2000,
    },
    "real-data": {
        "matrix": None, "rhs": None, "normalize": True, "corrupt_count": 100, "corruption": "uniform:5",
        "methods": ["rk", "quantile-rk", "quantile-rk-sw", "quantile-sgd", "quantile-sgd-sw"],
        "q_rk": 0.7, "q_sgd": 0.5, "sample_size": 100, "window": 100,
        "trials": 10, "iterations": 10000, "stride": 1,
    },
}

SWEEPS = tuple(DEFAULTS)


@dataclass(frozen=True)
class SweepResult:
    name: str
    columns: tuple
    rows: list
    params: dict


def available_sweeps() -> str:
    return ", ".join(SWEEPS)


def resolve_params(name: str, overrides: Optional[dict] = None) -> dict:
    if name not in DEFAULTS:
        raise ValueError(f"unknown sweep {name!r}; available sweeps: {available_sweeps()}")
    params = dict(DEFAULTS[name])
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ValueError(f"unknown parameter {key!r} for sweep {name!r}; expected one of {sorted(params)}")
        if value is not None:
            params[key] = value
    if int(params["trials"]) < 1:
        raise ValueError("trials must be at least 1")
    if int(params["iterations"]) < 0:
        raise ValueError("iterations must be nonnegative")
    for label in params["methods"]:
        if label not in METHOD_LABELS:
            raise ValueError(f"unknown method {label!r}; choose from {tuple(METHOD_LABELS)}")
    return params


def method_config(label: str, params: dict, seed: int, q: Optional[float] = None) -> SolverConfig:
    method, windowed = METHOD_LABELS[label]
    if q is None:
        q = {"quantile-rk": params.get("q_rk"), "quantile-sgd": params.get("q_sgd")}.get(method)
    return SolverConfig(
        method=method,
        q=q,
        sample_size=None if windowed else params.get("sample_size"),
        window=params.get("window", params.get("sample_size")) if windowed else None,
        iterations=int(params["iterations"]),
        seed=seed,
    )


def _map(fn: Callable, tasks: list, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _log10(err: float) -> float:
    return math.log10(err) if err > 0 else -math.inf


# --- quantile sweep ----------------------------------------------------------

def _quantile_sweep_trial(params: dict, seed: int, beta_index: int, trial: int) -> list:
    beta = params["betas"][beta_index]
    sys_seed = derive_seed(seed, "quantile-sweep", "system", beta_index, trial)
    system = build_system(
        MatrixModel(params["model"], int(params["rows"]), int(params["cols"]), sys_seed),
        CorruptionModel.parse(params["corruption"], beta),
    )
    out = []
    for label in params["methods"]:
        for qi, q in enumerate(params["quantiles"]):
            cfg = method_config(label, params, derive_seed(seed, "quantile-sweep", "solver", beta_index, trial, label, qi), q)
            _, trace = solve(system.A, system.b, cfg, x_star=system.x_star)
            out.append(_log10(trace.final_relative_error))
    return out


def quantile_sweep(params: dict, seed: int, threads: int = 1) -> SweepResult:
    tasks = [(params, seed, bi, tr) for bi in range(len(params["betas"])) for tr in range(int(params["trials"]))]
    results = _map(_quantile_sweep_trial, tasks, threads)
    trials = int(params["trials"])
    rows = []
    for bi, beta in enumerate(params["betas"]):
        block = np.array(results[bi * trials:(bi + 1) * trials])
        j = 0
        for label in params["methods"]:
            for q in params["quantiles"]:
                rows.append({"method": label, "beta": float(beta), "q": float(q), "trials": trials,
                             "iterations": int(params["iterations"]),
                             "median_log10_rel_error": float(np.median(block[:, j]))})
                j += 1
    columns = ("method", "beta", "q", "trials", "iterations", "median_log10_rel_error")
    return SweepResult("quantile-sweep", columns, rows, params)


# --- convergence curves ------------------------------------------------------

def _convergence_system(params: dict, model: str, seed: int, trial: int):
    sys_seed = derive_seed(seed, "convergence", "system", model, trial)
    kind = "gaussian" if model == "adversarial" else model
    if model == "adversarial":
        corruption = CorruptionModel("adversarial", float(params["adversarial_scale"]), float(params["beta"]))
    else:
        corruption = CorruptionModel.parse(params["corruption"], float(params["beta"]))
    return build_system(MatrixModel(kind, int(params["rows"]), int(params["cols"]), sys_seed), corruption)


def convergence_methods(params: dict, model: str) -> list:
    """OptSGD is an oracle baseline and is only run on the Gaussian model."""
    return [m for m in params["methods"] if m != "opt-sgd" or model == "gaussian"]


def _convergence_trial(params: dict, seed: int, model: str, trial: int) -> dict:
    system = _convergence_system(params, model, seed, trial)
    curves = {}
    for label in convergence_methods(params, model):
        cfg = method_config(label, params, derive_seed(seed, "convergence", "solver", model, trial, label))
        _, trace = solve(system.A, system.b, cfg, x_star=system.x_star)
        curves[label] = trace.relative_error
    return curves


def _curve_rows(key: dict, curves_by_trial: list, labels: list, stride: int) -> list:
    rows = []
    for label in labels:
        curve = np.median(np.stack([c[label] for c in curves_by_trial]), axis=0)
        for k in range(0, curve.size, stride):
            rows.append({**key, "method": label, "iteration": k, "median_rel_error": float(curve[k])})
        if (curve.size - 1) % stride:
            rows.append({**key, "method": label, "iteration": curve.size - 1,
                         "median_rel_error": float(curve[-1])})
    return rows


def convergence(params: dict, seed: int, threads: int = 1) -> SweepResult:
    trials = int(params["trials"])
    tasks = [(params, seed, model, tr) for model in params["models"] for tr in range(trials)]
    results = _map(_convergence_trial, tasks, threads)
    rows = []
    for mi, model in enumerate(params["models"]):
        block = results[mi * trials:(mi + 1) * trials]
        rows += _curve_rows({"model": model}, block, convergence_methods(params, model), max(1, int(params["stride"])))
    return SweepResult("convergence", ("model", "method", "iteration", "median_rel_error"), rows, params)


# --- aspect ratio ------------------------------------------------------------

def _aspect_trial(params: dict, seed: int, ratio_index: int, trial: int) -> list:
    n = int(params["cols"])
    m = int(round(params["ratios"][ratio_index] * n))
    sys_seed = derive_seed(seed, "aspect-ratio", "system", ratio_index, trial)
    system = build_system(MatrixModel("gaussian", m, n, sys_seed),
                          CorruptionModel.parse(params["corruption"], float(params["beta"])))
    out = []
    for label in params["methods"]:
        cfg = method_config(label, params, derive_seed(seed, "aspect-ratio", "solver", ratio_index, trial, label))
        _, trace = solve(system.A, system.b, cfg, x_star=system.x_star)
        out.append(_log10(trace.final_relative_error))
    return out


def aspect_ratio(params: dict, seed: int, threads: int = 1) -> SweepResult:
    trials = int(params["trials"])
    tasks = [(params, seed, ri, tr) for ri in range(len(params["ratios"])) for tr in range(trials)]
    results = _map(_aspect_trial, tasks, threads)
    rows = []
    for ri, ratio in enumerate(params["ratios"]):
        block = np.array(results[ri * trials:(ri + 1) * trials])
        for j, label in enumerate(params["methods"]):
            rows.append({"method": label, "aspect_ratio": float(ratio), "rows": int(round(ratio * int(params["cols"]))),
                         "trials": trials, "iterations": int(params["iterations"]),
                         "median_log10_rel_error": float(np.median(block[:, j]))})
    columns = ("method", "aspect_ratio", "rows", "trials", "iterations", "median_log10_rel_error")
    return SweepResult("aspect-ratio", columns, rows, params)


# --- corruption size ---------------------------------------------------------

def _size_trial(params: dict, seed: int, exp_index: int, trial: int) -> list:
    x = float(params["exponents"][exp_index])
    # the matrix and x_star are shared across exponents so only the corruption scale changes
    sys_seed = derive_seed(seed, "corruption-size", "system", trial)
    system = build_system(MatrixModel("gaussian", int(params["rows"]), int(params["cols"]), sys_seed),
                          CorruptionModel("magnitude", x, float(params["beta"])))
    out = []
    for label in params["methods"]:
        cfg = method_config(label, params, derive_seed(seed, "corruption-size", "solver", exp_index, trial, label))
        _, trace = solve(system.A, system.b, cfg, x_star=system.x_star)
        out.append(_log10(trace.final_relative_error))
    return out


def corruption_size(params: dict, seed: int, threads: int = 1) -> SweepResult:
    trials = int(params["trials"])
    tasks = [(params, seed, xi, tr) for xi in range(len(params["exponents"])) for tr in range(trials)]
    results = _map(_size_trial, tasks, threads)
    rows = []
    for xi, x in enumerate(params["exponents"]):
        block = np.array(results[xi * trials:(xi + 1) * trials])
        for j, label in enumerate(params["methods"]):
            rows.append({"method": label, "exponent": float(x), "trials": trials,
                         "iterations": int(params["iterations"]),
                         "median_log10_rel_error": float(np.median(block[:, j]))})
    columns = ("method", "exponent", "trials", "iterations", "median_log10_rel_error")
    return SweepResult("corruption-size", columns, rows, params)


# --- real data ---------------------------------------------------------------

def _real_trial(params: dict, seed: int, A, b_clean, x_star, trial: int) -> dict:
    base = CorruptionModel.parse(params["corruption"])
    model = CorruptionModel(base.kind, base.param, 0.0, int(params["corrupt_count"]))
    system = corrupt(A, x_star, model, derive_seed(seed, "real-data", "corruption", trial))
    curves = {}
    for label in params["methods"]:
        if label == "opt-sgd":
            continue
        cfg = method_config(label, params, derive_seed(seed, "real-data", "solver", trial, label))
        _, trace = solve(system.A, system.b, cfg, x_star=x_star)
        curves[label] = trace.relative_error
    return curves


def real_data(params: dict, seed: int, threads: int = 1) -> SweepResult:
    """Ingested matrix, consistent right-hand side, count-based corruption.

    With an ``rhs`` file the system must be consistent; x_star is recovered
    by least squares.  Without one, x_star is drawn on the unit sphere.
    """
    if not params.get("matrix"):
        raise ValueError("real-data sweep needs a matrix file (parameter 'matrix')")
    loaded = load_system(params["matrix"], params.get("rhs"), bool(params["normalize"]))
    A = loaded.A
    if loaded.b is None:
        x_star, b_clean = make_consistent_rhs(A, derive_seed(seed, "real-data", "x_star"))
    else:
        x_star = np.linalg.lstsq(A, loaded.b, rcond=None)[0]
        b_clean = A @ x_star
    trials = int(params["trials"])
    tasks = [(params, seed, A, b_clean, x_star, tr) for tr in range(trials)]
    results = _map(_real_trial, tasks, threads)
    labels = [m for m in params["methods"] if m != "opt-sgd"]
    rows = _curve_rows({"rows": A.shape[0], "cols": A.shape[1]}, results, labels, max(1, int(params["stride"])))
    return SweepResult("real-data", ("rows", "cols", "method", "iteration", "median_rel_error"), rows, params)


RUNNERS = {
    "quantile-sweep": quantile_sweep,
    "convergence": convergence,
    "aspect-ratio": aspect_ratio,
    "corruption-size": corruption_size,
    "real-data": real_data,
}


def run_sweep(name: str, overrides: Optional[dict] = None, seed: int = 0, threads: int = 1) -> SweepResult:
    params = resolve_params(name, overrides)
    return RUNNERS[name](params, seed, threads)
