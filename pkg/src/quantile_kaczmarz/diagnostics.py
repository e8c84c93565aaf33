"""Residual statistics, rate fitting and empirical checks on random systems.

Checks return ``CheckReport`` records.  The order-statistics checks are exact
(any violation fails them); the probabilistic ones report observed ranges
against loose, documented thresholds.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import floor_fraction, quantile, quantile_index, smallest_singular_pair
from .seeding import stream, unit_vector
from .solvers import IterationTrace, opt_sgd_step_size


# Floor for Monte Carlo comparisons whose spread is zero (e.g. eta = 0).
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class ResidualStats:
    corrupted_quantile: float
    clean_quantile: float
    mean_abs: float


@dataclass(frozen=True)
class RateFit:
    rho: float
    r_squared: float
    start: int
    stop: int

    @property
    def per_iteration_decrease(self) -> float:
        return 1.0 - self.rho


@dataclass
class CheckReport:
    name: str
    params: dict
    stats: dict
    passed: bool
    warning: bool = False
    skipped: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else str(value)
    return obj


def _residuals(system, x):
    # <a_i, x - x*> is evaluated as <a_i, x> - b_clean_i so that uncorrupted
    # entries agree bit for bit with the observed residual
    Ax = system.A @ np.asarray(x, dtype=float)
    return np.abs(Ax - system.b), np.abs(Ax - system.b_clean)


def residual_stats(system, x, q: float) -> ResidualStats:
    """Quantiles of the observed and clean residuals and the mean |<a_i, x - x*>|."""
    observed, clean = _residuals(system, x)
    return ResidualStats(quantile(observed, q), quantile(clean, q), float(np.mean(clean)))


def fit_rate(trace, burn_in: int = 0, min_points: int = 50) -> RateFit:
    """Least-squares line through (k, log relative error) after ``burn_in``.

    Accepts an ``IterationTrace`` or a plain sequence of relative errors.  The
    window stops at the first nonpositive error.
    """
    err = np.asarray(trace.relative_error if isinstance(trace, IterationTrace) else trace, dtype=float)
    if err.size < burn_in + min_points:
        raise ValueError(f"need at least {burn_in + min_points} points, got {err.size}")
    window = err[burn_in:]
    bad = np.flatnonzero(~(window > 0))
    stop = burn_in + (bad[0] if bad.size else window.size)
    window = err[burn_in:stop]
    if window.size < 2:
        raise ValueError("fewer than two positive errors after burn-in")
    k = np.arange(burn_in, stop, dtype=float)
    y = np.log(window)
    slope, intercept = np.polyfit(k, y, 1)
    ss_res = float(np.sum((y - (slope * k + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(float(np.exp(slope)), r2, burn_in, stop)


def median_curve(traces) -> np.ndarray:
    """Pointwise median of relative-error curves, cut to the shortest one."""
    curves = [t.relative_error if isinstance(t, IterationTrace) else np.asarray(t) for t in traces]
    length = min(len(c) for c in curves)
    return np.median(np.stack([c[:length] for c in curves]), axis=0)


def sandwich_violations(system, x, qs) -> tuple[int, int]:
    """Count failures of Q_{q-beta}(x) <= Q~_q(x) <= Q_{q+beta}(x).

    Only (q, beta) pairs whose three ranks are at least 1 and at most m are
    tested, so no clamping is involved.  Returns ``(violations, tested)``.
    """
    m = system.A.shape[0]
    beta = len(system.corrupt_support) / m
    observed, clean = (np.sort(r) for r in _residuals(system, x))
    violations = tested = 0
    for q in qs:
        lo_rank = floor_fraction(q - beta, m)
        hi_rank = floor_fraction(q + beta, m)
        mid_rank = floor_fraction(q, m)
        if lo_rank < 1 or mid_rank < 1 or hi_rank > m:
            continue
        tested += 1
        mid = observed[mid_rank - 1]
        if not clean[lo_rank - 1] <= mid <= clean[hi_rank - 1]:
            violations += 1
    return violations, tested


def markov_violations(system, x, alphas) -> tuple[int, int]:
    """Count alphas with #{i : |<a_i, e>| > M(e)/alpha} >= alpha m (never expected)."""
    mags = _residuals(system, x)[1]
    M = float(np.mean(mags))
    if M == 0.0:
        return 0, 0
    m = mags.size
    violations = sum(int(np.count_nonzero(mags > M / a) >= a * m) for a in alphas)
    return violations, len(alphas)


def check_quantile_sandwich(systems, points: int = 10, qs=None, seed: int = 0) -> CheckReport:
    qs = np.round(np.arange(1, 20) * 0.05, 2) if qs is None else qs
    rng = stream(seed, "probe", "sandwich")
    violations = tested = 0
    for system in systems:
        n = system.A.shape[1]
        for _ in range(points):
            x = system.x_star + rng.exponential() * unit_vector(rng, n)
            v, t = sandwich_violations(system, x, qs)
            violations += v
            tested += t
    return CheckReport("quantile-sandwich", {"systems": len(systems), "points": points},
                       {"violations": violations, "tested": tested}, violations == 0 and tested > 0)


def check_markov_count(systems, points: int = 10, alphas=(0.05, 0.1, 0.2, 0.5, 0.9), seed: int = 0) -> CheckReport:
    rng = stream(seed, "probe", "markov")
    violations = tested = skipped = 0
    for system in systems:
        n = system.A.shape[1]
        for _ in range(points):
            x = system.x_star + rng.exponential() * unit_vector(rng, n)
            v, t = markov_violations(system, x, alphas)
            skipped += t == 0
            violations += v
            tested += t
    return CheckReport("markov-count", {"systems": len(systems), "points": points, "alphas": list(alphas)},
                       {"violations": violations, "tested": tested}, violations == 0 and tested > 0,
                       skipped=skipped)


def _least_aligned(A, direction, size):
    return np.argsort(np.abs(A @ direction), kind="stable")[:size]


def check_submatrix_conditioning(A, alpha: float, trials: int = 100, probes: int = 10,
                                 refine: int = 5, seed: int = 0, warn_ratio: float = 1e-3) -> CheckReport:
    """Smallest sigma_min over row subsets of size ceil(alpha m), relative to sqrt(m/n).

    Besides ``trials`` uniformly random subsets, ``probes`` adversarial subsets
    are built by taking the rows least aligned with a direction and then
    re-aiming at the weakest singular direction of that subset ``refine``
    times.  A ratio below ``warn_ratio`` raises the warning flag and fails the
    check.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    size = math.ceil(alpha * m * (1 - 1e-12))
    if size < n:
        raise ValueError("submatrix not tall")
    scale = math.sqrt(m / n)
    rng = stream(seed, "probe", "submatrix")
    random_min = math.inf
    for _ in range(trials):
        rows = rng.choice(m, size=size, replace=False)
        random_min = min(random_min, smallest_singular_pair(A[rows])[0])
    probe_min = math.inf
    for _ in range(probes):
        d = unit_vector(rng, n)
        for _ in range(refine + 1):
            smin, v = smallest_singular_pair(A[_least_aligned(A, d, size)])
            probe_min = min(probe_min, smin)
            d = v
    overall = min(random_min, probe_min)
    ratio = overall / scale
    stats = {
        "subset_size": size,
        "min_sigma": overall,
        "min_ratio": ratio,
        "random_min_ratio": random_min / scale,
        "probe_min_ratio": probe_min / scale,
        "ratio_positive": ratio > 0,
    }
    warning = ratio < warn_ratio
    return CheckReport("submatrix", {"m": m, "n": n, "alpha": alpha, "trials": trials, "probes": probes},
                       stats, not warning, warning=warning)


def check_quantile_bounds(A, q: float, alpha: float, trials: int = 100, seed: int = 0, points=None) -> CheckReport:
    """(i) Markov count of rows above M(x)/alpha; (ii) range of sqrt(n) Q_q(x)/||x||.

    ``points`` may supply the x's directly; otherwise ``trials`` random unit
    vectors are used.  Zero vectors are skipped.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if points is None:
        rng = stream(seed, "probe", "quantile-bounds")
        points = [unit_vector(rng, n) for _ in range(trials)]
    count_violations = skipped = 0
    normalized = []
    for x in points:
        x = np.asarray(x, dtype=float)
        nx = float(np.linalg.norm(x))
        if nx == 0.0:
            skipped += 1
            continue
        mags = np.abs(A @ x)
        M = float(np.mean(mags))
        if np.count_nonzero(mags > M / alpha) >= alpha * m:
            count_violations += 1
        normalized.append(quantile(mags, q) * math.sqrt(n) / nx)
    stats = {
        "count_violations": count_violations,
        "min_normalized_quantile": min(normalized) if normalized else float("nan"),
        "max_normalized_quantile": max(normalized) if normalized else float("nan"),
        "evaluated": len(normalized),
    }
    passed = count_violations == 0 and (not normalized or min(normalized) > 0)
    return CheckReport("quantile-bounds", {"m": m, "n": n, "q": q, "alpha": alpha}, stats, passed,
                       skipped=skipped)


def eta_gaps(system, points) -> tuple[np.ndarray, int]:
    """|eta*(x) - M(x - x*)| / M(x - x*) for each point; zero-M points skipped."""
    gaps, skipped = [], 0
    for x in points:
        x = np.asarray(x, dtype=float)
        M = float(np.mean(np.abs(system.A @ (x - system.x_star))))
        if M == 0.0:
            skipped += 1
            continue
        eta = opt_sgd_step_size(x, system.A, system.b, system.x_star)
        gaps.append(abs(eta - M) / M)
    return np.array(gaps), skipped


def check_eta_approximation(system, points=100, seed: int = 0, max_gap: float = 0.5) -> CheckReport:
    """How closely the mean clean residual tracks the optimal SGD step size."""
    if isinstance(points, int):
        rng = stream(seed, "probe", "eta")
        n = system.A.shape[1]
        points = [system.x_star + rng.exponential() * unit_vector(rng, n) for _ in range(points)]
    gaps, skipped = eta_gaps(system, points)
    stats = {
        "max_gap": float(gaps.max()) if gaps.size else float("nan"),
        "median_gap": float(np.median(gaps)) if gaps.size else float("nan"),
        "evaluated": int(gaps.size),
    }
    passed = bool(gaps.size) and stats["max_gap"] < max_gap
    return CheckReport("eta-approximation",
                       {"m": system.A.shape[0], "n": system.A.shape[1], "beta": system.beta, "max_gap": max_gap},
                       stats, passed, skipped=skipped)


def opt_sgd_expectation(system, x, eta: float) -> float:
    """Exact mean of ||x' - x*||^2 over a uniformly chosen row for step length eta."""
    x = np.asarray(x, dtype=float)
    s = np.where(system.A @ x - system.b > 0, 1.0, -1.0)
    after = x[None, :] - eta * s[:, None] * system.A - system.x_star[None, :]
    return float(np.mean(np.sum(after * after, axis=1)))


def opt_sgd_identity_value(system, x, eta: float) -> float:
    """(eta - eta*)^2 - eta*^2 + ||x - x*||^2."""
    x = np.asarray(x, dtype=float)
    eta_star = opt_sgd_step_size(x, system.A, system.b, system.x_star)
    return (eta - eta_star) ** 2 - eta_star ** 2 + float(np.sum((x - system.x_star) ** 2))


def check_opt_sgd_identity(system, x, etas, samples: int = 100_000, seed: int = 0, z: float = 3.0) -> CheckReport:
    """Monte Carlo mean of ||x' - x*||^2 against the closed form, per step length."""
    x = np.asarray(x, dtype=float)
    rng = stream(seed, "probe", "opt-identity")
    s = np.where(system.A @ x - system.b > 0, 1.0, -1.0)
    e = x - system.x_star
    results = []
    for eta in etas:
        idx = rng.integers(0, system.A.shape[0], size=samples)
        after = e[None, :] - eta * s[idx, None] * system.A[idx]
        vals = np.sum(after * after, axis=1)
        mean, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))
        expected = opt_sgd_identity_value(system, x, eta)
        results.append({"eta": float(eta), "mc_mean": mean, "std_error": se, "expected": expected,
                        "within": abs(mean - expected) <= z * se + ROUNDOFF * (1.0 + abs(expected))})
    passed = all(r["within"] for r in results)
    return CheckReport("opt-identity", {"samples": samples, "z": z}, {"results": results}, passed)


def check_streaming_feasible(q: float, beta: float, C: float = 1.99, expect: bool = True) -> CheckReport:
    from .streaming import HalfNormal, half_normal_quantile, streaming_feasible

    feasible = streaming_feasible(q, beta, C)
    stats = {
        "feasible": feasible,
        "half_normal_quantile": half_normal_quantile(q + beta),
        "bound": C * (1 - 2 * beta) * HalfNormal.mean,
    }
    return CheckReport("streaming-feasible", {"q": q, "beta": beta, "C": C}, stats, feasible == expect)


def acceptance_probability(q: float, m: int) -> float:
    """Chance that QuantileRK with the full residual accepts, for distinct magnitudes."""
    return quantile_index(m, q) / m
