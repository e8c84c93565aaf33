"""Randomized Kaczmarz, QuantileRK, QuantileSGD and OptSGD.

All methods sample rows uniformly with replacement.  The quantile methods
compare against (QuantileRK) or step by (QuantileSGD) a q-quantile of
residual magnitudes taken from a ``QuantileEstimator``.  Rows are assumed to
have unit norm.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import quantile
from .seeding import stream

METHODS = ("rk", "quantile-rk", "quantile-sgd", "opt-sgd")
DEFAULT_QUANTILE = {"quantile-rk": 0.7, "quantile-sgd": 0.5}
DEFAULT_SAMPLE_SIZE = 400


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one solver run.

    ``sample_size`` is the number of fresh residual entries drawn per
    iteration.  In sliding-window mode (``window`` set) it defaults to 1 and
    counts how many entries enter the window per iteration; otherwise it
    defaults to 400.  ``full_residual`` uses the whole residual instead of a
    sample.
    """

    method: str
    q: Optional[float] = None
    sample_size: Optional[int] = None
    window: Optional[int] = None
    full_residual: bool = False
    iterations: int = 2000
    seed: int = 0
    target_rel_error: Optional[float] = None
    clamp_step: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.q is None and self.method in DEFAULT_QUANTILE:
            object.__setattr__(self, "q", DEFAULT_QUANTILE[self.method])
        if self.q is not None and not 0.0 < self.q <= 1.0:
            raise ValueError("quantile out of range")
        if self.sample_size is None:
            object.__setattr__(self, "sample_size", 1 if self.window is not None else DEFAULT_SAMPLE_SIZE)
        if self.sample_size < 1:
            raise ValueError("sample size must be at least 1")
        if self.window is not None and self.window < 1:
            raise ValueError("window size must be at least 1")
        if self.window is not None and self.full_residual:
            raise ValueError("sliding window and full residual are mutually exclusive")
        if self.iterations < 0:
            raise ValueError("iteration budget must be nonnegative")

    @property
    def uses_quantile(self) -> bool:
        return self.method in DEFAULT_QUANTILE

    def estimator(self) -> "QuantileEstimator":
        if self.full_residual:
            return QuantileEstimator.full()
        if self.window is not None:
            return QuantileEstimator.sliding(self.window, self.sample_size)
        return QuantileEstimator.fresh(self.sample_size)


class QuantileEstimator:
    """Source of the residual magnitudes whose quantile sets the threshold.

    ``fresh`` draws ``t`` rows per iteration, ``full`` uses every row, and
    ``sliding`` keeps the most recent ``W`` magnitudes in a FIFO window.  The
    window is filled with ``W`` fresh magnitudes on first use and then takes
    ``t`` new ones per iteration.
    """

    def __init__(self, mode: str, size: Optional[int] = None, per_iteration: int = 1):
        if mode not in ("fresh", "full", "sliding"):
            raise ValueError(f"unknown estimator mode {mode!r}")
        self.mode = mode
        self.size = size
        self.per_iteration = per_iteration
        self._buf = np.empty(size if mode == "sliding" else 0)
        self._count = 0
        self._pos = 0
        self._current = None

    @classmethod
    def fresh(cls, t: int) -> "QuantileEstimator":
        return cls("fresh", t)

    @classmethod
    def full(cls) -> "QuantileEstimator":
        return cls("full")

    @classmethod
    def sliding(cls, window: int, per_iteration: int = 1) -> "QuantileEstimator":
        return cls("sliding", window, per_iteration)

    def push(self, values) -> None:
        values = np.abs(np.asarray(values, dtype=float).ravel())
        if self.mode != "sliding":
            self._current = values
            return
        W = self.size
        if values.size >= W:
            self._buf[:] = values[-W:]
            self._count, self._pos = W, 0
            return
        for v in values:
            self._buf[self._pos] = v
            self._pos = (self._pos + 1) % W
            self._count = min(self._count + 1, W)

    def values(self) -> np.ndarray:
        """Stored magnitudes, oldest first."""
        if self.mode != "sliding":
            return np.array([]) if self._current is None else self._current.copy()
        if self._count < self.size:
            return self._buf[: self._count].copy()
        return np.roll(self._buf, -self._pos)

    def __len__(self) -> int:
        if self.mode == "sliding":
            return self._count
        return 0 if self._current is None else self._current.size

    def threshold(self, q: float) -> float:
        if len(self) == 0:
            raise ValueError("quantile requested from an empty estimator")
        if self.mode == "sliding":
            return quantile(self._buf[: self._count], q)
        return quantile(self._current, q)

    def update(self, A, b, x, rng: np.random.Generator) -> None:
        """Compute and store the residual magnitudes needed at iterate ``x``."""
        m = A.shape[0]
        if self.mode == "full":
            self._current = np.abs(A @ x - b)
            return
        if self.mode == "fresh":
            count = self.size
        else:
            count = self.size if self._count == 0 else self.per_iteration
        idx = rng.integers(0, m, size=count)
        self.push(A[idx] @ x - b[idx])


@dataclass
class IterationTrace:
    """Per-iteration record; row 0 describes the starting point."""

    iteration: np.ndarray
    relative_error: np.ndarray
    step_size: np.ndarray
    accepted: np.ndarray
    threshold: np.ndarray

    @classmethod
    def empty(cls, length: int) -> "IterationTrace":
        return cls(
            iteration=np.arange(length, dtype=np.int64),
            relative_error=np.full(length, np.nan),
            step_size=np.zeros(length),
            accepted=np.zeros(length, dtype=bool),
            threshold=np.full(length, np.nan),
        )

    def truncate(self, length: int) -> "IterationTrace":
        return IterationTrace(
            self.iteration[:length],
            self.relative_error[:length],
            self.step_size[:length],
            self.accepted[:length],
            self.threshold[:length],
        )

    def __len__(self) -> int:
        return len(self.iteration)

    @property
    def final_relative_error(self) -> float:
        return float(self.relative_error[-1])

    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted[1:])) if len(self) > 1 else float("nan")

    def iterations_to(self, target: float) -> Optional[int]:
        """First iteration at which the relative error is at most ``target``."""
        hits = np.flatnonzero(self.relative_error <= target)
        return int(self.iteration[hits[0]]) if hits.size else None


def _residual(A, b, x, k) -> float:
    return float(A[k] @ x - b[k])


def quantile_rk_iteration(x, A, b, q, estimator: QuantileEstimator, rng):
    """One QuantileRK step; returns ``(x_new, accepted, threshold)``."""
    estimator.update(A, b, x, rng)
    threshold = estimator.threshold(q)
    k = int(rng.integers(0, A.shape[0]))
    r = _residual(A, b, x, k)
    if abs(r) <= threshold:
        return x - r * A[k], True, threshold
    return x, False, threshold


def quantile_sgd_iteration(x, A, b, q, estimator: QuantileEstimator, rng):
    """One QuantileSGD step; returns ``(x_new, gamma)``."""
    estimator.update(A, b, x, rng)
    gamma = estimator.threshold(q)
    k = int(rng.integers(0, A.shape[0]))
    s = 1.0 if _residual(A, b, x, k) > 0 else -1.0
    return x - gamma * s * A[k], gamma


def rk_iteration(x, A, b, rng):
    k = int(rng.integers(0, A.shape[0]))
    r = _residual(A, b, x, k)
    return x - r * A[k], abs(r)


def opt_sgd_step_size(x, A, b, x_star) -> float:
    """eta*(x) = mean_i s_i(x) <x - x_star, a_i> with s_i = sign(<a_i, x> - b_i)."""
    if x_star is None:
        raise ValueError("opt-sgd needs the true solution x_star")
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    s = np.where(A @ x - b > 0, 1.0, -1.0)
    return float(np.mean(s * (A @ (x - np.asarray(x_star, dtype=float)))))


def opt_sgd_iteration(x, A, b, x_star, rng, clamp: bool = False):
    eta = opt_sgd_step_size(x, A, b, x_star)
    if clamp:
        eta = max(eta, 0.0)
    k = int(rng.integers(0, A.shape[0]))
    s = 1.0 if _residual(A, b, x, k) > 0 else -1.0
    return x - eta * s * A[k], eta


def solve(A, b, config: SolverConfig, x_star=None, x0=None):
    """Run ``config.iterations`` steps of the configured method.

    Returns the final iterate and an ``IterationTrace`` whose relative errors
    are measured against ``x_star`` when it is given (NaN otherwise).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    m, n = A.shape
    if b.shape[0] != m:
        raise ValueError(f"dimension mismatch: A has {m} rows, b has {b.shape[0]} entries")
    if config.method == "opt-sgd" and x_star is None:
        raise ValueError("opt-sgd needs the true solution x_star")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x_star is not None:
        x_star = np.asarray(x_star, dtype=float)
        e0 = float(np.linalg.norm(x - x_star))

    def rel_error(z):
        if x_star is None:
            return np.nan
        return float(np.linalg.norm(z - x_star)) / e0 if e0 > 0 else 0.0

    N = config.iterations
    trace = IterationTrace.empty(N + 1)
    trace.relative_error[0] = rel_error(x)
    rng = stream(config.seed, "solver")
    estimator = config.estimator() if config.uses_quantile else None
    target = config.target_rel_error if x_star is not None else None
    q = config.q
    length = N + 1
    for j in range(1, N + 1):
        if config.method == "rk":
            x, step = rk_iteration(x, A, b, rng)
            accepted, thr = True, np.inf
        elif config.method == "quantile-rk":
            x_new, accepted, thr = quantile_rk_iteration(x, A, b, q, estimator, rng)
            step = float(np.linalg.norm(x_new - x)) if accepted else 0.0
            x = x_new
        elif config.method == "quantile-sgd":
            x, step = quantile_sgd_iteration(x, A, b, q, estimator, rng)
            accepted, thr = True, step
        else:
            x, step = opt_sgd_iteration(x, A, b, x_star, rng, config.clamp_step)
            accepted, thr = True, np.nan
        trace.step_size[j] = step
        trace.accepted[j] = accepted
        trace.threshold[j] = thr
        err = rel_error(x)
        trace.relative_error[j] = err
        if target is not None and err <= target:
            length = j + 1
            break
    return x, trace.truncate(length)
