"""QuantileSGD when rows arrive one at a time from a Gaussian stream.

Each pair (a, b) has a ~ N(0, I_n); with probability ``beta`` the value b is
produced by an adversary instead of <a, x_star>.  Rows are normalized before
they are used, which leaves both quantile methods unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import quantile
from .seeding import stream
from .solvers import IterationTrace

ADVERSARIES = ("uniform", "phantom", "zero")


class HalfNormal:
    """The law of |Z| for a standard normal Z."""

    mean = math.sqrt(2.0 / math.pi)

    @staticmethod
    def cdf(z: float) -> float:
        return math.erf(z / math.sqrt(2.0)) if z > 0 else 0.0

    @classmethod
    def quantile(cls, q: float) -> float:
        return half_normal_quantile(q)


def half_normal_quantile(q: float, tol: float = 1e-14) -> float:
    """z with P(|Z| <= z) = q, by bisection on erf."""
    if not 0.0 < q < 1.0:
        raise ValueError("half-normal quantile needs q in (0, 1)")
    lo, hi = 0.0, 1.0
    while HalfNormal.cdf(hi) < q:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if HalfNormal.cdf(mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def streaming_feasible(q: float, beta: float, C: float = 1.99) -> bool:
    """Check Phi_{q+beta} < C (1 - 2 beta) sqrt(2/pi).

    Phi is the half-normal quantile function; ``q = 0`` evaluates the small-q
    limit.
    """
    if not 0.0 <= beta < 0.5:
        raise ValueError("beta must lie in [0, 1/2)")
    if q < 0.0 or not 0.0 < q + beta < 1.0:
        raise ValueError("need q >= 0 and 0 < q + beta < 1")
    return half_normal_quantile(q + beta) < C * (1.0 - 2.0 * beta) * HalfNormal.mean


@dataclass
class StreamSource:
    """Generator of (a, b, corrupted) triples.

    ``adversary`` is ``uniform`` (b = <a, x_star> + U[-param, param]),
    ``phantom`` (b = <a, x_adv>) or ``zero`` (b = 0).
    """

    n: int
    beta: float = 0.0
    adversary: str = "uniform"
    param: float = 5.0
    x_adv: Optional[np.ndarray] = None
    sample_size: int = 400
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if self.sample_size < 1:
            raise ValueError("quantile sample size must be at least 1")
        if self.adversary not in ADVERSARIES:
            raise ValueError(f"unknown adversary {self.adversary!r}; choose from {ADVERSARIES}")
        if self.adversary == "phantom" and self.x_adv is None:
            raise ValueError("phantom adversary needs x_adv")
        self._rng = stream(self.seed, "stream")

    def draw(self, count: int, x_star):
        """``count`` raw pairs: rows (count x n), values, corruption flags."""
        rng = self._rng
        a = rng.standard_normal((count, self.n))
        corrupted = rng.random(count) < self.beta
        noise = rng.uniform(-self.param, self.param, size=count)
        b = a @ x_star
        if self.adversary == "uniform":
            bad = b + noise
        elif self.adversary == "phantom":
            bad = a @ self.x_adv
        else:
            bad = np.zeros(count)
        return a, np.where(corrupted, bad, b), corrupted

    def next_pair(self, x_star):
        a, b, corrupted = self.draw(1, x_star)
        return a[0], float(b[0]), bool(corrupted[0])


def next_pair(source: StreamSource, x_star):
    return source.next_pair(np.asarray(x_star, dtype=float))


def _normalized(a, b):
    norms = np.linalg.norm(a, axis=-1)
    return a / norms[..., None], b / norms


def streaming_quantile_sgd(source: StreamSource, q: float, iterations: int, x_star,
                           x0=None, target_rel_error: Optional[float] = None):
    """QuantileSGD where every step sees fresh pairs from ``source``.

    Each iteration draws ``source.sample_size`` pairs used only to set the
    step length, then one more pair that fixes the step direction.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("streaming quantile needs q in (0, 1)")
    x_star = np.asarray(x_star, dtype=float)
    x = np.zeros(source.n) if x0 is None else np.array(x0, dtype=float)
    e0 = float(np.linalg.norm(x - x_star))
    trace = IterationTrace.empty(iterations + 1)
    trace.relative_error[0] = 1.0 if e0 > 0 else 0.0
    s = source.sample_size
    length = iterations + 1
    for j in range(1, iterations + 1):
        a, b, _ = source.draw(s + 1, x_star)
        a, b = _normalized(a, b)
        gamma = quantile(np.abs(a[:s] @ x - b[:s]), q)
        sgn = 1.0 if a[s] @ x - b[s] > 0 else -1.0
        x = x - gamma * sgn * a[s]
        err = float(np.linalg.norm(x - x_star)) / e0 if e0 > 0 else 0.0
        trace.step_size[j] = gamma
        trace.threshold[j] = gamma
        trace.accepted[j] = True
        trace.relative_error[j] = err
        if target_rel_error is not None and err <= target_rel_error:
            length = j + 1
            break
    return x, trace.truncate(length)
