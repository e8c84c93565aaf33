"""Random corrupted linear systems and ingestion of real ones."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import io
from .linalg import floor_fraction
from .seeding import stream, unit_vector

MATRIX_KINDS = ("gaussian", "coherent", "bernoulli")
CORRUPTION_KINDS = ("uniform", "magnitude", "adversarial")

# Rows shorter than this are treated as empty when ingesting data.
ZERO_ROW_TOL = 1e-14


@dataclass(frozen=True)
class MatrixModel:
    """Random matrix model: rows are normalized to unit Euclidean norm."""

    kind: str
    m: int
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MATRIX_KINDS:
            raise ValueError(f"unknown matrix model {self.kind!r}; choose from {MATRIX_KINDS}")
        if not self.m >= self.n >= 1:
            raise ValueError("matrix model needs m >= n >= 1")


@dataclass(frozen=True)
class CorruptionModel:
    """How the corrupted entries of b are produced.

    ``param`` is the half-width c for ``uniform``, the exponent x (half-width
    10**x) for ``magnitude``, and the phantom offset scale for ``adversarial``.
    ``count`` overrides ``floor(beta * m)`` when given.
    """

    kind: str = "uniform"
    param: float = 5.0
    beta: float = 0.0
    count: Optional[int] = None

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(f"unknown corruption model {self.kind!r}; choose from {CORRUPTION_KINDS}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if self.kind == "uniform" and not self.param > 0:
            raise ValueError("uniform corruption half-width must be positive")
        if self.count is not None and self.count < 0:
            raise ValueError("corruption count must be nonnegative")

    @classmethod
    def parse(cls, text: str, beta: float = 0.0, count: Optional[int] = None) -> "CorruptionModel":
        """Parse ``uniform:C``, ``mag:X`` or ``adversarial:S``."""
        name, _, value = text.partition(":")
        kind = {"uniform": "uniform", "mag": "magnitude", "magnitude": "magnitude",
                "adversarial": "adversarial"}.get(name)
        if kind is None:
            raise ValueError(f"cannot parse corruption model {text!r}")
        default = {"uniform": 5.0, "magnitude": 0.0, "adversarial": 1.0}[kind]
        try:
            param = float(value) if value else default
        except ValueError:
            raise ValueError(f"cannot parse corruption parameter in {text!r}") from None
        return cls(kind, param, beta, count)

    def size(self, m: int) -> int:
        return self.count if self.count is not None else floor_fraction(self.beta, m)

    def describe(self) -> dict:
        return {"kind": self.kind, "param": self.param, "beta": self.beta, "count": self.count}


def _frozen(arr) -> np.ndarray:
    arr = np.array(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CorruptedSystem:
    """A row-normalized system with observed ``b`` and its clean counterpart."""

    A: np.ndarray
    b: np.ndarray
    b_clean: np.ndarray
    x_star: np.ndarray
    corrupt_support: np.ndarray
    beta: float
    x_adv: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        for name in ("A", "b", "b_clean", "x_star", "corrupt_support"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.x_adv is not None:
            object.__setattr__(self, "x_adv", _frozen(self.x_adv))

    @property
    def shape(self):
        return self.A.shape

    @property
    def clean_mask(self) -> np.ndarray:
        mask = np.ones(self.A.shape[0], dtype=bool)
        mask[self.corrupt_support] = False
        return mask


def normalize_rows(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    norms = np.linalg.norm(A, axis=1)
    if np.any(norms == 0):
        raise ValueError("cannot normalize zero row")
    return A / norms[:, None]


def generate_matrix(model: MatrixModel) -> np.ndarray:
    rng = stream(model.seed, "matrix")
    shape = (model.m, model.n)
    if model.kind == "gaussian":
        return normalize_rows(rng.standard_normal(shape))
    if model.kind == "coherent":
        return normalize_rows(rng.random(shape))
    # ±1 entries have row norm sqrt(n) exactly
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return signs / np.sqrt(model.n)


def make_consistent_rhs(A, seed: int):
    """Draw x_star uniformly on the unit sphere and return (x_star, A @ x_star)."""
    A = np.asarray(A, dtype=float)
    x_star = unit_vector(stream(seed, "x_star"), A.shape[1])
    return x_star, A @ x_star


def corrupt(A, x_star, model: CorruptionModel, seed: int) -> CorruptedSystem:
    A = np.asarray(A, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    m = A.shape[0]
    count = model.size(m)
    if count >= m:
        raise ValueError(f"cannot corrupt {count} of {m} rows; need at least one clean row")
    b_clean = A @ x_star
    support = np.sort(stream(seed, "support").choice(m, size=count, replace=False))
    b = b_clean.copy()
    rng = stream(seed, "corruption")
    x_adv = None
    if model.kind == "adversarial":
        scale = np.linalg.norm(x_star) or 1.0
        x_adv = x_star + model.param * scale * unit_vector(rng, A.shape[1])
        b[support] = A[support] @ x_adv
    else:
        half = model.param if model.kind == "uniform" else 10.0 ** model.param
        b[support] += rng.uniform(-half, half, size=count)
    beta = count / m if model.count is not None else model.beta
    return CorruptedSystem(A, b, b_clean, x_star, support, beta, x_adv)


def build_system(matrix: MatrixModel, corruption: CorruptionModel, seed: Optional[int] = None) -> CorruptedSystem:
    """Generate A, a unit-norm x_star and corrupt b, all from one seed."""
    seed = matrix.seed if seed is None else seed
    A = generate_matrix(matrix)
    x_star, _ = make_consistent_rhs(A, seed)
    return corrupt(A, x_star, corruption, seed)


class LoadedSystem(NamedTuple):
    A: np.ndarray
    b: Optional[np.ndarray]
    dropped: np.ndarray


def load_system(matrix_path, rhs_path=None, normalize: bool = True) -> LoadedSystem:
    """Read A (and optionally b) from MatrixMarket or headerless CSV files.

    With ``normalize`` each row and its right-hand side entry are divided by
    the row norm; rows with norm below ``ZERO_ROW_TOL`` are dropped and their
    indices reported.
    """
    A = io.read_matrix(matrix_path)
    b = None
    if rhs_path is not None:
        b = io.read_vector(rhs_path)
        if b.shape[0] != A.shape[0]:
            raise io.SystemFormatError(
                f"dimension mismatch: matrix has {A.shape[0]} rows but rhs has {b.shape[0]} entries"
            )
    dropped = np.empty(0, dtype=np.int64)
    if normalize:
        norms = np.linalg.norm(A, axis=1)
        keep = norms >= ZERO_ROW_TOL
        dropped = np.flatnonzero(~keep)
        A = A[keep] / norms[keep, None]
        if b is not None:
            b = b[keep] / norms[keep]
        if A.shape[0] == 0:
            raise io.SystemFormatError(f"{matrix_path}: every row is zero")
    return LoadedSystem(A, b, dropped)
