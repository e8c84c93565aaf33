"""Readers and writers for matrices, vectors and iteration traces."""
from __future__ import annotations

import csv
import os

import numpy as np
import scipy.io
import scipy.sparse

MM_HEADER = "%%MatrixMarket"
TRACE_COLUMNS = ("iteration", "relative_error", "step_size", "accepted", "threshold")


class SystemFormatError(ValueError):
    """Raised when a matrix or vector file cannot be parsed."""


def _is_matrix_market(path) -> bool:
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        return fh.readline().startswith(MM_HEADER)


def read_matrix(path) -> np.ndarray:
    """Read a dense 2-d array from MatrixMarket (array or coordinate) or CSV."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    if _is_matrix_market(path):
        try:
            data = scipy.io.mmread(path)
        except Exception as exc:  # scipy raises a mix of ValueError/OSError
            raise SystemFormatError(f"{path}: malformed MatrixMarket file ({exc})") from exc
        if scipy.sparse.issparse(data):
            data = data.toarray()
        arr = np.asarray(data, dtype=float)
    else:
        try:
            arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
        except ValueError as exc:
            raise SystemFormatError(f"{path}: malformed CSV ({exc})") from exc
    if arr.size == 0:
        raise SystemFormatError(f"{path}: empty matrix")
    if not np.all(np.isfinite(arr)):
        raise SystemFormatError(f"{path}: non-finite entries")
    return arr


def read_vector(path) -> np.ndarray:
    arr = read_matrix(path)
    if min(arr.shape) != 1:
        raise SystemFormatError(f"{path}: expected a vector, got shape {arr.shape}")
    return arr.ravel()


def write_matrix(path, A) -> None:
    scipy.io.mmwrite(path, np.asarray(A, dtype=float), symmetry="general", precision=17)


def write_vector(path, v) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for value in np.asarray(v).ravel().tolist():
            fh.write(f"{value!r}\n")


def write_trace(path, trace) -> None:
    """Write an IterationTrace as CSV with the fixed trace header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for k, err, step, acc, thr in zip(
            trace.iteration, trace.relative_error, trace.step_size, trace.accepted, trace.threshold
        ):
            writer.writerow([int(k), repr(float(err)), repr(float(step)), int(acc), repr(float(thr))])


def read_trace(path):
    from .solvers import IterationTrace

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != TRACE_COLUMNS:
            raise SystemFormatError(f"{path}: unexpected trace header {header}")
        rows = list(reader)
    cols = list(zip(*rows)) if rows else [()] * len(TRACE_COLUMNS)
    return IterationTrace(
        iteration=np.array(cols[0], dtype=np.int64),
        relative_error=np.array(cols[1], dtype=float),
        step_size=np.array(cols[2], dtype=float),
        accepted=np.array([int(v) for v in cols[3]], dtype=bool),
        threshold=np.array(cols[4], dtype=float),
    )


def write_rows(path, rows, columns) -> None:
    """Write dict rows as CSV; floats use repr so reruns are byte-identical."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer, np.bool_)):
        return value.item()
    return value
