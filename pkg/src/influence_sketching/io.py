"""Reading and writing datasets: svmlight/libsvm text and headered CSV."""

from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .sparse import SparseDesignMatrix

FORMATS = ("svmlight", "csv")


class FormatError(ValueError):
    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


def read_svmlight(path, n_features: int | None = None) -> tuple[SparseDesignMatrix, np.ndarray]:
    """Parse ``label idx:value ...`` lines.  Indices are 1-based on disk, 0-based in memory.

    Blank lines and ``#`` comments are skipped.  A repeated index within a
    row is an error, as is any token that is not ``int:float``.
    """
    labels, indptr, indices, values = [], [0], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            head, *tokens = line.split()
            try:
                labels.append(float(head))
            except ValueError:
                raise FormatError(path, lineno, f"label {head!r} is not a number") from None
            seen = set()
            for tok in tokens:
                idx, sep, val = tok.partition(":")
                try:
                    j, v = int(idx), float(val)
                except ValueError:
                    j = None
                if not sep or j is None:
                    raise FormatError(path, lineno, f"malformed feature {tok!r}")
                if j < 1:
                    raise FormatError(path, lineno, f"feature index {j} is not 1-based")
                if j in seen:
                    raise FormatError(path, lineno, f"duplicate feature index {j}")
                seen.add(j)
                indices.append(j - 1)
                values.append(v)
            indptr.append(len(indices))
    if not labels:
        raise FormatError(path, None, "no samples")
    width = (max(indices) + 1) if indices else 0
    if n_features is None:
        n_features = width
    elif width > n_features:
        raise FormatError(path, None, f"feature index {width} exceeds n_features={n_features}")
    csr = sp.csr_matrix((np.array(values, dtype=np.float64), np.array(indices, dtype=np.int64),
                         np.array(indptr, dtype=np.int64)), shape=(len(labels), n_features))
    return SparseDesignMatrix(csr, has_intercept=False), np.array(labels)


def _number(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def write_svmlight(path, X: SparseDesignMatrix, y) -> None:
    """Inverse of :func:`read_svmlight`; values are written with ``repr`` so they round-trip."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.n_rows,):
        raise ValueError(f"{y.size} labels for {X.n_rows} rows")
    with open(path, "w") as fh:
        for i in range(X.n_rows):
            lo, hi = X.row_offsets[i], X.row_offsets[i + 1]
            feats = " ".join(f"{j + 1}:{v!r}" for j, v in
                             zip(X.col_indices[lo:hi].tolist(), X.values[lo:hi].tolist()))
            fh.write(f"{_number(y[i])} {feats}".rstrip() + "\n")


def read_csv(path, label_column: str = "label") -> tuple[SparseDesignMatrix, np.ndarray]:
    """Headered CSV with one label column; every other column is a feature."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(path, None, "no samples") from None
        if label_column not in header:
            raise FormatError(path, 1, f"no {label_column!r} column in header")
        li = header.index(label_column)
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise FormatError(path, lineno, f"expected {len(header)} fields, got {len(rec)}")
            try:
                nums = [float(v) if v.strip() else 0.0 for v in rec]
            except ValueError:
                raise FormatError(path, lineno, "non-numeric field") from None
            labels.append(nums.pop(li))
            rows.append(nums)
    if not labels:
        raise FormatError(path, None, "no samples")
    return SparseDesignMatrix(np.array(rows), has_intercept=False), np.array(labels)


def ingest(path, fmt: str | None = None, **kwargs) -> tuple[SparseDesignMatrix, np.ndarray]:
    """Load a labeled dataset.  ``fmt`` defaults to the file extension (``.csv`` or svmlight)."""
    if fmt is None:
        fmt = "csv" if Path(path).suffix.lower() == ".csv" else "svmlight"
    if fmt == "svmlight":
        return read_svmlight(path, **kwargs)
    if fmt == "csv":
        return read_csv(path, **kwargs)
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")


def write_mask(path, mask) -> None:
    np.savetxt(path, np.asarray(mask, dtype=np.int64), fmt="%d")


def read_mask(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path, dtype=np.int64)).astype(bool)


def fixture_path() -> Path:
    """Path of the bundled 10-sample svmlight file."""
    return Path(str(resources.files("influence_sketching") / "data" / "fixture10.svm"))
