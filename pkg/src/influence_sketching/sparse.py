"""Sparse and dense linear-algebra primitives.

The design matrix is held in canonical CSR form (sorted column indices, no
explicit zeros) so iteration order, and therefore every floating-point sum,
is fixed for a given input.  Dense matrices are plain 2-D ``numpy`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class FactorizationError(np.linalg.LinAlgError):
    """A symmetric matrix could not be factored even after jitter."""

    def __init__(self, message: str, last_jitter: float):
        super().__init__(message)
        self.last_jitter = last_jitter


class SparseDesignMatrix:
    """Row-major sparse ``n x p`` design matrix in canonical CSR layout.

    Parameters
    ----------
    matrix : array_like or scipy sparse matrix
        Anything ``scipy.sparse.csr_matrix`` accepts.
    has_intercept : bool, optional
        Whether column 0 is an all-ones column.  Detected when omitted.
    """

    def __init__(self, matrix, has_intercept: bool | None = None):
        csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        for arr in (csr.data, csr.indices, csr.indptr):
            arr.flags.writeable = False
        self._csr = csr
        if has_intercept is None:
            has_intercept = self._column0_is_ones()
        self.has_intercept = bool(has_intercept)

    @classmethod
    def from_csr_arrays(cls, values, col_indices, row_offsets, n_cols: int,
                        has_intercept: bool | None = None) -> "SparseDesignMatrix":
        row_offsets = np.asarray(row_offsets, dtype=np.int64)
        col_indices = np.asarray(col_indices, dtype=np.int64)
        if row_offsets.ndim != 1 or row_offsets.size == 0 or row_offsets[0] != 0:
            raise ValueError("row_offsets must start at 0")
        if np.any(np.diff(row_offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if row_offsets[-1] != col_indices.size:
            raise ValueError("row_offsets[-1] must equal the number of stored entries")
        if col_indices.size and (col_indices.min() < 0 or col_indices.max() >= n_cols):
            raise ValueError(f"column index outside [0, {n_cols})")
        for i in range(row_offsets.size - 1):
            row = col_indices[row_offsets[i]:row_offsets[i + 1]]
            if np.any(np.diff(row) <= 0):
                raise ValueError(f"row {i}: column indices must be strictly increasing")
        csr = sp.csr_matrix((np.asarray(values, dtype=np.float64), col_indices, row_offsets),
                            shape=(row_offsets.size - 1, n_cols))
        return cls(csr, has_intercept=has_intercept)

    def _column0_is_ones(self) -> bool:
        if self.n_cols == 0 or self.n_rows == 0:
            return False
        col0 = self._csr[:, 0]
        return col0.nnz == self.n_rows and bool(np.all(col0.data == 1.0))

    @property
    def n_rows(self) -> int:
        return self._csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self._csr.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def values(self) -> np.ndarray:
        return self._csr.data

    @property
    def col_indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def row_offsets(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def density(self) -> float:
        cells = self.n_rows * self.n_cols
        return self.nnz / cells if cells else 0.0

    @property
    def csr(self) -> sp.csr_matrix:
        """Underlying read-only scipy matrix."""
        return self._csr

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def take_rows(self, rows) -> "SparseDesignMatrix":
        return SparseDesignMatrix(self._csr[np.asarray(rows)], has_intercept=self.has_intercept)

    def with_intercept(self) -> "SparseDesignMatrix":
        """Return a copy with an all-ones column prepended."""
        ones = sp.csr_matrix(np.ones((self.n_rows, 1)))
        return SparseDesignMatrix(sp.hstack([ones, self._csr], format="csr"), has_intercept=True)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseDesignMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and np.array_equal(self.values, other.values))

    def __repr__(self) -> str:
        return (f"SparseDesignMatrix(shape={self.shape}, nnz={self.nnz}, "
                f"density={self.density:.4g}, has_intercept={self.has_intercept})")


@dataclass(frozen=True)
class DiagonalWeights:
    """Nonnegative diagonal entries of an ``n x n`` weight matrix."""

    entries: np.ndarray
    floor: float = 1e-12

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if np.any(~np.isfinite(entries)) or np.any(entries < 0):
            bad = int(np.flatnonzero(~(entries >= 0) | ~np.isfinite(entries))[0])
            raise ValueError(f"weight at row {bad} is negative or not finite")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return self.entries.size

    @property
    def floored(self) -> np.ndarray:
        """Indices of entries below the floor."""
        return np.flatnonzero(self.entries < self.floor)

    def floored_entries(self) -> np.ndarray:
        return np.maximum(self.entries, self.floor)


@dataclass(frozen=True)
class JitterPolicy:
    """Diagonal regularization used when a Cholesky factorization fails.

    Retry ``j`` (1-based) adds ``scale * 10**(j-1) * trace(G) / k`` to the diagonal.
    """

    scale: float = 1e-10
    max_retries: int = 3


class SpdFactor:
    """Cholesky factor of a symmetric positive-definite matrix, possibly jittered."""

    def __init__(self, G: np.ndarray, policy: JitterPolicy | None = None):
        policy = policy or JitterPolicy()
        G = np.asarray(G, dtype=np.float64)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {G.shape}")
        k = G.shape[0]
        base = max(float(np.trace(G)) / k, np.finfo(float).tiny) if k else 1.0
        self.jitter = 0.0
        last = 0.0
        for attempt in range(policy.max_retries + 1):
            lam = 0.0 if attempt == 0 else policy.scale * 10.0 ** (attempt - 1) * base
            last = lam
            try:
                self._cho = scipy.linalg.cho_factor(G + lam * np.eye(k), lower=True,
                                                    check_finite=True)
            except np.linalg.LinAlgError:
                continue
            self.jitter = lam
            self.shape = G.shape
            return
        raise FactorizationError(
            f"matrix is not positive definite after {policy.max_retries} jitter retries "
            f"(last jitter {last:.3g})", last)

    @property
    def lower(self) -> np.ndarray:
        return np.tril(self._cho[0])

    def solve(self, B: np.ndarray) -> np.ndarray:
        B = np.asarray(B, dtype=np.float64)
        if B.shape[0] != self.shape[0]:
            raise DimensionError(f"cannot solve {self.shape} system with rhs {B.shape}")
        return scipy.linalg.cho_solve(self._cho, B, check_finite=False)

    def inverse_quadratic_rows(self, Z: np.ndarray, chunk: int = 8192) -> np.ndarray:
        """``diag(Z G^{-1} Z^T)`` computed row-block by row-block."""
        Z = np.asarray(Z, dtype=np.float64)
        L = self.lower
        out = np.empty(Z.shape[0])
        for start in range(0, Z.shape[0], chunk):
            block = Z[start:start + chunk]
            W = scipy.linalg.solve_triangular(L, block.T, lower=True, check_finite=False)
            out[start:start + chunk] = np.einsum("ij,ij->j", W, W)
        return out


class SpdSolution(NamedTuple):
    x: np.ndarray
    jitter: float


def spmm_dense(X: SparseDesignMatrix, B: np.ndarray) -> np.ndarray:
    """Exact product of a sparse design matrix with a dense matrix."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    if X.n_cols != B.shape[0]:
        raise DimensionError(f"cannot multiply X {X.shape} by B {B.shape}")
    return np.asarray(X.csr @ B)


def scale_rows(A: np.ndarray, d: DiagonalWeights | np.ndarray, power: float) -> np.ndarray:
    """Multiply row ``i`` of ``A`` by ``d_i ** power``."""
    A = np.asarray(A, dtype=np.float64)
    entries = d.entries if isinstance(d, DiagonalWeights) else np.asarray(d, dtype=np.float64)
    if entries.shape[0] != A.shape[0]:
        raise DimensionError(f"{entries.shape[0]} weights for {A.shape[0]} rows")
    if np.any(entries < 0):
        raise ValueError(f"negative weight at row {int(np.flatnonzero(entries < 0)[0])}")
    if power < 0:
        floor = d.floor if isinstance(d, DiagonalWeights) else 0.0
        bad = np.flatnonzero(entries <= floor)
        if bad.size:
            raise ValueError(f"weight at row {int(bad[0])} is not above the floor; "
                             f"cannot raise to power {power}")
    factor = entries ** power
    return A * factor.reshape((-1,) + (1,) * (A.ndim - 1))


def gram(A: np.ndarray) -> np.ndarray:
    """Exactly symmetric ``A^T A``."""
    A = np.asarray(A, dtype=np.float64)
    G = A.T @ A
    return (G + G.T) * 0.5


def solve_spd(G: np.ndarray, B: np.ndarray, jitter_policy: JitterPolicy | None = None) -> SpdSolution:
    """Solve ``G x = B`` for symmetric positive-definite ``G``.

    Returns the solution together with the diagonal jitter that was needed
    (0.0 when the plain factorization succeeded).
    """
    G = np.asarray(G, dtype=np.float64)
    if not np.array_equal(G, G.T):
        if not np.allclose(G, G.T, rtol=1e-12, atol=0):
            raise ValueError("G must be symmetric")
    factor = SpdFactor(G, jitter_policy)
    return SpdSolution(factor.solve(B), factor.jitter)


def sparse_weighted_gram(X: SparseDesignMatrix, weights: np.ndarray | None = None) -> np.ndarray:
    """Dense ``X^T diag(w) X`` for a sparse ``X``; used only when ``p`` is modest."""
    Xs = X.csr
    if weights is not None:
        Xs = sp.csr_matrix(Xs.multiply(np.sqrt(np.asarray(weights))[:, None]))
    G = (Xs.T @ Xs).toarray()
    return (G + G.T) * 0.5
