"""Random projection matrices and randomly projected datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import DimensionError, SparseDesignMatrix, spmm_dense

KINDS = ("gaussian", "very_sparse")


@dataclass(frozen=True)
class ProjectionSpec:
    """Complete description of a ``p x k`` random projection.

    ``density`` is the probability that a very sparse entry is nonzero;
    ``None`` means ``1/sqrt(p)``.
    """

    p: int
    k: int
    kind: str = "very_sparse"
    density: float | None = None
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.replace("-", "_")
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown projection kind {self.kind!r}; choose from {KINDS}")
        if self.p <= 0:
            raise ValueError("p must be positive")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if kind == "very_sparse":
            s = self.s
            if not (0 < s <= 1):
                raise ValueError(f"density must lie in (0, 1], got {s}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned value")

    @property
    def s(self) -> float:
        return 1.0 / math.sqrt(self.p) if self.density is None else float(self.density)

    def to_dict(self) -> dict:
        return {"p": self.p, "k": self.k, "kind": self.kind, "density": self.s,
                "seed": int(self.seed)}


class ProjectionMatrix:
    """Realized projection; ``columns`` is CSC for very sparse, a dense array otherwise."""

    def __init__(self, spec: ProjectionSpec | None, columns):
        self.spec = spec
        self.columns = columns

    @classmethod
    def from_array(cls, omega) -> "ProjectionMatrix":
        """Wrap an explicit matrix (deterministic test projections)."""
        omega = np.asarray(omega, dtype=np.float64)
        return cls(None, omega)

    @property
    def shape(self) -> tuple[int, int]:
        return self.columns.shape

    def toarray(self) -> np.ndarray:
        if sp.issparse(self.columns):
            return self.columns.toarray()
        return np.asarray(self.columns)

    def describe(self) -> dict:
        if self.spec is None:
            return {"kind": "explicit", "p": self.shape[0], "k": self.shape[1]}
        return self.spec.to_dict()


def column_rng(seed: int, column: int) -> np.random.Generator:
    """Counter-based stream for one column, keyed by ``(seed, column)``."""
    key = (int(column) << 64) | int(seed)
    return np.random.Generator(np.random.Philox(key=key))


def _very_sparse_column(spec: ProjectionSpec, j: int) -> tuple[np.ndarray, np.ndarray]:
    rng = column_rng(spec.seed, j)
    u = rng.random(spec.p)
    s = spec.s
    rows = np.flatnonzero(u < s)
    signs = np.where(u[rows] < 0.5 * s, 1.0, -1.0)
    return rows, signs


def make_projection(spec: ProjectionSpec, columns=None) -> ProjectionMatrix:
    """Realize ``spec``.  Column ``j`` depends only on ``(seed, j)``.

    Very sparse entries are +1, 0, -1 with probabilities s/2, 1-s, s/2.
    ``columns`` optionally realizes the columns in another order; the
    result is identical.
    """
    order = range(spec.k) if columns is None else list(columns)
    if sorted(order) != list(range(spec.k)):
        raise ValueError("columns must be a permutation of range(k)")
    if spec.kind == "gaussian":
        omega = np.empty((spec.p, spec.k))
        for j in order:
            omega[:, j] = column_rng(spec.seed, j).standard_normal(spec.p)
        return ProjectionMatrix(spec, omega)
    parts = {}
    for j in order:
        parts[j] = _very_sparse_column(spec, j)
    indptr = np.zeros(spec.k + 1, dtype=np.int64)
    for j in range(spec.k):
        indptr[j + 1] = indptr[j] + parts[j][0].size
    indices = np.concatenate([parts[j][0] for j in range(spec.k)]) if spec.k else np.empty(0)
    data = np.concatenate([parts[j][1] for j in range(spec.k)]) if spec.k else np.empty(0)
    omega = sp.csc_matrix((data, indices, indptr), shape=(spec.p, spec.k))
    return ProjectionMatrix(spec, omega)


def project(X: SparseDesignMatrix, omega: ProjectionMatrix) -> np.ndarray:
    """Randomly projected dataset ``Y = X Omega`` as a dense ``n x k`` array."""
    if X.n_cols != omega.shape[0]:
        raise DimensionError(f"X has {X.n_cols} columns but the projection has {omega.shape[0]} rows")
    if sp.issparse(omega.columns):
        return np.asarray((X.csr @ omega.columns.tocsc()).toarray())
    return spmm_dense(X, omega.columns)


def recommend_k(n: int, eps: float, p: int | None = None) -> int:
    """Johnson-Lindenstrauss dimension ``ceil(4 ln n / (eps^2/2 - eps^3/3))``.

    Clamped to ``[32, p]``.  Advisory only.
    """
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    k = math.ceil(4.0 * math.log(max(n, 1)) / (eps**2 / 2 - eps**3 / 3))
    k = max(k, 32)
    if p is not None:
        k = min(k, p)
    return k
