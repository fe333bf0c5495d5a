"""Leverage and Cook's distance: exact oracles and the sketched computation.

Scores are "discrepancy times leverage": the squared re-weighted residual
times a leverage ratio.  Two ratios are supported:

``"cook"`` (default)
    ``h / (1 - h)**2``.  This is what substituting the case-deletion update
    into ``(beta_(i) - beta)^T X^T X (beta_(i) - beta)`` yields, so exact
    linear scores equal the refit-based definition.
``"variance_ratio"``
    ``h / (1 - h)``, the ratio ``Var(yhat_i) / Var(rhat_i)``.  Drops one
    factor of ``1 - h`` relative to ``"cook"``.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .glm import GlmFit
from .sketch import ProjectionMatrix, project
from .sparse import (DimensionError, FactorizationError, JitterPolicy, SparseDesignMatrix,
                     SpdFactor, gram, scale_rows, sparse_weighted_gram)

logger = logging.getLogger(__name__)

EXACT_MAX_P = 5000
FORMS = ("cook", "variance_ratio")


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, message: str, null_directions: np.ndarray):
        super().__init__(message)
        self.null_directions = null_directions


@dataclass(frozen=True)
class LeverageVector:
    values: np.ndarray
    clamped_rows: np.ndarray
    raw: np.ndarray | None = None
    jitter: float = 0.0

    def __len__(self) -> int:
        return self.values.size


def clamp_leverage(raw, eps_h: float = 1e-8, jitter: float = 0.0) -> LeverageVector:
    """Clip to ``[0, 1 - eps_h]`` and record which rows hit the upper bound."""
    raw = np.asarray(raw, dtype=np.float64)
    upper = 1.0 - eps_h
    clamped = np.flatnonzero(raw >= upper)
    return LeverageVector(np.clip(raw, 0.0, upper), clamped, raw, jitter)


def leverage_ratio(h, form: str = "cook") -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if form == "cook":
        return h / (1.0 - h) ** 2
    if form == "variance_ratio":
        return h / (1.0 - h)
    raise ValueError(f"unknown form {form!r}; choose from {FORMS}")


def _as_design(X) -> SparseDesignMatrix:
    return X if isinstance(X, SparseDesignMatrix) else SparseDesignMatrix(X)


def exact_leverage(X, weights=None, eps_h: float = 1e-8,
                   jitter: JitterPolicy | None = None) -> LeverageVector:
    """Diagonal of ``V^{1/2} X (X^T V X)^{-1} X^T V^{1/2}``.

    With ``weights=None`` this is the ordinary hat-matrix diagonal.  Meant
    as a desk-scale oracle, so ``p`` is capped at 5000.
    """
    X = _as_design(X)
    if X.n_cols > EXACT_MAX_P:
        raise ValueError(f"exact leverage needs p <= {EXACT_MAX_P}, got {X.n_cols}")
    v = None
    if weights is not None:
        v = np.asarray(getattr(weights, "entries", weights), dtype=np.float64)
        if v.shape != (X.n_rows,):
            raise DimensionError(f"{v.size} weights for {X.n_rows} rows")
    factor = SpdFactor(sparse_weighted_gram(X, v), jitter)
    Xs = X.csr if v is None else sp.csr_matrix(X.csr.multiply(np.sqrt(v)[:, None]))
    raw = np.empty(X.n_rows)
    chunk = max(1, 4_000_000 // max(X.n_cols, 1))
    for start in range(0, X.n_rows, chunk):
        block = Xs[start:start + chunk].toarray()
        raw[start:start + chunk] = factor.inverse_quadratic_rows(block)
    return clamp_leverage(raw, eps_h, factor.jitter)


def pca_leverage(Xc, rtol: float | None = None) -> LeverageVector:
    """Leverage of a column-centered dataset from its principal components.

    ``h_i = sum_p (score_ip / sigma_p)**2`` where ``score = Xc V`` are the
    principal component scores and ``sigma_p`` the singular values.
    """
    Xc = np.asarray(Xc, dtype=np.float64)
    n, p = Xc.shape
    _, s, Vt = np.linalg.svd(Xc, full_matrices=True)
    tol = (max(n, p) * np.finfo(float).eps if rtol is None else rtol) * (s[0] if s.size else 0)
    rank = int(np.sum(s > tol))
    if rank < p:
        raise RankDeficientError(f"centered data has rank {rank} < {p}", Vt[rank:].copy())
    scores = Xc @ Vt.T
    return clamp_leverage(np.sum((scores / s) ** 2, axis=1))


def case_deletion_delta(X, y, fit: GlmFit, i: int, eps_h: float = 1e-8) -> np.ndarray:
    """``beta - beta_(i)`` for a linear fit, without refitting."""
    if fit.family.kind != "linear":
        raise ValueError("case deletion formula applies to linear fits only")
    X = _as_design(X)
    y = np.asarray(y, dtype=np.float64)
    factor = SpdFactor(sparse_weighted_gram(X))
    xi = X.csr[i].toarray().ravel()
    u = factor.solve(xi)
    h = float(xi @ u)
    if h >= 1.0 - eps_h:
        raise ValueError(f"row {i} has leverage {h:.12g}; deleting it leaves the fit undefined")
    resid = y[i] - float(xi @ fit.beta)
    return u * resid / (1.0 - h)


@dataclass
class InfluenceReport:
    influence: np.ndarray
    leverage: LeverageVector
    pseudo_residuals: np.ndarray
    ranking: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.influence.size

    def ranks(self) -> np.ndarray:
        """1-based rank of each sample (1 = most influential)."""
        out = np.empty(self.n, dtype=np.int64)
        out[self.ranking] = np.arange(1, self.n + 1)
        return out

    def flags(self) -> list[str]:
        clamped = set(self.leverage.clamped_rows.tolist())
        floored = set(self.meta.get("floored_rows", []))
        out = []
        for i in range(self.n):
            f = []
            if i in clamped:
                f.append("clamped")
            if i in floored:
                f.append("floored")
            out.append("|".join(f))
        return out

    def top(self, m: int) -> np.ndarray:
        return self.ranking[:m]

    def write_csv(self, path) -> None:
        ranks = self.ranks()
        flags = self.flags()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", "influence", "leverage", "pseudo_residual", "rank", "flags"])
            for i in range(self.n):
                w.writerow([i, repr(float(self.influence[i])), repr(float(self.leverage.values[i])),
                            repr(float(self.pseudo_residuals[i])), int(ranks[i]), flags[i]])

    def write(self, csv_path, extra_meta: dict | None = None) -> Path:
        """Write the CSV and a ``.json`` sidecar next to it; returns the sidecar path."""
        csv_path = Path(csv_path)
        self.write_csv(csv_path)
        meta = dict(self.meta)
        meta.pop("floored_rows", None)
        if extra_meta:
            meta.update(extra_meta)
        sidecar = csv_path.with_suffix(".json")
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return sidecar

    @classmethod
    def read_csv(cls, path) -> "InfluenceReport":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        c = np.array([float(r["influence"]) for r in rows])
        h = np.array([float(r["leverage"]) for r in rows])
        r = np.array([float(r["pseudo_residual"]) for r in rows])
        ranks = np.array([int(row["rank"]) for row in rows])
        clamped = np.array([i for i, row in enumerate(rows) if "clamped" in row["flags"]], dtype=int)
        ranking = np.argsort(ranks, kind="stable")
        return cls(c, LeverageVector(h, clamped), r, ranking, {})


def rank_scores(scores) -> np.ndarray:
    """Descending order with ties broken by ascending index."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def _report(fit: GlmFit, leverage: LeverageVector, form: str, meta: dict) -> InfluenceReport:
    r = np.asarray(fit.pseudo_residuals, dtype=np.float64)
    if r.shape != leverage.values.shape:
        raise DimensionError("leverage and fit describe different numbers of samples")
    c = r**2 * leverage_ratio(leverage.values, form)
    meta = {
        "family": fit.family.kind,
        "form": form,
        "regularization": list(fit.regularization),
        "approximate_influence_basis": fit.approximate_influence_basis,
        "weight_floor": fit.irls_weights.floor,
        "floored_count": int(fit.floored_rows.size),
        "floored_rows": fit.floored_rows.tolist(),
        "clamped_count": int(leverage.clamped_rows.size),
        "leverage_jitter": leverage.jitter,
        **meta,
    }
    return InfluenceReport(c, leverage, r, rank_scores(c), meta)


def exact_cooks(fit: GlmFit, leverage: LeverageVector, form: str = "cook") -> InfluenceReport:
    """Exact (generalized) Cook's distance from a fit and its exact leverage."""
    return _report(fit, leverage, form, {"method": "exact"})


def exact_influence(X, fit: GlmFit, eps_h: float = 1e-8, form: str = "cook") -> InfluenceReport:
    """Convenience: generalized exact leverage under the fit's IRLS weights, then Cook."""
    lev = exact_leverage(X, fit.irls_weights.entries, eps_h)
    return exact_cooks(fit, lev, form)


def influence_sketch(X, fit: GlmFit, omega: ProjectionMatrix, eps_h: float = 1e-8,
                     jitter: JitterPolicy | None = None, form: str = "cook",
                     timings: dict | None = None) -> InfluenceReport:
    """Approximate influence with the pseudo-predictors replaced by ``V^{1/2} X Omega``.

    1. re-weighted residuals come from ``fit``;
    2. ``Z = V^{1/2} (X Omega)``;
    3. ``G = Z^T Z`` is Cholesky-factored (never inverted);
    4. ``h_i = z_i^T G^{-1} z_i`` row by row;
    5. scores ``r_i**2 * ratio(h_i)`` with ``h`` clamped below 1.
    """
    X = _as_design(X)
    if omega.shape[0] != X.n_cols:
        raise DimensionError(f"projection has {omega.shape[0]} rows but X has {X.n_cols} columns")
    timings = {} if timings is None else timings
    t0 = time.perf_counter()
    Y = project(X, omega)
    t1 = time.perf_counter()
    Z = scale_rows(Y, fit.irls_weights.entries, 0.5)
    G = gram(Z)
    try:
        factor = SpdFactor(G, jitter)
    except FactorizationError as exc:
        raise FactorizationError(
            f"{exc}; sketched Gram matrix is singular, try a larger k or a gaussian projection",
            exc.last_jitter) from exc
    t2 = time.perf_counter()
    raw = factor.inverse_quadratic_rows(Z)
    t3 = time.perf_counter()
    timings.update(projection=t1 - t0, gram=t2 - t1, leverage_loop=t3 - t2)
    logger.info("sketch timings: projection %.3fs, gram %.3fs, leverage loop %.3fs",
                t1 - t0, t2 - t1, t3 - t2)
    lev = clamp_leverage(raw, eps_h, factor.jitter)
    return _report(fit, lev, form, {"method": "sketch", "projection": omega.describe()})


def influence_share(report_or_scores, top_fraction: float) -> float:
    """Fraction of total influence held by the top ``ceil(top_fraction * n)`` samples."""
    if not (0 < top_fraction <= 1):
        raise ValueError("top_fraction must lie in (0, 1]")
    c = report_or_scores.influence if isinstance(report_or_scores, InfluenceReport) \
        else np.asarray(report_or_scores, dtype=np.float64)
    total = float(np.sum(c))
    if total <= 0:
        raise ValueError("influence scores are all zero; share is undefined")
    m = int(np.ceil(top_fraction * c.size - 1e-9))
    top = np.sort(c)[::-1][:m]
    return float(np.sum(top) / total)
