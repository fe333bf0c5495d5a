"""Experiment protocol on planted-noise synthetic data.

The generator imitates a corpus made of many large families of near-duplicate
files plus a long tail of rare families, each rare family marked by a feature
nobody else has.  Rare families sit far from the bulk and therefore have high
leverage.  Label noise is planted per labeling unit: a rare family is one
unit (its labels are wrong together, in training and test alike), every
other row is a unit on its own.

Experiments take a :class:`SyntheticData` (or any dataset with the same
fields) and return an :class:`ExperimentResult`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy import stats
from scipy.optimize import brentq
from scipy.special import expit

from .glm import ConvergenceError, FitOptions, GlmFit, fit_irls
from .influence import EXACT_MAX_P, InfluenceReport, influence_sketch, rank_scores
from .provenance import config_hash, derive_seed, package_version
from .sketch import ProjectionSpec, make_projection, project
from .sparse import SparseDesignMatrix, SpdFactor, gram, sparse_weighted_gram

MECHANISMS = ("uniform_flip", "leverage_biased_flip")
DIRECTIONS = ("both", "one_to_zero")
ABLATION_FRACTIONS = (0.001, 0.01, 0.05, 0.10)
HARNESS_FIT = FitOptions(family="logistic", l1_strength=1.0)
MAX_ATTEMPTS = 5


@dataclass(frozen=True)
class LabelNoise:
    """``rate`` is the expected fraction of flipped training labels.

    ``direction="one_to_zero"`` only turns positives into negatives, a
    labeler that misses but never falsely accuses.
    """

    rate: float = 0.0
    mechanism: str = "uniform_flip"
    direction: str = "both"
    leverage_power: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"noise rate must lie in [0, 1], got {self.rate}")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}; choose from {MECHANISMS}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}; choose from {DIRECTIONS}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Everything that determines a synthetic dataset.

    ``p`` counts the intercept column.  With ``design="families"`` a
    ``rare_family_fraction`` share of the remaining columns are family
    markers; their true coefficients are zero, so they only identify, never
    predict.  ``design="independent"`` draws every row on its own, with a
    per-row density spread lognormally by ``row_length_spread`` around
    ``sparsity`` (files differ a lot in how many features they fire).
    """

    n_train: int = 20000
    n_test: int = 10000
    p: int = 1000
    sparsity: float = 0.0224
    true_beta_sparsity: float = 0.5
    label_noise: LabelNoise = field(default_factory=LabelNoise)
    seed: int = 0
    signal_scale: float = 3.0
    rare_family_fraction: float = 0.4
    rare_family_size: float = 3.0
    n_prototypes: int = 3000
    keep: float = 0.8
    design: str = "families"
    row_length_spread: float = 1.0

    def __post_init__(self):
        if isinstance(self.label_noise, dict):
            object.__setattr__(self, "label_noise", LabelNoise(**self.label_noise))
        for name in ("sparsity", "true_beta_sparsity", "rare_family_fraction", "keep"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.n_train < 2 or self.n_test < 1:
            raise ValueError("need at least 2 training rows and 1 test row")
        if self.p < 2:
            raise ValueError("p must be at least 2 (intercept plus one feature)")
        if self.n_common < 1:
            raise ValueError("rare_family_fraction leaves no ordinary feature columns")
        if self.design not in ("families", "independent"):
            raise ValueError(f"unknown design {self.design!r}")
        if self.n_prototypes < 1 or self.rare_family_size < 0 or self.signal_scale < 0:
            raise ValueError("n_prototypes, rare_family_size and signal_scale must be positive")

    @property
    def n_rare(self) -> int:
        if self.design == "independent":
            return 0
        return int(self.rare_family_fraction * (self.p - 1))

    @property
    def n_common(self) -> int:
        return self.p - 1 - self.n_rare

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticData:
    X_train: SparseDesignMatrix
    y_train: np.ndarray
    X_test: SparseDesignMatrix
    y_test: np.ndarray
    noise_mask: np.ndarray | None = None
    test_noise_mask: np.ndarray | None = None
    true_beta: np.ndarray | None = None
    spec: SyntheticSpec | None = None
    attempts: int = 1

    def __iter__(self):
        return iter((self.X_train, self.y_train, self.X_test, self.y_test, self.noise_mask))

    def describe(self) -> dict:
        if self.spec is not None:
            return {"synthetic": self.spec.to_dict(), "attempts": self.attempts}
        return {"n_train": self.X_train.n_rows, "n_test": self.X_test.n_rows,
                "p": self.X_train.n_cols}


@dataclass
class ExperimentResult:
    mode: str
    metrics: dict
    provenance: dict
    status: str = "ok"
    error: str | None = None
    series: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        out = {"mode": self.mode, "status": self.status, "metrics": self.metrics,
               "provenance": self.provenance}
        if self.error is not None:
            out["error"] = self.error
        return out

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True,
                                         default=_plain) + "\n")


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _provenance(data: SyntheticData, fit_opts: FitOptions | None, **extra) -> dict:
    prov = {"dataset": data.describe(), "version": package_version()}
    if fit_opts is not None:
        prov["fit"] = asdict(fit_opts)
    prov.update(extra)
    prov["config_hash"] = config_hash(prov)
    return prov


# -- generation ------------------------------------------------------------

def _prototypes(rng, m: int, n_common: int, density: float) -> sp.csr_matrix:
    mask = rng.random((m, n_common)) < density
    values = rng.lognormal(0.0, 0.5, size=int(mask.sum()))
    rows, cols = np.nonzero(mask)
    return sp.csr_matrix((values, (rows, cols)), shape=(m, n_common))


def _members(rng, protos: sp.csr_matrix, ids: np.ndarray, keep: float) -> sp.csr_matrix:
    """Noisy copies of prototypes: each feature survives with prob ``keep``, values jitter."""
    B = sp.csr_matrix(protos[ids])
    B.data = B.data * (rng.random(B.nnz) < keep) * rng.lognormal(0.0, 0.1, B.nnz)
    B.eliminate_zeros()
    return B


def _leverage_pair(X: SparseDesignMatrix, Xt: SparseDesignMatrix, seed: int):
    """Leverage of training rows, and of test rows against the training Gram matrix."""
    if X.n_cols <= EXACT_MAX_P:
        G = sparse_weighted_gram(X)
        A, At = X.csr, Xt.csr
    else:
        omega = make_projection(ProjectionSpec(X.n_cols, 512, "gaussian", seed=seed))
        A, At = project(X, omega), project(Xt, omega)
        G = gram(A)
    # tiny ridge: marker columns can be absent from the training rows
    G = G + 1e-8 * max(np.trace(G), 1.0) / G.shape[0] * np.eye(G.shape[0])
    factor = SpdFactor(G)

    def rows(M):
        out = np.empty(M.shape[0])
        step = max(1, 2_000_000 // G.shape[0])
        for s in range(0, M.shape[0], step):
            block = M[s:s + step]
            block = block.toarray() if sp.issparse(block) else block
            out[s:s + step] = factor.inverse_quadratic_rows(block)
        return np.clip(out, 0.0, 1.0)

    return rows(A), rows(At)


def _plant_noise(noise: LabelNoise, rng, y, yt, unit, unit_t, X, Xt, seed):
    n, nt = y.size, yt.size
    if noise.rate == 0.0:
        return np.zeros(n, bool), np.zeros(nt, bool)
    eligible = np.ones(n) if noise.direction == "both" else (y == 1).astype(float)
    eligible_t = np.ones(nt) if noise.direction == "both" else (yt == 1).astype(float)
    target = noise.rate * n
    if target > eligible.sum():
        raise ValueError("noise rate exceeds the number of flippable training labels")
    if noise.mechanism == "uniform_flip":
        prob = min(1.0, noise.rate * n / eligible.sum())
        return ((rng.random(n) < prob) & (eligible > 0),
                (rng.random(nt) < prob) & (eligible_t > 0))

    h, ht = _leverage_pair(X, Xt, derive_seed(seed, "noise-leverage"))
    n_units = int(max(unit.max(initial=-1), unit_t.max(initial=-1))) + 1
    count = np.bincount(unit, minlength=n_units)
    unit_h = np.bincount(unit, weights=h, minlength=n_units) / np.maximum(count, 1)
    # units seen only in test take the leverage of their test rows
    in_family = unit_t >= 0
    count_t = np.bincount(unit_t[in_family], minlength=n_units)
    unit_ht = (np.bincount(unit_t[in_family], weights=ht[in_family], minlength=n_units)
               / np.maximum(count_t, 1))
    unit_h = np.where(count > 0, unit_h, unit_ht)
    w = unit_h ** noise.leverage_power
    flippable = np.bincount(unit, weights=eligible, minlength=n_units)

    def expected(c):
        return float(np.sum(np.minimum(c * w, 1.0) * flippable)) - target

    hi = 1.0
    while expected(hi) < 0:
        hi *= 10.0
    scale = brentq(expected, 0.0, hi, xtol=1e-12)
    unit_flip = rng.random(n_units) < np.minimum(scale * w, 1.0)
    mask = unit_flip[unit] & (eligible > 0)
    # test rows outside any training unit draw their own flip from their leverage
    own = rng.random(nt) < np.minimum(scale * ht ** noise.leverage_power, 1.0)
    mask_t = np.where(in_family, unit_flip[np.maximum(unit_t, 0)], own) & (eligible_t > 0)
    return mask, mask_t


def _independent_rows(rng, spec: SyntheticSpec, m: int) -> sp.csr_matrix:
    width = spec.n_common
    spread = spec.row_length_spread
    row_density = np.minimum(
        spec.sparsity * rng.lognormal(-spread**2 / 2, spread, m) if spread > 0
        else np.full(m, spec.sparsity), 1.0)
    counts = rng.binomial(width, row_density)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    indices = np.concatenate([np.sort(rng.choice(width, c, replace=False)) for c in counts]
                             or [np.empty(0, dtype=np.int64)])
    values = rng.lognormal(0.0, 0.5, indices.size)
    return sp.csr_matrix((values, indices, indptr), shape=(m, width))


def _generate_once(spec: SyntheticSpec, seed: int) -> SyntheticData:
    rng = np.random.default_rng(seed)
    n, nt, n_common, n_rare = spec.n_train, spec.n_test, spec.n_common, spec.n_rare
    if spec.design == "independent":
        A, At = _independent_rows(rng, spec, n), _independent_rows(rng, spec, nt)
        unit_t = np.full(nt, -1)
        unit = np.full(n, -1)
        return _label(spec, rng, seed, A, At, unit, unit_t)

    sizes = 1 + rng.poisson(spec.rare_family_size, n_rare)
    family = np.repeat(np.arange(n_rare), sizes)
    in_train = rng.random(family.size) < n / (n + nt)
    fam_tr, fam_te = family[in_train][:n], family[~in_train][:nt]

    per_row = spec.sparsity * (spec.p - 1)
    marker_share = (fam_tr.size + fam_te.size) / (n + nt)
    density = min(1.0, max(per_row - marker_share, 0.0) / (spec.keep * n_common))
    protos = _prototypes(rng, n_rare + spec.n_prototypes, n_common, density)

    def rows(fam, m):
        common = n_rare + rng.integers(0, spec.n_prototypes, m - fam.size)
        ids = np.concatenate([fam, common])
        B = _members(rng, protos, ids, spec.keep)
        marker = sp.csr_matrix((rng.uniform(0.5, 1.5, fam.size), (np.arange(fam.size), fam)),
                               shape=(m, n_rare))
        order = rng.permutation(m)
        units = np.concatenate([fam, np.full(m - fam.size, -1)])[order]
        return sp.hstack([B, marker], format="csr")[order], units

    A, unit = rows(fam_tr, n)
    At, unit_t = rows(fam_te, nt)
    return _label(spec, rng, seed, A, At, unit, unit_t)


def _label(spec, rng, seed, A, At, unit, unit_t) -> SyntheticData:
    n, nt, n_common, n_rare = spec.n_train, spec.n_test, spec.n_common, spec.n_rare
    X = SparseDesignMatrix(A).with_intercept()
    Xt = SparseDesignMatrix(At).with_intercept()

    beta = np.zeros(spec.p)
    active = rng.random(n_common) < spec.true_beta_sparsity
    beta[1:1 + n_common][active] = rng.standard_normal(int(active.sum())) * spec.signal_scale
    beta[0] = -float(np.median(X.csr @ beta))
    y = (rng.random(n) < expit(X.csr @ beta)).astype(float)
    yt = (rng.random(nt) < expit(Xt.csr @ beta)).astype(float)

    # rows outside a rare family are labeling units of their own
    solo = np.flatnonzero(unit < 0)
    unit = unit.copy()
    unit[solo] = n_rare + np.arange(solo.size)
    mask, mask_t = _plant_noise(spec.label_noise, rng, y, yt, unit, unit_t, X, Xt, seed)
    y = np.where(mask, 1 - y, y)
    yt = np.where(mask_t, 1 - yt, yt)
    return SyntheticData(X, y, Xt, yt, mask, mask_t, beta, spec)


def generate(spec: SyntheticSpec) -> SyntheticData:
    """Draw a dataset.  Unpacks as ``X_train, y_train, X_test, y_test, noise_mask``.

    A draw whose training or test labels are all one class is discarded and
    redrawn from a fresh sub-seed, at most five times.
    """
    for attempt in range(MAX_ATTEMPTS):
        seed = derive_seed(spec.seed, f"synth/attempt-{attempt}")
        data = _generate_once(spec, seed)
        if np.ptp(data.y_train) > 0 and np.ptp(data.y_test) > 0:
            data.attempts = attempt + 1
            return data
    raise ValueError(f"every one of {MAX_ATTEMPTS} draws produced single-class labels")


# -- experiments -----------------------------------------------------------

def accuracy(fit: GlmFit, X: SparseDesignMatrix, y) -> float:
    return float(np.mean((fit.predict_mean(X) > 0.5) == (np.asarray(y) > 0.5)))


def run_ablation(data: SyntheticData, fit_opts: FitOptions | None, report: InfluenceReport,
                 n_ablate: int, mode: str, seed: int = 0,
                 base_fit: GlmFit | None = None) -> ExperimentResult:
    """Delete ``n_ablate`` training rows, refit, and score the untouched test set.

    ``mode="influential"`` deletes the top of the ranking, ``"random"`` a
    uniform sample.  A refit that fails to converge yields a failed result.
    """
    fit_opts = fit_opts or HARNESS_FIT
    n = data.X_train.n_rows
    if not 0 <= n_ablate < n:
        raise ValueError(f"n_ablate must lie in [0, {n}), got {n_ablate}")
    if report.n != n:
        raise ValueError("report and training data describe different numbers of samples")
    if mode == "influential":
        drop = report.top(n_ablate)
    elif mode == "random":
        rng = np.random.default_rng(derive_seed(seed, "ablation/random"))
        drop = rng.choice(n, n_ablate, replace=False)
    else:
        raise ValueError(f"unknown ablation mode {mode!r}")
    prov = _provenance(data, fit_opts, ablation={"mode": mode, "n_ablate": int(n_ablate),
                                                  "seed": int(seed)})
    base = base_fit or fit_irls(data.X_train, data.y_train, opts=fit_opts)
    keep = np.setdiff1d(np.arange(n), drop)
    try:
        refit = fit_irls(data.X_train.take_rows(keep), data.y_train[keep], opts=fit_opts)
    except ConvergenceError as exc:
        return ExperimentResult("ablation", {}, prov, status="failed", error=str(exc))
    base_acc = accuracy(base, data.X_test, data.y_test)
    acc = accuracy(refit, data.X_test, data.y_test)
    metrics = {
        "n_ablate": int(n_ablate),
        "fraction": n_ablate / n,
        "baseline_accuracy": base_acc,
        "accuracy": acc,
        "accuracy_change": acc - base_acc,
        "accuracy_se": math.sqrt(base_acc * (1 - base_acc) / data.X_test.n_rows),
        "beta_l1_displacement": float(np.sum(np.abs(refit.beta - base.beta))),
    }
    return ExperimentResult("ablation", metrics, prov, series={"deleted": np.sort(drop)})


def run_displacement(data: SyntheticData, fit_opts: FitOptions | None, report: InfluenceReport,
                     fractions=ABLATION_FRACTIONS, seed: int = 0,
                     base_fit: GlmFit | None = None) -> ExperimentResult:
    """Influential and random ablation at several sizes; L1 coefficient shift for each."""
    fit_opts = fit_opts or HARNESS_FIT
    base = base_fit or fit_irls(data.X_train, data.y_train, opts=fit_opts)
    n = data.X_train.n_rows
    metrics, runs = {}, []
    for frac in fractions:
        m = max(1, int(round(frac * n)))
        for mode in ("influential", "random"):
            res = run_ablation(data, fit_opts, report, m, mode, seed, base)
            runs.append(res)
            if not res.ok:
                return ExperimentResult("displacement", {}, res.provenance, "failed", res.error)
            metrics[f"{mode}_l1@{frac:g}"] = res.metrics["beta_l1_displacement"]
            metrics[f"{mode}_accuracy_change@{frac:g}"] = res.metrics["accuracy_change"]
    metrics["baseline_accuracy"] = runs[0].metrics["baseline_accuracy"]
    metrics["accuracy_se"] = runs[0].metrics["accuracy_se"]
    prov = _provenance(data, fit_opts, fractions=list(fractions), seed=int(seed))
    return ExperimentResult("displacement", metrics, prov, series={"runs": runs})


def top_overlap(a, b, k: int) -> int:
    return int(np.intersect1d(rank_scores(a)[:k], rank_scores(b)[:k]).size)


def run_reliability(data: SyntheticData, fit_opts: FitOptions | None, proj_spec: ProjectionSpec,
                    seeds=(0, 1), fit: GlmFit | None = None,
                    top_ks=(100, 500)) -> ExperimentResult:
    """Score the same fit with two projections that differ only in seed."""
    fit_opts = fit_opts or HARNESS_FIT
    fit = fit or fit_irls(data.X_train, data.y_train, opts=fit_opts)
    scores = []
    for s in seeds:
        omega = make_projection(replace(proj_spec, seed=int(s)))
        scores.append(influence_sketch(data.X_train, fit, omega).influence)
    a, b = scores
    metrics = {"pearson": float(stats.pearsonr(a, b)[0]),
               "spearman": float(stats.spearmanr(a, b)[0])}
    for k in top_ks:
        if k <= a.size:
            metrics[f"top{k}_overlap"] = top_overlap(a, b, k)
    prov = _provenance(data, fit_opts, projection=proj_spec.to_dict(),
                       seeds=[int(s) for s in seeds])
    return ExperimentResult("reliability", metrics, prov, series={"scores": (a, b)})


def run_skew(report: InfluenceReport, fractions=(0.001, 0.01, 0.05),
             data: SyntheticData | None = None) -> ExperimentResult:
    from .influence import influence_share

    metrics = {}
    for f in fractions:
        metrics[f"share@{f:g}"] = influence_share(report, f)
        metrics[f"concentration@{f:g}"] = metrics[f"share@{f:g}"] / f
    prov = _provenance(data, None) if data is not None else {"version": package_version()}
    prov["report"] = {k: report.meta.get(k) for k in ("method", "form", "projection")}
    return ExperimentResult("skew", metrics, prov)


def auc(scores, labels) -> float | None:
    """Area under the ROC curve (ties count half); ``None`` when one class is empty."""
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = stats.rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def _bucket_stats(mask: np.ndarray, rows: np.ndarray, fitted=None, y=None) -> dict:
    m = rows.size
    out = {"count": int(m)}
    if m == 0:
        out.update(rate=None, se=None, lower=None, upper=None)
        return out
    rate = float(mask[rows].mean())
    se = math.sqrt(rate * (1 - rate) / m)
    out.update(rate=rate, se=se, lower=rate - 2 * se, upper=rate + 2 * se)
    if fitted is not None:
        pred = fitted[rows] > 0.5
        label = y[rows] > 0.5
        out["nominal_false_positive_rate"] = float(np.mean(pred & ~label))
        out["nominal_miss_rate"] = float(np.mean(~pred & label))
    return out


def influence_buckets(report: InfluenceReport, buckets=(0.001, 0.001)) -> dict:
    """Row indices of the very-high, high and not-high influence groups."""
    n = report.n
    very = int(math.ceil(buckets[0] * n - 1e-9))
    high = int(math.ceil(buckets[1] * n - 1e-9))
    order = report.ranking
    return {"very_high": order[:very], "high": order[very:very + high],
            "not_high": order[very + high:]}


def run_mislabel_discrimination(data: SyntheticData, report: InfluenceReport, noise_mask,
                                buckets=(0.001, 0.001), fit: GlmFit | None = None
                                ) -> ExperimentResult:
    """Mislabel rate per influence bucket, and influence vs residual as flip detectors."""
    mask = np.asarray(noise_mask, dtype=bool)
    if mask.shape != (report.n,):
        raise ValueError("noise mask and report describe different numbers of samples")
    groups = influence_buckets(report, buckets)
    fitted = None if fit is None else fit.fitted_mean
    metrics = {}
    for name, rows in groups.items():
        metrics[name] = _bucket_stats(mask, rows, fitted, data.y_train)
    metrics["influential"] = _bucket_stats(
        mask, np.concatenate([groups["very_high"], groups["high"]]), fitted, data.y_train)
    vh, nh = metrics["very_high"], metrics["not_high"]
    metrics["separated"] = bool(vh["rate"] is not None and nh["rate"] is not None
                                and vh["lower"] > nh["upper"])
    metrics["auc_influence"] = auc(report.influence, mask)
    metrics["auc_squared_residual"] = auc(report.pseudo_residuals ** 2, mask)
    prov = _provenance(data, None, buckets=list(buckets),
                       report={k: report.meta.get(k) for k in ("method", "form", "projection")})
    return ExperimentResult("mislabel_discrimination", metrics, prov)


def simulate_variance_ratio(X, reps: int = 100_000, sigma: float = 1.0, seed: int = 0,
                            batch: int = 10_000) -> np.ndarray:
    """Monte Carlo ``Var(yhat_i) / Var(rhat_i)`` for least squares on a fixed design."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    Q, _ = np.linalg.qr(X)
    rng = np.random.default_rng(seed)
    fitted_sum = np.zeros(n)
    fitted_sq = np.zeros(n)
    resid_sum = np.zeros(n)
    resid_sq = np.zeros(n)
    done = 0
    while done < reps:
        m = min(batch, reps - done)
        eps = rng.normal(0.0, sigma, size=(m, n))
        fitted = (eps @ Q) @ Q.T
        resid = eps - fitted
        fitted_sum += fitted.sum(0)
        fitted_sq += (fitted ** 2).sum(0)
        resid_sum += resid.sum(0)
        resid_sq += (resid ** 2).sum(0)
        done += m
    var_f = fitted_sq / reps - (fitted_sum / reps) ** 2
    var_r = resid_sq / reps - (resid_sum / reps) ** 2
    return var_f / var_r


# -- plot data ---------------------------------------------------------------

def _write_rows(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _cell(value) -> str:
    return "" if value is None else repr(float(value))


def plot_data(out_dir, report: InfluenceReport, ablations=(), reliability=None,
              mislabel=None, noise_mask=None, bins: int = 50) -> list[Path]:
    """Per-figure CSVs: influence histogram, ablation curve, reliability scatter,
    mislabel buckets, and mean scores by label status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    c = report.influence
    positive = c[c > 0]
    if positive.size:
        edges = np.logspace(np.log10(positive.min()), np.log10(positive.max()), bins + 1)
        edges[0], edges[-1] = positive.min(), positive.max()  # log round trip can miss the ends
        counts, _ = np.histogram(positive, edges)
        rows = [(repr(float(lo)), repr(float(hi)), int(k)) for lo, hi, k in
                zip(edges[:-1], edges[1:], counts)]
    else:
        rows = []
    written.append(_write_rows(out / "influence_histogram.csv",
                               ["bin_left", "bin_right", "count"], rows))
    if ablations:
        rows = []
        for res in ablations:
            for r in res.series.get("runs", [res]):
                if r.ok:
                    prov = r.provenance["ablation"]
                    m = r.metrics
                    rows.append((prov["mode"], m["n_ablate"], repr(m["fraction"]),
                                 repr(m["accuracy"]), repr(m["accuracy_change"]),
                                 repr(m["beta_l1_displacement"])))
        written.append(_write_rows(out / "ablation_curve.csv",
                                   ["mode", "n_ablate", "fraction", "accuracy",
                                    "accuracy_change", "beta_l1_displacement"], rows))
    if reliability is not None and "scores" in reliability.series:
        a, b = reliability.series["scores"]
        top = set(rank_scores(a)[:500].tolist())
        rows = [(i, repr(float(a[i])), repr(float(b[i])), int(i in top)) for i in range(a.size)]
        written.append(_write_rows(out / "reliability_scatter.csv",
                                   ["sample_id", "influence_run_a", "influence_run_b",
                                    "in_top_500"], rows))
    if mislabel is not None:
        rows = []
        for name in ("very_high", "high", "not_high"):
            b = mislabel.metrics[name]
            keys = ("rate", "se", "lower", "upper", "nominal_false_positive_rate",
                    "nominal_miss_rate")
            rows.append((name, b["count"], *(_cell(b.get(k)) for k in keys)))
        written.append(_write_rows(out / "mislabel_buckets.csv",
                                   ["bucket", "count", "mislabel_rate", "se", "lower", "upper",
                                    "nominal_false_positive_rate", "nominal_miss_rate"], rows))
    if noise_mask is not None:
        mask = np.asarray(noise_mask, dtype=bool)
        r2 = report.pseudo_residuals ** 2
        rows = []
        for label, sel in (("clean", ~mask), ("flipped", mask)):
            if sel.any():
                rows.append((label, int(sel.sum()), repr(float(c[sel].mean() / c.mean())),
                             repr(float(r2[sel].mean() / r2.mean()))))
        written.append(_write_rows(out / "score_by_label_status.csv",
                                   ["label_status", "count", "influence_rescaled",
                                    "squared_residual_rescaled"], rows))
    return written
