"""Generalized linear models fitted by iteratively reweighted least squares.

Besides the coefficients, a fit keeps the converged IRLS weight diagonal and
the re-weighted (Pearson) residuals, which is everything influence scoring
needs to treat the fitted GLM as a linear regression on pseudo-data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import expit

from .sparse import (DiagonalWeights, JitterPolicy, SparseDesignMatrix, solve_spd,
                     sparse_weighted_gram)


class ConvergenceError(RuntimeError):
    """IRLS (or the proximal Newton solver) did not converge."""

    def __init__(self, message: str, deviance_trace: list[float], floored_rows: int = 0):
        super().__init__(message)
        self.deviance_trace = list(deviance_trace)
        self.floored_rows = floored_rows


class GlmFamily:
    """Exponential family with its canonical link.

    Subclasses provide the inverse link, the IRLS weight as a function of the
    fitted mean, and the deviance.  The dispersion is fixed at 1.
    """

    kind: str = ""

    def mean(self, eta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def link(self, mu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def weight(self, mu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def deviance(self, y: np.ndarray, eta: np.ndarray) -> float:
        raise NotImplementedError

    def in_domain(self, mu: np.ndarray) -> np.ndarray:
        return np.isfinite(mu)

    def check_response(self, y: np.ndarray) -> None:
        if not np.all(np.isfinite(y)):
            raise ValueError("response contains non-finite values")

    def initial_mean(self, y: np.ndarray) -> np.ndarray:
        return y.astype(float)

    def __repr__(self) -> str:
        return f"GlmFamily({self.kind!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, GlmFamily) and other.kind == self.kind

    def __hash__(self) -> int:
        return hash(self.kind)


class Linear(GlmFamily):
    kind = "linear"

    def mean(self, eta):
        return np.asarray(eta, dtype=float)

    def link(self, mu):
        return np.asarray(mu, dtype=float)

    def weight(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def deviance(self, y, eta):
        return float(np.sum((y - eta) ** 2))


class Logistic(GlmFamily):
    kind = "logistic"

    def mean(self, eta):
        return expit(eta)

    def link(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.log(mu) - np.log1p(-mu)

    def weight(self, mu):
        mu = np.asarray(mu, dtype=float)
        return mu * (1.0 - mu)

    def in_domain(self, mu):
        mu = np.asarray(mu, dtype=float)
        return (mu >= 0) & (mu <= 1)

    def deviance(self, y, eta):
        # -2 log-likelihood, evaluated without forming log(p) or log(1 - p)
        return float(2.0 * np.sum(np.logaddexp(0.0, eta) - y * eta))

    def check_response(self, y):
        super().check_response(y)
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic family requires responses in {0, 1}")

    def initial_mean(self, y):
        return (y + 0.5) / 2.0


class Poisson(GlmFamily):
    kind = "poisson"

    def mean(self, eta):
        return np.exp(eta)

    def link(self, mu):
        return np.log(mu)

    def weight(self, mu):
        return np.asarray(mu, dtype=float).copy()

    def in_domain(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.isfinite(mu) & (mu > 0)

    def deviance(self, y, eta):
        mu = np.exp(eta)
        ylogy = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0)), 0.0)
        return float(2.0 * np.sum(ylogy - y * eta - (y - mu)))

    def check_response(self, y):
        super().check_response(y)
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("poisson family requires nonnegative integer responses")

    def initial_mean(self, y):
        return y + 0.1


LINEAR, LOGISTIC, POISSON = Linear(), Logistic(), Poisson()
FAMILIES = {f.kind: f for f in (LINEAR, LOGISTIC, POISSON)}


def get_family(family: str | GlmFamily) -> GlmFamily:
    if isinstance(family, GlmFamily):
        return family
    try:
        return FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None


def irls_weight(family: str | GlmFamily, mu_hat) -> np.ndarray | float:
    """IRLS weight for a fitted mean: 1 (linear), p(1-p) (logistic), mu (poisson)."""
    family = get_family(family)
    mu = np.asarray(mu_hat, dtype=float)
    if not np.all(family.in_domain(mu)):
        raise ValueError(f"fitted mean outside the {family.kind} mean domain")
    w = family.weight(mu)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class FitOptions:
    family: str = "logistic"
    tol: float = 1e-8
    max_iters: int = 100
    l1_strength: float = 0.0
    weight_floor: float = 1e-12
    jitter: JitterPolicy = field(default_factory=JitterPolicy)


@dataclass(frozen=True)
class GlmFit:
    family: GlmFamily
    beta: np.ndarray
    fitted_mean: np.ndarray
    irls_weights: DiagonalWeights
    pseudo_residuals: np.ndarray
    deviance_trace: list
    converged: bool
    n_iter: int
    regularization: tuple = ("none", 0.0)
    jitter: float = 0.0

    @property
    def approximate_influence_basis(self) -> bool:
        """True when the coefficients came from a penalized fit."""
        return self.regularization[0] == "l1"

    @property
    def floored_rows(self) -> np.ndarray:
        return self.irls_weights.floored

    def predict_mean(self, X: SparseDesignMatrix) -> np.ndarray:
        return self.family.mean(X.csr @ self.beta)


def pseudo_residuals(fit: GlmFit, y, floor: float | None = None) -> np.ndarray:
    """Re-weighted residuals ``(y - mu) / sqrt(max(v, floor))``."""
    floor = fit.irls_weights.floor if floor is None else floor
    y = np.asarray(y, dtype=float)
    v = np.maximum(fit.irls_weights.entries, floor)
    return (y - fit.fitted_mean) / np.sqrt(v)


def _finish(family, X, y, beta, trace, converged, n_iter, opts, regularization, jitter):
    eta = X.csr @ beta
    mu = family.mean(eta)
    weights = DiagonalWeights(family.weight(mu), floor=opts.weight_floor)
    r = (y - mu) / np.sqrt(weights.floored_entries())
    return GlmFit(family=family, beta=beta, fitted_mean=mu, irls_weights=weights,
                  pseudo_residuals=r, deviance_trace=trace, converged=converged,
                  n_iter=n_iter, regularization=regularization, jitter=jitter)


def fit_from_coefficients(X: SparseDesignMatrix, y, beta, family: str | GlmFamily = "logistic",
                          weight_floor: float = 1e-12) -> GlmFit:
    """Wrap externally obtained coefficients so they can be scored like a fit."""
    family = get_family(family)
    y = np.asarray(y, dtype=float)
    family.check_response(y)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (X.n_cols,):
        raise ValueError(f"beta has shape {beta.shape}, expected ({X.n_cols},)")
    dev = family.deviance(y, X.csr @ beta)
    return _finish(family, X, y, beta, [dev], True, 0, FitOptions(weight_floor=weight_floor),
                   ("external", 0.0), 0.0)


def irls_step(X: SparseDesignMatrix, y, family: GlmFamily, beta, opts: FitOptions):
    """One weighted least-squares update ``(X^T V X)^{-1} X^T V z``."""
    eta = X.csr @ beta
    mu = family.mean(eta)
    v = np.maximum(family.weight(mu), opts.weight_floor)
    z = eta + (y - mu) / v
    G = sparse_weighted_gram(X, v)
    rhs = X.csr.T @ (v * z)
    sol = solve_spd(G, rhs, opts.jitter)
    return sol.x, sol.jitter


def fit_irls(X: SparseDesignMatrix, y, family: str | GlmFamily | None = None,
             opts: FitOptions | None = None) -> GlmFit:
    """Fit a GLM by IRLS (or by proximal Newton when ``l1_strength > 0``).

    Converges when the relative change in deviance drops below ``opts.tol``.
    Raises :class:`ConvergenceError` otherwise; data whose MLE lies at
    infinity (e.g. separable logistic data) end up here, with the number of
    weights that collapsed below the floor attached.
    """
    opts = opts or FitOptions()
    family = get_family(family if family is not None else opts.family)
    y = np.asarray(y, dtype=float)
    if y.shape != (X.n_rows,):
        raise ValueError(f"y has shape {y.shape}, expected ({X.n_rows},)")
    family.check_response(y)
    if opts.l1_strength > 0:
        return _fit_l1(X, y, family, opts)

    if family.kind == "linear":
        G = sparse_weighted_gram(X)
        sol = solve_spd(G, X.csr.T @ y, opts.jitter)
        dev = family.deviance(y, X.csr @ sol.x)
        return _finish(family, X, y, sol.x, [dev], True, 1, opts, ("none", 0.0), sol.jitter)

    # first step from the family's starting means rather than beta = 0
    mu0 = family.initial_mean(y)
    eta0 = family.link(mu0)
    v0 = family.weight(mu0)
    z0 = eta0 + (y - mu0) / v0
    sol = solve_spd(sparse_weighted_gram(X, v0), X.csr.T @ (v0 * z0), opts.jitter)
    beta, jitter = sol.x, sol.jitter
    dev = family.deviance(y, X.csr @ beta)
    trace = [dev]
    change, it = np.inf, 1
    for it in range(2, opts.max_iters + 1):
        new_beta, jitter = irls_step(X, y, family, beta, opts)
        new_dev = family.deviance(y, X.csr @ new_beta)
        halvings = 0
        while not (new_dev <= dev * (1 + 1e-12)) and halvings < 30:
            new_beta = 0.5 * (beta + new_beta)
            new_dev = family.deviance(y, X.csr @ new_beta)
            halvings += 1
        change = abs(dev - new_dev) / max(abs(new_dev), np.finfo(float).tiny)
        beta, dev = new_beta, new_dev
        trace.append(dev)
        if change < opts.tol:
            break
    mu = family.mean(X.csr @ beta)
    floored = int(np.sum(family.weight(mu) < opts.weight_floor))
    if change < opts.tol and floored < X.n_rows:
        return _finish(family, X, y, beta, trace, True, it, opts, ("none", 0.0), jitter)
    if change < opts.tol:
        # every fitted mean sits on the boundary: the deviance stalled only by rounding
        raise ConvergenceError(f"IRLS stalled with {floored} IRLS weights below floor "
                               "(fitted means at the boundary)", trace, floored)
    hint = f"; {floored} IRLS weights below floor (fitted means at the boundary)" if floored else ""
    raise ConvergenceError(f"IRLS did not converge in {opts.max_iters} iterations{hint}",
                           trace, floored)


def _penalty_mask(X: SparseDesignMatrix) -> np.ndarray:
    mask = np.ones(X.n_cols)
    if X.has_intercept:
        mask[0] = 0.0
    return mask


@numba.njit(cache=True)
def _weighted_lasso_cd(G, c, lam, beta, tol, max_sweeps=1000):
    """Minimize ``0.5 b^T G b - c^T b + sum(lam * |b|)`` by cyclic coordinate descent."""
    beta = beta.copy()
    p = beta.size
    g = G @ beta
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(p):
            d = G[j, j]
            old = beta[j]
            if d <= 0.0:
                new = 0.0
            else:
                u = c[j] - g[j] + d * old
                a = abs(u) - lam[j]
                new = (a if u > 0 else -a) / d if a > 0 else 0.0
            if new != old:
                delta = new - old
                for i in range(p):
                    g[i] += G[j, i] * delta  # G is symmetric; row access is contiguous
                beta[j] = new
                step = abs(delta) * np.sqrt(max(d, 0.0))
                if step > biggest:
                    biggest = step
        if biggest < tol:
            break
    return beta


def _fit_l1(X, y, family, opts):
    """Proximal Newton for ``NLL(beta) + l1_strength * ||beta||_1``.

    Each outer step builds the IRLS quadratic ``X^T V X`` around the current
    coefficients and solves the weighted lasso on it by coordinate descent,
    then backtracks on the true objective.  The loss is the summed negative
    log-likelihood (half the deviance), so ``l1_strength = 1`` weights
    likelihood and penalty equally.  The intercept column is unpenalized.
    """
    lam = opts.l1_strength * _penalty_mask(X)
    Xc = X.csr

    def objective(b):
        return 0.5 * family.deviance(y, Xc @ b) + float(np.sum(lam * np.abs(b)))

    beta = np.zeros(X.n_cols)
    if X.has_intercept and family.kind != "linear":
        beta[0] = float(family.link(np.clip(np.mean(family.initial_mean(y)), 1e-6, None)))
    obj = objective(beta)
    trace = [family.deviance(y, Xc @ beta)]
    for it in range(1, opts.max_iters + 1):
        eta = Xc @ beta
        mu = family.mean(eta)
        v = np.maximum(family.weight(mu), opts.weight_floor)
        z = eta + (y - mu) / v
        G = sparse_weighted_gram(X, v)
        c = Xc.T @ (v * z)
        target = _weighted_lasso_cd(np.ascontiguousarray(G), c, lam, beta, 1e-10)
        step = 1.0
        while True:
            cand = beta + step * (target - beta)
            new_obj = objective(cand)
            if new_obj <= obj + 1e-12 * abs(obj) or step < 1e-10:
                break
            step *= 0.5
        change = abs(obj - new_obj) / max(abs(new_obj), np.finfo(float).tiny)
        beta, obj = cand, new_obj
        trace.append(family.deviance(y, Xc @ beta))
        if change < opts.tol:
            return _finish(family, X, y, beta, trace, True, it, opts,
                           ("l1", opts.l1_strength), 0.0)
    raise ConvergenceError(f"proximal Newton did not converge in {opts.max_iters} iterations",
                           trace)
