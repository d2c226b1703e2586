"""Maximum likelihood for softmax models observed only through group counts.

Each group contributes the PMD probability of its category counts, where
row ``j`` of the group's SPM is the softmax of ``G_i[j] @ beta.T`` with the
last category as baseline. Fitting is BFGS ascent on finite-difference
gradients; standard errors come from a finite-difference Hessian.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exact import pmf_at_many
from .normal import na_pmf_at
from .spm import SPM, SPMError, validate_spm

log = logging.getLogger(__name__)

LOGLIK_FLOOR = 1e-300
Z_95 = 1.96


@dataclass(frozen=True, eq=False)
class AggregatedGroup:
    """Individual covariates (first column the intercept) and the group's counts."""

    covariates: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        x = np.asarray(self.counts)
        if not np.all(np.isfinite(g)):
            raise ValueError("covariates must be finite")
        if not np.all(g[:, 0] == 1):
            raise ValueError("first covariate column must be the intercept (all ones)")
        if x.ndim != 1 or np.any(x < 0) or np.any(x != np.round(x)):
            raise ValueError("counts must be a vector of nonnegative integers")
        x = x.astype(np.int64)
        if x.sum() != g.shape[0]:
            raise ValueError(f"counts sum to {x.sum()} but the group has {g.shape[0]} rows")
        object.__setattr__(self, "covariates", g)
        object.__setattr__(self, "counts", x)

    @property
    def size(self) -> int:
        return self.covariates.shape[0]


@dataclass
class FitResult:
    beta_hat: np.ndarray
    std_errors: np.ndarray | None
    ci_lower: np.ndarray | None
    ci_upper: np.ndarray | None
    loglik: float
    converged: bool
    iterations: int
    diverged: bool = False
    singular_hessian: bool = False
    degenerate_groups: int = 0
    method: str = "exact"
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        """Table layout: one entry per coefficient per non-baseline category."""
        rows = []
        k_cats, n_cov = self.beta_hat.shape
        for k in range(k_cats):
            for v in range(n_cov):
                rows.append(
                    {
                        "category": k + 1,
                        "parameter": f"beta_{k + 1}{v}",
                        "estimate": float(self.beta_hat[k, v]),
                        "se": None if self.std_errors is None else float(self.std_errors[k, v]),
                        "ci_lower": None if self.ci_lower is None else float(self.ci_lower[k, v]),
                        "ci_upper": None if self.ci_upper is None else float(self.ci_upper[k, v]),
                    }
                )
        return {
            "coefficients": rows,
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "diverged": self.diverged,
            "singular_hessian": self.singular_hessian,
            "degenerate_groups": self.degenerate_groups,
            "method": self.method,
            "notes": list(self.notes),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _softmax_rows(covariates: np.ndarray, beta: np.ndarray) -> np.ndarray:
    eta = covariates @ beta.T
    eta = np.column_stack([eta, np.zeros(eta.shape[0])])
    eta -= eta.max(axis=1, keepdims=True)
    w = np.exp(eta)
    return w / w.sum(axis=1, keepdims=True)


def softmax_spm(beta, group) -> SPM:
    """SPM of a group under coefficients ``beta`` ((m-1) x (v+1))."""
    g = group.covariates if isinstance(group, AggregatedGroup) else np.atleast_2d(np.asarray(group, float))
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if beta.shape[1] != g.shape[1]:
        raise ValueError(f"beta has {beta.shape[1]} columns but covariates have {g.shape[1]}")
    if not np.all(np.isfinite(g)):
        raise ValueError("covariates must be finite")
    return validate_spm(_softmax_rows(g, beta))


def _group_probs(beta, groups, method, seed=0):
    beta = np.atleast_2d(beta)
    mats = [_softmax_rows(g.covariates, beta) for g in groups]
    if method == "exact":
        return pmf_at_many(mats, [g.counts for g in groups])
    if method == "na":
        return np.array([na_pmf_at(p, g.counts, seed=seed) for p, g in zip(mats, groups)])
    raise ValueError(f"unknown method {method!r}; choose 'exact' or 'na'")


def loglik_detail(beta, groups, method: str = "exact") -> tuple[float, int]:
    """Log-likelihood and the number of groups whose probability hit the floor."""
    probs = _group_probs(beta, groups, method)
    floored = probs < LOGLIK_FLOOR
    return float(np.log(np.maximum(probs, LOGLIK_FLOOR)).sum()), int(floored.sum())


def loglik(beta, groups, method: str = "exact") -> float:
    return loglik_detail(beta, groups, method)[0]


def _steps(x, h):
    return h * np.maximum(1.0, np.abs(x))


def numerical_gradient(f, x, h=1e-5):
    """Central differences with step ``h * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    hs = _steps(x, h)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = hs.flat[i]
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * hs.flat[i])
    return g


def numerical_hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float).ravel()
    hs = _steps(x, h)
    k = x.size
    H = np.empty((k, k))
    f0 = f(x)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = hs[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / hs[i] ** 2
        for j in range(i):
            ej = np.zeros(k)
            ej[j] = hs[j]
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * hs[i] * hs[j])
    return H


@dataclass
class _Ascent:
    x: np.ndarray
    fx: float
    grad: np.ndarray
    iterations: int
    converged: bool
    diverged: bool


def bfgs_maximize(f, x0, max_iter=500, gtol=1e-5, ftol=1e-10, step=1e-5, max_abs=None,
                  backtrack=0.5, armijo=1e-4) -> _Ascent:
    """Quasi-Newton ascent with backtracking line search.

    Stops when the gradient max-norm drops below ``gtol`` or the relative
    change in ``f`` falls below ``ftol``. If ``max_abs`` is given and any
    coordinate exceeds it in magnitude, the run stops as diverged.
    """
    x = np.asarray(x0, dtype=float).ravel().copy()
    k = x.size
    fx = f(x)
    g = numerical_gradient(f, x, step)
    Hinv = np.eye(k) / max(1.0, np.abs(g).max())
    for it in range(1, max_iter + 1):
        if np.abs(g).max() < gtol:
            return _Ascent(x, fx, g, it - 1, True, False)
        d = Hinv @ g
        slope = g @ d
        if slope <= 0:
            Hinv = np.eye(k) / max(1.0, np.abs(g).max())
            d = Hinv @ g
            slope = g @ d
        t = 1.0
        while True:
            x_new = x + t * d
            f_new = f(x_new)
            if np.isfinite(f_new) and f_new >= fx + armijo * t * slope:
                break
            t *= backtrack
            if t < 1e-14:
                return _Ascent(x, fx, g, it, False, False)
        g_new = numerical_gradient(f, x_new, step)
        s = x_new - x
        y = g - g_new  # gradient change of -f
        rel = abs(f_new - fx) / max(1.0, abs(fx))
        x, fx, g = x_new, f_new, g_new
        if max_abs is not None and np.abs(x).max() > max_abs:
            return _Ascent(x, fx, g, it, False, True)
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1:
                Hinv = np.eye(k) * sy / (y @ y)
            rho = 1.0 / sy
            V = np.eye(k) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        if rel < ftol or np.abs(g).max() < gtol:
            return _Ascent(x, fx, g, it, True, False)
    return _Ascent(x, fx, g, max_iter, False, False)


def _check_groups(groups):
    groups = list(groups)
    if not groups:
        raise ValueError("need at least one group")
    v1 = groups[0].covariates.shape[1]
    m = groups[0].counts.shape[0]
    for k, g in enumerate(groups):
        if g.covariates.shape[1] != v1 or g.counts.shape[0] != m:
            raise ValueError(f"group {k} has a different covariate or category count")
    if m < 2:
        raise SPMError("need at least two categories")
    return groups, m, v1


def fit(groups, init=None, *, method="exact", max_iter=500, gtol=1e-5, ftol=1e-10,
        grad_step=1e-5, hessian_step=1e-4, max_params=200, max_abs_coef=12.0,
        level=0.95) -> FitResult:
    """Maximize the aggregated-count log-likelihood over ``beta``.

    Divergence is declared when a coefficient exceeds ``max_abs_coef`` in
    magnitude or some category is never observed; either makes the MLE
    infinite. Standard errors are omitted when the negative Hessian is not
    positive definite.
    """
    groups, m, v1 = _check_groups(groups)
    shape = (m - 1, v1)
    if shape[0] * shape[1] > max_params:
        raise ValueError(f"{shape[0] * shape[1]} parameters exceed the maximum {max_params}")
    beta0 = np.zeros(shape) if init is None else np.asarray(init, dtype=float).reshape(shape)
    notes = []

    def f(flat):
        return loglik(flat.reshape(shape), groups, method)

    res = bfgs_maximize(f, beta0, max_iter, gtol, ftol, grad_step, max_abs=max_abs_coef)
    beta_hat = res.x.reshape(shape)
    totals = np.sum([g.counts for g in groups], axis=0)
    diverged = res.diverged
    if np.any(totals == 0):
        diverged = True
        notes.append(f"categories {np.flatnonzero(totals == 0) + 1} never observed; MLE is at infinity")
    if res.diverged:
        notes.append(f"coefficients exceeded |beta| > {max_abs_coef}")
    converged = res.converged and not diverged
    _, n_floor = loglik_detail(beta_hat, groups, method)
    se = lo = hi = None
    singular = False
    H = numerical_hessian(f, res.x, hessian_step)
    try:
        np.linalg.cholesky(-H)
        cov = np.linalg.inv(-H)
        se = np.sqrt(np.diag(cov)).reshape(shape)
        z = Z_95 if level == 0.95 else float(norm.ppf(0.5 + level / 2))
        lo, hi = beta_hat - z * se, beta_hat + z * se
    except np.linalg.LinAlgError:
        singular = True
        notes.append("negative Hessian is not positive definite; standard errors omitted")
    if not converged:
        log.warning("aggregated-data fit did not converge (%s)", "; ".join(notes) or "iteration budget")
    return FitResult(beta_hat, se, lo, hi, res.fx, converged, res.iterations, diverged, singular,
                     n_floor, method, notes)


def predict_spm(result: FitResult, group: AggregatedGroup) -> tuple[SPM, float]:
    """Estimated SPM of ``group`` and the probability of its observed counts."""
    spm = softmax_spm(result.beta_hat, group)
    p = float(_group_probs(result.beta_hat, [group], result.method)[0])
    return spm, p


def simulate_groups(beta, n_groups, group_size, seed=0):
    """Synthetic aggregated data: standard-normal covariates, softmax categories."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    m, v1 = beta.shape[0] + 1, beta.shape[1]
    rng = np.random.default_rng(seed)
    groups = []
    for _ in range(n_groups):
        g = np.column_stack([np.ones(group_size), rng.standard_normal((group_size, v1 - 1))])
        p = _softmax_rows(g, beta)
        u = rng.random(group_size)[:, None]
        cat = (u >= np.cumsum(p, axis=1)[:, :-1]).sum(axis=1)
        groups.append(AggregatedGroup(g, np.bincount(cat, minlength=m)))
    return groups


def read_raw_groups(path, m=None) -> list[AggregatedGroup]:
    """Aggregate individual records (group_id, covariate_1..v, category) into groups.

    Categories are labelled 1..m; ``m`` defaults to the largest label seen.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cov_cols = [c for c in reader.fieldnames if c.startswith("covariate_")]
        if "group_id" not in reader.fieldnames or "category" not in reader.fieldnames:
            raise ValueError(f"{path}: need columns group_id, covariate_*, category")
        rows: dict[str, list] = {}
        for rec in reader:
            rows.setdefault(rec["group_id"], []).append(
                ([float(rec[c]) for c in cov_cols], int(rec["category"]))
            )
    m = m or max(cat for recs in rows.values() for _, cat in recs)
    groups = []
    for gid in rows:
        covs = np.array([[1.0] + c for c, _ in rows[gid]])
        cats = np.array([cat for _, cat in rows[gid]])
        if cats.min() < 1 or cats.max() > m:
            raise ValueError(f"{path}: group {gid} has a category outside 1..{m}")
        groups.append(AggregatedGroup(covs, np.bincount(cats - 1, minlength=m)))
    return groups


def read_aggregated(covariates_path, counts_path) -> list[AggregatedGroup]:
    """Pre-aggregated data: per-individual covariates and per-group counts, keyed by group_id."""
    with open(covariates_path, newline="") as fh:
        reader = csv.DictReader(fh)
        cov_cols = [c for c in reader.fieldnames if c != "group_id"]
        covs: dict[str, list] = {}
        for rec in reader:
            covs.setdefault(rec["group_id"], []).append([1.0] + [float(rec[c]) for c in cov_cols])
    with open(counts_path, newline="") as fh:
        reader = csv.DictReader(fh)
        cnt_cols = [c for c in reader.fieldnames if c != "group_id"]
        counts = {rec["group_id"]: [int(rec[c]) for c in cnt_cols] for rec in reader}
    missing = set(covs) ^ set(counts)
    if missing:
        raise ValueError(f"group ids present in only one file: {sorted(missing)[:5]}")
    return [AggregatedGroup(np.array(covs[gid]), np.array(counts[gid])) for gid in counts]


class AggregatedSoftmaxRegression(BaseEstimator):
    """Softmax regression fitted to group-level category counts.

    ``fit(X, y)`` takes ``X`` as a list of per-group covariate matrices
    (without the intercept column when ``fit_intercept`` is true) and ``y``
    as an (h, m) array of counts.
    """

    def __init__(self, method="exact", fit_intercept=True, max_iter=500, gtol=1e-5,
                 ftol=1e-10, grad_step=1e-5, hessian_step=1e-4, max_abs_coef=12.0, level=0.95):
        self.method = method
        self.fit_intercept = fit_intercept
        self.max_iter = max_iter
        self.gtol = gtol
        self.ftol = ftol
        self.grad_step = grad_step
        self.hessian_step = hessian_step
        self.max_abs_coef = max_abs_coef
        self.level = level

    def _groups(self, X, y):
        y = np.atleast_2d(np.asarray(y))
        if len(X) != y.shape[0]:
            raise ValueError(f"{len(X)} covariate matrices but {y.shape[0]} count rows")
        return [AggregatedGroup(self._design(g), c) for g, c in zip(X, y)]

    def _design(self, g):
        g = np.asarray(g, dtype=float)
        if g.ndim == 1:
            g = g[:, None]
        if self.fit_intercept:
            g = np.column_stack([np.ones(g.shape[0]), g])
        return g

    def fit(self, X, y, init=None):
        groups = self._groups(X, y)
        self.fit_result_ = fit(groups, init, method=self.method, max_iter=self.max_iter,
                               gtol=self.gtol, ftol=self.ftol, grad_step=self.grad_step,
                               hessian_step=self.hessian_step, max_abs_coef=self.max_abs_coef,
                               level=self.level)
        self.coef_ = self.fit_result_.beta_hat
        self.n_iter_ = self.fit_result_.iterations
        self.converged_ = self.fit_result_.converged
        self.n_categories_ = self.coef_.shape[0] + 1
        return self

    def predict_proba(self, X):
        """Estimated SPM (n_i x m array) for each group."""
        check_is_fitted(self)
        return [_softmax_rows(self._design(g), self.coef_) for g in X]

    def predict_pmf(self, X, y):
        """Probability of each group's observed counts under the fitted model."""
        check_is_fitted(self)
        return _group_probs(self.coef_, self._groups(X, y), self.method)

    def score(self, X, y):
        check_is_fitted(self)
        return loglik(self.coef_, self._groups(X, y), self.method)
