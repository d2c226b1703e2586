"""Estimator-style front end bundling the pmf, cdf, sampling and voting routines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from . import exact, normal, simulation, voting
from .spm import DEFAULT_ROW_TOL, moments, validate_spm

PMF_METHODS = ("exact", "na", "sim")


class PoissonMultinomial(BaseEstimator):
    """Poisson multinomial distribution defined by an SPM.

    >>> pmd = PoissonMultinomial().fit([[.1, .2, .7], [.5, .2, .3]])
    >>> round(pmd.pmf([1, 0, 1]), 4)
    0.38
    """

    def __init__(self, method="exact", b=10**6, seed=0, tol=normal.DEFAULT_TOL,
                 mem_cap_cells=None, threads=None, row_tol=DEFAULT_ROW_TOL):
        self.method = method
        self.b = b
        self.seed = seed
        self.tol = tol
        self.mem_cap_cells = mem_cap_cells
        self.threads = threads
        self.row_tol = row_tol

    def fit(self, P, y=None):
        if self.method not in PMF_METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {PMF_METHODS}")
        P = check_array(P, dtype=float, ensure_2d=True)
        self.spm_ = validate_spm(P, self.row_tol)
        self.n_trials_, self.n_categories_ = self.spm_.n, self.spm_.m
        mom = moments(self.spm_)
        self.mean_ = mom.mu_star
        self.covariance_ = mom.sigma_star
        return self

    def pmf(self, x=None):
        """Probability at ``x``; without ``x`` the full exact pmf array."""
        check_is_fitted(self)
        if x is None:
            if self.method != "exact":
                raise ValueError("the full pmf is only available with method='exact'")
            return exact.cached_pmf(self.spm_, self.mem_cap_cells, self.threads)
        if self.method == "exact":
            return exact.pmf_at(self.spm_, x, self.mem_cap_cells)
        if self.method == "na":
            return normal.na_pmf_at(self.spm_, x, self.seed, self.tol)
        return simulation.sim_pmf_at(self.spm_, x, self.b, self.seed, self.threads).value

    def cdf(self, x):
        check_is_fitted(self)
        if self.method == "na":
            return normal.na_cdf_at(self.spm_, x, self.seed, self.tol)
        if self.method == "sim":
            raise ValueError("cdf is available with method='exact' or 'na'")
        return exact.cdf_at(self.spm_, x, self.mem_cap_cells)

    def sample(self, b=None, seed=None):
        check_is_fitted(self)
        b = self.b if b is None else b
        seed = self.seed if seed is None else seed
        return simulation.sample(self.spm_, b, seed, self.threads).draws

    def winner_probabilities(self):
        check_is_fitted(self)
        return voting.winner_probabilities(self.spm_, self.method, b=self.b, seed=self.seed,
                                           tol=self.tol, mem_cap_cells=self.mem_cap_cells,
                                           threads=self.threads)

    def mode(self):
        check_is_fitted(self)
        return voting.mode(self.spm_, self.mem_cap_cells)

    def q_mode(self, q):
        check_is_fitted(self)
        return voting.q_mode(self.spm_, q, self.mem_cap_cells)

    def score_samples(self, X):
        """Log pmf of each row of ``X``."""
        check_is_fitted(self)
        X = np.atleast_2d(np.asarray(X))
        with np.errstate(divide="ignore"):
            return np.log([self.pmf(x) for x in X])
