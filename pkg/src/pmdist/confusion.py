"""Uncertainty in a soft classifier's confusion matrix.

Unit ``i`` of true class ``k`` lands in predicted class ``j`` with the
classifier's probability ``probs[i, j]``. The confusion matrix ``X``
(``X[j, k]`` = units of true class ``k`` predicted as ``j``) is then a
PMD whose SPM is block diagonal, one block per true class, so each column
of ``X`` is an independent PMD and each cell is Poisson binomial.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exact import pmf_at
from .oracle import poisson_binomial_pmf
from .spm import DEFAULT_ROW_TOL, SPM, BlockPartition, SPMError, validate_spm


@dataclass(frozen=True, eq=False)
class ClassifierOutput:
    """Predicted class probabilities (n x m) and true labels in 1..m."""

    probs: np.ndarray
    true_labels: np.ndarray

    def __post_init__(self):
        p = validate_spm(self.probs, DEFAULT_ROW_TOL).entries
        y = np.asarray(self.true_labels)
        if y.shape != (p.shape[0],):
            raise ValueError(f"need one label per unit: {y.shape[0] if y.ndim else 0} labels for {p.shape[0]} units")
        if np.any(y != np.round(y)) or np.any((y < 1) | (y > p.shape[1])):
            raise ValueError(f"true labels must be integers in 1..{p.shape[1]}")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "true_labels", y.astype(np.int64))

    @property
    def m(self) -> int:
        return self.probs.shape[1]

    @property
    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.true_labels - 1, minlength=self.m)

    def class_probs(self, k: int) -> np.ndarray:
        """Probability rows of the units whose true class is ``k`` (1-based)."""
        return self.probs[self.true_labels == k]


def read_classifier_csv(path) -> ClassifierOutput:
    """Read columns true_label, p_1..p_m."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if not header or header[0] != "true_label":
            raise ValueError(f"{path}: first column must be true_label")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no units")
    labels = np.array([int(r[0]) for r in rows])
    probs = np.array([[float(v) for v in r[1:]] for r in rows])
    return ClassifierOutput(probs, labels)


@dataclass(frozen=True)
class ConfusionPMD:
    spm: SPM
    partition: BlockPartition
    order: np.ndarray
    empty_classes: tuple[int, ...]


def build_confusion_pmd(out: ClassifierOutput) -> ConfusionPMD:
    """Block-diagonal n x m^2 SPM with units sorted by true class.

    Block ``k`` holds class ``k``'s probability rows in columns
    ``(k-1)m .. km-1``. ``order`` maps SPM rows back to input units;
    classes without units appear in ``empty_classes``.
    """
    m = out.m
    order = np.argsort(out.true_labels, kind="stable")
    n = order.size
    big = np.zeros((n, m * m))
    blocks = []
    start = 0
    for k in range(1, m + 1):
        nk = int(out.class_sizes[k - 1])
        rows = tuple(range(start, start + nk))
        cols = tuple(range((k - 1) * m, k * m))
        big[start : start + nk, (k - 1) * m : k * m] = out.probs[order[start : start + nk]]
        blocks.append((rows, cols))
        start += nk
    empty = tuple(k for k in range(1, m + 1) if out.class_sizes[k - 1] == 0)
    return ConfusionPMD(validate_spm(big), BlockPartition(tuple(blocks)), order, empty)


def confusion_to_outcome(x) -> np.ndarray:
    """Flatten an m x m confusion matrix into the m^2 count vector of the block SPM."""
    return np.asarray(x).T.ravel()


def _check_matrix(out, x):
    x = np.asarray(x)
    m = out.m
    if x.shape != (m, m):
        raise ValueError(f"confusion matrix must be {m} x {m}, got {x.shape}")
    if np.any(x < 0) or np.any(x != np.round(x)):
        raise ValueError("confusion counts must be nonnegative integers")
    return x.astype(np.int64)


def joint_pmf(out: ClassifierOutput, x, mem_cap_cells: int | None = None) -> float:
    """Probability of the confusion matrix ``x`` (rows predicted, columns true)."""
    x = _check_matrix(out, x)
    sizes = out.class_sizes
    if np.any(x.sum(axis=0) != sizes):
        raise ValueError(f"column sums {x.sum(axis=0).tolist()} differ from class sizes {sizes.tolist()}")
    prob = 1.0
    for k in range(1, out.m + 1):
        if sizes[k - 1] == 0:
            continue
        prob *= pmf_at(out.class_probs(k), x[:, k - 1], mem_cap_cells)
        if prob == 0.0:
            break
    return prob


def _class_column(out, j, k):
    m = out.m
    if not (1 <= j <= m and 1 <= k <= m):
        raise ValueError(f"classes must lie in 1..{m}")
    col = out.class_probs(k)[:, j - 1]
    if col.size == 0:
        raise SPMError(f"true class {k} has no units")
    return col


def cell_marginal_pmf(out: ClassifierOutput, j: int, k: int) -> np.ndarray:
    """Pmf of X[j, k] over 0..n_k (Poisson binomial)."""
    return poisson_binomial_pmf(_class_column(out, j, k))


@dataclass(frozen=True)
class CellInterval:
    cell: tuple[int, int]
    mean: float
    lo: int
    hi: int
    level: float

    def to_dict(self):
        return {"predicted": self.cell[0], "true": self.cell[1], "mean": self.mean,
                "lo": self.lo, "hi": self.hi, "level": self.level}


def quantile_interval(pmf, level: float) -> tuple[int, int]:
    """Equal-tailed interval: smallest c with cdf(c) >= alpha/2 and >= 1 - alpha/2."""
    if not 0 < level < 1:
        raise ValueError("level must lie strictly between 0 and 1")
    cdf = np.cumsum(pmf)
    alpha = 1.0 - level
    # guard the comparison against round-off in the running sum
    slack = 1e-12
    lo = int(np.searchsorted(cdf, alpha / 2 - slack, side="left"))
    hi = int(np.searchsorted(cdf, 1 - alpha / 2 - slack, side="left"))
    last = len(pmf) - 1
    return min(lo, last), min(hi, last)


def cell_interval(out: ClassifierOutput, j: int, k: int, level: float = 0.95) -> CellInterval:
    pmf = cell_marginal_pmf(out, j, k)
    lo, hi = quantile_interval(pmf, level)
    mean = float(np.dot(np.arange(pmf.size), pmf))
    return CellInterval((j, k), mean, lo, hi, level)


def interval_grid(out: ClassifierOutput, level: float = 0.95, with_pmf: bool = False) -> dict:
    """Per-cell mean and interval for every nonempty true class, JSON-ready."""
    cells = []
    for j in range(1, out.m + 1):
        for k in range(1, out.m + 1):
            if out.class_sizes[k - 1] == 0:
                continue
            ci = cell_interval(out, j, k, level)
            entry = ci.to_dict()
            if with_pmf:
                entry["pmf"] = [float(v) for v in cell_marginal_pmf(out, j, k)]
            cells.append(entry)
    return {
        "m": out.m,
        "class_sizes": [int(s) for s in out.class_sizes],
        "empty_classes": [k for k in range(1, out.m + 1) if out.class_sizes[k - 1] == 0],
        "level": level,
        "cells": cells,
    }


def write_interval_json(grid: dict, path):
    with open(path, "w") as fh:
        json.dump(grid, fh, indent=2)
        fh.write("\n")


class ConfusionMatrixUQ(BaseEstimator):
    """Per-cell distributions of a confusion matrix built from soft predictions.

    ``fit(probs, y_true)`` with labels in 1..m stores the data;
    ``mean_`` and the interval bounds ``lower_``/``upper_`` are m x m
    arrays indexed [predicted, true].
    """

    def __init__(self, level=0.95):
        self.level = level

    def fit(self, probs, y_true):
        self.output_ = ClassifierOutput(probs, y_true)
        m = self.output_.m
        self.mean_ = np.zeros((m, m))
        self.lower_ = np.zeros((m, m), dtype=np.int64)
        self.upper_ = np.zeros((m, m), dtype=np.int64)
        for j in range(1, m + 1):
            for k in range(1, m + 1):
                if self.output_.class_sizes[k - 1] == 0:
                    continue
                ci = cell_interval(self.output_, j, k, self.level)
                self.mean_[j - 1, k - 1] = ci.mean
                self.lower_[j - 1, k - 1] = ci.lo
                self.upper_[j - 1, k - 1] = ci.hi
        return self

    def cell_pmf(self, j, k):
        check_is_fitted(self)
        return cell_marginal_pmf(self.output_, j, k)

    def joint_pmf(self, x):
        check_is_fitted(self)
        return joint_pmf(self.output_, x)
