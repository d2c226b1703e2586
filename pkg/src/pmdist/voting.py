"""Election summaries of a PMD: who wins, how often nobody does, likeliest outcomes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import simulation
from .exact import cached_pmf
from .normal import DEFAULT_TOL, na_pmf_support
from .spm import SPM, validate_spm

METHODS = ("exact", "na", "sim")


@dataclass(frozen=True)
class WinnerProbabilities:
    probs: np.ndarray
    tie: float
    method: str

    def to_dict(self):
        return {"winner_probs": [float(p) for p in self.probs], "tie_prob": float(self.tie)}


@dataclass(frozen=True)
class ModePoint:
    x: np.ndarray
    p: float

    def to_dict(self):
        return {"x": [int(c) for c in self.x], "p": float(self.p)}


def _winners(points: np.ndarray) -> np.ndarray:
    """Index of the strict unique maximizer of each row, or -1 for a tie."""
    top = points.max(axis=1)
    unique = np.count_nonzero(points == top[:, None], axis=1) == 1
    return np.where(unique, points.argmax(axis=1), -1)


def _tally(points, weights, m):
    w = _winners(points)
    probs = np.array([weights[w == j].sum() for j in range(m)])
    return probs


def winner_probabilities(
    spm: SPM,
    method: str = "exact",
    *,
    b: int = 10**6,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    mem_cap_cells: int | None = None,
    threads: int | None = None,
) -> WinnerProbabilities:
    """Probability that each category strictly out-counts every other one.

    The tie probability is whatever mass is left over. With ``method="sim"``
    both are empirical frequencies over ``b`` seeded draws.
    """
    spm = validate_spm(spm)
    m = spm.m
    if method == "exact":
        pts, probs = cached_pmf(spm, mem_cap_cells, threads).support()
        wins = _tally(pts, probs, m)
    elif method == "na":
        pts, probs = na_pmf_support(spm, seed=seed, tol=tol)
        wins = _tally(pts, probs, m)
    elif method == "sim":
        cum = simulation._cut_points(spm)

        def block_counts(c, size):
            w = _winners(simulation._draw_block(cum, seed, c, size))
            return np.bincount(w + 1, minlength=m + 1)[1:]

        wins = sum(simulation._map_blocks(block_counts, b, threads)) / b
    else:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    wins = np.asarray(wins, dtype=float)
    return WinnerProbabilities(wins, float(1.0 - wins.sum()), method)


def mode(spm: SPM, mem_cap_cells: int | None = None) -> ModePoint:
    """Most probable outcome; ties go to the lexicographically smallest x*."""
    pts, probs = cached_pmf(validate_spm(spm), mem_cap_cells).support()
    k = int(np.argmax(probs))
    return ModePoint(pts[k].copy(), float(probs[k]))


def q_mode(spm: SPM, q: float, mem_cap_cells: int | None = None) -> ModePoint:
    """Support point whose pmf value sits at the q-quantile of all pmf values.

    With the h support values sorted ascending, the chosen value is the
    ceil(q*h)-th: the smallest value at least as large as a fraction q of
    them. Among points sharing it, the lexicographically smallest x* wins.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie strictly between 0 and 1")
    pts, probs = cached_pmf(validate_spm(spm), mem_cap_cells).support()
    h = len(probs)
    k = min(h, max(1, math.ceil(q * h))) - 1
    target = np.sort(probs)[k]
    idx = int(np.flatnonzero(probs == target)[0])
    return ModePoint(pts[idx].copy(), float(probs[idx]))
