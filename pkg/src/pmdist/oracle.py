"""Slow reference computations that share no code with the FFT path."""

import itertools

import numpy as np

from .errors import PMDError
from .spm import SPM, validate_spm

DEFAULT_ENUM_CAP = 10**7
_CHUNK = 2**16


def enumerate_pmf(spm: SPM, cap: int = DEFAULT_ENUM_CAP) -> dict[tuple[int, ...], float]:
    """Exact pmf by summing over all m**n category assignments.

    Assignments are visited in odometer order, in vectorized chunks: the
    chunk of assignment indices is decoded digit by digit in base m.
    """
    spm = validate_spm(spm)
    n, m = spm.n, spm.m
    total = m**n
    if total > cap:
        raise PMDError(f"enumeration needs {total} assignments, cap is {cap}")
    p = np.asarray(spm.entries)
    out = {pt: 0.0 for pt in _compositions(n, m)}
    rows = np.arange(_CHUNK)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        prob = np.ones(idx.size)
        counts = np.zeros((idx.size, m), dtype=np.int64)
        rem = idx.copy()
        for i in range(n - 1, -1, -1):
            digit = rem % m
            rem //= m
            prob *= p[i, digit]
            counts[rows[: idx.size], digit] += 1
        keys, inverse = np.unique(counts, axis=0, return_inverse=True)
        sums = np.bincount(inverse.ravel(), weights=prob, minlength=len(keys))
        for key, s in zip(keys, sums):
            out[tuple(int(k) for k in key)] += float(s)
    return out


def _compositions(n, m):
    """All nonnegative integer m-tuples summing to n (stars and bars)."""
    for bars in itertools.combinations(range(n + m - 1), m - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(n + m - 1 - prev - 1)
        yield tuple(parts)


def poisson_binomial_pmf(p) -> np.ndarray:
    """Poisson binomial pmf by repeated convolution with (1 - p_i, p_i)."""
    p = np.asarray(p, dtype=float).ravel()
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("success probabilities must lie in [0, 1]")
    out = np.ones(1)
    for pi in p:
        nxt = np.zeros(out.size + 1)
        nxt[:-1] = out * (1 - pi)
        nxt[1:] += out * pi
        out = nxt
    return out


def poisson_binomial_cdf(p) -> np.ndarray:
    return np.minimum(np.cumsum(poisson_binomial_pmf(p)), 1.0)
