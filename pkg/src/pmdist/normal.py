"""Continuity-corrected multivariate normal approximation of the pmf.

Rectangle probabilities use Genz's separation of variables: after a
Cholesky factorization the integral over the box becomes an integral over
the unit cube of a product of conditional interval probabilities. The last
variable's interval probability is exact, so only ``d - 1`` dimensions are
integrated, with a randomly shifted rank-1 lattice (baker transform) and
the spread across shifts as the error estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .spm import SPM, check_outcome, moments, validate_spm

DEFAULT_TOL = 1e-6
N_SHIFTS = 8
MIN_POINTS = 2**5
MAX_POINTS = 2**14
PIVOT_TOL = 1e-12
INDEFINITE_TOL = 1e-10
ERROR_FACTOR = 3.0
# samples per vectorized block (rectangles x shifts x points)
_BLOCK = 2**22

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97)


@dataclass(frozen=True)
class Rectangle:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("rectangle bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("rectangle has lower > upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cell(cls, x_star):
        x = np.asarray(x_star, dtype=float)
        return cls(x - 0.5, x + 0.5)


@dataclass(frozen=True)
class RectProb:
    value: float
    error: float
    converged: bool
    degenerate: bool = False

    def __float__(self):
        return self.value


def cholesky_semidefinite(sigma):
    """Lower Cholesky factor that tolerates zero pivots.

    Returns ``(L, zero)`` where ``zero[i]`` marks a pivot below ``PIVOT_TOL``
    (that coordinate is a deterministic function of the earlier ones).
    """
    s = np.asarray(sigma, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"covariance must be square, got shape {s.shape}")
    scale = max(1.0, float(np.max(np.abs(s)))) if s.size else 1.0
    if not np.allclose(s, s.T, rtol=0, atol=INDEFINITE_TOL * scale):
        raise ValueError("covariance is not symmetric")
    d = s.shape[0]
    L = np.zeros_like(s)
    zero = np.zeros(d, dtype=bool)
    for i in range(d):
        piv = s[i, i] - L[i, :i] @ L[i, :i]
        if piv < -INDEFINITE_TOL * scale:
            raise ValueError(f"covariance is not positive semidefinite (pivot {piv:.3e} at {i})")
        if piv < PIVOT_TOL * scale:
            zero[i] = True
            continue
        L[i, i] = np.sqrt(piv)
        L[i + 1 :, i] = (s[i + 1 :, i] - L[i + 1 :, :i] @ L[i, :i]) / L[i, i]
    return L, zero


_U_MIN = np.finfo(float).tiny
_U_MAX = 1.0 - 2.0**-53


def _integrand(L, zero, a, b, w):
    """SOV integrand for rectangles ``a``, ``b`` (K x d) at points ``w`` (S x d-1)."""
    K, d = a.shape
    S = w.shape[0]
    f = np.ones((K, S))
    ys = np.zeros((d, K, S))
    for i in range(d):
        s = np.tensordot(L[i, :i], ys[:i], axes=(0, 0)) if i else np.zeros((K, S))
        if zero[i]:
            inside = (a[:, i, None] <= s) & (s <= b[:, i, None])
            f *= inside
            continue
        lo = (a[:, i, None] - s) / L[i, i]
        hi = (b[:, i, None] - s) / L[i, i]
        dlo = ndtr(lo)
        width = ndtr(hi) - dlo
        f *= width
        if i < d - 1:
            u = np.clip(dlo + w[None, :, i] * width, _U_MIN, _U_MAX)
            ys[i] = ndtri(u)
    return f


def _lattice(n_points, dim, shift):
    k = np.arange(1, n_points + 1)[:, None]
    gen = np.sqrt(np.array(_PRIMES[:dim], dtype=float))
    z = np.mod(k * gen + shift, 1.0)
    return np.abs(2.0 * z - 1.0)


def mvn_rect_probs(mu, sigma, lower, upper, seed: int = 0, tol: float = DEFAULT_TOL,
                   n_shifts: int = N_SHIFTS, max_points: int = MAX_POINTS):
    """Normal probabilities of many rectangles sharing one mean and covariance.

    ``lower``/``upper`` are (K, d). Returns ``(values, errors, converged,
    degenerate)``. Each rectangle's lattice size doubles from ``MIN_POINTS``
    until its error estimate is within ``tol`` or ``max_points`` is reached;
    the shifts for each doubling round are fixed by ``seed`` so a
    rectangle's result does not depend on which others share the call.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    d = mu.shape[0]
    if lower.shape != upper.shape or lower.shape[1] != d:
        raise ValueError("mean, covariance and rectangle dimensions disagree")
    L, zero = cholesky_semidefinite(sigma)
    if L.shape[0] != d:
        raise ValueError("mean, covariance and rectangle dimensions disagree")
    a = lower - mu
    b = upper - mu
    K = a.shape[0]
    values = np.zeros(K)
    errors = np.zeros(K)
    converged = np.zeros(K, dtype=bool)
    qdim = d - 1
    if qdim == 0:
        values[:] = _integrand(L, zero, a, b, np.zeros((1, 0)))[:, 0]
        return values, errors, np.ones(K, dtype=bool), bool(zero.any())
    if qdim > len(_PRIMES):
        raise ValueError(f"dimension {d} exceeds the supported maximum {len(_PRIMES) + 1}")
    rng = np.random.default_rng(seed)
    sizes = []
    n_pts = MIN_POINTS
    while n_pts <= max_points:
        sizes.append(n_pts)
        n_pts *= 2
    shifts = [rng.random((n_shifts, qdim)) for _ in sizes]
    todo = np.arange(K)
    for n_pts, shift in zip(sizes, shifts):
        w = np.vstack([_lattice(n_pts, qdim, sh) for sh in shift])
        chunk = max(1, _BLOCK // w.shape[0])
        for start in range(0, todo.size, chunk):
            idx = todo[start : start + chunk]
            f = _integrand(L, zero, a[idx], b[idx], w)
            per_shift = f.reshape(idx.size, n_shifts, n_pts).mean(axis=2)
            values[idx] = per_shift.mean(axis=1)
            errors[idx] = ERROR_FACTOR * per_shift.std(axis=1, ddof=1) / np.sqrt(n_shifts)
        done = errors[todo] <= tol
        converged[todo[done]] = True
        todo = todo[~done]
        if todo.size == 0:
            break
    return np.clip(values, 0.0, 1.0), errors, converged, bool(zero.any())


def mvn_rect_prob(mu, sigma, rect: Rectangle, seed: int = 0, tol: float = DEFAULT_TOL) -> RectProb:
    """Probability that N(mu, sigma) falls in ``rect``, with an error estimate."""
    v, e, c, deg = mvn_rect_probs(mu, sigma, rect.lower[None], rect.upper[None], seed, tol)
    return RectProb(float(v[0]), float(e[0]), bool(c[0]), deg)


def na_pmf_points(spm: SPM, points, seed: int = 0, tol: float = DEFAULT_TOL):
    """Normal-approximation pmf at each row of ``points`` (k x m support points)."""
    spm = validate_spm(spm)
    pts = np.atleast_2d(np.asarray(points))
    if pts.shape[1] != spm.m or np.any(pts < 0) or np.any(pts.sum(axis=1) != spm.n):
        bad = next(x for x in pts if x.shape[0] != spm.m or np.any(x < 0) or x.sum() != spm.n)
        check_outcome(spm, bad)
    mom = moments(spm)
    xs = pts[:, :-1].astype(float)
    return mvn_rect_probs(mom.mu_star, mom.sigma_star, xs - 0.5, xs + 0.5, seed, tol)


def na_pmf_detail(spm: SPM, x, seed: int = 0, tol: float = DEFAULT_TOL) -> RectProb:
    v, e, c, deg = na_pmf_points(spm, [x], seed, tol)
    return RectProb(float(v[0]), float(e[0]), bool(c[0]), deg)


def na_pmf_at(spm: SPM, x, seed: int = 0, tol: float = DEFAULT_TOL) -> float:
    return na_pmf_detail(spm, x, seed, tol).value


def na_pmf_support(spm: SPM, seed: int = 0, tol: float = DEFAULT_TOL):
    """Normal-approximation pmf over the whole support.

    Returns ``(points, probs)`` with points ordered as
    :meth:`pmdist.exact.PmfArray.support`.
    """
    from .exact import support_points

    spm = validate_spm(spm)
    pts = support_points(spm.n, spm.m)
    vals, _, _, _ = na_pmf_points(spm, pts, seed, tol)
    return pts, vals


def na_cdf_detail(spm: SPM, x, seed: int = 0, tol: float = DEFAULT_TOL) -> RectProb:
    spm = validate_spm(spm)
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.shape[0] not in (spm.m, spm.m - 1):
        raise ValueError(f"cdf point must have length {spm.m} or {spm.m - 1}")
    upper = v[: spm.m - 1] + 0.5
    mom = moments(spm)
    rect = Rectangle(np.full(upper.shape, -np.inf), upper)
    return mvn_rect_prob(mom.mu_star, mom.sigma_star, rect, seed, tol)


def na_cdf_at(spm: SPM, x, seed: int = 0, tol: float = DEFAULT_TOL) -> float:
    return na_cdf_detail(spm, x, seed, tol).value
