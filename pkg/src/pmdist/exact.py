"""Exact pmf and cdf through the inverse DFT of the characteristic function.

The reduced count vector lives on the grid {0..n}^(m-1). Evaluating its
characteristic function at the Fourier frequencies 2*pi*l/(n+1) gives a
grid ``q`` whose discrete Fourier transform, divided by (n+1)^(m-1), is the
pmf itself. Transform length n+1 is arbitrary, so a mixed-radix FFT is used.
"""

from __future__ import annotations

import os
import struct
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import MemoryCapError, NumericalFailure, SPMError, SupportError, method_advice
from .spm import SPM, BlockPartition, check_outcome, validate_spm

DEFAULT_MEM_CAP_CELLS = 2**28
EPS_CLAMP = 1e-10
BINARY_MAGIC = b"PMD1"


def grid_cells(n: int, m: int) -> int:
    return (n + 1) ** (m - 1)


def check_grid(n: int, m: int, mem_cap_cells: int | None = None) -> int:
    cap = DEFAULT_MEM_CAP_CELLS if mem_cap_cells is None else mem_cap_cells
    cells = grid_cells(n, m)
    # exclusive bound: a grid of exactly ``cap`` cells is already refused
    if cells >= cap:
        raise MemoryCapError(cells, cap, method_advice(n, m))
    return cells


def _workers(threads):
    if threads is None:
        return os.cpu_count() or 1
    return max(1, int(threads))


@dataclass(frozen=True, eq=False)
class CFGrid:
    values: np.ndarray
    omega: float


@dataclass(frozen=True, eq=False)
class PmfArray:
    """Dense pmf over the reduced grid, indexed by ``x* = x[:m-1]``.

    ``clamped_mass`` reports the total negative round-off that was set to
    zero during cleanup.
    """

    values: np.ndarray
    n: int
    m: int
    clamped_mass: float = 0.0
    _support: tuple | None = field(default=None, repr=False, compare=False)

    def at(self, x) -> float:
        x = np.asarray(x, dtype=np.int64)
        if x.shape != (self.m,):
            raise SupportError(f"outcome must have length m={self.m}")
        if np.any(x < 0) or x.sum() != self.n:
            raise SupportError(f"outcome {x.tolist()} is not in the support (n={self.n})")
        return float(self.values[tuple(x[:-1])])

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """All support points as an (h, m) int array with their probabilities.

        Points are in lexicographic order of ``x*``.
        """
        if self._support is None:
            pts = support_points(self.n, self.m)
            probs = self.values[tuple(pts[:, :-1].T)]
            object.__setattr__(self, "_support", (pts, probs))
        return self._support

    def to_csv(self, path):
        pts, probs = self.support()
        with open(path, "w") as fh:
            fh.write(",".join(f"x{j + 1}" for j in range(self.m - 1)) + ",p\n")
            for pt, p in zip(pts, probs):
                fh.write(",".join(str(int(c)) for c in pt[:-1]) + "," + format(float(p), ".17g") + "\n")

    def to_bytes(self) -> bytes:
        head = BINARY_MAGIC + struct.pack("<II", self.n, self.m)
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "PmfArray":
        if data[:4] != BINARY_MAGIC:
            raise ValueError("not a PMD1 pmf file")
        n, m = struct.unpack("<II", data[4:12])
        shape = (n + 1,) * (m - 1)
        vals = np.frombuffer(data[12:], dtype="<f8")
        if vals.size != grid_cells(n, m):
            raise ValueError(f"expected {grid_cells(n, m)} values, found {vals.size}")
        vals = vals.reshape(shape).copy()
        vals.setflags(write=False)
        return cls(vals, n, m)


def support_points(n: int, m: int) -> np.ndarray:
    """Every nonnegative integer m-vector summing to n, lexicographic in x*."""
    pts = np.zeros((1, 0), dtype=np.int64)
    used = np.zeros(1, dtype=np.int64)
    for _ in range(m - 1):
        room = n - used + 1
        parent = np.repeat(np.arange(len(pts)), room)
        offsets = np.arange(room.sum()) - np.repeat(np.cumsum(room) - room, room)
        pts = np.column_stack([pts[parent], offsets])
        used = used[parent] + offsets
    return np.column_stack([pts, n - used])


def _index_sum(n: int, d: int) -> np.ndarray:
    grids = np.ogrid[tuple(slice(0, n + 1) for _ in range(d))]
    total = np.zeros((n + 1,) * d, dtype=np.int64)
    for g in grids:
        total = total + g
    return total


def _cf_slab(p: np.ndarray, z: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """q(l) for l_1 in [lo, hi) and all other coordinates."""
    n, m = p.shape
    d = m - 1
    shape = (hi - lo,) + (n + 1,) * (d - 1)
    zs = [z[lo:hi].reshape((-1,) + (1,) * (d - 1))]
    for j in range(1, d):
        zs.append(z.reshape((1,) * j + (-1,) + (1,) * (d - 1 - j)))
    q = np.ones(shape, dtype=complex)
    for i in range(n):
        factor = p[i, -1] + p[i, 0] * zs[0]
        for j in range(1, d):
            factor = factor + p[i, j] * zs[j]
        q *= factor
    return q


def cf_grid(spm: SPM, mem_cap_cells: int | None = None, threads: int | None = None) -> CFGrid:
    """Characteristic function of the reduced vector on the Fourier grid.

    Rows are streamed one at a time; the grid is split along its first axis
    across threads. Each cell sees the same sequence of operations whatever
    the split, so the result does not depend on ``threads``.
    """
    spm = validate_spm(spm)
    n, m = spm.n, spm.m
    check_grid(n, m, mem_cap_cells)
    omega = 2 * np.pi / (n + 1)
    z = np.exp(1j * omega * np.arange(n + 1))
    p = np.asarray(spm.entries)
    workers = min(_workers(threads), n + 1)
    if workers == 1:
        q = _cf_slab(p, z, 0, n + 1)
    else:
        edges = np.linspace(0, n + 1, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda k: _cf_slab(p, z, edges[k], edges[k + 1]), range(workers)))
        q = np.concatenate(parts, axis=0)
    q.setflags(write=False)
    return CFGrid(q, omega)


def pmf_full(
    spm: SPM,
    mem_cap_cells: int | None = None,
    eps_clamp: float = EPS_CLAMP,
    threads: int | None = None,
) -> PmfArray:
    """Whole pmf on the (n+1)^(m-1) grid.

    Cells outside the support are set to exactly zero. Negative values above
    ``-eps_clamp`` are round-off and clamped to zero without renormalizing;
    anything more negative raises :class:`NumericalFailure`.
    """
    spm = validate_spm(spm)
    n, m = spm.n, spm.m
    grid = cf_grid(spm, mem_cap_cells, threads)
    d = m - 1
    raw = scipy.fft.fftn(grid.values, workers=_workers(threads))
    vals = raw.real / float(n + 1) ** d
    vals[_index_sum(n, d) > n] = 0.0
    lowest = vals.min()
    if lowest <= -eps_clamp:
        raise NumericalFailure(
            f"pmf has value {lowest:.3e} below the clamp threshold -{eps_clamp:g} (n={n}, m={m})"
        )
    neg = vals < 0
    clamped = float(np.abs(vals[neg]).sum())
    vals[neg] = 0.0
    np.minimum(vals, 1.0, out=vals)
    vals.setflags(write=False)
    return PmfArray(vals, n, m, clamped)


_cache: "weakref.WeakKeyDictionary[SPM, PmfArray]" = weakref.WeakKeyDictionary()


def cached_pmf(spm: SPM, mem_cap_cells: int | None = None, threads: int | None = None) -> PmfArray:
    spm = validate_spm(spm)
    check_grid(spm.n, spm.m, mem_cap_cells)
    arr = _cache.get(spm)
    if arr is None:
        arr = pmf_full(spm, mem_cap_cells, threads=threads)
        _cache[spm] = arr
    return arr


def pmf_at(spm: SPM, x, mem_cap_cells: int | None = None) -> float:
    spm = validate_spm(spm)
    x = check_outcome(spm, x)
    return float(cached_pmf(spm, mem_cap_cells).values[tuple(x[:-1])])


def cdf_at(spm: SPM, x, mem_cap_cells: int | None = None) -> float:
    """P(X_j <= x_j for j < m); the last coordinate is left free.

    ``x`` may have length m or m - 1. Coordinates above n are treated as n.
    """
    spm = validate_spm(spm)
    v = np.asarray(x)
    if v.ndim != 1 or v.shape[0] not in (spm.m, spm.m - 1):
        raise SupportError(f"cdf point must have length {spm.m} or {spm.m - 1}")
    v = v[: spm.m - 1]
    if np.any(v < 0):
        return 0.0
    v = np.minimum(np.floor(v).astype(np.int64), spm.n)
    vals = cached_pmf(spm, mem_cap_cells).values
    return float(vals[tuple(slice(0, int(c) + 1) for c in v)].sum())


def _check_partition(spm: SPM, partition: BlockPartition):
    rows = sorted(i for r, _ in partition for i in r)
    cols = sorted(j for _, c in partition for j in c)
    if rows != list(range(spm.n)) or cols != list(range(spm.m)):
        raise SPMError("block partition does not cover the SPM's rows and columns exactly once")
    mask = np.zeros(spm.entries.shape, dtype=bool)
    for r, c in partition:
        mask[np.ix_(r, c)] = True
    if np.any(spm.entries[~mask] != 0):
        raise SPMError("SPM has nonzero entries outside the partition's blocks")


def pmf_blockwise(spm: SPM, partition: BlockPartition, x, mem_cap_cells: int | None = None) -> float:
    """Joint pmf as the product of independent per-block pmfs."""
    spm = validate_spm(spm)
    x = check_outcome(spm, x)
    _check_partition(spm, partition)
    prob = 1.0
    for rows, cols in partition:
        xk = x[list(cols)]
        nk = len(rows)
        if xk.sum() != nk:
            return 0.0
        if nk == 0:
            continue
        if len(cols) == 1:
            continue
        sub = validate_spm(spm.entries[np.ix_(rows, cols)])
        prob *= pmf_at(sub, xk, mem_cap_cells)
    return prob


def _batch_values(p, xs, eps_clamp=EPS_CLAMP):
    """pmf of each stacked SPM ``p[k]`` (same n, m) at ``xs[k]``."""
    K, n, m = p.shape
    d = m - 1
    z = np.exp(1j * 2 * np.pi / (n + 1) * np.arange(n + 1))
    zs = [z.reshape((1,) + (1,) * j + (-1,) + (1,) * (d - 1 - j)) for j in range(d)]
    q = np.ones((K,) + (n + 1,) * d, dtype=complex)
    bshape = (K,) + (1,) * d
    for i in range(n):
        factor = p[:, i, -1].reshape(bshape) + p[:, i, 0].reshape(bshape) * zs[0]
        for j in range(1, d):
            factor = factor + p[:, i, j].reshape(bshape) * zs[j]
        q *= factor
    vals = scipy.fft.fftn(q, axes=tuple(range(1, d + 1))).real / float(n + 1) ** d
    sel = (np.arange(K),) + tuple(np.array([x[j] for x in xs]) for j in range(d))
    picked = vals[sel]
    if picked.min() <= -eps_clamp:
        raise NumericalFailure(f"pmf value {picked.min():.3e} below the clamp threshold -{eps_clamp:g}")
    return np.maximum(picked, 0.0)


def pmf_at_many(spms, xs, mem_cap_cells: int | None = None) -> np.ndarray:
    """Exact pmf of many independent PMDs, each at its own support point.

    SPMs with the same shape are stacked so their characteristic-function
    grids and transforms are computed together; the per-cell arithmetic is
    the same as :func:`pmf_full`.
    """
    mats = [np.asarray(validate_spm(s).entries) for s in spms]
    pts = [np.asarray(x, dtype=np.int64) for x in xs]
    if len(mats) != len(pts):
        raise ValueError("need one outcome per SPM")
    out = np.empty(len(mats))
    buckets: dict[tuple[int, int], list[int]] = {}
    for k, (p, x) in enumerate(zip(mats, pts)):
        n, m = p.shape
        if x.shape != (m,) or np.any(x < 0) or x.sum() != n:
            raise SupportError(f"outcome {x.tolist()} is not in the support of SPM {k} (n={n}, m={m})")
        buckets.setdefault((n, m), []).append(k)
    cap = DEFAULT_MEM_CAP_CELLS if mem_cap_cells is None else mem_cap_cells
    for (n, m), members in buckets.items():
        cells = check_grid(n, m, mem_cap_cells)
        step = max(1, cap // cells)
        for start in range(0, len(members), step):
            idx = members[start : start + step]
            out[idx] = _batch_values(np.stack([mats[k] for k in idx]), [pts[k] for k in idx])
    return out
