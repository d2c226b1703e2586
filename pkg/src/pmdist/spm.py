"""Success probability matrices, support points, moments and block structure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import SPMError, SupportError

DEFAULT_ROW_TOL = 1e-6


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SPM:
    """Validated n x m success probability matrix.

    Row ``i`` holds the category probabilities of trial ``i``. Construct
    through :func:`validate_spm`; the stored array is read-only.
    """

    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]

    @property
    def reduced(self) -> np.ndarray:
        """First ``m - 1`` columns (the last category is the dropped one)."""
        return self.entries[:, :-1]

    @property
    def support_size(self) -> int:
        from math import comb

        return comb(self.n + self.m - 1, self.m - 1)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __repr__(self):
        return f"SPM(n={self.n}, m={self.m})"


@dataclass(frozen=True, eq=False)
class Moments:
    mu_star: np.ndarray
    sigma_star: np.ndarray


@dataclass(frozen=True)
class BlockPartition:
    """Row/column index sets of independent blocks, ordered by first column.

    A block may have an empty row set when a category has zero probability
    in every row.
    """

    blocks: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)


def validate_spm(raw, row_tol: float = DEFAULT_ROW_TOL) -> SPM:
    """Check a raw matrix and return an :class:`SPM` with exactly normalized rows.

    Rows whose sum is within ``row_tol`` of one are rescaled; anything further
    off is rejected, as are negative, NaN or infinite entries.
    """
    if isinstance(raw, SPM):
        return raw
    a = np.asarray(raw, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise SPMError(f"SPM must be two-dimensional, got shape {a.shape}")
    n, m = a.shape
    if n < 1 or m < 2:
        raise SPMError(f"SPM needs n >= 1 rows and m >= 2 columns, got {n}x{m}")
    if not np.all(np.isfinite(a)):
        i, j = np.argwhere(~np.isfinite(a))[0]
        raise SPMError(f"non-finite entry at row {i}, column {j}")
    if np.any(a < 0) or np.any(a > 1):
        i, j = np.argwhere((a < 0) | (a > 1))[0]
        raise SPMError(f"entry {float(a[i, j])!r} at row {i}, column {j} is outside [0, 1]")
    sums = a.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > row_tol)
    if bad.size:
        i = int(bad[0])
        raise SPMError(f"row {i} sums to {float(sums[i])!r}, not 1 (tolerance {row_tol})")
    return SPM(_frozen(a / sums[:, None]))


def check_outcome(spm: SPM, x) -> np.ndarray:
    """Return ``x`` as an int64 vector after checking it lies in the support."""
    v = np.asarray(x)
    if v.ndim != 1 or v.shape[0] != spm.m:
        raise SupportError(f"outcome must have length m={spm.m}, got shape {v.shape}")
    if not np.all(np.equal(np.mod(v, 1), 0)):
        raise SupportError(f"outcome {v.tolist()} has non-integer entries")
    v = v.astype(np.int64)
    if np.any(v < 0):
        raise SupportError(f"outcome {v.tolist()} has negative entries")
    if v.sum() != spm.n:
        raise SupportError(f"outcome {v.tolist()} sums to {int(v.sum())}, expected n={spm.n}")
    return v


def moments(spm: SPM) -> Moments:
    """Mean and covariance of the reduced count vector."""
    ps = spm.reduced
    mu = ps.sum(axis=0)
    sigma = np.diag(mu) - ps.T @ ps
    sigma = (sigma + sigma.T) / 2
    return Moments(_frozen(mu), _frozen(sigma))


def full_moments(spm: SPM) -> Moments:
    """Mean and (singular) covariance of the full m-vector."""
    p = spm.entries
    mu = p.sum(axis=0)
    return Moments(_frozen(mu), _frozen(np.diag(mu) - p.T @ p))


def detect_blocks(spm: SPM, zero_tol: float = 0.0) -> BlockPartition:
    """Finest independent row/column blocks, from the bipartite nonzero graph."""
    n, m = spm.n, spm.m
    rows, cols = np.nonzero(np.abs(spm.entries) > zero_tol)
    graph = coo_matrix(
        (np.ones(rows.size), (rows, n + cols)), shape=(n + m, n + m)
    )
    _, labels = connected_components(graph, directed=False)
    row_labels, col_labels = labels[:n], labels[n:]
    blocks = []
    seen = set()
    for j in range(m):
        lab = col_labels[j]
        if lab in seen:
            continue
        seen.add(lab)
        blocks.append(
            (
                tuple(int(i) for i in np.flatnonzero(row_labels == lab)),
                tuple(int(k) for k in np.flatnonzero(col_labels == lab)),
            )
        )
    # every row has positive mass somewhere, so every row label is a column label
    return BlockPartition(tuple(blocks))


def read_spm_csv(path, header: bool | None = None, row_tol: float = DEFAULT_ROW_TOL) -> SPM:
    """Read an SPM from CSV, one trial per row.

    ``header=None`` skips the first line only if it does not parse as numbers.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise SPMError(f"{path}: empty SPM file")
    if header is None:
        try:
            [float(t) for t in lines[0].split(",")]
            header = False
        except ValueError:
            header = True
    if header:
        lines = lines[1:]
    try:
        raw = [[float(t) for t in ln.split(",")] for ln in lines]
    except ValueError as exc:
        raise SPMError(f"{path}: {exc}") from None
    widths = {len(r) for r in raw}
    if len(widths) != 1:
        raise SPMError(f"{path}: rows have differing column counts {sorted(widths)}")
    return validate_spm(np.array(raw), row_tol=row_tol)


def write_spm_csv(spm: SPM, path, header: bool = False):
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(f"p_{j + 1}" for j in range(spm.m)) + "\n")
        for row in spm.entries:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
