"""Monte Carlo sampling from the PMD and pointwise pmf estimates.

Draws are generated in fixed blocks of ``BLOCK_DRAWS``. Block ``c`` gets its
own Philox stream keyed by ``(seed, c)``, and inside the block the uniform for
draw ``r`` and trial ``i`` sits at position ``(r, i)``. The uniform used for
any (draw, trial) pair is therefore a function of the seed alone, and blocks
can be farmed out to threads in any order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exact import _workers
from .spm import SPM, check_outcome, validate_spm

BLOCK_DRAWS = 2**14


@dataclass(frozen=True, eq=False)
class SampleBatch:
    draws: np.ndarray
    seed: int

    @property
    def b(self) -> int:
        return self.draws.shape[0]

    def to_csv(self, path):
        m = self.draws.shape[1]
        with open(path, "w") as fh:
            fh.write(",".join(f"x{j + 1}" for j in range(m)) + "\n")
            for row in self.draws:
                fh.write(",".join(str(int(c)) for c in row) + "\n")

    def metadata(self) -> dict:
        return {"seed": self.seed, "b": self.b, "n": int(self.draws[0].sum()), "m": self.draws.shape[1]}

    def write_metadata(self, path):
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _draw_block(cum: np.ndarray, seed: int, block: int, size: int) -> np.ndarray:
    """Category counts for ``size`` draws of block ``block`` (size x m)."""
    n, m = cum.shape[0], cum.shape[1] + 1
    u = _block_rng(seed, block).random((size, n))
    # inverse cdf: category index = number of cumulative cut points <= u
    cat = np.zeros((size, n), dtype=np.int8 if m < 128 else np.int32)
    for j in range(m - 1):
        cat += u >= cum[None, :, j]
    counts = np.empty((size, m), dtype=np.int64)
    for j in range(m):
        counts[:, j] = np.count_nonzero(cat == j, axis=1)
    return counts


def _cut_points(spm: SPM) -> np.ndarray:
    p = spm.entries
    cum = np.minimum(np.cumsum(p, axis=1)[:, :-1], 1.0)
    # no mass after cut j: pin it to 1 so round-off cannot reach a zero category
    tail = np.cumsum(p[:, ::-1], axis=1)[:, ::-1][:, 1:]
    cum[tail == 0] = 1.0
    return cum


def _blocks(b: int):
    for c, start in enumerate(range(0, b, BLOCK_DRAWS)):
        yield c, min(BLOCK_DRAWS, b - start)


def _map_blocks(fn, b: int, threads):
    blocks = list(_blocks(b))
    workers = min(_workers(threads), len(blocks))
    if workers <= 1:
        return [fn(c, size) for c, size in blocks]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(lambda cs: fn(*cs), blocks))


def sample(spm: SPM, b: int, seed: int, threads: int | None = None) -> SampleBatch:
    """``b`` independent draws of the count vector, one per row."""
    spm = validate_spm(spm)
    if b < 1:
        raise ValueError("number of draws b must be at least 1")
    cum = _cut_points(spm)
    parts = _map_blocks(lambda c, size: _draw_block(cum, seed, c, size), b, threads)
    draws = np.vstack(parts)
    draws.setflags(write=False)
    return SampleBatch(draws, seed)


def count_matches(spm: SPM, x, b: int, seed: int, threads: int | None = None) -> int:
    """How many of the ``b`` draws equal ``x``, without storing the draws."""
    spm = validate_spm(spm)
    x = check_outcome(spm, x)
    cum = _cut_points(spm)

    def block_hits(c, size):
        counts = _draw_block(cum, seed, c, size)
        return int(np.count_nonzero(np.all(counts == x, axis=1)))

    return sum(_map_blocks(block_hits, b, threads))


@dataclass(frozen=True)
class SimEstimate:
    value: float
    bound: float
    hits: int
    b: int

    def __float__(self):
        return self.value


def sim_error_bounds(b: int, h: int) -> tuple[float, float]:
    """Expected absolute error bounds: one support point, and the whole support of size ``h``."""
    if b < 1 or h < 1:
        raise ValueError("b and h must be at least 1")
    return math.sqrt(1.0 / (2.0 * math.pi * b)), math.sqrt(2.0 * (h - 1) / (math.pi * b))


def sim_pmf_at(spm: SPM, x, b: int, seed: int, threads: int | None = None) -> SimEstimate:
    """Fraction of ``b`` simulated outcomes equal to ``x``, with its error bound."""
    if b < 1:
        raise ValueError("number of draws b must be at least 1")
    hits = count_matches(spm, x, b, seed, threads)
    return SimEstimate(hits / b, sim_error_bounds(b, 1)[0], hits, b)


def empirical_pmf(batch: SampleBatch) -> dict[tuple[int, ...], float]:
    keys, counts = np.unique(batch.draws, axis=0, return_counts=True)
    return {tuple(int(k) for k in key): c / batch.b for key, c in zip(keys, counts)}
