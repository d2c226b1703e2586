"""Accuracy and timing studies over random SPMs, with CSV output."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import MemoryCapError
from .exact import check_grid, pmf_full
from .normal import na_pmf_support
from .oracle import enumerate_pmf, poisson_binomial_pmf
from .simulation import sim_pmf_at
from .spm import SPM, validate_spm

STUDIES = ("binomial", "poisson-binomial", "enumeration", "na-vs-exact", "sim-vs-exact")


def random_spm(n: int, m: int, seed: int) -> SPM:
    """Rows drawn from the flat Dirichlet via normalized exponentials."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be at least 1")
    e = np.random.default_rng(seed).standard_exponential((n, m))
    return validate_spm(e / e.sum(axis=1, keepdims=True))


def _seed(base, n, m, rep):
    # stable per-(n, m, replicate) seed so studies can be extended without reshuffling
    return int(np.random.SeedSequence([base, n, m, rep]).generate_state(1)[0])


@dataclass
class StudyConfig:
    study: str
    ns: list[int]
    m: int | list[int] = 2
    reps: int = 50
    seed: int = 0
    b: int = 10**5
    mem_cap_cells: int | None = None

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}; choose from {STUDIES}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")


@dataclass
class StudyReport:
    rows: list[tuple] = field(default_factory=list)

    def add(self, study, n, m, metric, value):
        self.rows.append((study, n, m, metric, float(value)))

    def values(self, metric, n=None, m=None):
        return [v for s, nn, mm, k, v in self.rows if k == metric and (n is None or nn == n) and (m is None or mm == m)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["study", "n", "m", "metric", "value"])
            for s, n, m, k, v in self.rows:
                w.writerow([s, n, m, k, f"{v:.17g}"])

    def summary(self) -> str:
        lines = [f"{'study':<18}{'n':>6}{'m':>4}  {'metric':<14}{'value':>12}"]
        for s, n, m, k, v in self.rows:
            lines.append(f"{s:<18}{n:>6}{m:>4}  {k:<14}{v:>12.4e}")
        return "\n".join(lines)


def _exact_support(spm, cap):
    return pmf_full(spm, cap).support()


def _pb_errors(spm, cap):
    _, probs = _exact_support(spm, cap)
    # support is ordered by x_1 = 0..n; the reduced coordinate counts category 1
    ref = poisson_binomial_pmf(spm.entries[:, 0])
    d = np.abs(probs - ref)
    return d.max(), d.sum(), probs.max()


def _replicates(cfg, n, m):
    for rep in range(cfg.reps):
        yield rep, random_spm(n, m, _seed(cfg.seed, n, m, rep))


def accuracy_study(cfg: StudyConfig) -> StudyReport:
    """Per-n averages of MAE and TAE (or AE at the mode for simulation).

    ``baseline`` is the average pmf maximum, the scale errors are judged against.
    """
    report = StudyReport()
    ms = cfg.m if isinstance(cfg.m, (list, tuple)) else [cfg.m]
    for m in ms:
        if cfg.study in ("binomial", "poisson-binomial") and m != 2:
            raise ValueError(f"{cfg.study} study needs m = 2")
        for n in cfg.ns:
            check_grid(n, m, cfg.mem_cap_cells)
            mae, tae, base = [], [], []
            for rep, spm in _replicates(cfg, n, m):
                if cfg.study == "binomial":
                    p = np.random.default_rng(_seed(cfg.seed, n, m, rep)).random()
                    spm = validate_spm(np.column_stack([np.full(n, p), np.full(n, 1 - p)]))
                if cfg.study in ("binomial", "poisson-binomial"):
                    a, t, top = _pb_errors(spm, cfg.mem_cap_cells)
                elif cfg.study == "enumeration":
                    pts, probs = _exact_support(spm, cfg.mem_cap_cells)
                    ref = enumerate_pmf(spm)
                    d = np.abs(probs - np.array([ref[tuple(int(c) for c in x)] for x in pts]))
                    a, t, top = d.max(), d.sum(), probs.max()
                elif cfg.study == "na-vs-exact":
                    pts, probs = _exact_support(spm, cfg.mem_cap_cells)
                    _, approx = na_pmf_support(spm, seed=rep)
                    d = np.abs(probs - approx)
                    a, t, top = d.max(), d.sum(), probs.max()
                else:
                    pts, probs = _exact_support(spm, cfg.mem_cap_cells)
                    k = int(np.argmax(probs))
                    est = sim_pmf_at(spm, pts[k], cfg.b, seed=_seed(cfg.seed, n, m, rep))
                    a = t = abs(est.value - probs[k])
                    top = probs[k]
                mae.append(a)
                tae.append(t)
                base.append(top)
            if cfg.study == "sim-vs-exact":
                report.add(cfg.study, n, m, "ae_mode", np.mean(mae))
            else:
                report.add(cfg.study, n, m, "mae", np.mean(mae))
                report.add(cfg.study, n, m, "tae", np.mean(tae))
                report.add(cfg.study, n, m, "median_mae", np.median(mae))
                report.add(cfg.study, n, m, "worst_mae", np.max(mae))
                report.add(cfg.study, n, m, "worst_tae", np.max(tae))
            report.add(cfg.study, n, m, "baseline", np.mean(base))
    return report


@dataclass
class TimingRow:
    n: int
    m: int
    seconds: float | None

    def cells(self):
        return [self.n, self.m, "infeasible" if self.seconds is None else f"{self.seconds:.17g}"]


def timing_study(ns, ms, reps: int = 3, seed: int = 0, mem_cap_cells: int | None = None,
                 threads: int | None = None) -> list[TimingRow]:
    """Median wall time of the full exact pmf for each (n, m); cap breaches are infeasible."""
    rows = []
    for m in ms:
        for n in ns:
            try:
                check_grid(n, m, mem_cap_cells)
            except MemoryCapError:
                rows.append(TimingRow(n, m, None))
                continue
            times = []
            for rep in range(reps):
                spm = random_spm(n, m, _seed(seed, n, m, rep))
                t0 = time.perf_counter()
                pmf_full(spm, mem_cap_cells, threads=threads)
                times.append(time.perf_counter() - t0)
            rows.append(TimingRow(n, m, float(np.median(times))))
    return rows


def write_timing_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "m", "seconds"])
        for r in rows:
            w.writerow(r.cells())
