"""Command-line interface.

Exit codes: 0 success, 2 bad arguments or input files, 3 the exact grid
exceeds the memory cap, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import aggregate, bench, confusion, exact, normal, simulation, voting
from .errors import MemoryCapError, NumericalFailure, PMDError
from .spm import read_spm_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


class UsageError(Exception):
    pass


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _emit(text: str, out=None):
    if out:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _parse_x(text):
    try:
        return np.array([int(t) for t in text.split(",")], dtype=np.int64)
    except ValueError:
        raise UsageError(f"--x must be comma-separated integers, got {text!r}") from None


def _load_spm(args):
    return read_spm_csv(args.spm, header=args.header)


def _json(obj) -> str:
    return json.dumps(obj, indent=2)


def _seed(args):
    return 0 if args.seed is None else args.seed


def cmd_pmf(args):
    spm = _load_spm(args)
    if args.x is None:
        if args.method != "exact":
            raise UsageError("the full pmf (no --x) is only available with --method exact")
        arr = exact.pmf_full(spm, args.mem_cap_cells, threads=args.threads)
        if args.out and args.out.endswith(".bin"):
            with open(args.out, "wb") as fh:
                fh.write(arr.to_bytes())
        elif args.out:
            arr.to_csv(args.out)
        else:
            pts, probs = arr.support()
            lines = [",".join(f"x{j + 1}" for j in range(spm.m - 1)) + ",p"]
            lines += [",".join(str(int(c)) for c in pt[:-1]) + "," + _fmt(p) for pt, p in zip(pts, probs)]
            print("\n".join(lines))
        if arr.clamped_mass and not args.quiet:
            print(f"clamped negative mass {arr.clamped_mass:.4e}", file=sys.stderr)
        return EXIT_OK
    x = _parse_x(args.x)
    if args.method == "exact":
        text = _fmt(exact.pmf_at(spm, x, args.mem_cap_cells))
    elif args.method == "na":
        r = normal.na_pmf_detail(spm, x, seed=_seed(args), tol=args.tol)
        text = _fmt(r.value)
        if not r.converged and not args.quiet:
            print(f"normal approximation error estimate {r.error:.4e} above tolerance", file=sys.stderr)
    else:
        if args.b is None:
            raise UsageError("--method sim needs --b")
        est = simulation.sim_pmf_at(spm, x, args.b, _seed(args), args.threads)
        text = f"{_fmt(est.value)}\nbound {_fmt(est.bound)}"
    _emit(text, args.out)
    return EXIT_OK


def cmd_cdf(args):
    spm = _load_spm(args)
    x = _parse_x(args.x)
    if args.method == "exact":
        v = exact.cdf_at(spm, x, args.mem_cap_cells)
    else:
        v = normal.na_cdf_at(spm, x, seed=_seed(args), tol=args.tol)
    _emit(_fmt(v), args.out)
    return EXIT_OK


def cmd_sample(args):
    if args.seed is None:
        raise UsageError("sample needs --seed")
    spm = _load_spm(args)
    batch = simulation.sample(spm, args.b, args.seed, args.threads)
    if args.out:
        batch.to_csv(args.out)
    else:
        m = spm.m
        lines = [",".join(f"x{j + 1}" for j in range(m))]
        lines += [",".join(str(int(c)) for c in row) for row in batch.draws]
        print("\n".join(lines))
    if args.meta:
        batch.write_metadata(args.meta)
    return EXIT_OK


def cmd_vote(args):
    spm = _load_spm(args)
    wp = voting.winner_probabilities(spm, args.method, b=args.b or 10**6, seed=_seed(args),
                                     tol=args.tol, mem_cap_cells=args.mem_cap_cells,
                                     threads=args.threads)
    result = wp.to_dict()
    result["method"] = args.method
    try:
        result["mode"] = voting.mode(spm, args.mem_cap_cells).to_dict()
        if args.q is not None:
            result["q_mode"] = voting.q_mode(spm, args.q, args.mem_cap_cells).to_dict()
    except MemoryCapError as exc:
        if args.method == "exact":
            raise
        result["mode"] = None
        if not args.quiet:
            print(f"mode skipped: {exc}", file=sys.stderr)
    _emit(_json(result), args.out)
    return EXIT_OK


def cmd_fit(args):
    if args.groups:
        groups = aggregate.read_raw_groups(args.groups, args.m)
    elif args.covariates and args.counts:
        groups = aggregate.read_aggregated(args.covariates, args.counts)
    else:
        raise UsageError("fit needs --groups, or both --covariates and --counts")
    res = aggregate.fit(groups, method=args.method, max_iter=args.max_iter)
    _emit(res.to_json(), args.out)
    return EXIT_OK


def cmd_confusion(args):
    out = confusion.read_classifier_csv(args.probs)
    grid = confusion.interval_grid(out, args.level, with_pmf=args.pmf)
    _emit(_json(grid), args.out)
    return EXIT_OK


def _int_list(text):
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_bench(args):
    if args.study == "timing":
        rows = bench.timing_study(args.n, args.m, args.reps, args.seed, args.mem_cap_cells, args.threads)
        if args.out:
            bench.write_timing_csv(rows, args.out)
        if not args.quiet or not args.out:
            print(f"{'n':>6}{'m':>4}{'seconds':>12}")
            for r in rows:
                s = "infeasible" if r.seconds is None else f"{r.seconds:.4f}"
                print(f"{r.n:>6}{r.m:>4}{s:>12}")
        return EXIT_OK
    cfg = bench.StudyConfig(args.study, args.n, args.m, args.reps, args.seed, args.b or 10**5,
                            args.mem_cap_cells)
    report = bench.accuracy_study(cfg)
    if args.out:
        report.to_csv(args.out)
    if not args.quiet or not args.out:
        print(report.summary())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    common.add_argument("--mem-cap-cells", type=int, default=exact.DEFAULT_MEM_CAP_CELLS,
                        help="largest exact grid allowed, in cells")
    common.add_argument("--quiet", action="store_true", help="suppress diagnostics on stderr")

    spm_args = argparse.ArgumentParser(add_help=False)
    spm_args.add_argument("--spm", required=True, help="SPM CSV, one trial per row")
    spm_args.add_argument("--header", action=argparse.BooleanOptionalAction, default=None,
                          help="first line is a header (default: detect)")
    spm_args.add_argument("--seed", type=int, help="random seed (default 0; required by sample)")
    spm_args.add_argument("--tol", type=float, default=normal.DEFAULT_TOL,
                          help="error tolerance of the normal approximation")
    spm_args.add_argument("--out", help="output file (default: stdout)")

    p = argparse.ArgumentParser(prog="pmdist", description="Poisson multinomial distribution tools")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("pmf", parents=[common, spm_args], help="probability mass function")
    sp.add_argument("--x", help="outcome c1,...,cm; omit for the full pmf")
    sp.add_argument("--method", choices=("exact", "na", "sim"), default="exact")
    sp.add_argument("--b", type=int, help="simulation draws")
    sp.set_defaults(func=cmd_pmf)

    sp = sub.add_parser("cdf", parents=[common, spm_args], help="cumulative distribution function")
    sp.add_argument("--x", required=True, help="upper corner c1,...,cm or c1,...,c(m-1)")
    sp.add_argument("--method", choices=("exact", "na"), default="exact")
    sp.set_defaults(func=cmd_cdf)

    sp = sub.add_parser("sample", parents=[common, spm_args], help="random draws")
    sp.add_argument("--b", type=int, required=True, help="number of draws")
    sp.add_argument("--meta", help="write a JSON metadata sidecar here")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("vote", parents=[common, spm_args], help="winner and tie probabilities")
    sp.add_argument("--method", choices=("exact", "na", "sim"), default="exact")
    sp.add_argument("--b", type=int, help="simulation draws (default 1e6)")
    sp.add_argument("--q", type=float, help="also report the q-mode")
    sp.set_defaults(func=cmd_vote)

    sp = sub.add_parser("fit", parents=[common], help="softmax regression on aggregated counts")
    sp.add_argument("--groups", help="CSV of individuals: group_id, covariate_1..v, category")
    sp.add_argument("--covariates", help="CSV of individuals: group_id, covariates")
    sp.add_argument("--counts", help="CSV of groups: group_id, count per category")
    sp.add_argument("--m", type=int, help="number of categories (default: largest label)")
    sp.add_argument("--method", choices=("exact", "na"), default="exact")
    sp.add_argument("--max-iter", type=int, default=500)
    sp.add_argument("--out", help="output JSON (default: stdout)")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("confusion", parents=[common], help="confusion-matrix cell intervals")
    sp.add_argument("--probs", required=True, help="CSV: true_label, p_1..p_m")
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--pmf", action="store_true", help="include each cell's marginal pmf")
    sp.add_argument("--out", help="output JSON (default: stdout)")
    sp.set_defaults(func=cmd_confusion)

    sp = sub.add_parser("bench", parents=[common], help="accuracy and timing studies")
    sp.add_argument("--study", choices=bench.STUDIES + ("timing",), required=True)
    sp.add_argument("--n", type=_int_list, required=True, help="comma-separated trial counts")
    sp.add_argument("--m", type=_int_list, default=[2], help="comma-separated category counts")
    sp.add_argument("--reps", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--b", type=int, help="simulation draws for sim-vs-exact")
    sp.add_argument("--out", help="CSV output")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except MemoryCapError as exc:
        print(f"pmdist: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalFailure as exc:
        print(f"pmdist: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, PMDError, ValueError, OSError) as exc:
        print(f"pmdist: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
