"""Command line entry point: ``faultsort sort|dsort|bsort|search|experiment``."""

from __future__ import annotations

import argparse
import sys
import warnings

from ..basket_sort import ModelOutOfRangeError
from ..core import FaultsortError
from . import experiments as ex
from .trials import ExperimentConfig, format_reports, run_trials

EXIT_OK = 0
EXIT_BAND = 1
EXIT_USAGE = 2


def _model_flags(p: argparse.ArgumentParser, default_p: float = 0.05):
    p.add_argument("--p", type=float, default=default_p, help="error probability upper bound")
    p.add_argument("--q", type=float, default=None, help="error probability lower bound (default: p)")
    p.add_argument("--seed", type=int, default=0, help="master seed; trial t uses seed XOR t")
    p.add_argument("--mode", choices=("practical", "theoretical"), default="practical")


def _output_flags(p: argparse.ArgumentParser):
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--emit", choices=("csv", "json"), default="csv",
                   help="csv table or JSON lines, one object per trial")
    p.add_argument("--out", default=None, help="write rows here instead of stdout")
    p.add_argument("--timing", action="store_true",
                   help="record wall time (otherwise 0, keeping re-runs byte-identical)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: FAULTSORT_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faultsort", description="Sorting with persistent comparison faults.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sort", help="randomised riffle sort trials")
    s.add_argument("--n", type=int, nargs="+", required=True)
    _model_flags(s)
    _output_flags(s)
    s.add_argument("--assume-independent-order", action="store_true", help="skip the initial shuffle")

    d = sub.add_parser("dsort", help="derandomised sort trials")
    d.add_argument("--n", type=int, nargs="+", required=True)
    _model_flags(d)
    _output_flags(d)
    d.add_argument("--farm-factor", type=int, default=None)
    d.add_argument("--allow-fallback", action="store_true", help="sort with q = 0 via the randomised path")
    d.add_argument("--report-bit-usage", action="store_true")

    b = sub.add_parser("bsort", help="basket sort trials on locally shuffled input")
    b.add_argument("--n", type=int, nargs="+", required=True)
    b.add_argument("--wS", type=int, default=None, help="initial window (default: n)")
    _model_flags(b)
    _output_flags(b)

    q = sub.add_parser("search", help="rank-estimate accuracy on a sorted sequence")
    q.add_argument("--m", type=int, default=10**5)
    q.add_argument("--queries", type=int, default=10**4)
    q.add_argument("--d", type=int, default=None)
    _model_flags(q, default_p=0.1)

    e = sub.add_parser("experiment", help="statistical experiments with pass/fail bands")
    e.add_argument("name", choices=("lower-bounds", "urn", "scaling", "search-accuracy", "xor-bias",
                                    "basket-rounds", "comparisons"))
    e.add_argument("--n", type=int, nargs="+", default=None)
    e.add_argument("--p", type=float, default=None)
    e.add_argument("--trials", type=int, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--N", type=int, default=2**14, help="urn size")
    e.add_argument("--M", type=int, default=None, help="white balls (default N/2)")
    e.add_argument("--ell", type=int, default=None, help="urn window unit (default 8 log2 N)")
    e.add_argument("--strict", action="store_true", help="reject urn parameters outside the lemma's range")
    return parser


def _run_sort(args, algorithm: str) -> int:
    config = ExperimentConfig(
        name=args.command, sizes=tuple(sorted(set(args.n))), trials=args.trials, p=args.p, q=args.q,
        mode=args.mode, seed=args.seed, algorithm=algorithm, timing=args.timing,
        output=args.out, fmt="jsonl" if args.emit == "json" else "csv", workers=args.threads,
        assume_independent_order=getattr(args, "assume_independent_order", False),
        w_S=getattr(args, "wS", None), farm_factor=getattr(args, "farm_factor", None),
        allow_fallback=getattr(args, "allow_fallback", False),
        report_bits=getattr(args, "report_bit_usage", False),
    )
    reports, summary = run_trials(config)
    if not args.out:
        sys.stdout.write(format_reports(reports, config.fmt))
    for row in summary:
        print(f"n={row.n} trials={row.trials} mean max={row.mean_max:.2f} mean total={row.mean_total:.1f} "
              f"mean comparisons={row.mean_comparisons:.0f}", file=sys.stderr)
    return EXIT_OK


def _run_experiment(args) -> int:
    name = args.name
    if name == "lower-bounds":
        res = ex.experiment_lower_bounds((args.n or [2**14])[0], args.p or 0.1, args.trials or 50, args.seed)
    elif name == "urn":
        M = args.M if args.M is not None else args.N // 2
        ell = args.ell if args.ell is not None else 8 * (args.N - 1).bit_length()
        res = ex.experiment_urn(args.N, M, ell, args.trials or 10**4, args.seed, strict=args.strict)
    elif name == "scaling":
        sizes = tuple(args.n or [2**e for e in range(12, 17)])
        res = ex.experiment_scaling(ExperimentConfig(sizes=sizes, trials=args.trials or 50,
                                                     p=args.p or 0.05, seed=args.seed))
    elif name == "search-accuracy":
        res = ex.experiment_search_accuracy((args.n or [10**5])[0], args.p or 0.1, args.trials or 10**4, args.seed)
    elif name == "xor-bias":
        res = ex.experiment_xor_bias(args.p or 0.3, blocks=args.trials or 10**6, seed=args.seed)
    elif name == "basket-rounds":
        res = ex.experiment_basket_rounds((args.n or [10**4])[0], args.p or 0.1, args.trials or 10, seed=args.seed)
    else:
        res = ex.experiment_comparisons(tuple(args.n or (2**14, 2**15, 2**16)), args.p or 0.05,
                                        args.trials or 2, seed=args.seed)
    print(("PASS " if res.passed else "FAIL ") + res.describe())
    return EXIT_OK if res.passed else EXIT_BAND


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            if args.command == "sort":
                return _run_sort(args, "riffle")
            if args.command == "dsort":
                return _run_sort(args, "derand")
            if args.command == "bsort":
                return _run_sort(args, "basket")
            if args.command == "search":
                res = ex.experiment_search_accuracy(args.m, args.p, args.queries, args.seed, args.d)
                print(res.describe())
                return EXIT_OK
            return _run_experiment(args)
    except (FaultsortError, ModelOutOfRangeError, ex.ConfigError, ValueError) as err:
        print(f"faultsort: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"faultsort: I/O error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
