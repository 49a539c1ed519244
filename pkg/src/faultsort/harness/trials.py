"""Seeded Monte-Carlo trials and their export."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..basket_sort import basket_sort
from ..core import FaultModel, RunStats, Sequence, dislocation_report, local_shuffle, make_rng
from ..derand import DerandConfig, DerandReport, derand_riffle_sort
from ..riffle_sort import RiffleConfig, riffle_sort

ALGORITHMS = ("riffle", "derand", "basket")
INPUT_STREAM = 3


@dataclass
class TrialReport:
    trial_id: int
    seed: int
    n: int
    p: float
    q: float
    algorithm: str
    max_dislocation: int
    total_dislocation: int
    comparisons: int
    wall_time_ms: float
    flags: str = ""


FIELDS = [f.name for f in fields(TrialReport)]


@dataclass
class ExperimentConfig:
    name: str = "sort"
    sizes: tuple[int, ...] = (1024,)
    trials: int = 1
    p: float = 0.05
    q: float | None = None
    mode: str = "practical"
    seed: int = 0
    algorithm: str = "riffle"
    w_S: int | None = None
    assume_independent_order: bool = False
    farm_factor: int | None = None
    allow_fallback: bool = False
    report_bits: bool = False
    timing: bool = False
    output: str | None = None
    fmt: str = "csv"
    workers: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        sizes = tuple(int(s) for s in self.sizes)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("sizes must be strictly increasing")
        if not sizes or sizes[0] < 1:
            raise ValueError("sizes must be positive")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.fmt not in ("csv", "jsonl"):
            raise ValueError("fmt must be csv or jsonl")
        self.sizes = sizes


def worker_count(requested: int | None = None) -> int:
    if requested:
        return max(1, requested)
    env = os.environ.get("FAULTSORT_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def trial_seed(master: int, trial_id: int) -> int:
    return (master ^ trial_id) & ((1 << 64) - 1)


def run_one(config: ExperimentConfig, n: int, trial_id: int) -> tuple[TrialReport, Sequence]:
    seed = trial_seed(config.seed, trial_id)
    model = FaultModel(config.p, config.q, seed=seed)
    stats = RunStats()
    start = time.perf_counter()
    if config.algorithm == "riffle":
        cfg = RiffleConfig(mode=config.mode, seed=seed, shuffle=not config.assume_independent_order)
        out = riffle_sort(model, Sequence.identity(n), cfg, stats=stats)
    elif config.algorithm == "derand":
        kw = {} if config.farm_factor is None else {"farm_factor": config.farm_factor}
        dcfg = DerandConfig(riffle=RiffleConfig(mode=config.mode), allow_fallback=config.allow_fallback, **kw)
        info = DerandReport()
        out = derand_riffle_sort(model, Sequence.identity(n), dcfg, stats=stats, report=info)
        if config.report_bits:
            stats.flag(f"bits_used={info.bits_used}/{info.bits_available}")
    else:
        w = config.w_S if config.w_S is not None else n
        start_seq = local_shuffle(n, w, make_rng(seed, INPUT_STREAM))
        out = basket_sort(model, start_seq, w, stats=stats)
    elapsed = (time.perf_counter() - start) * 1000 if config.timing else 0.0
    rep = dislocation_report(out)
    report = TrialReport(trial_id, seed, n, model.p, model.q, config.algorithm, rep.max_dislocation,
                         rep.total_dislocation, stats.comparisons, round(elapsed, 3), ";".join(stats.flags))
    return report, out


@dataclass
class SizeSummary:
    n: int
    trials: int
    mean_max: float
    std_max: float
    mean_total: float
    std_total: float
    mean_comparisons: float


def summarize(reports: list[TrialReport]) -> list[SizeSummary]:
    out = []
    for n in sorted({r.n for r in reports}):
        rows = [r for r in reports if r.n == n]
        mx = np.array([r.max_dislocation for r in rows], dtype=float)
        tot = np.array([r.total_dislocation for r in rows], dtype=float)
        comps = np.array([r.comparisons for r in rows], dtype=float)
        out.append(SizeSummary(n, len(rows), float(mx.mean()), float(mx.std()), float(tot.mean()),
                               float(tot.std()), float(comps.mean())))
    return out


def run_trials(config: ExperimentConfig) -> tuple[list[TrialReport], list[SizeSummary]]:
    """Every (size, trial) pair, in a deterministic order regardless of workers."""
    jobs = [(n, i * config.trials + t) for i, n in enumerate(config.sizes) for t in range(config.trials)]
    workers = worker_count(config.workers)
    if workers == 1:
        results = [run_one(config, n, tid) for n, tid in jobs]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda job: run_one(config, *job), jobs))
    reports = [r for r, _ in results]
    if config.output:
        write_reports(reports, config.output, config.fmt)
    return reports, summarize(reports)


def format_reports(reports: list[TrialReport], fmt: str = "csv") -> str:
    buf = io.StringIO()
    if fmt == "csv":
        writer = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in reports:
            writer.writerow(asdict(r))
    elif fmt == "jsonl":
        for r in reports:
            buf.write(json.dumps(asdict(r), sort_keys=False) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return buf.getvalue()


def write_reports(reports: list[TrialReport], path: str, fmt: str = "csv"):
    text = format_reports(reports, fmt)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
