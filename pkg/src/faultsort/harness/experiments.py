"""Statistical experiments with pass/fail bands.

Every experiment returns a result object with a ``passed`` flag and a
``describe()`` line giving the measured value, the band and the seed.
Bands are 4 standard errors unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..basket_sort import basket_sort, shrink_rate
from ..core import FaultModel, RunStats, Sequence, dislocation_report, local_shuffle, make_rng
from ..derand import harvest_bits
from ..noisy_search import build_params, search_many
from ..riffle_sort import RiffleConfig, riffle_sort
from .trials import ExperimentConfig, run_trials

SIGMAS = 4.0


class ConfigError(ValueError):
    pass


def _sem(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(v.size))


# ---------------------------------------------------------------------------
# lower bounds


@dataclass
class LowerBoundResult:
    n: int
    p: float
    trials: int
    seed: int
    inversion_mean: float
    inversion_sigma: float
    inversion_floor: float
    total_mean: float
    total_sigma: float
    total_floor: float

    @property
    def inversion_ok(self) -> bool:
        return self.inversion_mean >= self.inversion_floor - SIGMAS * self.inversion_sigma

    @property
    def total_ok(self) -> bool:
        return self.total_mean >= self.total_floor - SIGMAS * self.total_sigma

    @property
    def passed(self) -> bool:
        return self.inversion_ok and self.total_ok

    def describe(self) -> str:
        return (f"lower-bounds n={self.n} p={self.p} seed={self.seed}: "
                f"adjacent inversions {self.inversion_mean:.4f} (floor {self.inversion_floor:.4f} - 4sd {self.inversion_sigma:.4f}), "
                f"total {self.total_mean:.1f} (floor {self.total_floor:.1f} - 4sd {self.total_sigma:.1f})")


def adjacent_inversion_rate(seq) -> float:
    """Fraction of true neighbours (2k+1, 2k+2) that appear swapped."""
    items = np.asarray(seq)
    n = len(items)
    if n < 2:
        return 0.0
    pos = np.empty(n + 1, dtype=np.int64)
    pos[items] = np.arange(n)
    odd = np.arange(1, n, 2)
    return float(np.mean(pos[odd + 1] < pos[odd]))


def lower_bound_floors(n: int, p: float) -> tuple[float, float]:
    """(adjacent inversion floor, total dislocation floor)."""
    ratio = p / (1 - p)
    return 0.5 * ratio, n / 4 * ratio


def experiment_lower_bounds(n: int, p: float, trials: int, seed: int = 0, mode: str = "practical") -> LowerBoundResult:
    inv, tot = [], []
    for t in range(trials):
        s = seed ^ t
        model = FaultModel(p, seed=s)
        out = riffle_sort(model, Sequence.identity(n), RiffleConfig(mode=mode, seed=s))
        inv.append(adjacent_inversion_rate(out.items))
        tot.append(dislocation_report(out).total_dislocation)
    inv_floor, tot_floor = lower_bound_floors(n, p)
    return LowerBoundResult(n, p, trials, seed, float(np.mean(inv)), _sem(inv), inv_floor,
                            float(np.mean(tot)), _sem(tot), tot_floor)


# ---------------------------------------------------------------------------
# urn


@dataclass
class UrnResult:
    N: int
    M: int
    ell: int
    trials: int
    seed: int
    violations: int
    in_regime: bool

    @property
    def frequency(self) -> float:
        return self.violations / self.trials

    @property
    def bound(self) -> float:
        return max(10 / self.trials, 10 * float(self.N) ** -6)

    @property
    def passed(self) -> bool:
        return self.frequency <= self.bound

    def describe(self) -> str:
        regime = "" if self.in_regime else " (outside the lemma's ell range)"
        return (f"urn N={self.N} M={self.M} ell={self.ell} seed={self.seed}: violation frequency "
                f"{self.frequency:.5f} (bound {self.bound:.5f}){regime}")


def urn_violation(draws: np.ndarray, ell: int) -> bool:
    """True iff some run of 54*ell consecutive draws holds <= ell white balls."""
    span = 54 * ell
    if span > len(draws):
        return False
    whites = np.concatenate([[0], np.cumsum(draws)])
    return bool(np.any(whites[span:] - whites[:-span] <= ell))


def urn_in_regime(N: int, M: int, ell: int) -> bool:
    return 8 * math.log2(N) <= ell <= M / 432


def experiment_urn(N: int, M: int, ell: int, trials: int, seed: int = 0, strict: bool = False) -> UrnResult:
    """Draw all balls without replacement ``trials`` times and count windows
    that are short of white balls."""
    if not (M <= N and 2 * M >= N and N >= 64 and ell >= 1 and trials >= 1):
        raise ConfigError("need N >= 64, N/2 <= M <= N, ell >= 1, trials >= 1")
    in_regime = urn_in_regime(N, M, ell)
    if strict and not in_regime:
        raise ConfigError("ell outside [8 log N, M/432]")
    rng = make_rng(seed, 0x0A1)
    balls = np.zeros(N, dtype=np.int64)
    balls[:M] = 1
    violations = sum(urn_violation(rng.permutation(balls), ell) for _ in range(trials))
    return UrnResult(N, M, ell, trials, seed, int(violations), in_regime)


# ---------------------------------------------------------------------------
# dislocation scaling


@dataclass
class ScalingResult:
    sizes: tuple[int, ...]
    mean_max_over_ln: list[float]
    mean_total_over_n: list[float]
    tolerance: float = 0.5

    @staticmethod
    def spread(values) -> float:
        v = np.asarray(values)
        return float(v.max() / v.min() - 1) if v.min() > 0 else math.inf

    @property
    def passed(self) -> bool:
        return (self.spread(self.mean_max_over_ln) < self.tolerance
                and self.spread(self.mean_total_over_n) < self.tolerance)

    def describe(self) -> str:
        mx = ", ".join(f"{v:.3f}" for v in self.mean_max_over_ln)
        tot = ", ".join(f"{v:.3f}" for v in self.mean_total_over_n)
        return (f"scaling n={list(self.sizes)}: max/ln n [{mx}] spread {self.spread(self.mean_max_over_ln):.2f}; "
                f"total/n [{tot}] spread {self.spread(self.mean_total_over_n):.2f} (limit {self.tolerance})")


def experiment_scaling(config: ExperimentConfig) -> ScalingResult:
    _, summary = run_trials(config)
    return ScalingResult(
        tuple(s.n for s in summary),
        [s.mean_max / math.log(s.n) for s in summary],
        [s.mean_total / s.n for s in summary],
    )


# ---------------------------------------------------------------------------
# search accuracy


@dataclass
class SearchAccuracyResult:
    m: int
    p: float
    queries: int
    seed: int
    within: float
    width: int
    max_comparisons: int
    comparison_bound: int
    timeouts: int
    min_fraction: float = 0.99

    @property
    def passed(self) -> bool:
        return self.within >= self.min_fraction and self.max_comparisons <= self.comparison_bound

    def describe(self) -> str:
        return (f"search m={self.m} p={self.p} seed={self.seed}: {self.within:.4f} within {self.width} "
                f"(need {self.min_fraction}), max comparisons {self.max_comparisons} (bound {self.comparison_bound}), "
                f"timeouts {self.timeouts}")


def experiment_search_accuracy(m: int, p: float, queries: int, seed: int = 0, d: int | None = None) -> SearchAccuracyResult:
    """Queries are the odd numbers between the even elements 2, 4, ..., 2m."""
    model = FaultModel(p, seed=seed)
    S = 2 * np.arange(1, m + 1, dtype=np.int64)
    rng = make_rng(seed, 0x5EA)
    qs = 2 * rng.choice(m + 1, size=queries, replace=False) + 1
    d = d if d is not None else max(1, math.ceil(math.log(m)))
    params = build_params(m, p, d)
    res = search_many(model, S, qs, d, params)
    true_rank = (qs + 1) // 2
    width = 2 * params.group_size
    within = float(np.mean(np.abs(res.taus - true_rank) <= width))
    return SearchAccuracyResult(m, p, queries, seed, within, width, int(res.comparisons.max()),
                                params.max_comparisons, res.timeouts)


# ---------------------------------------------------------------------------
# XOR extraction bias


@dataclass
class XorBiasResult:
    p: float
    blocks: int
    seed: int
    etas: tuple[int, ...]
    measured: list[float]
    bounds: list[float]
    sigma: float

    @property
    def passed(self) -> bool:
        return all(m <= b + SIGMAS * self.sigma for m, b in zip(self.measured, self.bounds))

    def describe(self) -> str:
        rows = "; ".join(f"eta={e}: |Pr(1)-1/2|={m:.5f} (bound {b:.5f} + 4sd {SIGMAS * self.sigma:.5f})"
                         for e, m, b in zip(self.etas, self.measured, self.bounds))
        return f"xor-bias p={self.p} seed={self.seed}: {rows}"


def experiment_xor_bias(p: float = 0.3, etas=(1, 2, 4), blocks: int = 10**6, seed: int = 0) -> XorBiasResult:
    """Extract bits from comparisons whose correct outcome is always 1.

    Farm elements are all smaller than the others, so each outcome is 1 with
    probability 1 - p, a bias of 1/2 - p per input.
    """
    model = FaultModel(p, seed=seed)
    delta = 1 - 2 * p
    measured, bounds = [], []
    rows = 64
    for eta in etas:
        cols = -(-blocks * eta // rows)
        F = np.arange(1, rows + 1, dtype=np.int64)
        rest = np.arange(rows + 1, rows + cols + 1, dtype=np.int64)
        pool = harvest_bits(model, F, rest, eta).pool[:blocks]
        measured.append(abs(float(pool.mean()) - 0.5))
        bounds.append(delta ** eta / 2)
    return XorBiasResult(p, blocks, seed, tuple(etas), measured, bounds, math.sqrt(0.25 / blocks))


# ---------------------------------------------------------------------------
# basket round bounds


@dataclass
class RoundBoundsResult:
    n: int
    p: float
    seeds: int
    rounds: int = 0
    violations: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.rounds > 0 and not any(self.violations.values())

    def describe(self) -> str:
        return f"basket-rounds n={self.n} p={self.p} seeds={self.seeds}: {self.rounds} rounds, violations {self.violations}"


def experiment_basket_rounds(n: int, p: float, seeds: int, w_S: int | None = None, seed: int = 0) -> RoundBoundsResult:
    """Check the per-round displacement bounds on every element.

    ``w_S=None`` starts from a uniformly random permutation with a full window.
    """
    result = RoundBoundsResult(n, p, seeds)
    totals: dict[str, int] = {}

    def record(state):
        result.rounds += 1
        for key, v in state.violations.items():
            totals[key] = totals.get(key, 0) + v

    for s in range(seeds):
        model = FaultModel(p, seed=seed ^ s)
        rng = make_rng(seed ^ s, 0xB5)
        if w_S is None:
            start, w = Sequence(rng.permutation(n) + 1, check=False), n
        else:
            start, w = local_shuffle(n, w_S, rng), w_S
        basket_sort(model, start, w, check=True, on_round=record)
    result.violations = totals
    return result


# ---------------------------------------------------------------------------
# comparison counts


@dataclass
class ComparisonScalingResult:
    sizes: tuple[int, ...]
    counts: list[float]
    windows: tuple[int, ...]
    window_counts: list[float]
    ratio_band: tuple[float, float] = (1.8, 2.6)
    window_tolerance: float = 0.25

    @property
    def doubling_ratios(self) -> list[float]:
        return [b / a for a, b in zip(self.counts, self.counts[1:])]

    @property
    def window_ratio_errors(self) -> list[float]:
        """Relative gap between count ratio and window ratio."""
        w0, c0 = self.windows[0], self.window_counts[0]
        return [abs((c / c0) / (w / w0) - 1) for w, c in zip(self.windows[1:], self.window_counts[1:])]

    @property
    def passed(self) -> bool:
        lo, hi = self.ratio_band
        return (all(lo <= r <= hi for r in self.doubling_ratios)
                and all(e <= self.window_tolerance for e in self.window_ratio_errors))

    def describe(self) -> str:
        rr = ", ".join(f"{r:.3f}" for r in self.doubling_ratios)
        we = ", ".join(f"{e:.3f}" for e in self.window_ratio_errors)
        return (f"comparisons: riffle doubling ratios [{rr}] (band {self.ratio_band}); "
                f"basket window ratio errors [{we}] (limit {self.window_tolerance})")


def experiment_comparisons(sizes=(2**14, 2**15, 2**16), p: float = 0.05, trials: int = 2,
                           basket_n: int = 2**14, windows=(16, 32, 64, 128), seed: int = 0) -> ComparisonScalingResult:
    counts = []
    for n in sizes:
        total = 0
        for t in range(trials):
            stats = RunStats()
            riffle_sort(FaultModel(p, seed=seed ^ t), Sequence.identity(n), RiffleConfig(seed=seed ^ t), stats=stats)
            total += stats.comparisons
        counts.append(total / trials)
    rate = shrink_rate(p)
    window_counts = []
    for w in windows:
        stats = RunStats()
        start = local_shuffle(basket_n, w, make_rng(seed, 0xC0))
        basket_sort(FaultModel(p, seed=seed), start, w, rate=rate, stats=stats)
        window_counts.append(stats.comparisons)
    return ComparisonScalingResult(tuple(sizes), counts, tuple(windows), window_counts)


__all__ = [
    "experiment_basket_rounds",
    "experiment_comparisons",
    "experiment_lower_bounds",
    "experiment_scaling",
    "experiment_search_accuracy",
    "experiment_urn",
    "experiment_xor_bias",
]
