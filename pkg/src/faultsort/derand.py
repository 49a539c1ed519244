"""Deterministic sorting: randomness mined from the comparator itself.

A block of ``eta`` independent comparison outcomes, each biased by at most
``(1-2q)/2``, XORs to a bit with bias at most ``(1-2q)**eta / 2``. The first
``farm_factor * eta`` elements of the input (the farm) are compared against
everything else to fill a bit pool; the rest of the input is sorted with
that pool as the only source of randomness, and the farm elements are then
placed by scanning for the position with the fewest contradicting
comparisons.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels as K
from .core import (
    BitBudgetExceeded,
    BitSource,
    FaultModel,
    FaultsortError,
    PoolBits,
    RunStats,
    Sequence,
    as_array,
    exact,
    sample_uniform_int,
    splitmix,
)
from .riffle_sort import RiffleConfig, batch_insert, riffle_sort

FARM_FACTOR = 1000
FALLBACK_STREAM = 0xFA11


class PreconditionError(FaultsortError, ValueError):
    pass


def xor_bits(outcomes) -> int:
    """Parity of a non-empty list of 0/1 outcomes."""
    bits = [int(b) for b in outcomes]
    if not bits:
        raise ValueError("xor_bits needs at least one outcome")
    acc = 0
    for b in bits:
        acc ^= b & 1
    return acc


def block_length(n: int, q: float) -> int:
    """Outcomes per extracted bit: ceil(4 ln n / ln(1/(1-2q)))."""
    if q <= 0:
        raise PreconditionError("bit extraction needs q > 0")
    if n < 2:
        return 1
    return max(1, math.ceil(4 * math.log(n) / -math.log1p(-2 * q)))


@dataclass
class BitFarm:
    F: np.ndarray
    F_rest: np.ndarray
    eta: int
    pool: np.ndarray = field(repr=False)

    @property
    def capacity(self) -> int:
        return int(self.pool.size)

    def source(self) -> PoolBits:
        return PoolBits(self.pool)


def harvest_bits(model: FaultModel, F, F_rest, eta: int) -> BitFarm:
    """Compare every farm element with every other element once and XOR
    consecutive blocks of ``eta`` outcomes (row-major over farm x rest)."""
    if eta < 1:
        raise ValueError("eta must be positive")
    F = np.ascontiguousarray(as_array(F), dtype=np.int64)
    rest = np.ascontiguousarray(as_array(F_rest), dtype=np.int64)
    pool = K.xor_blocks(F, rest, eta, *model.kargs)
    return BitFarm(F, rest, eta, pool)


def random_subset(A, h: int, bits: BitSource) -> tuple[np.ndarray, int]:
    """Uniformly random ``h``-subset of ``A``; returns (subset, bits used).

    Picks a uniform pivot and a fair-coin subset B of the others; if B is too
    small the pivot and B are kept and the rest is sampled from what is left,
    otherwise the answer is sampled from inside B. The result keeps the
    input order of ``A``.
    """
    pool = np.asarray(A)
    if not 0 <= h <= len(pool):
        raise ValueError(f"h={h} outside [0, {len(pool)}]")
    start = bits.consumed
    keep = np.zeros(len(pool), dtype=bool)
    idx = np.arange(len(pool))
    while h > 0 and idx.size:
        j, _ = sample_uniform_int(bits, idx.size)
        x = idx[j]
        others = np.delete(idx, j)
        coins = bits.take_array(others.size).astype(bool)
        B = others[coins]
        if B.size <= h - 1:
            keep[x] = True
            keep[B] = True
            h -= B.size + 1
            idx = others[~coins]
        else:
            idx = B
    return pool[keep], bits.consumed - start


def mismatch_width(p: float) -> int:
    """Smallest integer c with c >= 51/p and c > (7-8p)/(1-4p)."""
    pf = exact(p)
    if not 0 < pf < Fraction(1, 4):
        raise PreconditionError("mismatch scan needs 0 < p < 1/4")
    c = math.ceil(Fraction(51) / pf)
    second = (7 - 8 * pf) / (1 - 4 * pf)
    return max(c, math.floor(second) + 1)


def scan_stride(n: int, configured: int | None = None) -> int:
    base = 3 * max(1, math.ceil(math.log2(max(n, 2))))
    return max(base, configured or 0)


def count_mismatches(model: FaultModel, x: int, S, r: int, c: int, d: int) -> int:
    """Comparisons around position ``r`` that contradict placing x there.

    Looks at positions in [r - cd, r + cd) and counts larger elements before
    ``r`` plus smaller elements from ``r`` on.
    """
    if r < 1:
        raise ValueError("candidate position must be >= 1")
    items = as_array(S)
    lo = max(1, r - c * d)
    hi = min(len(items), r + c * d - 1)
    if lo > hi:
        return 0
    pos = np.arange(lo, hi + 1)
    ys = items[lo - 1:hi]
    smaller = model.reports_less_many(ys, np.full(ys.size, x))
    return int(np.count_nonzero((pos < r) & ~smaller) + np.count_nonzero((pos >= r) & smaller))


def best_positions(model: FaultModel, S, F, c: int, d: int) -> np.ndarray:
    """Lowest grid candidate 1, d+1, 2d+1, ... minimising the mismatches."""
    items = np.ascontiguousarray(as_array(S), dtype=np.int64)
    out = np.empty(len(F), dtype=np.int64)
    for i, x in enumerate(np.asarray(F, dtype=np.int64)):
        cands, counts = K.mismatch_profile(x, items, c, d, *model.kargs)
        out[i] = cands[np.argmin(counts)]
    return out


def reinsert_front(model: FaultModel, S, F, c: int, d: int) -> Sequence:
    ranks = best_positions(model, S, F, c, d)
    return Sequence(batch_insert(S, F, ranks), check=False)


@dataclass(frozen=True)
class DerandConfig:
    farm_factor: int = FARM_FACTOR
    stride: int | None = None
    allow_fallback: bool = False
    riffle: RiffleConfig = field(default_factory=RiffleConfig)


@dataclass
class DerandReport:
    eta: int = 0
    farm_size: int = 0
    bits_available: int = 0
    bits_used: int = 0
    fallback: str | None = None


def _randomised(model: FaultModel, items: np.ndarray, cfg: DerandConfig, stats: RunStats,
                report: DerandReport, reason: str) -> Sequence:
    report.fallback = reason
    stats.flag(f"fallback_{reason}")
    seed = splitmix(model.seed ^ FALLBACK_STREAM)
    riffle_cfg = RiffleConfig(**{**cfg.riffle.__dict__, "seed": seed})
    return riffle_sort(model, items, riffle_cfg, stats=stats)


def derand_riffle_sort(model: FaultModel, S, config: DerandConfig | None = None, *,
                       stats: RunStats | None = None,
                       report: DerandReport | None = None) -> Sequence:
    """Sort without external randomness; the output depends only on the
    model and the input.

    Inputs too small for a farm fall back to the randomised sorter seeded
    from the model, with a warning. ``q = 0`` is rejected unless
    ``allow_fallback`` is set.
    """
    cfg = config or DerandConfig()
    stats = stats if stats is not None else RunStats()
    report = report if report is not None else DerandReport()
    items = np.array(as_array(S), dtype=np.int64)
    n = len(items)
    if model.q <= 0:
        if not cfg.allow_fallback:
            raise PreconditionError("derandomised sorting needs q > 0")
        return _randomised(model, items, cfg, stats, report, "zero_q")

    eta = block_length(n, model.q)
    farm = cfg.farm_factor * eta
    report.eta, report.farm_size = eta, farm
    if n <= farm:
        warnings.warn(f"n={n} too small for a bit farm of {farm} elements; using the randomised sorter",
                      RuntimeWarning, stacklevel=2)
        return _randomised(model, items, cfg, stats, report, "small_n")

    harvest = harvest_bits(model, items[:farm], items[farm:], eta)
    stats.comparisons += farm * (n - farm) - (farm * (n - farm)) % eta
    report.bits_available = harvest.capacity
    bits = harvest.source()
    riffle_cfg = RiffleConfig(**{**cfg.riffle.__dict__, "shuffle": False})
    try:
        rest = riffle_sort(model, harvest.F_rest, riffle_cfg, bits=bits, stats=stats)
    except BitBudgetExceeded:
        stats.flag("bit_budget_exhausted")
        rest = Sequence(harvest.F_rest, check=False)
    report.bits_used = bits.consumed

    c = mismatch_width(model.p)
    d = scan_stride(n, cfg.stride)
    stats.comparisons += farm * len(rest)
    return reinsert_front(model, rest, harvest.F, c, d)
