"""Top-level sorter: shuffle, split into geometrically growing batches,
insert each batch by noisy search, and repair with basket sort."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basket_sort import ShrinkRate, basket_sort
from .core import (
    BitSource,
    FaultModel,
    RandomBits,
    RunStats,
    Sequence,
    as_array,
    ceil_ln,
    fisher_yates,
    make_rng,
)
from .noisy_search import build_params, search_many, theoretical_k

SMALL_N = 64
SHUFFLE_STREAM = 1
PARTITION_STREAM = 2


@dataclass(frozen=True)
class BatchPlan:
    n: int
    k: int
    sizes: tuple[int, ...]


def plan_batches(n: int) -> BatchPlan:
    """|T_0| = ceil(sqrt n), |T_i| = 2^(i-1) ceil(sqrt n), last batch takes the rest."""
    if n < 1:
        raise ValueError("n must be positive")
    root = math.isqrt(n - 1) + 1
    k = 0
    while root << k < n:
        k += 1
    sizes = [root] + [root << (i - 1) for i in range(1, k)]
    if k:
        sizes.append(n - (root << (k - 1)))
    return BatchPlan(n, k, tuple(sizes))


def partition_batches(S: Sequence | np.ndarray, rng: np.random.Generator | None = None,
                      bits: BitSource | None = None) -> list[np.ndarray]:
    """Random batches T_0..T_k of ``S``, each kept in S-order.

    With ``rng`` the batches come from one random permutation. With ``bits``
    the batches are drawn by uniform subset sampling from the largest batch
    down to T_1, leaving T_0 as the remainder, so a finite bit pool suffices.
    """
    items = as_array(S)
    n = len(items)
    plan = plan_batches(n)
    if (rng is None) == (bits is None):
        raise ValueError("pass exactly one of rng or bits")
    label = np.empty(n, dtype=np.int64)
    if rng is not None:
        perm = rng.permutation(n)
        start = 0
        for i, size in enumerate(plan.sizes):
            label[perm[start:start + size]] = i
            start += size
    else:
        from .derand import random_subset

        remaining = np.arange(n)
        label[:] = 0
        for i in range(plan.k, 0, -1):
            chosen, _ = random_subset(remaining, plan.sizes[i], bits)
            label[chosen] = i
            remaining = np.setdiff1d(remaining, chosen, assume_unique=True)
    return [items[label == i] for i in range(plan.k + 1)]


def batch_insert(S: Sequence | np.ndarray, inserts, ranks, *, stats: RunStats | None = None) -> np.ndarray:
    """Place every element of ``inserts`` at its target rank simultaneously.

    ``ranks`` are 1-based targets in the current sequence; an inserted element
    goes before the element currently at that position, and inserted elements
    sharing a target keep their order in ``inserts``. Targets outside
    [1, len(S)+1] are clamped.
    """
    items = as_array(S)
    xs = np.asarray(inserts, dtype=np.int64)
    rs = np.asarray(ranks, dtype=np.int64)
    m = len(items)
    clipped = np.clip(rs, 1, m + 1)
    if stats is not None and not np.array_equal(clipped, rs):
        stats.flag("rank_clamped")
    primary = np.concatenate([np.arange(1, m + 1), clipped])
    existing = np.concatenate([np.ones(m, dtype=np.int64), np.zeros(len(xs), dtype=np.int64)])
    tie = np.concatenate([np.zeros(m, dtype=np.int64), np.arange(len(xs))])
    order = np.lexsort((tie, existing, primary))
    return np.concatenate([items, xs])[order]


@dataclass(frozen=True)
class RiffleConfig:
    """Knobs for the top-level sorter.

    Practical mode searches with ``d = search_factor * ceil(ln n)`` and
    repairs with window ``window_factor * d``. Theoretical mode uses
    ``d = b_max * ceil(ln n)`` and the window factor 226 * 1000k.
    ``search_k``/``search_c`` are ignored in theoretical mode.
    """

    mode: str = "practical"
    seed: int = 0
    shuffle: bool = True
    search_factor: int = 3
    window_factor: int = 8
    b_max: int = 2
    small_n: int = SMALL_N
    search_k: int | None = None
    # narrower search groups than the standalone default: with c = 8 an
    # insertion can land further away than a window of 8d can repair
    search_c: int | None = 4
    rate: ShrinkRate | None = field(default=None, compare=False)

    def search_d(self, n: int) -> int:
        factor = self.b_max if self.mode == "theoretical" else self.search_factor
        return max(1, factor * ceil_ln(n))

    def window(self, n: int, p: float) -> int:
        if self.mode == "theoretical":
            alpha = 1000 * theoretical_k(p)
            return 226 * alpha * self.search_d(n)
        return self.window_factor * self.search_d(n)


def riffle_sort(model: FaultModel, S: Sequence | np.ndarray, config: RiffleConfig | None = None, *,
                bits: BitSource | None = None, stats: RunStats | None = None) -> Sequence:
    """Approximately sort ``S`` with O(n log n) comparisons.

    ``bits`` switches batch selection to subset sampling from that source
    (and the shuffle, if enabled, draws from it too); otherwise randomness
    comes from ``config.seed``.
    """
    cfg = config or RiffleConfig()
    stats = stats if stats is not None else RunStats()
    items = np.array(as_array(S), dtype=np.int64)
    n = len(items)
    if n <= 1:
        return Sequence(items, check=False)
    if n < cfg.small_n:
        return basket_sort(model, items, n, rate=cfg.rate, stats=stats)

    if cfg.shuffle:
        source = bits if bits is not None else RandomBits(cfg.seed, SHUFFLE_STREAM)
        items = fisher_yates(items, source).items
    if bits is not None:
        batches = partition_batches(items, bits=bits)
    else:
        batches = partition_batches(items, rng=make_rng(cfg.seed, PARTITION_STREAM))

    d = cfg.search_d(n)
    window = cfg.window(n, model.p)
    current = basket_sort(model, batches[0], len(batches[0]), rate=cfg.rate, stats=stats).items
    for batch in batches[1:]:
        params = build_params(len(current), model.p, d, cfg.mode, k=cfg.search_k, c=cfg.search_c)
        found = search_many(model, current, batch, d, params)
        stats.comparisons += int(found.comparisons.sum())
        if found.timeouts:
            stats.flag("search_timeout")
        merged = batch_insert(current, batch, found.taus, stats=stats)
        current = basket_sort(model, merged, window, rate=cfg.rate, stats=stats).items
    return Sequence(current, check=False)
