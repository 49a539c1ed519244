"""Window-shrinking repair of an almost-sorted sequence.

Each round cuts the sequence into baskets of ``w`` positions. Every element
is scored against the window of baskets within three of its own, gets a
tentative position from its rank inside that window, and the whole sequence
is stably re-sorted by tentative position. The window then shrinks by the
rate ``rho`` until it reaches zero.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels as K
from .core import FaultModel, FaultsortError, RunStats, Sequence, as_array, exact

REACH = 3  # baskets on either side that enter a score window


class ModelOutOfRangeError(FaultsortError, ValueError):
    pass


@dataclass(frozen=True)
class ShrinkRate:
    rho: Fraction
    band_low: Fraction
    theoretical: bool = True

    def shrink(self, w: int) -> int:
        """floor(rho * w), exactly."""
        return (self.rho.numerator * w) // self.rho.denominator

    def __float__(self):
        return float(self.rho)


def admissible(p: float, q: float) -> bool:
    pf, qf = exact(p), exact(q)
    return 0 <= qf <= pf and pf < (9 * qf + 1) / (8 * qf + 11)


def shrink_rate(p: float, q: float | None = None, override: float | Fraction | None = None) -> ShrinkRate:
    """Shrinking rate for error bounds ``q <= p``.

    ``override`` replaces the formula value; it must stay inside the
    admissible band and be at least 1/2.
    """
    q = p if q is None else q
    if not admissible(p, q):
        raise ModelOutOfRangeError(f"need 0 <= q <= p < (9q+1)/(8q+11); got p={p}, q={q}")
    pf, qf = exact(p), exact(q)
    band_low = (8 * pf * qf + 10 * (pf - qf)) / (1 - pf - qf)
    rho = Fraction(1, 2) + band_low / 2
    if override is None:
        return ShrinkRate(rho, band_low, True)
    ov = exact(override)
    if not (Fraction(1, 2) <= ov < 1 and ov > band_low):
        raise ModelOutOfRangeError(f"rate {override} outside the admissible band ({float(band_low):.4g}, 1)")
    return ShrinkRate(ov, band_low, False)


def score_basket(model: FaultModel, B) -> np.ndarray:
    """score(x) = number of other window members observed smaller than x."""
    items = np.ascontiguousarray(as_array(B), dtype=np.int64)
    return K.tournament_scores(items, *model.kargs)


def window_bounds(i: int, w: int, m: int) -> tuple[int, int]:
    """0-based slice of the score window for basket ``i`` (0-based)."""
    nb = -(-m // w)
    lo = max(0, i - REACH) * w
    hi = min(m, (min(nb - 1, i + REACH) + 1) * w)
    return lo, hi


def round_comparisons(m: int, w: int) -> int:
    """Logical comparisons of one round: C(|B|, 2) summed over windows."""
    i = np.arange(-(-m // w), dtype=np.int64)
    nb = len(i)
    lo = np.maximum(0, i - REACH) * w
    hi = np.minimum(m, (np.minimum(nb - 1, i + REACH) + 1) * w)
    size = hi - lo
    return int(np.sum(size * (size - 1) // 2))


@dataclass
class RoundState:
    w: int
    taus: np.ndarray
    output: np.ndarray
    comparisons: int
    scores: list[np.ndarray] | None = field(default=None, repr=False)
    violations: dict[str, int] = field(default_factory=dict)

    @property
    def n_baskets(self) -> int:
        return -(-len(self.taus) // self.w)


def reference_taus(model: FaultModel, items: np.ndarray, w: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Tentative positions computed window by window, straight from the definition."""
    m = len(items)
    taus = np.empty(m, dtype=np.int64)
    all_scores = []
    for i in range(-(-m // w)):
        lo, hi = window_bounds(i, w, m)
        B = items[lo:hi]
        xs, ys = np.meshgrid(B, B, indexing="ij")
        off = ~np.eye(len(B), dtype=bool)
        smaller = np.zeros((len(B), len(B)), dtype=bool)
        smaller[off] = model.reports_less_many(ys[off], xs[off])
        scores = smaller.sum(axis=1)
        all_scores.append(scores)
        order = np.argsort(scores, kind="stable")
        pos_in_a = np.empty(len(B), dtype=np.int64)
        pos_in_a[order] = np.arange(1, len(B) + 1)
        base = max(0, i + 1 - 4) * w
        mine = slice(i * w - lo, min(m, (i + 1) * w) - lo)
        taus[i * w:min(m, (i + 1) * w)] = base + pos_in_a[mine]
    return taus, all_scores


def basket_round(model: FaultModel, S_w: Sequence | np.ndarray, w: int, *,
                 check: bool = False, reference: bool = False) -> RoundState:
    """One round at window size ``w``.

    ``check`` counts violations of the per-round displacement bounds
    (tentative vs current position, new vs tentative, new vs current).
    """
    if w < 1:
        raise ValueError("window size must be positive")
    items = np.ascontiguousarray(as_array(S_w), dtype=np.int64)
    m = len(items)
    scores = None
    if reference:
        taus, scores = reference_taus(model, items, w)
    else:
        taus = K.basket_taus(items, w, *model.kargs)
    order = np.argsort(taus, kind="stable")
    out = items[order]
    state = RoundState(w, taus, out, round_comparisons(m, w), scores)
    if check:
        before = np.arange(1, m + 1)
        after = np.empty(m, dtype=np.int64)
        after[order] = before
        state.violations = {
            "tau_vs_current": int(np.count_nonzero(np.abs(taus - before) >= 4 * w)),
            "new_vs_tau": int(np.count_nonzero(np.abs(after - taus) >= 4 * w)),
            "round_displacement": int(np.count_nonzero(np.abs(after - before) >= 8 * w)),
        }
    return state


def basket_sort(
    model: FaultModel,
    S: Sequence | np.ndarray,
    w_S: int,
    *,
    rate: ShrinkRate | None = None,
    check: bool = False,
    on_round: Callable[[RoundState], None] | None = None,
    stats: RunStats | None = None,
    reference: bool = False,
) -> Sequence:
    """Approximately sort ``S``, assumed to have dislocation at most ``w_S``.

    Runs rounds at w = w_S, floor(rho*w_S), ... down to 1. ``w_S`` above
    ``len(S)`` is clamped; ``w_S < 1`` returns ``S`` unchanged.
    """
    items = np.array(as_array(S), dtype=np.int64)
    m = len(items)
    if rate is None:
        rate = shrink_rate(model.p, model.q)
    w = min(int(w_S), m)
    if stats is not None and w_S > m:
        stats.flag("window_clamped")
    while w >= 1:
        state = basket_round(model, items, w, check=check, reference=reference)
        if stats is not None:
            stats.comparisons += state.comparisons
        if on_round is not None:
            on_round(state)
        items = state.output
        w = rate.shrink(w)
    return Sequence(items, check=False)
