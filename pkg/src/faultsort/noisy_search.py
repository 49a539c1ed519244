"""Approximate rank queries against an almost-sorted sequence.

Two noisy search trees are laid over the sequence: the leaves of tree j own
the groups g_{2i+j} of ``c*d`` consecutive positions, so the two trees'
leaf boundaries interleave. A query walks each tree, testing vertices with
majority votes against elements just outside the vertex's interval, and the
first walk to reach a leaf decides the answer.

Pointer cells are shared: an internal vertex uses the left cell of its
leftmost leaf and the right cell of its rightmost leaf, so a position is
never examined twice by the same pointer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import FaultModel, InvalidModelError, Sequence, as_array, ceil_ln, exact

PRACTICAL_K = 5
PRACTICAL_C = 8
BUDGET_FACTOR = 120


class SearchOutcome(enum.Enum):
    FROM_WALK0 = "FromWalk0"
    FROM_WALK1 = "FromWalk1"
    BOTH_TIMEOUT = "BothTimeout"
    # sequence too short for the trees; midpoint answer
    SHORT_INPUT = "ShortInput"


_OUTCOME_CODES = (SearchOutcome.FROM_WALK0, SearchOutcome.FROM_WALK1, SearchOutcome.BOTH_TIMEOUT)


class InvalidQueryError(ValueError):
    pass


@dataclass(frozen=True)
class WalkParams:
    """Constants and tree geometry for one search instance.

    ``d`` is the dislocation bound the trees are built with (doubled when the
    sequence had to be padded); ``length`` is the padded logical length.
    ``h`` is None when the sequence is too short for trees.
    """

    k: int
    c: int
    eta: int
    walk_budget: int
    d: int
    mode: str
    m: int
    length: int
    h: int | None
    padded: bool = False
    d_requested: int = 0
    d_clamped: bool = False

    @property
    def group_size(self) -> int:
        return self.c * self.d

    @property
    def short(self) -> bool:
        return self.h is None

    @property
    def max_comparisons(self) -> int:
        return 2 * self.walk_budget * 4 * self.k


def theoretical_k(p: float) -> int:
    """Smallest odd k with k >= 32(1-p)/(1-2p)^2, evaluated exactly."""
    pf = exact(p)
    bound = 32 * (1 - pf) / (1 - 2 * pf) ** 2
    k = math.ceil(bound)
    return k if k % 2 else k + 1


def ceil_log(m: int, base: int) -> int:
    """Smallest t >= 0 with base**t >= m."""
    t, v = 0, 1
    while v < m:
        v *= base
        t += 1
    return t


def tail_length(m: int) -> int:
    return 2 + 4 * ceil_log(m, 7)


def walk_budget_for(m: int) -> int:
    return BUDGET_FACTOR * max(1, ceil_ln(m))


def build_params(
    m: int,
    p: float,
    d: int,
    mode: str = "practical",
    *,
    k: int | None = None,
    c: int | None = None,
    walk_budget: int | None = None,
) -> WalkParams:
    """Search constants for a sequence of length ``m``.

    Theoretical mode ignores the ``k``/``c``/``walk_budget`` overrides.
    ``d`` is raised to ceil(ln m) if smaller; the returned params record it.
    """
    if not (0 <= p < 0.5):
        raise InvalidModelError(f"p must lie in [0, 1/2), got {p}")
    if m < 1 or d < 1:
        raise ValueError("need m >= 1 and d >= 1")
    if mode == "theoretical":
        k = theoretical_k(p)
        c = 250 * k
        walk_budget = None
    elif mode == "practical":
        k = PRACTICAL_K if k is None else k
        c = PRACTICAL_C if c is None else c
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if k < 1 or k % 2 == 0:
        raise ValueError("k must be a positive odd integer")
    if c < 1:
        raise ValueError("c must be positive")

    d_eff = max(d, ceil_ln(m))
    common = dict(k=k, c=c, mode=mode, m=m, d_requested=d, d_clamped=d_eff != d)
    budget = walk_budget_for(m) if walk_budget is None else walk_budget
    if m < 4 * c * d_eff:
        return WalkParams(eta=tail_length(m), walk_budget=budget, d=d_eff,
                          length=m, h=None, **common)

    unit = 2 * c * d_eff
    if m % unit == 0 and (m // unit) & (m // unit - 1) == 0:
        h = (m // unit).bit_length() - 1
        length, padded = m, False
    else:
        d_eff *= 2
        unit *= 2
        h = (-(-m // unit) - 1).bit_length()
        length, padded = unit << h, True
    if walk_budget is None:
        budget = walk_budget_for(length)
    return WalkParams(eta=tail_length(length), walk_budget=budget, d=d_eff,
                      length=length, h=h, padded=padded, **common)


def pad_sequence(S: Sequence | np.ndarray, d: int, params: WalkParams) -> tuple[np.ndarray, int, int]:
    """Padded view of S: ``(items, logical_length, d')``.

    Positions past ``len(items)`` are +infinity sentinels, so nothing is
    copied; only the logical length and the dislocation bound change.
    """
    items = as_array(S)
    if params.padded:
        return items, params.length, 2 * d
    return items, params.length, d


@dataclass(frozen=True)
class RankEstimate:
    tau: int
    outcome: SearchOutcome
    comparisons: int = 0
    d_used: int = 0
    d_clamped: bool = False


# ---------------------------------------------------------------------------
# reference implementation


@dataclass
class _Cells:
    left: int
    right: int


class NoisyTree:
    """One search tree over an (implicitly padded) sequence.

    Vertices are addressed as ``(depth, index)``. Depths ``0..h`` form a
    complete binary tree; below each depth-``h`` vertex hangs a path of
    ``eta`` vertices ending in a leaf, all sharing the leaf's pointer cells.
    Cells are created on first use.
    """

    def __init__(self, model: FaultModel, items: np.ndarray, parity: int, params: WalkParams):
        self.model = model
        self.items = items
        self.parity = parity
        self.params = params
        self.cells: dict[int, _Cells] = {}
        self.compared: list[int] = []

    @property
    def height(self) -> int:
        return self.params.h + self.params.eta

    def leaf_span(self, vertex: tuple[int, int]) -> tuple[int, int]:
        depth, idx = vertex
        h = self.params.h
        if depth <= h:
            return idx << (h - depth), ((idx + 1) << (h - depth)) - 1
        return idx, idx

    def interval(self, vertex: tuple[int, int]) -> tuple[int, int]:
        """First and last position of I(v)."""
        lo, hi = self.leaf_span(vertex)
        cd = self.params.group_size
        return (2 * lo + self.parity) * cd + 1, (2 * hi + self.parity + 1) * cd

    def _cell(self, leaf: int) -> _Cells:
        cell = self.cells.get(leaf)
        if cell is None:
            cd, d = self.params.group_size, self.params.d
            first = (2 * leaf + self.parity) * cd + 1
            last = first + cd - 1
            cell = self.cells[leaf] = _Cells(first - d - 1, last + d)
        return cell

    def pointers(self, vertex: tuple[int, int]) -> tuple[int, int]:
        lo, hi = self.leaf_span(vertex)
        return self._cell(lo).left, self._cell(hi).right

    def children(self, vertex: tuple[int, int]) -> list[tuple[int, int]]:
        depth, idx = vertex
        if depth < self.params.h:
            return [(depth + 1, 2 * idx), (depth + 1, 2 * idx + 1)]
        if depth < self.height:
            return [(depth + 1, idx)]
        return []

    def parent(self, vertex: tuple[int, int]) -> tuple[int, int]:
        depth, idx = vertex
        if depth == 0:
            return vertex
        if depth <= self.params.h:
            return depth - 1, idx // 2
        return depth - 1, idx

    def _compare(self, x: int, pos: int) -> bool:
        """True iff the element at ``pos`` is observed smaller than x."""
        if pos <= 0:
            return True
        if pos > len(self.items):
            return False
        self.compared.append(pos)
        return self.model.reports_less(int(self.items[pos - 1]), x)

    def test_vertex(self, x: int, vertex: tuple[int, int]) -> bool:
        k = self.params.k
        lo, hi = self.leaf_span(vertex)
        lcell, rcell = self._cell(lo), self._cell(hi)
        L, R = lcell.left, rcell.right
        lcell.left -= k
        rcell.right += k
        larger = sum(self._compare(x, L - t) for t in range(k))
        smaller = sum(not self._compare(x, R + t) for t in range(k))
        return 2 * larger > k and 2 * smaller > k

    def random_walk(self, x: int) -> tuple[int | None, int]:
        """Walk from the root. Returns ``(leaf index or None, steps)``."""
        v = (0, 0)
        steps = 0
        while steps < self.params.walk_budget:
            steps += 1
            passing = [u for u in self.children(v) if self.test_vertex(x, u)]
            if len(passing) == 1:
                v = passing[0]
            elif not passing:
                v = self.parent(v)
            if v[0] == self.height:
                return v[1], steps
        return None, steps


def reference_search(model: FaultModel, S: Sequence | np.ndarray, x: int, params: WalkParams) -> tuple[RankEstimate, list[int]]:
    """Pure-Python search; also returns every position compared with x."""
    items = as_array(S)
    m = len(items)
    if params.short:
        return RankEstimate((m + 2) // 2, SearchOutcome.SHORT_INPUT, 0, params.d, params.d_clamped), []
    compared: list[int] = []
    cd = params.group_size
    found = []
    for parity in (0, 1):
        tree = NoisyTree(model, items, parity, params)
        leaf, _ = tree.random_walk(int(x))
        compared += tree.compared
        found.append(leaf)
    for parity, outcome in ((0, SearchOutcome.FROM_WALK0), (1, SearchOutcome.FROM_WALK1)):
        if found[parity] is not None:
            tau = min((2 * found[parity] + parity) * cd + 1, m + 1)
            return RankEstimate(tau, outcome, len(compared), params.d, params.d_clamped), compared
    return RankEstimate((m + 2) // 2, SearchOutcome.BOTH_TIMEOUT, len(compared), params.d, params.d_clamped), compared


# ---------------------------------------------------------------------------
# compiled path


@dataclass
class BatchResult:
    taus: np.ndarray
    outcomes: np.ndarray
    comparisons: np.ndarray
    params: WalkParams = field(repr=False)

    @property
    def timeouts(self) -> int:
        return int(np.count_nonzero(self.outcomes == 2))


def search_many(model: FaultModel, S: Sequence | np.ndarray, queries, d: int,
                params: WalkParams | None = None, mode: str = "practical") -> BatchResult:
    """Rank estimates for many queries against the same sequence.

    Queries are independent; each gets fresh pointer cells.
    """
    items = np.ascontiguousarray(as_array(S), dtype=np.int64)
    qs = np.ascontiguousarray(np.asarray(queries, dtype=np.int64).reshape(-1))
    m = len(items)
    if params is None:
        params = build_params(max(m, 1), model.p, d, mode)
    if qs.size and m and np.isin(qs, items).any():
        raise InvalidQueryError("query elements must not belong to the sequence")
    if params.short or m == 0:
        n = qs.size
        return BatchResult(np.full(n, (m + 2) // 2, dtype=np.int64), np.full(n, 3, dtype=np.int8),
                           np.zeros(n, dtype=np.int64), params)
    taus, outcomes, comps = K.search_many(
        items, m, qs, params.group_size, params.d, params.k, params.h, params.eta,
        params.walk_budget, *model.kargs)
    np.minimum(taus, m + 1, out=taus)
    return BatchResult(taus, outcomes, comps, params)


def noisy_search(model: FaultModel, S: Sequence | np.ndarray, x: int, d: int,
                 params: WalkParams | None = None, mode: str = "practical") -> RankEstimate:
    """Estimate the rank of ``x`` among the elements of ``S``.

    With ``d`` at least the dislocation of S the estimate is within 4cd of
    the true rank with high probability.
    """
    res = search_many(model, S, [x], d, params, mode)
    code = int(res.outcomes[0])
    outcome = SearchOutcome.SHORT_INPUT if code == 3 else _OUTCOME_CODES[code]
    return RankEstimate(int(res.taus[0]), outcome, int(res.comparisons[0]),
                        res.params.d, res.params.d_clamped)
