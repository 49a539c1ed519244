"""Slow, obviously-correct recomputations used to check the fast paths."""

from __future__ import annotations

from dataclasses import dataclass

from ..core import DislocationReport


@dataclass(frozen=True)
class OracleReport:
    report: DislocationReport
    is_permutation: bool
    is_sorted: bool


def brute_force_oracle(seq) -> OracleReport:
    """Dislocations by counting smaller elements pairwise (quadratic)."""
    items = [int(v) for v in seq]
    n = len(items)
    per = []
    for pos, x in enumerate(items, start=1):
        rank = 1
        for y in items:
            if y < x:
                rank += 1
        per.append(abs(pos - rank))
    report = DislocationReport(max(per, default=0), sum(per), per)
    is_perm = sorted(items) == list(range(1, n + 1))
    is_sorted = all(items[i] < items[i + 1] for i in range(n - 1))
    return OracleReport(report, is_perm, is_sorted)
