import itertools
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from faultsort.core import BitBudgetExceeded, FaultModel, PoolBits, RandomBits, RunStats, dislocation_report
from faultsort.derand import (
    DerandConfig,
    DerandReport,
    PreconditionError,
    block_length,
    count_mismatches,
    best_positions,
    derand_riffle_sort,
    harvest_bits,
    mismatch_width,
    random_subset,
    reinsert_front,
    scan_stride,
    xor_bits,
)
from faultsort.riffle_sort import RiffleConfig, riffle_sort

# --- xor extraction -----------------------------------------------------------------


def test_xor_of_equal_bits_is_zero():
    for b in (0, 1):
        assert xor_bits([b, b]) == 0


def test_xor_single_bit_is_identity():
    assert xor_bits([1]) == 1 and xor_bits([0]) == 0


def test_xor_empty_rejected():
    with pytest.raises(ValueError):
        xor_bits([])


def test_xor_probability_by_enumeration():
    pr = Fraction(3, 5)
    total = Fraction(0)
    for a, b in itertools.product((0, 1), repeat=2):
        weight = (pr if a else 1 - pr) * (pr if b else 1 - pr)
        total += weight * xor_bits([a, b])
    assert total == Fraction(12, 25)


@pytest.mark.parametrize("eta", [1, 2, 3, 5])
def test_xor_bias_bound_is_exact_for_equal_biases(eta):
    delta = Fraction(2, 5)
    pr = Fraction(1, 2) + delta / 2
    p_one = sum(
        math.prod(pr if b else 1 - pr for b in bits) * xor_bits(bits)
        for bits in itertools.product((0, 1), repeat=eta)
    )
    assert abs(p_one - Fraction(1, 2)) == delta**eta / 2


def test_block_length_example():
    # ceil(4 * log2(10^6) / log2(5)) = ceil(34.34)
    assert block_length(10**6, 0.4) == 35
    assert block_length(10**6, 0.4) == math.ceil(4 * math.log2(10**6) / math.log2(5))


def test_block_length_needs_positive_q():
    with pytest.raises(PreconditionError):
        block_length(1000, 0.0)


def test_pool_uses_only_farm_pairs_row_major():
    n = 120
    model = FaultModel(0.3, 0.1, seed=5, n=n, storage="matrix", pair_mode="sampled")
    F = np.arange(1, 11)
    rest = np.arange(11, n + 1)
    eta = 7
    farm = harvest_bits(model, F, rest, eta)
    outcomes = [int(model.reports_less(int(x), int(y))) for x in F for y in rest]
    expected = [xor_bits(outcomes[i:i + eta]) for i in range(0, len(outcomes) - eta + 1, eta)]
    assert farm.pool.tolist() == expected
    assert farm.capacity == len(F) * len(rest) // eta


def test_pool_bias_within_bound():
    model = FaultModel(0.3, seed=2)
    F = np.arange(1, 65)
    rest = np.arange(65, 65 + 40000)
    for eta in (1, 2, 4):
        pool = harvest_bits(model, F, rest, eta).pool
        sigma = 0.5 / math.sqrt(pool.size)
        assert abs(pool.mean() - 0.5) <= 0.4**eta / 2 + 4 * sigma


# --- uniform subsets -------------------------------------------------------------


def test_subset_of_size_zero():
    out, used = random_subset(np.arange(10), 0, RandomBits(1))
    assert out.size == 0 and used == 0


def test_subset_of_full_size():
    A = np.array([5, 3, 9, 1])
    out, _ = random_subset(A, 4, RandomBits(1))
    assert out.tolist() == A.tolist()


def test_subset_size_out_of_range():
    with pytest.raises(ValueError):
        random_subset(np.arange(3), 4, RandomBits(0))


@given(st.integers(0, 60), st.data())
def test_subset_size_and_containment(size, data):
    h = data.draw(st.integers(0, size))
    A = np.random.default_rng(size).permutation(200)[:size]
    bits = RandomBits(data.draw(st.integers(0, 2**32)))
    start = bits.consumed
    out, used = random_subset(A, h, bits)
    assert out.size == h and set(out.tolist()) <= set(A.tolist())
    assert used == bits.consumed - start
    pos = {v: i for i, v in enumerate(A.tolist())}
    assert [pos[v] for v in out.tolist()] == sorted(pos[v] for v in out.tolist())


def test_subset_accounting_counts_rejections():
    # |A| = 3 needs 2 bits per pivot draw and 11 is rejected, so the pivot is
    # 20 after 4 bits; coins 1, 0 keep B = [10], which is too big for h - 1 = 0,
    # so the search continues inside B where a 1-element draw costs no bits
    bits = PoolBits(np.array([1, 1, 0, 1, 1, 0], dtype=np.uint8))
    out, used = random_subset(np.array([10, 20, 30]), 1, bits)
    assert used == 6
    assert out.tolist() == [10]


def test_subset_four_choose_two_frequencies():
    bits = RandomBits(11)
    counts = {}
    trials = 60000
    for _ in range(trials):
        key = tuple(random_subset(np.arange(4), 2, bits)[0].tolist())
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    for c in counts.values():
        assert abs(c / trials - 1 / 6) <= 0.01


def test_subset_chi_square_five_choose_two():
    bits = RandomBits(12)
    trials = 10**5
    index = {s: i for i, s in enumerate(itertools.combinations(range(5), 2))}
    counts = np.zeros(len(index))
    A = np.arange(5)
    for _ in range(trials):
        counts[index[tuple(random_subset(A, 2, bits)[0].tolist())]] += 1
    chi2, pvalue = sps.chisquare(counts)
    assert pvalue > 1e-3


def test_subset_bit_usage_below_sixty_per_element():
    N = 10**4
    bits = RandomBits(13)
    A = np.arange(N)
    for h in (1, N // 3, N // 2, N - 1):
        _, used = random_subset(A, h, bits)
        assert used <= 60 * N


def test_subset_propagates_exhaustion():
    with pytest.raises(BitBudgetExceeded):
        random_subset(np.arange(100), 50, PoolBits(np.zeros(10, dtype=np.uint8)))


# --- mismatch scan ------------------------------------------------------------


def test_mismatch_width_satisfies_both_inequalities():
    for p in (0.01, 0.05, 0.1, 0.2, 0.24):
        c = mismatch_width(p)
        pf = Fraction(str(p))
        assert c >= 51 / pf and c > (7 - 8 * pf) / (1 - 4 * pf)
        assert not (c - 1 >= 51 / pf and c - 1 > (7 - 8 * pf) / (1 - 4 * pf))


def test_mismatch_width_range():
    with pytest.raises(PreconditionError):
        mismatch_width(0.25)
    with pytest.raises(PreconditionError):
        mismatch_width(0.0)


def test_scan_stride_at_least_three_log():
    assert scan_stride(2**16) == 48
    assert scan_stride(2**16, 100) == 100


def sorted_without(x, m):
    return np.array([v for v in range(1, m + 2) if v != x])


def test_no_mismatch_at_true_rank():
    S = sorted_without(50, 100)
    assert count_mismatches(FaultModel(0.0), 50, S, 50, 3, 4) == 0


def test_mismatch_count_one_window_early():
    c, d = 3, 4
    S = sorted_without(50, 100)
    assert count_mismatches(FaultModel(0.0), 50, S, 50 - c * d, c, d) == c * d


def test_mismatch_window_clamped_away():
    c, d = 2, 3
    S = sorted_without(5, 20)
    assert count_mismatches(FaultModel(0.0), 5, S, 20 + c * d + 1, c, d) == 0


@given(st.integers(0, 2**32), st.integers(20, 400), st.integers(1, 6), st.integers(1, 9))
def test_grid_profile_matches_direct_count(seed, m, c, d):
    rng = np.random.default_rng(seed)
    values = rng.permutation(m + 1) + 1
    x, S = int(values[0]), values[1:]
    model = FaultModel(0.2, seed=seed)
    best = best_positions(model, S, [x], c, d)[0]
    grid = range(1, m + 2, d)
    counts = [count_mismatches(model, x, S, r, c, d) for r in grid]
    assert best == grid[int(np.argmin(counts))]


def test_error_free_reinsertion_lands_within_stride():
    m, d, c = 600, 7, 5
    rng = np.random.default_rng(1)
    F = rng.choice(np.arange(1, m + 1), 15, replace=False)
    rest = np.setdiff1d(np.arange(1, m + 1), F)
    out = reinsert_front(FaultModel(0.0), rest, F, c, d)
    assert len(out) == m
    for x in F:
        assert abs(out.position(int(x)) - x) <= d + len(F)


def test_reinsertion_lands_near_rank_under_errors():
    m = 3000
    rest = np.arange(41, m + 1)
    F = np.arange(1, 41)
    model = FaultModel(0.05, seed=3)
    c, d = mismatch_width(0.05), scan_stride(m)
    out = reinsert_front(model, rest, F, c, d)
    disl = dislocation_report(out)
    assert disl.max_dislocation <= c * d


# --- full pipeline ---------------------------------------------------------------


def test_zero_q_rejected():
    with pytest.raises(PreconditionError):
        derand_riffle_sort(FaultModel(0.1, 0.0), np.arange(1, 100))


def test_zero_q_fallback_when_allowed():
    report = DerandReport()
    out = derand_riffle_sort(FaultModel(0.0), np.arange(200, 0, -1), DerandConfig(allow_fallback=True), report=report)
    assert out.tolist() == list(range(1, 201)) and report.fallback == "zero_q"


def test_small_input_warns_and_falls_back():
    stats = RunStats()
    with pytest.warns(RuntimeWarning):
        out = derand_riffle_sort(FaultModel(0.05), np.arange(1, 1001), stats=stats)
    assert out.is_permutation() and "fallback_small_n" in stats.flags


def test_pipeline_is_deterministic():
    S = np.random.default_rng(0).permutation(2**13) + 1
    cfg = DerandConfig(farm_factor=10)
    a = derand_riffle_sort(FaultModel(0.2, seed=4), S, cfg)
    b = derand_riffle_sort(FaultModel(0.2, seed=4), S, cfg)
    assert a == b


def test_pipeline_with_real_bit_farm():
    n = 2**14
    stats, report = RunStats(), DerandReport()
    out = derand_riffle_sort(FaultModel(0.2, seed=1), np.arange(1, n + 1), DerandConfig(farm_factor=10),
                             stats=stats, report=report)
    assert out.is_permutation() and stats.flags == []
    assert report.eta == block_length(n, 0.2) and report.farm_size == 10 * report.eta
    assert 0 < report.bits_used <= report.bits_available
    r = dislocation_report(out)
    assert r.max_dislocation <= mismatch_width(0.2) * scan_stride(n)
    assert r.total_dislocation < 5 * n


def test_exhausted_pool_returns_rest_unsorted_and_flags():
    n = 2**13
    S = np.random.default_rng(2).permutation(n) + 1
    stats = RunStats()
    out = derand_riffle_sort(FaultModel(0.2, seed=1), S, DerandConfig(farm_factor=1), stats=stats)
    assert "bit_budget_exhausted" in stats.flags and out.is_permutation()


def test_default_config_tracks_randomised_sorter():
    n, trials = 2**14, 30
    ours, theirs = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for t in range(trials):
            model = FaultModel(0.05, seed=t)
            S = np.arange(1, n + 1)
            ours.append(dislocation_report(derand_riffle_sort(model, S)))
            theirs.append(dislocation_report(riffle_sort(model, S, RiffleConfig(seed=t))))
    for attr in ("max_dislocation", "total_dislocation"):
        a = np.mean([getattr(r, attr) for r in ours])
        b = np.mean([getattr(r, attr) for r in theirs])
        assert b / 2 <= a <= 2 * b
