import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from faultsort.basket_sort import (
    ModelOutOfRangeError,
    basket_round,
    basket_sort,
    round_comparisons,
    score_basket,
    shrink_rate,
    window_bounds,
)
from faultsort.core import FaultModel, RunStats, Sequence, dislocation_report, local_shuffle, make_rng

# --- shrinking rate --------------------------------------------------------------


def test_rate_error_free_is_half():
    assert shrink_rate(0.0).rho == Fraction(1, 2)


def test_rate_uniform_005():
    r = shrink_rate(0.05)
    assert r.rho == Fraction(23, 45)
    assert float(r) == pytest.approx(0.5 + 4 * 0.05 * 0.05 / 0.9)


@pytest.mark.parametrize("p,q", [(0.15, 0.1), (0.12, 0.1), (0.05, 0.0), (0.15, 0.15)])
def test_rate_formula(p, q):
    expected = 0.5 + (4 * p * q + 5 * (p - q)) / (1 - p - q)
    assert float(shrink_rate(p, q)) == pytest.approx(expected)


def test_rate_rejects_p_equal_q_quarter():
    with pytest.raises(ModelOutOfRangeError):
        shrink_rate(0.25, 0.25)


def test_rate_rejects_wide_band():
    # (9q+1)/(8q+11) at q = 0 is 1/11
    with pytest.raises(ModelOutOfRangeError):
        shrink_rate(0.1, 0.0)
    shrink_rate(0.09, 0.0)


def test_rate_override_must_stay_in_band():
    assert shrink_rate(0.05, override=0.6).rho == Fraction(3, 5)
    with pytest.raises(ModelOutOfRangeError):
        shrink_rate(0.05, override=0.4)
    with pytest.raises(ModelOutOfRangeError):
        shrink_rate(0.05, override=1.0)
    # band_low is 10*0.08/0.9 ~ 0.889 for p = 0.08, q = 0
    with pytest.raises(ModelOutOfRangeError):
        shrink_rate(0.08, 0.0, override=0.8)


def test_shrink_is_exact_floor():
    r = shrink_rate(0.05)
    for w in range(1, 2000):
        assert r.shrink(w) == math.floor(Fraction(23, 45) * w)


# --- scores ------------------------------------------------------------------------


def test_scores_error_free():
    assert score_basket(FaultModel(0.0), [2, 1, 3]).tolist() == [1, 0, 2]


def test_singleton_score():
    assert score_basket(FaultModel(0.3), [5]).tolist() == [0]


@given(st.integers(1, 60), st.integers(0, 2**32))
def test_scores_sum_to_pair_count(size, seed):
    B = np.random.default_rng(seed).permutation(size) + 1
    scores = score_basket(FaultModel(0.3, seed=seed), B)
    assert scores.sum() == size * (size - 1) // 2
    assert scores.min() >= 0 and scores.max() <= size - 1


# --- rounds ------------------------------------------------------------------------


def test_window_spans_seven_baskets_at_most():
    m, w = 100, 7
    for i in range(-(-m // w)):
        lo, hi = window_bounds(i, w, m)
        assert hi - lo <= 7 * w
        assert lo == max(0, i - 3) * w


def test_round_comparisons_counts_each_window():
    m, w = 23, 4
    expected = sum((hi - lo) * (hi - lo - 1) // 2 for hi, lo in
                   (window_bounds(i, w, m)[::-1] for i in range(6)))
    assert round_comparisons(m, w) == expected


@pytest.mark.parametrize("w", [1, 2, 3])
def test_error_free_round_sorts_every_bounded_permutation(w):
    model = FaultModel(0.0)
    checked = 0
    for perm in itertools.permutations(range(1, 9)):
        if max(abs(v - i - 1) for i, v in enumerate(perm)) > w:
            continue
        out = basket_round(model, np.array(perm), w).output
        assert out.tolist() == list(range(1, 9)), perm
        checked += 1
    assert checked > 0


@given(st.integers(1, 400), st.integers(1, 60), st.integers(0, 2**32), st.sampled_from([0.0, 0.1, 0.3]))
def test_round_preserves_elements_and_bounds(m, w, seed, p):
    w = min(w, m)
    items = np.random.default_rng(seed).permutation(m) + 1
    state = basket_round(FaultModel(p, seed=seed), items, w, check=True)
    assert sorted(state.output.tolist()) == list(range(1, m + 1))
    assert state.violations == {"tau_vs_current": 0, "new_vs_tau": 0, "round_displacement": 0}


@given(st.integers(1, 300), st.integers(1, 50), st.integers(0, 2**32), st.sampled_from([0.0, 0.15, 0.4]),
       st.sampled_from(["uniform", "sampled"]))
def test_compiled_round_matches_definition(m, w, seed, p, pair_mode):
    w = min(w, m)
    items = np.random.default_rng(seed).permutation(m) + 1
    model = FaultModel(p, p / 2, seed=seed, pair_mode=pair_mode)
    fast = basket_round(model, items, w)
    slow = basket_round(model, items, w, reference=True)
    assert np.array_equal(fast.taus, slow.taus)
    assert np.array_equal(fast.output, slow.output)


def test_compiled_round_matches_definition_in_matrix_mode():
    items = np.random.default_rng(3).permutation(200) + 1
    model = FaultModel(0.2, seed=1, n=200, storage="matrix")
    for w in (1, 5, 30, 200):
        assert np.array_equal(basket_round(model, items, w).taus,
                              basket_round(model, items, w, reference=True).taus)


def test_tau_formula_on_first_baskets():
    # error-free scores are ranks inside the window
    items = np.array([3, 1, 2, 6, 5, 4])
    state = basket_round(FaultModel(0.0), items, 2, reference=True)
    assert state.taus.tolist() == [3, 1, 2, 6, 5, 4]


# --- full sort -----------------------------------------------------------------


@given(st.integers(1, 300), st.integers(0, 2**32))
def test_error_free_full_window_sorts(m, seed):
    items = np.random.default_rng(seed).permutation(m) + 1
    assert basket_sort(FaultModel(0.0), items, m).tolist() == list(range(1, m + 1))


def test_zero_window_returns_input():
    items = [3, 1, 2]
    assert basket_sort(FaultModel(0.1), items, 0).tolist() == items


def test_window_clamped_to_length():
    stats = RunStats()
    out = basket_sort(FaultModel(0.0), [2, 1], 50, stats=stats)
    assert out.tolist() == [1, 2] and "window_clamped" in stats.flags


def test_deterministic():
    items = local_shuffle(5000, 40, make_rng(1)).items
    a = basket_sort(FaultModel(0.1, seed=3), items, 40)
    b = basket_sort(FaultModel(0.1, seed=3), items, 40)
    assert a == b


def test_comparisons_accumulate_per_round():
    stats = RunStats()
    rounds = []
    basket_sort(FaultModel(0.1, seed=2), np.arange(1, 1001), 64, stats=stats, on_round=rounds.append)
    rate = shrink_rate(0.1)
    ws = [64]
    while rate.shrink(ws[-1]) >= 1:
        ws.append(rate.shrink(ws[-1]))
    assert [r.w for r in rounds] == ws
    assert stats.comparisons == sum(round_comparisons(1000, w) for w in ws)


@pytest.mark.parametrize("seed", range(5))
def test_cumulative_displacement_bound(seed):
    m = 3000
    model = FaultModel(0.1, seed=seed)
    rate = shrink_rate(0.1)
    states = []
    start = np.random.default_rng(seed).permutation(m) + 1
    final = basket_sort(model, start, 200, on_round=states.append).items
    final_pos = np.empty(m + 1, dtype=np.int64)
    final_pos[final] = np.arange(m)
    current = start
    for state in states:
        pos = np.empty(m + 1, dtype=np.int64)
        pos[current] = np.arange(m)
        bound = 8 * state.w / (1 - float(rate.rho))
        assert np.abs(final_pos[1:] - pos[1:]).max() < bound
        current = state.output


def test_dislocation_scaling_on_bounded_inputs():
    means_max, means_total = [], []
    sizes = [2**e for e in range(10, 17)]
    for n in sizes:
        mx, tot = [], []
        for t in range(50):
            start = local_shuffle(n, 64, make_rng(t, 9))
            r = dislocation_report(basket_sort(FaultModel(0.05, seed=t), start, 64))
            mx.append(r.max_dislocation / math.log(n))
            tot.append(r.total_dislocation / n)
        means_max.append(np.mean(mx))
        means_total.append(np.mean(tot))
    assert max(means_max) < 2 and max(means_total) < 2
    # no upward drift across a 1.6x range of ln n
    assert means_max[-1] <= 1.15 * means_max[0]
    assert means_total[-1] <= 1.15 * means_total[0]
