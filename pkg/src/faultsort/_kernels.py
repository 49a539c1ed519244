"""Compiled inner loops.

Every kernel that needs comparison outcomes takes the comparator as the
tuple ``(key, p, q, sampled, mat)`` produced by ``FaultModel.kargs``:

* ``key``     -- uint64 PRF key derived from the model seed
* ``p``, ``q`` -- error probability bounds
* ``sampled`` -- per-pair probabilities drawn from [q, p] instead of fixed p
* ``mat``     -- uint8 error-indicator matrix (matrix storage) or a 0x0 array

The Python reference implementations in the public modules call the same
``reports_less`` primitive, so outcomes agree bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def pair_is_error(a, b, key, p, q, sampled, mat):
    """Persistent error indicator for the unordered pair {a, b}, a < b."""
    if mat.shape[0] > 0:
        return mat[a, b] != 0
    if p == 0.0:
        return False
    h = mix64(((np.uint64(a) << _S32) | np.uint64(b)) ^ key)
    h = mix64(h + _GOLD)
    u = np.float64(h >> _S11) * _INV53
    if sampled:
        h2 = mix64(h ^ key)
        pxy = q + (p - q) * (np.float64(h2 >> _S11) * _INV53)
        return u < pxy
    return u < p


@njit(inline="always")
def reports_less(x, y, key, p, q, sampled, mat):
    """True iff the comparator reports x as smaller than y (x != y)."""
    if x < y:
        return not pair_is_error(x, y, key, p, q, sampled, mat)
    return pair_is_error(y, x, key, p, q, sampled, mat)


@njit(cache=True, nogil=True)
def reports_less_many(xs, ys, key, p, q, sampled, mat):
    out = np.empty(xs.shape[0], dtype=np.bool_)
    for i in range(xs.shape[0]):
        out[i] = reports_less(xs[i], ys[i], key, p, q, sampled, mat)
    return out


@njit(cache=True, nogil=True)
def error_many(xs, ys, key, p, q, sampled, mat):
    out = np.empty(xs.shape[0], dtype=np.bool_)
    for i in range(xs.shape[0]):
        a, b = xs[i], ys[i]
        if a > b:
            a, b = b, a
        out[i] = pair_is_error(a, b, key, p, q, sampled, mat)
    return out


@njit(cache=True, nogil=True)
def win_counts(items, key, p, q, sampled, mat):
    """Observed wins (opponents reported smaller) in the full tournament."""
    n = items.shape[0]
    wins = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if reports_less(items[j], items[i], key, p, q, sampled, mat):
                wins[i] += 1
            else:
                wins[j] += 1
    return wins


@njit(cache=True, nogil=True)
def tournament_scores(items, key, p, q, sampled, mat):
    """score(x) = number of y in items reported smaller than x."""
    return win_counts(items, key, p, q, sampled, mat)


# ---------------------------------------------------------------------------
# randomness


@njit(cache=True, nogil=True)
def fisher_yates_bits(items, i, bits, pos):
    """Shuffle items[0..i] downward using bits[pos:] for rejection sampling.

    Returns the next index still to process and the new bit offset; stops
    early when the bit buffer cannot serve the next draw.
    """
    nbits_total = bits.shape[0]
    while i > 0:
        bound = i + 1
        nb = 0
        while (1 << nb) < bound:
            nb += 1
        while True:
            if pos + nb > nbits_total:
                return i, pos
            v = 0
            for t in range(nb):
                v = (v << 1) | bits[pos + t]
            pos += nb
            if v < bound:
                break
        j = v
        tmp = items[i]
        items[i] = items[j]
        items[j] = tmp
        i -= 1
    return i, pos


# ---------------------------------------------------------------------------
# noisy search


@njit(inline="always")
def _cell(leaf, lcnt, rcnt, stamp, walk_id):
    # cells are reset lazily the first time a walk touches them
    if stamp[leaf] != walk_id:
        stamp[leaf] = walk_id
        lcnt[leaf] = 0
        rcnt[leaf] = 0


@njit(inline="always")
def _test(items, m, x, tree_j, lo_leaf, hi_leaf, cd, d, k,
          lcnt, rcnt, stamp, walk_id, key, p, q, sampled, mat, comps):
    """Test x against the vertex whose leaves span [lo_leaf, hi_leaf].

    Returns (passed, comps). L(v) lives in the cell of the vertex's first
    leaf and R(v) in the cell of its last leaf.
    """
    _cell(lo_leaf, lcnt, rcnt, stamp, walk_id)
    L = (2 * lo_leaf + tree_j) * cd + 1 - d - 1 - k * lcnt[lo_leaf]
    lcnt[lo_leaf] += 1
    _cell(hi_leaf, lcnt, rcnt, stamp, walk_id)
    R = (2 * hi_leaf + tree_j + 1) * cd + d + k * rcnt[hi_leaf]
    rcnt[hi_leaf] += 1

    larger = 0
    for t in range(k):
        pos = L - t
        if pos <= 0:
            larger += 1
        elif pos <= m:
            comps += 1
            if reports_less(items[pos - 1], x, key, p, q, sampled, mat):
                larger += 1
    smaller = 0
    for t in range(k):
        pos = R + t
        if pos > m:
            smaller += 1
        else:
            comps += 1
            if reports_less(x, items[pos - 1], key, p, q, sampled, mat):
                smaller += 1
    passed = (2 * larger > k) and (2 * smaller > k)
    return passed, comps


@njit(inline="always")
def _leaf_span(depth, idx, h):
    if depth <= h:
        shift = h - depth
        return idx << shift, ((idx + 1) << shift) - 1
    return idx, idx


@njit(cache=True, nogil=True)
def walk(items, m, x, tree_j, cd, d, k, h, eta, budget,
         lcnt, rcnt, stamp, walk_id, key, p, q, sampled, mat):
    """Walk on tree T_j. Returns (leaf index or -1, steps, comparisons).

    ``lcnt``/``rcnt``/``stamp`` hold one pointer cell per leaf; pass a
    ``walk_id`` not used before on these arrays to start from fresh cells.
    """
    depth = 0
    idx = 0
    comps = 0
    leaf_depth = h + eta
    result = -1
    steps = 0
    while steps < budget:
        steps += 1
        if depth < h:
            a_lo, a_hi = _leaf_span(depth + 1, 2 * idx, h)
            pa, comps = _test(items, m, x, tree_j, a_lo, a_hi, cd, d, k,
                              lcnt, rcnt, stamp, walk_id, key, p, q, sampled, mat, comps)
            b_lo, b_hi = _leaf_span(depth + 1, 2 * idx + 1, h)
            pb, comps = _test(items, m, x, tree_j, b_lo, b_hi, cd, d, k,
                              lcnt, rcnt, stamp, walk_id, key, p, q, sampled, mat, comps)
            if pa and not pb:
                depth += 1
                idx = 2 * idx
            elif pb and not pa:
                depth += 1
                idx = 2 * idx + 1
            elif not pa and not pb:
                if depth > 0:
                    depth -= 1
                    idx = idx // 2
        else:
            c_lo, c_hi = _leaf_span(depth + 1, idx, h)
            pc, comps = _test(items, m, x, tree_j, c_lo, c_hi, cd, d, k,
                              lcnt, rcnt, stamp, walk_id, key, p, q, sampled, mat, comps)
            if pc:
                depth += 1
            elif depth > 0:
                depth -= 1
                if depth < h:
                    idx = idx // 2
        if depth == leaf_depth:
            result = idx
            break
    return result, steps, comps


@njit(cache=True, nogil=True)
def search_many(items, m, queries, cd, d, k, h, eta, budget,
                key, p, q, sampled, mat):
    """Run both walks for every query.

    Returns per-query tau (before the min(., m+1) cap), outcome code
    (0 = walk on T0, 1 = walk on T1, 2 = both timed out) and comparisons.
    """
    nq = queries.shape[0]
    taus = np.empty(nq, dtype=np.int64)
    outcome = np.empty(nq, dtype=np.int8)
    comps = np.empty(nq, dtype=np.int64)
    leaves = 1 << h
    lcnt = np.zeros(leaves, dtype=np.int64)
    rcnt = np.zeros(leaves, dtype=np.int64)
    stamp = np.full(leaves, -1, dtype=np.int64)
    fallback = (m + 2) // 2
    for qi in range(nq):
        x = queries[qi]
        leaf0, _, c0 = walk(items, m, x, 0, cd, d, k, h, eta, budget,
                            lcnt, rcnt, stamp, 2 * qi, key, p, q, sampled, mat)
        leaf1, _, c1 = walk(items, m, x, 1, cd, d, k, h, eta, budget,
                            lcnt, rcnt, stamp, 2 * qi + 1, key, p, q, sampled, mat)
        comps[qi] = c0 + c1
        if leaf0 >= 0:
            taus[qi] = 2 * leaf0 * cd + 1
            outcome[qi] = 0
        elif leaf1 >= 0:
            taus[qi] = (2 * leaf1 + 1) * cd + 1
            outcome[qi] = 1
        else:
            taus[qi] = fallback
            outcome[qi] = 2
    return taus, outcome, comps


# ---------------------------------------------------------------------------
# basket sort


@njit(cache=True, nogil=True)
def basket_taus(items, w, key, p, q, sampled, mat):
    """tau_w for every position of S_w (one BasketSort round).

    Each unordered pair within 6 baskets of each other is evaluated once and
    its outcome is credited to per-(element, basket offset) counters; window
    scores are sums of 7 counters. Persistence makes this identical to
    re-comparing every pair inside every window.
    """
    if p == 0.0 and mat.shape[0] == 0:
        return _exact_taus(items, w)
    cnt = _pair_counts(items, w, key, p, q, sampled, mat)
    return _taus_from_counts(cnt, items.shape[0], w)


@njit(cache=True, nogil=True)
def _exact_taus(items, w):
    """Error-free tau_w.

    Without errors the scores inside a window are exactly the ranks
    0..|B|-1, so tau is the window base plus the number of smaller window
    members plus one. Counts come from merging sorted copies of the baskets.
    """
    m = items.shape[0]
    nb = (m + w - 1) // w
    sorted_items = np.empty(m, dtype=items.dtype)
    origin = np.empty(m, dtype=np.int64)
    for b in range(nb):
        b0 = b * w
        b1 = min(m, b0 + w)
        idx = np.argsort(items[b0:b1])
        for t in range(b1 - b0):
            origin[b0 + t] = b0 + idx[t]
            sorted_items[b0 + t] = items[b0 + idx[t]]
    taus = np.empty(m, dtype=np.int64)
    for a in range(nb):
        a0 = a * w
        a1 = min(m, a0 + w)
        base = max(0, a + 1 - 4) * w + 1
        for t in range(a0, a1):
            taus[origin[t]] = base
        for b in range(max(0, a - 3), min(nb, a + 4)):
            b0 = b * w
            b1 = min(m, b0 + w)
            j = b0
            for t in range(a0, a1):
                x = sorted_items[t]
                while j < b1 and sorted_items[j] < x:
                    j += 1
                taus[origin[t]] += j - b0
    return taus


@njit(cache=True, nogil=True)
def _pair_counts(items, w, key, p, q, sampled, mat):
    m = items.shape[0]
    nb = (m + w - 1) // w
    cnt = np.zeros((m, 13), dtype=np.int32)
    for a in range(nb):
        a0 = a * w
        a1 = min(m, a0 + w)
        for b in range(a, min(nb, a + 7)):
            b0 = b * w
            b1 = min(m, b0 + w)
            oa = b - a + 6
            ob = a - b + 6
            for i in range(a0, a1):
                xi = items[i]
                start = i + 1 if a == b else b0
                c = 0
                for j in range(start, b1):
                    if reports_less(items[j], xi, key, p, q, sampled, mat):
                        c += 1
                    else:
                        cnt[j, ob] += 1
                cnt[i, oa] += c
    return cnt


@njit(cache=True, nogil=True)
def _taus_from_counts(cnt, m, w):
    nb = (m + w - 1) // w
    taus = np.empty(m, dtype=np.int64)
    scores = np.empty(7 * w, dtype=np.int64)
    hist = np.zeros(7 * w + 1, dtype=np.int64)
    for i in range(nb):
        lo_b = max(0, i - 3)
        hi_b = min(nb - 1, i + 3)
        p0 = lo_b * w
        p1 = min(m, (hi_b + 1) * w)
        size = p1 - p0
        for t in range(size):
            pos = p0 + t
            bx = pos // w
            s = 0
            for b in range(lo_b, hi_b + 1):
                s += cnt[pos, b - bx + 6]
            scores[t] = s
        for t in range(size + 1):
            hist[t] = 0
        for t in range(size):
            hist[scores[t] + 1] += 1
        for t in range(1, size + 1):
            hist[t] += hist[t - 1]
        # hist[s] = number of window elements with score < s
        base = max(0, i + 1 - 4) * w
        seen = hist.copy()
        for t in range(size):
            s = scores[t]
            seen[s] += 1
            pos = p0 + t
            if pos // w == i:
                taus[pos] = base + seen[s]
    return taus


# ---------------------------------------------------------------------------
# derandomization


@njit(cache=True, nogil=True)
def xor_blocks(F, Fp, eta, key, p, q, sampled, mat):
    """Row-major F x F' outcomes chunked into eta-blocks and XORed.

    Bit convention: 1 iff the F element is reported smaller.
    """
    total = F.shape[0] * Fp.shape[0]
    nbits = total // eta
    out = np.empty(nbits, dtype=np.uint8)
    acc = 0
    fill = 0
    k = 0
    for i in range(F.shape[0]):
        x = F[i]
        for j in range(Fp.shape[0]):
            if k == nbits:
                return out
            b = 1 if reports_less(x, Fp[j], key, p, q, sampled, mat) else 0
            acc ^= b
            fill += 1
            if fill == eta:
                out[k] = acc
                k += 1
                acc = 0
                fill = 0
    return out


@njit(cache=True, nogil=True)
def mismatch_profile(x, items, c, d, key, p, q, sampled, mat):
    """m_x(r) for every grid candidate r = 1, d+1, 2d+1, ... <= m+1."""
    m = items.shape[0]
    less = np.zeros(m + 1, dtype=np.int64)
    greater = np.zeros(m + 1, dtype=np.int64)
    for i in range(m):
        lt = reports_less(items[i], x, key, p, q, sampled, mat)
        less[i + 1] = less[i] + (1 if lt else 0)
        greater[i + 1] = greater[i] + (0 if lt else 1)
    ncand = m // d + 1
    cands = np.empty(ncand, dtype=np.int64)
    counts = np.empty(ncand, dtype=np.int64)
    cdw = c * d
    for t in range(ncand):
        r = 1 + t * d
        lo = max(1, r - cdw)
        hi = min(m, r + cdw - 1)
        mm = 0
        if lo <= r - 1:
            mm += greater[r - 1] - greater[lo - 1]
        if r <= hi:
            mm += less[hi] - less[r - 1]
        cands[t] = r
        counts[t] = mm
    return cands, counts
