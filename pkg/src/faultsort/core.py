"""Elements, the persistent fault model, dislocation metrics and randomness.

Elements are plain integers; an element's value is its true key, so the
rank of ``x`` in a sequence is one plus the number of smaller values in it.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels as K

MAX_ELEMENT = (1 << 32) - 1
DEFAULT_MATRIX_CAP = 4096
DEFAULT_TOURNAMENT_CAP = 1 << 14
_MASK64 = (1 << 64) - 1


class FaultsortError(Exception):
    """Base class for errors raised by this package."""


class InvalidModelError(FaultsortError, ValueError):
    pass


class InvalidComparisonError(FaultsortError, ValueError):
    pass


class SizeError(FaultsortError, ValueError):
    pass


class BitBudgetExceeded(FaultsortError, RuntimeError):
    """A finite bit source ran dry."""


class Outcome(enum.Enum):
    REPORTED_SMALLER = "ReportedSmaller"
    REPORTED_LARGER = "ReportedLarger"


def exact(value: float | Fraction | int) -> Fraction:
    """Exact rational for a user-supplied probability (0.1 -> 1/10)."""
    if isinstance(value, Fraction):
        return value
    return Fraction(repr(value)) if isinstance(value, float) else Fraction(value)


def ceil_ln(m: int) -> int:
    """ceil(ln m) for m >= 1, exact at the integer boundaries."""
    if m <= 1:
        return 0
    t = math.ceil(math.log(m))
    # math.log can land a hair above an integer; e^t is never an integer
    while t > 1 and math.exp(t - 1) >= m:
        t -= 1
    return t


def mix64(z: int) -> int:
    """splitmix64 finaliser on a 64-bit integer."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def splitmix(seed: int) -> int:
    return mix64((seed + 0x9E3779B97F4A7C15) & _MASK64)


def _pair_hashes(a: int, b: int, key: int) -> tuple[int, int]:
    h = mix64(((int(a) << 32) | int(b)) ^ int(key))
    h = mix64((h + 0x9E3779B97F4A7C15) & _MASK64)
    return h, mix64(h ^ key)


def prf_pair_is_error(a: int, b: int, key: int, p: float, q: float, sampled: bool) -> bool:
    """Pure-Python twin of the compiled PRF error test for a < b."""
    if p == 0.0:
        return False
    h, h2 = _pair_hashes(a, b, key)
    u = (h >> 11) / 2.0**53
    if sampled:
        return u < q + (p - q) * ((h2 >> 11) / 2.0**53)
    return u < p


@dataclass(frozen=True)
class FaultModel:
    """Persistent random comparison faults with error probability in [q, p].

    With ``storage="prf"`` the outcome of a pair is a keyed hash of the
    unordered pair, so nothing is stored and any ``n`` up to 2**32 works.
    ``storage="matrix"`` samples every pair up front (needs ``n``) and is
    what the explicit ``per_pair`` map uses.

    ``pair_mode="uniform"`` gives every pair probability exactly ``p``;
    ``"sampled"`` draws each pair's probability uniformly from [q, p].
    ``q`` defaults to ``p``.
    """

    p: float
    q: float | None = None
    seed: int = 0
    storage: str = "prf"
    pair_mode: str = "uniform"
    n: int | None = None
    per_pair: Mapping[tuple[int, int], float] | None = field(default=None, compare=False)
    matrix_cap: int = DEFAULT_MATRIX_CAP

    def __post_init__(self):
        p = float(self.p)
        q = p if self.q is None else float(self.q)
        if not (0.0 <= q <= p < 0.5):
            raise InvalidModelError(f"need 0 <= q <= p < 1/2, got p={p}, q={q}")
        if self.storage not in ("prf", "matrix"):
            raise InvalidModelError(f"unknown storage mode {self.storage!r}")
        if self.pair_mode not in ("uniform", "sampled"):
            raise InvalidModelError(f"unknown pair mode {self.pair_mode!r}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        storage = self.storage
        if self.per_pair is not None:
            storage = "matrix"
            object.__setattr__(self, "storage", storage)
        if storage == "matrix":
            if self.n is None:
                raise InvalidModelError("matrix storage needs n")
            if self.n > self.matrix_cap:
                raise SizeError(f"matrix storage limited to n <= {self.matrix_cap}")
            mat = self._sample_matrix()
        else:
            mat = np.zeros((0, 0), dtype=np.uint8)
        mat.setflags(write=False)
        object.__setattr__(self, "_mat", mat)
        object.__setattr__(self, "_key", np.uint64(splitmix(self.seed)))

    def _sample_matrix(self) -> np.ndarray:
        n = self.n
        rng = make_rng(self.seed, stream=0xE770)
        if self.per_pair is not None:
            probs = np.full((n + 1, n + 1), self.p)
            if self.pair_mode == "sampled":
                probs[:] = rng.uniform(self.q, self.p, size=probs.shape)
            for (a, b), pr in self.per_pair.items():
                if a == b or not (1 <= a <= n and 1 <= b <= n):
                    raise InvalidModelError(f"bad pair {(a, b)} for n={n}")
                if not (self.q <= pr <= self.p):
                    raise InvalidModelError(f"pair probability {pr} outside [q, p]")
                probs[min(a, b), max(a, b)] = pr
        elif self.pair_mode == "sampled":
            probs = rng.uniform(self.q, self.p, size=(n + 1, n + 1))
        else:
            probs = np.full((n + 1, n + 1), self.p)
        err = rng.random((n + 1, n + 1)) < probs
        err = np.triu(err, 1)
        return (err | err.T).astype(np.uint8)

    @property
    def kargs(self) -> tuple:
        """Comparator arguments for the compiled kernels."""
        return (self._key, self.p, self.q, self.pair_mode == "sampled", self._mat)

    def _check(self, xs: np.ndarray, ys: np.ndarray):
        if np.any(xs == ys):
            raise InvalidComparisonError("cannot compare an element with itself")
        lo = min(xs.min(initial=1), ys.min(initial=1))
        hi = max(xs.max(initial=1), ys.max(initial=1))
        bound = self.n if self.storage == "matrix" else MAX_ELEMENT
        if lo < 1 or hi > bound:
            raise InvalidComparisonError(f"elements must lie in 1..{bound}")

    def reports_less(self, x: int, y: int) -> bool:
        """True iff x is observed as smaller than y."""
        return bool(self.reports_less_many(np.array([x]), np.array([y]))[0])

    def reports_less_many(self, xs, ys) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        self._check(xs, ys)
        return K.reports_less_many(xs, ys, *self.kargs)

    def is_error_many(self, xs, ys) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        self._check(xs, ys)
        return K.error_many(xs, ys, *self.kargs)

    def error_probability(self, x: int, y: int) -> float:
        if self.per_pair is not None:
            key = (min(x, y), max(x, y))
            for pair in (key, key[::-1]):
                if pair in self.per_pair:
                    return float(self.per_pair[pair])
        if self.pair_mode == "uniform":
            return self.p
        if self.storage == "matrix":
            # sampled matrices keep only the realised outcome
            raise NotImplementedError("per-pair probabilities are not retained in matrix mode")
        _, h2 = _pair_hashes(min(x, y), max(x, y), int(self._key))
        return self.q + (self.p - self.q) * ((h2 >> 11) / 2.0**53)


def observe(model: FaultModel, x: int, y: int) -> Outcome:
    """Observed order of x relative to y under ``model``."""
    if model.reports_less(x, y):
        return Outcome.REPORTED_SMALLER
    return Outcome.REPORTED_LARGER


class Sequence:
    """An ordered collection of distinct integer elements.

    Positions are 1-based. ``rank(x)`` is 1 + the number of smaller elements
    in the sequence, which for a permutation of 1..n is just ``x``.
    """

    __slots__ = ("_items", "_pos")

    def __init__(self, items: Iterable[int] | np.ndarray, *, check: bool = True):
        arr = np.array(items, dtype=np.int64).reshape(-1)
        if check and arr.size:
            if arr.min() < 1 or arr.max() > MAX_ELEMENT:
                raise ValueError(f"elements must lie in 1..{MAX_ELEMENT}")
            if np.unique(arr).size != arr.size:
                raise ValueError("sequence elements must be distinct")
        arr.setflags(write=False)
        self._items = arr
        self._pos = None

    @classmethod
    def identity(cls, n: int) -> Sequence:
        return cls(np.arange(1, n + 1, dtype=np.int64), check=False)

    @property
    def items(self) -> np.ndarray:
        return self._items

    @property
    def positions(self) -> dict[int, int]:
        """element -> 1-based position."""
        if self._pos is None:
            self._pos = {int(x): i + 1 for i, x in enumerate(self._items)}
        return self._pos

    def position(self, x: int) -> int:
        return self.positions[int(x)]

    def rank(self, x: int) -> int:
        return int(np.count_nonzero(self._items < x)) + 1

    def is_permutation(self) -> bool:
        n = len(self._items)
        return bool(n == 0 or (np.sort(self._items) == np.arange(1, n + 1)).all())

    def tolist(self) -> list[int]:
        return self._items.tolist()

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items.tolist())

    def __getitem__(self, i):
        return int(self._items[i])

    def __eq__(self, other):
        if isinstance(other, Sequence):
            other = other._items
        return np.array_equal(self._items, np.asarray(other))

    def __repr__(self):
        body = ", ".join(map(str, self._items[:10].tolist()))
        more = ", ..." if len(self) > 10 else ""
        return f"Sequence([{body}{more}])"


def as_array(seq: Sequence | Iterable[int]) -> np.ndarray:
    if isinstance(seq, Sequence):
        return seq.items
    return np.asarray(seq, dtype=np.int64)


@dataclass(frozen=True)
class DislocationReport:
    max_dislocation: int
    total_dislocation: int
    per_element: list[int] | None = None


def dislocations(seq: Sequence | np.ndarray) -> np.ndarray:
    """|position - rank| for each position of the sequence."""
    items = as_array(seq)
    ranks = np.empty(items.size, dtype=np.int64)
    ranks[np.argsort(items, kind="stable")] = np.arange(1, items.size + 1)
    return np.abs(np.arange(1, items.size + 1) - ranks)


def dislocation_report(seq: Sequence | np.ndarray, per_element: bool = False) -> DislocationReport:
    disl = dislocations(seq)
    if disl.size == 0:
        return DislocationReport(0, 0, [] if per_element else None)
    return DislocationReport(
        int(disl.max()), int(disl.sum()), disl.tolist() if per_element else None
    )


@dataclass
class RunStats:
    """Mutable counters threaded through the algorithms."""

    comparisons: int = 0
    flags: list[str] = field(default_factory=list)

    def flag(self, name: str):
        if name not in self.flags:
            self.flags.append(name)


# ---------------------------------------------------------------------------
# randomness


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator; ``stream`` selects an independent key."""
    key = (int(stream) << 64) | (int(seed) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


class BitSource:
    """Sequential stream of random bits with exact consumption accounting."""

    _chunk = 1 << 15

    def __init__(self):
        self._buf = np.zeros(0, dtype=np.uint8)
        self._pos = 0
        self.consumed = 0

    def _more(self, need: int) -> np.ndarray:
        raise NotImplementedError

    def _ensure(self, k: int):
        avail = self._buf.size - self._pos
        if avail >= k:
            return
        extra = self._more(k - avail)
        self._buf = np.concatenate([self._buf[self._pos:], extra])
        self._pos = 0

    def take_array(self, k: int) -> np.ndarray:
        """k bits as a uint8 array."""
        if k <= 0:
            return np.zeros(0, dtype=np.uint8)
        self._ensure(k)
        out = self._buf[self._pos:self._pos + k]
        self._pos += k
        self.consumed += k
        return out

    def take(self, k: int) -> int:
        """k bits read most-significant first as an integer."""
        v = 0
        for b in self.take_array(k).tolist():
            v = (v << 1) | b
        return v

    def peek_buffer(self, k: int) -> tuple[np.ndarray, int]:
        """Expose at least ``k`` buffered bits (fewer if a finite source ends)."""
        try:
            self._ensure(k)
        except BitBudgetExceeded:
            pass
        return self._buf, self._pos

    def advance(self, new_pos: int):
        self.consumed += new_pos - self._pos
        self._pos = new_pos


class RandomBits(BitSource):
    """Unbounded bits from a Philox stream."""

    def __init__(self, seed: int, stream: int = 0):
        super().__init__()
        self._rng = make_rng(seed, stream)

    def _more(self, need: int) -> np.ndarray:
        n = max(need, self._chunk)
        return self._rng.integers(0, 2, size=n, dtype=np.uint8)


class PoolBits(BitSource):
    """A finite pool of bits; running out raises BitBudgetExceeded."""

    def __init__(self, bits: np.ndarray):
        super().__init__()
        self._buf = np.asarray(bits, dtype=np.uint8)
        self.capacity = int(self._buf.size)

    def _more(self, need: int) -> np.ndarray:
        raise BitBudgetExceeded(
            f"bit pool of {self.capacity} bits exhausted after {self.consumed} bits"
        )


def sample_uniform_int(bits: BitSource, bound: int) -> tuple[int, int]:
    """Uniform integer in [0, bound) by rejection on ceil(log2 bound) bits.

    Returns ``(value, bits_consumed)``.
    """
    if bound < 1:
        raise ValueError("bound must be positive")
    nb = (bound - 1).bit_length()
    used = 0
    while True:
        v = bits.take(nb)
        used += nb
        if v < bound:
            return v, used


def fisher_yates(seq: Sequence | Iterable[int], bits: BitSource) -> Sequence:
    """Uniformly random permutation of ``seq``, drawing from ``bits``."""
    items = np.array(as_array(seq), dtype=np.int64)
    i = items.size - 1
    need = max(64, 2 * items.size.bit_length() * max(items.size, 1))
    while i > 0:
        buf, pos = bits.peek_buffer(need)
        i2, pos2 = K.fisher_yates_bits(items, i, buf, pos)
        bits.advance(pos2)
        if i2 == i and pos2 == pos:
            # finite source could not serve a full draw
            bits.take(buf.size - pos + 1)
        i = i2
    return Sequence(items, check=False)


def local_shuffle(n: int, w: int, rng: np.random.Generator) -> Sequence:
    """Random permutation of 1..n with maximum dislocation at most w."""
    keys = np.arange(1, n + 1) + rng.random(n) * w
    return Sequence(np.argsort(keys, kind="stable") + 1, check=False)


def adversarial_order(model: FaultModel, n: int, cap: int = DEFAULT_TOURNAMENT_CAP) -> Sequence:
    """1..n ordered by descending observed wins in the full noisy tournament.

    Ties go to the smaller value first.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n > cap:
        raise SizeError(f"full tournament limited to n <= {cap}")
    items = np.arange(1, n + 1, dtype=np.int64)
    wins = K.win_counts(items, *model.kargs)
    order = np.lexsort((items, -wins))
    return Sequence(items[order], check=False)
