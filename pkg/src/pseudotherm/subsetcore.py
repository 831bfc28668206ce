"""Bitstrings, subsets of the hypercube and colexicographic indexing of subset spaces.

Qubit ``i`` is bit ``i`` of an unsigned integer word (qubit 0 is the least
significant bit). A subset of ``{0,1}^n`` is stored canonically as a strictly
increasing tuple of such words. The space of all ``m``-element subsets is
indexed densely by colexicographic rank::

    rank(S) = sum_i C(s_i, i + 1),   s_0 < s_1 < ... < s_{m-1}

which only depends on the elements themselves, not on ``n``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, InvalidSubsetError

# Exact (dense-index) modes are limited to 24 qubits; Monte Carlo paths use
# 64-bit words and accept up to 64.
MAX_QUBITS_EXACT = 24
MAX_QUBITS = 64
_INT64_MAX = np.iinfo(np.int64).max


def check_bitstring(z: int, n: int) -> int:
    """Validate an ``n``-bit word and return it as a Python int."""
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
    z = int(z)
    if z < 0 or z >> n:
        raise ValueError(f"bitstring {z} does not fit in {n} bits")
    return z


def parse_bits(text: str) -> int:
    """Read a bit string written site by site: ``"011"`` has bit 0 = 0, bit 1 = 1, bit 2 = 1."""
    if not text or set(text) - {"0", "1"}:
        raise ValueError(f"not a bit string: {text!r}")
    return sum(1 << i for i, c in enumerate(text) if c == "1")


def format_bits(z: int, n: int) -> str:
    return "".join("1" if (z >> i) & 1 else "0" for i in range(n))


@dataclass(frozen=True)
class Subset:
    """A canonical subset of ``{0,1}^n``: strictly increasing bitstrings."""

    elements: tuple[int, ...]
    n: int

    def __post_init__(self):
        if not 1 <= self.n <= MAX_QUBITS:
            raise InvalidSubsetError(f"qubit count must be in [1, {MAX_QUBITS}], got {self.n}")
        els = tuple(int(z) for z in self.elements)
        object.__setattr__(self, "elements", els)
        if not els:
            raise InvalidSubsetError("subset must be non-empty")
        if any(b <= a for a, b in zip(els, els[1:])):
            raise InvalidSubsetError(f"elements are not strictly increasing: {els}")
        if els[0] < 0 or els[-1] >> self.n:
            raise InvalidSubsetError(f"elements leave the {self.n}-bit hypercube: {els}")

    @classmethod
    def of(cls, elements: Iterable[int], n: int) -> "Subset":
        """Canonicalize an arbitrary collection; duplicates are rejected."""
        els = [int(z) for z in elements]
        if len(set(els)) != len(els):
            raise InvalidSubsetError(f"duplicate elements in {els}")
        return cls(tuple(sorted(els)), n)

    @property
    def m(self) -> int:
        return len(self.elements)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, z):
        return z in self.elements

    def as_array(self) -> np.ndarray:
        return np.asarray(self.elements, dtype=np.uint64)


def subset_count(n: int, m: int) -> int:
    """|Sigma_m| = C(2^n, m)."""
    return math.comb(1 << n, m)


def element_dtype(n: int):
    """Smallest unsigned dtype that holds an ``n``-bit word."""
    if n <= 8:
        return np.uint8
    if n <= 16:
        return np.uint16
    if n <= 32:
        return np.uint32
    return np.uint64


def rank_subset(S: Subset) -> int:
    """Colexicographic rank of ``S`` within ``Sigma_{|S|}``."""
    if S.m > (1 << S.n):
        raise InvalidSubsetError(f"cardinality {S.m} exceeds 2^{S.n}")
    return sum(math.comb(s, i + 1) for i, s in enumerate(S.elements))


def unrank_subset(rank: int, m: int, n: int) -> Subset:
    """Inverse of :func:`rank_subset` by greedy decoding from the largest element down."""
    total = subset_count(n, m)
    if not 0 <= rank < total:
        raise IndexError(f"rank {rank} outside [0, C(2^{n}, {m}) = {total})")
    elements = []
    r = int(rank)
    hi = 1 << n
    for k in range(m, 0, -1):
        # largest c < hi with C(c, k) <= r
        lo_c, hi_c = k - 1, hi - 1
        while lo_c < hi_c:
            mid = (lo_c + hi_c + 1) // 2
            if math.comb(mid, k) <= r:
                lo_c = mid
            else:
                hi_c = mid - 1
        elements.append(lo_c)
        r -= math.comb(lo_c, k)
        hi = lo_c
    return Subset(tuple(reversed(elements)), n)


def binomial_table(D: int, m: int) -> np.ndarray:
    """Pascal table ``T[c, k] = C(c, k)`` for ``0 <= c < D``, ``0 <= k <= m`` as int64.

    Raises :class:`CapacityError` when any entry, or the subset count C(D, m)
    itself, would overflow int64.
    """
    if math.comb(D, m) > _INT64_MAX:
        raise CapacityError(f"C({D}, {m}) overflows int64", math.comb(D, m))
    table = np.zeros((D, m + 1), dtype=np.int64)
    table[:, 0] = 1
    c = np.arange(D, dtype=object)
    col = np.ones(D, dtype=object)
    for k in range(1, m + 1):
        # C(c, k) = C(c, k-1) * (c - k + 1) / k, exact in Python ints
        col = col * (c - k + 1) // k
        col[c < k] = 0
        if max(col) > _INT64_MAX:
            raise CapacityError(f"binomial C({D - 1}, {k}) overflows int64")
        table[:, k] = col.astype(np.int64)
    return table


def rank_array(states: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Vectorized colex rank of sorted rows ``states[j] = (s_0 < ... < s_{m-1})``."""
    states = np.asarray(states)
    m = states.shape[1]
    out = np.zeros(states.shape[0], dtype=np.int64)
    for i in range(m):
        out += table[states[:, i].astype(np.intp), i + 1]
    return out


def unrank_array(ranks: np.ndarray, m: int, n: int, table: np.ndarray) -> np.ndarray:
    """Vectorized inverse of :func:`rank_array`; returns an ``(len(ranks), m)`` array."""
    r = np.array(ranks, dtype=np.int64, copy=True)
    out = np.empty((r.shape[0], m), dtype=element_dtype(n))
    for k in range(m, 0, -1):
        c = np.searchsorted(table[:, k], r, side="right") - 1
        out[:, k - 1] = c
        r -= table[c, k]
    return out


def enumerate_subsets(n: int, m: int, budget: int | None = None) -> np.ndarray:
    """All of ``Sigma_m`` as an array of sorted rows, row ``j`` having colex rank ``j``."""
    if n > MAX_QUBITS_EXACT:
        raise CapacityError(f"exact enumeration supports n <= {MAX_QUBITS_EXACT}")
    total = subset_count(n, m)
    if budget is not None and total > budget:
        raise CapacityError(f"|Sigma_{m}| = C({1 << n}, {m}) = {total} exceeds budget {budget}", total)
    table = binomial_table(1 << n, m)
    return unrank_array(np.arange(total, dtype=np.int64), m, n, table)


def sub_subsets(
    S: Subset,
    m: int,
    mode: str = "enumerate",
    count: int | None = None,
    seed=None,
) -> list[Subset]:
    """Sub-subsets of ``S`` with ``m`` elements.

    ``mode="enumerate"`` lists all C(|S|, m) of them once, in lexicographic order of
    positions. ``mode="sample"`` draws ``count`` i.i.d. uniform sub-subsets.
    """
    if not 0 < m <= S.m:
        raise ValueError(f"need 0 < m <= |S| = {S.m}, got m = {m}")
    if mode == "enumerate":
        return [Subset(c, S.n) for c in itertools.combinations(S.elements, m)]
    if mode == "sample":
        if count is None:
            raise ValueError("sample mode needs a count")
        rng = np.random.default_rng(seed)
        els = np.asarray(S.elements, dtype=np.uint64)
        # argsort of uniform keys gives a uniform random permutation per row
        keys = rng.random((count, S.m))
        picks = np.sort(els[np.argsort(keys, axis=1)[:, :m]], axis=1)
        return [Subset(tuple(int(z) for z in row), S.n) for row in picks]
    raise ValueError(f"unknown mode {mode!r}")


def relative_coordinate(S: Subset) -> int:
    """XOR of the two elements of a pair; never zero."""
    if S.m != 2:
        raise ValueError(f"relative coordinate needs |S| = 2, got {S.m}")
    return S.elements[0] ^ S.elements[1]


def subset_to_json(S: Subset) -> str:
    return json.dumps(list(S.elements))


def subset_from_json(text: str, n: int) -> Subset:
    data = json.loads(text)
    if not isinstance(data, list):
        raise InvalidSubsetError("subset JSON must be an array of integers")
    return Subset.of(data, n)


def write_distribution_csv(path, probs: np.ndarray, skip_zero: bool = True) -> None:
    """Write a dense Sigma_m distribution as ``rank,probability`` rows."""
    probs = np.asarray(probs, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "probability"])
        for r in np.flatnonzero(probs) if skip_zero else range(probs.size):
            w.writerow([int(r), repr(float(probs[r]))])


def read_distribution_csv(path, dim: int) -> np.ndarray:
    probs = np.zeros(dim)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            probs[int(row["rank"])] = float(row["probability"])
    return probs


def subsets_from_array(rows: Sequence[Sequence[int]], n: int) -> list[Subset]:
    return [Subset(tuple(int(z) for z in row), n) for row in rows]
