"""Moment operators of subset and subset-phase ensembles in the type basis.

An ``m``-copy computational basis tuple has a *type*: the multiset of basis
states it contains. The normalized symmetrizations

    |T> = C(m, T)^{-1/2} * sum_{z of type T} |z>,   C(m, T) = m! / prod_z T_z!

span the symmetric subspace, which has dimension C(D + m - 1, m). Every
moment operator here is a dense matrix in that basis. A type is stored as a
sorted tuple with repetition; ordering is colex on the shifted set
``{z_0 + 0, z_1 + 1, ...}`` (stars and bars).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dynamics import SubsetDistribution, phi_map
from .errors import CapacityError
from .subsetcore import Subset, binomial_table, rank_array, subset_count, unrank_array

DEFAULT_MOMENT_BUDGET = 20_000
_ENTROPY_CUTOFF = 1e-14


@dataclass(frozen=True)
class TypeVector:
    """Multiplicities ``{basis state: count}``; zero counts are not stored."""

    counts: tuple[tuple[int, int], ...]

    @classmethod
    def from_multiset(cls, multiset) -> "TypeVector":
        vals, cnt = np.unique(np.asarray(multiset, dtype=np.int64), return_counts=True)
        return cls(tuple((int(v), int(c)) for v, c in zip(vals, cnt)))

    @property
    def m(self) -> int:
        return sum(c for _, c in self.counts)

    @property
    def unique(self) -> bool:
        return all(c == 1 for _, c in self.counts)

    def as_dict(self) -> dict:
        return dict(self.counts)

    def multinomial(self) -> int:
        out = math.factorial(self.m)
        for _, c in self.counts:
            out //= math.factorial(c)
        return out


class TypeBasis:
    """All types of ``m`` copies over ``D`` basis states, in canonical order."""

    def __init__(self, D: int, m: int, budget: int = DEFAULT_MOMENT_BUDGET):
        if D < 1 or m < 1:
            raise ValueError("need D >= 1 and m >= 1")
        dim = math.comb(D + m - 1, m)
        if dim > budget:
            raise CapacityError(f"type-basis dimension C({D + m - 1}, {m}) = {dim} exceeds budget {budget}", dim)
        self.D, self.m, self.dim = D, m, dim
        self._table = binomial_table(D + m - 1, m)

    def __len__(self):
        return self.dim

    @cached_property
    def multisets(self) -> np.ndarray:
        """``(dim, m)`` array of sorted multisets, row ``j`` = type ``j``."""
        shifted = _unrank_plain(np.arange(self.dim, dtype=np.int64), self.m, self._table)
        return shifted - np.arange(self.m, dtype=np.int64)

    def index(self, multisets) -> np.ndarray:
        """Canonical index of each sorted multiset row."""
        rows = np.atleast_2d(np.asarray(multisets, dtype=np.int64))
        return rank_array(rows + np.arange(self.m, dtype=np.int64), self._table)

    @cached_property
    def unique_mask(self) -> np.ndarray:
        ms = self.multisets
        if self.m == 1:
            return np.ones(self.dim, dtype=bool)
        return np.all(np.diff(ms, axis=1) > 0, axis=1)

    @cached_property
    def multinomials(self) -> np.ndarray:
        """``C(m, T)`` for every type, as float."""
        ms = self.multisets
        out = np.full(self.dim, float(math.factorial(self.m)))
        # runs of equal values in each sorted row give the multiplicities
        run = np.ones(self.dim, dtype=np.int64)
        for j in range(1, self.m):
            same = ms[:, j] == ms[:, j - 1]
            run = np.where(same, run + 1, 1)
            out /= run
        return out

    def types(self) -> list[TypeVector]:
        return [TypeVector.from_multiset(row) for row in self.multisets]

    def unique_to_subsets(self, n: int) -> list[Subset]:
        """The unique types, read as subsets of ``{0,1}^n`` (``D = 2^n``)."""
        if 1 << n != self.D:
            raise ValueError(f"D = {self.D} is not 2^{n}")
        return [Subset(tuple(int(v) for v in row), n) for row in self.multisets[self.unique_mask]]


def _unrank_plain(ranks: np.ndarray, m: int, table: np.ndarray) -> np.ndarray:
    r = ranks.copy()
    out = np.empty((r.size, m), dtype=np.int64)
    for k in range(m, 0, -1):
        c = np.searchsorted(table[:, k], r, side="right") - 1
        out[:, k - 1] = c
        r -= table[c, k]
    return out


def enumerate_types(D: int, m: int, budget: int = DEFAULT_MOMENT_BUDGET) -> TypeBasis:
    return TypeBasis(D, m, budget)


class MomentOperator:
    """Dense Hermitian matrix on the ``m``-copy symmetric subspace (type basis)."""

    def __init__(self, D: int, m: int, matrix: np.ndarray):
        self.D, self.m = D, m
        self.matrix = np.asarray(matrix)
        dim = math.comb(D + m - 1, m)
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix, got {self.matrix.shape}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __repr__(self):
        return f"MomentOperator(D={self.D}, m={self.m}, dim={self.dim})"

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)

    def is_psd(self, tol: float = 1e-10) -> bool:
        return bool(self.eigenvalues().min() >= -tol)

    def save(self, path) -> None:
        header = {"dim": self.dim, "m": self.m, "D": self.D, "basis": "type-colex"}
        np.savez(path, header=np.array(json.dumps(header)), matrix=self.matrix)

    @classmethod
    def load(cls, path) -> "MomentOperator":
        with np.load(path) as data:
            header = json.loads(str(data["header"]))
            if header.get("basis") != "type-colex":
                raise ValueError(f"unsupported basis {header.get('basis')!r}")
            return cls(header["D"], header["m"], data["matrix"])


def haar_moment(D: int, m: int, budget: int = DEFAULT_MOMENT_BUDGET) -> MomentOperator:
    """Maximally mixed state on the symmetric subspace."""
    basis = TypeBasis(D, m, budget)
    return MomentOperator(D, m, np.eye(basis.dim) / basis.dim)


def _ensemble_support(p: SubsetDistribution):
    table = binomial_table(1 << p.n, p.m)
    ranks = np.flatnonzero(p.probs)
    return unrank_array(ranks, p.m, p.n, table).astype(np.int64), p.probs[ranks]


def _local_and_global(p: SubsetDistribution, m: int, budget: int):
    D, K = 1 << p.n, p.m
    glob = TypeBasis(D, m, budget)
    loc = TypeBasis(K, m, budget)
    return glob, loc


def subset_phase_moment(p: SubsetDistribution, m: int, budget: int = DEFAULT_MOMENT_BUDGET) -> MomentOperator:
    """Exact ``E_{S~p} E_f |psi_{S,f}><psi_{S,f}|^{(x)m}`` for uniformly random phases.

    The phase average keeps ``<T|.|T'>`` iff every basis state occurs an even
    number of times in ``T + T'``; the surviving entries are
    ``K^{-m} sqrt(C(m,T) C(m,T'))`` when both types are supported on ``S``.
    """
    if m > p.m:
        raise ValueError(f"m = {m} exceeds the subset size K = {p.m}")
    glob, loc = _local_and_global(p, m, budget)
    K = p.m
    # the block only depends on positions inside S, so build it once over [K]
    ms = loc.multisets
    parity = np.zeros(loc.dim, dtype=object)
    for j in range(m):
        parity = parity ^ np.array([1 << int(v) for v in ms[:, j]], dtype=object)
    even = parity[:, None] == parity[None, :]
    w = np.sqrt(loc.multinomials)
    block = np.where(even, np.outer(w, w), 0.0) / float(K) ** m
    out = np.zeros((glob.dim, glob.dim))
    rows, probs = _ensemble_support(p)
    for S, ps in zip(rows, probs):
        g = glob.index(S[ms])
        out[np.ix_(g, g)] += ps * block
    return MomentOperator(glob.D, m, out)


def subset_moment(p: SubsetDistribution, m: int, budget: int = DEFAULT_MOMENT_BUDGET) -> MomentOperator:
    """Exact ``sum_S p(S) |psi_S><psi_S|^{(x)m}`` for phase-free subset states."""
    glob, loc = _local_and_global(p, m, budget)
    K = p.m
    ms = loc.multisets
    v = np.sqrt(loc.multinomials) / float(K) ** (m / 2)
    block = np.outer(v, v)
    out = np.zeros((glob.dim, glob.dim))
    rows, probs = _ensemble_support(p)
    for S, ps in zip(rows, probs):
        g = glob.index(S[ms])
        out[np.ix_(g, g)] += ps * block
    return MomentOperator(glob.D, m, out)


def _mat(A):
    return A.matrix if isinstance(A, MomentOperator) else np.asarray(A)


def trace_norm(A) -> float:
    """Sum of absolute eigenvalues of a Hermitian matrix."""
    return float(np.abs(np.linalg.eigvalsh(_mat(A))).sum())


def trace_distance(A, B) -> float:
    """``||A - B||_tr`` (no factor 1/2) for Hermitian operators of equal dimension."""
    a, b = _mat(A), _mat(B)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return trace_norm(a - b)


@dataclass
class MMatrixResult:
    matrix: np.ndarray
    trace_norm: float


def m_matrix(p: SubsetDistribution, m: int, budget: int = 4096) -> MMatrixResult:
    """Matrix over Sigma_m x Sigma_m built from deviations of pushed-forward distributions.

    Entry ``(S', S'')`` is ``C(K, m)^{-1} C(K, m + d) f^{(m+d)}(S' u S'')`` where
    ``d = |S' minus S''|`` and ``f^{(j)} = Phi_{j<-K}[p] - pi_j``.
    """
    n, K = p.n, p.m
    if 2 * m > K:
        raise ValueError(f"need m <= K/2, got m = {m}, K = {K}")
    if n > 6:
        raise CapacityError("m_matrix uses 64-bit subset masks; needs n <= 6")
    dim = subset_count(n, m)
    if dim > budget:
        raise CapacityError(f"|Sigma_{m}| = {dim} exceeds budget {budget}", dim)
    D = 1 << n
    states = unrank_array(np.arange(dim, dtype=np.int64), m, n, binomial_table(D, m)).astype(np.uint64)
    masks = np.bitwise_or.reduce(np.uint64(1) << states, axis=1)
    union = masks[:, None] | masks[None, :]
    size = np.bitwise_count(union).astype(np.int64)
    out = np.zeros((dim, dim))
    bits = np.arange(D, dtype=np.uint64)
    for j in range(m, 2 * m + 1):
        sel = size == j
        if not sel.any():
            continue
        dev = phi_map(p, j).probs - 1.0 / subset_count(n, j)
        u = union[sel]
        member = ((u[:, None] >> bits) & np.uint64(1)).astype(bool)
        elems = np.nonzero(member)[1].reshape(-1, j)
        ranks = rank_array(elems, binomial_table(D, j))
        out[sel] = math.comb(K, j) / math.comb(K, m) * dev[ranks]
    return MMatrixResult(out, trace_norm(out))


def entanglement_entropy(S: Subset, phases=None, cut=None) -> float:
    """Von Neumann entropy (bits) of the subset(-phase) state across a site bipartition.

    ``phases`` is ``None`` or a table of ``f(z)`` in {0, 1} (a sequence aligned
    with ``S.elements`` or a mapping ``z -> f(z)``). ``cut`` is either an
    integer ``k`` (region A = sites ``0..k-1``) or a collection of sites for A;
    the default is the half cut.
    """
    n = S.n
    if cut is None:
        cut = n // 2
    A = list(range(cut)) if isinstance(cut, (int, np.integer)) else sorted(int(i) for i in cut)
    if not A or len(A) >= n or any(not 0 <= i < n for i in A) or len(set(A)) != len(A):
        raise ValueError(f"cut {cut!r} must leave both sides of the {n}-site chain non-empty")
    B = [i for i in range(n) if i not in A]
    z = np.asarray(S.elements, dtype=np.uint64)
    if phases is None:
        f = np.zeros(S.m, dtype=np.int64)
    elif isinstance(phases, dict):
        f = np.array([int(phases.get(int(v), 0)) for v in S.elements])
    else:
        f = np.asarray(phases, dtype=np.int64)
        if f.shape != (S.m,):
            raise ValueError(f"phase table needs {S.m} entries, got {f.shape}")
    one = np.uint64(1)
    za = sum(((z >> np.uint64(i)) & one) << np.uint64(k) for k, i in enumerate(A))
    zb = sum(((z >> np.uint64(i)) & one) << np.uint64(k) for k, i in enumerate(B))
    _, ia = np.unique(za, return_inverse=True)
    _, ib = np.unique(zb, return_inverse=True)
    coef = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(coef, (ia, ib), (1.0 - 2.0 * (f & 1)) / math.sqrt(S.m))
    s = np.linalg.svd(coef, compute_uv=False)
    s = s[s > _ENTROPY_CUTOFF]
    q = s * s
    q = q / q.sum()
    return float(-(q * np.log2(q)).sum())
