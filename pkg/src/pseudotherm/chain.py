"""The Markov chain induced by a gate family on the subset space Sigma_m.

One step draws a gate ``u`` uniformly and maps ``S -> u(S)``, so

    Gamma[S, S'] = (1/|G|) * #{u : S = u(S')}.

All families in :mod:`pseudotherm.gates` are involutive, which makes Gamma
symmetric and doubly stochastic with the uniform distribution stationary.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs, eigsh

from .errors import CapacityError, IterativeFailure
from .gates import GateFamily
from .subsetcore import (
    MAX_QUBITS_EXACT,
    Subset,
    binomial_table,
    element_dtype,
    rank_array,
    rank_subset,
    subset_count,
    unrank_array,
)

DEFAULT_INDEX_BUDGET = 20_000_000
DENSE_SOLVER_MAX = 4096
_CHUNK = 1 << 18


class TransitionOperator:
    """Gamma on Sigma_m for a gate family.

    ``representation="matrix-free"`` applies Gamma gate by gate through one
    permutation table per gate (``|G| x |Sigma_m|`` integers, built lazily;
    with ``cache=False`` images are recomputed on every application).
    ``representation="explicit-sparse"`` multiplies by an assembled CSR matrix.
    """

    def __init__(
        self,
        family: GateFamily,
        m: int,
        representation: str = "matrix-free",
        budget: int = DEFAULT_INDEX_BUDGET,
        cache: bool = True,
    ):
        if representation not in ("matrix-free", "explicit-sparse"):
            raise ValueError(f"unknown representation {representation!r}")
        if family.n > MAX_QUBITS_EXACT:
            raise CapacityError(f"exact chains support n <= {MAX_QUBITS_EXACT}")
        D = 1 << family.n
        if not 1 <= m <= D:
            raise ValueError(f"subset size must be in [1, {D}], got {m}")
        dim = subset_count(family.n, m)
        if dim > budget:
            raise CapacityError(
                f"|Sigma_{m}| = C({D}, {m}) = {dim} exceeds the dense-index budget {budget}", dim
            )
        self.family = family
        self.m = m
        self.n = family.n
        self.dim = dim
        self.representation = representation
        self.cache = cache

    def __repr__(self):
        return f"TransitionOperator({self.family.spec}, m={self.m}, dim={self.dim}, {self.representation})"

    @cached_property
    def table(self) -> np.ndarray:
        return binomial_table(1 << self.n, self.m)

    @cached_property
    def states(self) -> np.ndarray:
        """Sigma_m in colex order, one sorted row per subset."""
        return unrank_array(np.arange(self.dim, dtype=np.int64), self.m, self.n, self.table)

    def image_ranks(self, g: int, ranks: np.ndarray | None = None) -> np.ndarray:
        """Ranks of ``u_g(S)`` for the given ranks (all of Sigma_m by default)."""
        idx_dtype = np.int32 if self.dim < 2**31 else np.int64
        if ranks is None:
            rows = self.states
        else:
            rows = unrank_array(np.asarray(ranks, dtype=np.int64), self.m, self.n, self.table)
        out = np.empty(rows.shape[0], dtype=idx_dtype)
        dt = element_dtype(self.n)
        for lo in range(0, rows.shape[0], _CHUNK):
            block = rows[lo : lo + _CHUNK].astype(np.uint64)
            img = self.family.apply(g, block).astype(dt)
            if self.m > 1:
                img.sort(axis=1)
            out[lo : lo + _CHUNK] = rank_array(img, self.table)
        return out

    @cached_property
    def perms(self) -> np.ndarray:
        """``perms[g, r]`` = rank of ``u_g`` applied to the subset of rank ``r``."""
        return np.stack([self.image_ranks(g) for g in range(self.family.size)])

    @cached_property
    def involutive(self) -> bool:
        ar = np.arange(self.dim)
        return all(np.array_equal(p[p], ar) for p in self._perm_iter())

    def _perm_iter(self):
        if self.cache:
            yield from self.perms
        else:
            for g in range(self.family.size):
                yield self.image_ranks(g)

    @property
    def symmetric(self) -> bool:
        return self.involutive

    def _pull_iter(self):
        # (Gamma p)(S) = mean_u p(u^{-1} S); for involutions u^{-1} = u
        for perm in self._perm_iter():
            if self.involutive:
                yield perm
            else:
                inv = np.empty_like(perm)
                inv[perm] = np.arange(perm.size, dtype=perm.dtype)
                yield inv

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Gamma @ p for a vector (or a ``(dim, k)`` block of vectors)."""
        p = np.asarray(p, dtype=float)
        if p.shape[0] != self.dim:
            raise ValueError(f"vector has length {p.shape[0]}, operator dimension is {self.dim}")
        if self.representation == "explicit-sparse":
            return self.to_sparse() @ p
        out = np.zeros_like(p)
        buf = np.empty_like(p)
        for pull in self._pull_iter():
            np.take(p, pull, axis=0, out=buf)
            out += buf
        out /= self.family.size
        return out

    def to_sparse(self) -> sp.csr_matrix:
        return self._sparse

    @cached_property
    def _sparse(self) -> sp.csr_matrix:
        G = self.family.size
        cols = np.arange(self.dim, dtype=np.int64)
        rows = np.concatenate(list(self._perm_iter())).astype(np.int64)
        data = np.full(rows.size, 1.0 / G)
        mat = sp.coo_matrix((data, (rows, np.tile(cols, G))), shape=(self.dim, self.dim))
        return mat.tocsr()

    def dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def gamma_apply(T: TransitionOperator, p):
    """One step of the chain on a distribution (array or SubsetDistribution)."""
    from .dynamics import SubsetDistribution

    if isinstance(p, SubsetDistribution):
        if (p.n, p.m) != (T.n, T.m):
            raise ValueError(f"distribution on (n={p.n}, m={p.m}) but operator on (n={T.n}, m={T.m})")
        return SubsetDistribution(p.n, p.m, T.apply(p.probs))
    return T.apply(p)


def build_sparse(T: TransitionOperator) -> sp.csr_matrix:
    """Explicit CSR form of Gamma, rows and columns indexed by colex rank."""
    return T.to_sparse()


class RelativeChain:
    """Walk of the relative coordinate ``r = z xor z'`` of a pair under the local family.

    One step picks a site ``i`` uniformly. If ``r_{i-1} = r_{i+1} = 0`` nothing
    happens; otherwise ``r_i`` flips with probability 1/2. States are the non-zero
    words ``r``, stored at index ``r - 1``.
    """

    def __init__(self, n: int):
        if n < 3:
            raise ValueError("relative chain requires n >= 3")
        if n > MAX_QUBITS_EXACT:
            raise CapacityError(f"relative chain supports n <= {MAX_QUBITS_EXACT}")
        self.n = n
        self.dim = (1 << n) - 1
        self.symmetric = True

    def __repr__(self):
        return f"RelativeChain(n={self.n}, dim={self.dim})"

    @cached_property
    def _sparse(self) -> sp.csr_matrix:
        n = self.n
        r = np.arange(1, 1 << n, dtype=np.int64)
        rows, cols = [], []
        stay = np.ones(r.size)
        w = 1.0 / (2 * n)
        for i in range(n):
            left, right = (i - 1) % n, (i + 1) % n
            active = (((r >> left) | (r >> right)) & 1).astype(bool)
            src = r[active]
            rows.append((src ^ (1 << i)) - 1)
            cols.append(src - 1)
            stay[active] -= w
        rows.append(r - 1)
        cols.append(r - 1)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate([np.full(rows.size - r.size, w), stay])
        return sp.coo_matrix((data, (rows, cols)), shape=(self.dim, self.dim)).tocsr()

    def to_sparse(self) -> sp.csr_matrix:
        return self._sparse

    def dense(self) -> np.ndarray:
        return self._sparse.toarray()

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self._sparse @ np.asarray(p, dtype=float)


def relative_chain(n: int) -> RelativeChain:
    return RelativeChain(n)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    method: str

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue", "residual"])
            for i, (lam, res) in enumerate(zip(self.eigenvalues, self.residuals)):
                w.writerow([i, repr(float(lam)), repr(float(res))])


def _residuals(op, vals, vecs):
    res = np.empty(vals.size)
    for j in range(vals.size):
        v = vecs[:, j]
        res[j] = np.linalg.norm(op.apply(v) - vals[j] * v) / np.linalg.norm(v)
    return res


def _lanczos(op, matvec, k, tol, max_restarts, seed):
    lin = LinearOperator((op.dim, op.dim), matvec=matvec, dtype=float)
    ncv = min(op.dim, max(40, 4 * k))
    v0 = np.random.default_rng(seed).standard_normal(op.dim)
    try:
        if op.symmetric:
            vals, vecs = eigsh(lin, k=k, which="LA", ncv=ncv, tol=tol * 1e-2, maxiter=max_restarts, v0=v0)
        else:
            vals, vecs = eigs(lin, k=k, which="LR", ncv=ncv, tol=tol * 1e-2, maxiter=max_restarts, v0=v0)
            vals, vecs = vals.real, vecs.real
    except ArpackNoConvergence as exc:
        best = np.inf
        if exc.eigenvalues.size:
            best = float(_residuals(op, exc.eigenvalues.real, exc.eigenvectors.real).min())
        raise IterativeFailure(f"Lanczos did not converge for {op!r}", best) from exc
    return vals, vecs


def _complete_multiplets(op, vals, vecs, k, tol, max_restarts, seed, block=4, rounds=20):
    # Single-vector Lanczos can return fewer copies of a degenerate eigenvalue
    # than exist. Search the operator with the found vectors pushed down to -2;
    # anything it finds above the current k-th value is a missing eigenpair.
    for r in range(rounds):
        V = vecs
        shift = vals + 2.0

        def deflated(x, V=V, shift=shift):
            x = np.asarray(x).ravel()
            return op.apply(x) - V @ (shift * (V.T @ x))

        kb = min(block, op.dim - V.shape[1] - 1)
        if kb < 1:
            break
        w, W = _lanczos(op, deflated, kb, tol, max_restarts, seed + 1000 * (r + 1))
        if w.max() <= vals.min() + max(tol, 1e-9):
            break
        Q, _ = np.linalg.qr(np.hstack([V, W]))
        AQ = np.column_stack([op.apply(Q[:, j]) for j in range(Q.shape[1])])
        theta, Y = np.linalg.eigh(Q.T @ AQ)
        top = np.argsort(-theta)[:k]
        vals, vecs = theta[top], Q @ Y[:, top]
    return vals, vecs


def top_eigenvalues(
    op,
    k: int = 20,
    tol: float = 1e-10,
    dense_max: int = DENSE_SOLVER_MAX,
    max_restarts: int = 5000,
    seed: int = 0,
) -> SpectrumResult:
    """The ``k`` algebraically largest eigenvalues of a chain operator.

    Dense diagonalization at dimension ``<= dense_max``, implicitly restarted
    Lanczos (ARPACK, Krylov dimension ``max(40, 4k)``) above. Every returned
    pair satisfies ``||Gamma v - lambda v|| <= tol * ||v||`` or
    :class:`IterativeFailure` is raised.
    """
    k = min(k, op.dim)
    if op.dim <= dense_max:
        A = op.dense()
        if op.symmetric:
            vals, vecs = scipy.linalg.eigh(A)
        else:
            vals, vecs = scipy.linalg.eig(A)
            vals, vecs = vals.real, vecs.real
        order = np.argsort(-vals, kind="stable")[:k]
        vals, vecs = vals[order], vecs[:, order]
        method = "dense"
    else:
        if k >= op.dim - 1:
            raise CapacityError(f"cannot request {k} eigenpairs iteratively from dimension {op.dim}", op.dim)
        vals, vecs = _lanczos(op, op.apply, k, tol, max_restarts, seed)
        if op.symmetric:
            vals, vecs = _complete_multiplets(op, vals, vecs, k, tol, max_restarts, seed)
        method = "iterative"
    res = _residuals(op, vals, vecs)
    order = np.lexsort((res, -vals))
    vals, res = vals[order], res[order]
    if method == "iterative" and np.any(res > tol):
        raise IterativeFailure(
            f"residual {res.max():.3e} above tolerance {tol:.1e} for {op!r}", float(res.min())
        )
    return SpectrumResult(vals, res, method)


def relaxation_time(op_or_spectrum, **kwargs) -> float:
    """``1 / (1 - lambda_1)`` from the two leading eigenvalues."""
    if isinstance(op_or_spectrum, SpectrumResult):
        spec = op_or_spectrum
    else:
        spec = top_eigenvalues(op_or_spectrum, k=kwargs.pop("k", 2), **kwargs)
    if spec.eigenvalues.size < 2:
        raise ValueError("need at least two eigenvalues")
    return 1.0 / (1.0 - spec.eigenvalues[1])


def spectral_gap(op, **kwargs) -> float:
    spec = top_eigenvalues(op, k=kwargs.pop("k", 2), **kwargs)
    return float(spec.eigenvalues[0] - spec.eigenvalues[1])


@dataclass
class ComponentResult:
    family: str
    n: int
    m: int
    size: int
    total: int
    members: np.ndarray = field(repr=False)

    @property
    def connected(self) -> bool:
        return self.size == self.total

    def contains(self, S: Subset) -> bool:
        r = rank_subset(S)
        i = np.searchsorted(self.members, r)
        return bool(i < self.members.size and self.members[i] == r)

    def to_json(self, max_members: int = 10_000) -> str:
        data = {
            "family": self.family,
            "n": self.n,
            "m": self.m,
            "component_size": self.size,
            "space_size": self.total,
            "connected": self.connected,
        }
        if self.size <= max_members:
            table = binomial_table(1 << self.n, self.m)
            rows = unrank_array(self.members, self.m, self.n, table)
            data["members"] = [[int(z) for z in row] for row in rows]
        return json.dumps(data, indent=1)


def reachable_component(
    family: GateFamily, S0: Subset, budget: int = DEFAULT_INDEX_BUDGET
) -> ComponentResult:
    """Breadth-first search of the subset graph from ``S0`` under all gates."""
    if S0.n != family.n:
        raise ValueError(f"subset has {S0.n} qubits, family has {family.n}")
    total = subset_count(family.n, S0.m)
    if total > budget:
        raise CapacityError(f"|Sigma_{S0.m}| = {total} exceeds the dense-index budget {budget}", total)
    T = TransitionOperator(family, S0.m, budget=budget, cache=False)
    seen = np.zeros(total, dtype=bool)
    start = rank_subset(S0)
    seen[start] = True
    frontier = np.array([start], dtype=np.int64)
    while frontier.size:
        new = []
        for g in range(family.size):
            img = T.image_ranks(g, frontier).astype(np.int64)
            img = img[~seen[img]]
            seen[img] = True
            new.append(img)
        frontier = np.unique(np.concatenate(new))
    members = np.flatnonzero(seen)
    return ComponentResult(family.spec, family.n, S0.m, int(members.size), total, members)


def has_self_loop(family_or_op, S: Subset) -> bool:
    """True iff some gate maps ``S`` to itself as a set."""
    family = family_or_op.family if isinstance(family_or_op, TransitionOperator) else family_or_op
    els = S.as_array()
    for g in range(family.size):
        if np.array_equal(np.sort(family.apply(g, els)), els):
            return True
    return False


def multipole_mode(T: TransitionOperator, a: int) -> np.ndarray:
    """``f_a(S) = (#{z in S: Z_a = +1} - #{z in S: Z_a = -1}) / m`` over Sigma_m."""
    a = np.uint64(a)
    parity = np.bitwise_count(T.states.astype(np.uint64) & a) & np.uint8(1)
    return (T.m - 2.0 * parity.sum(axis=1)) / T.m


def multipole_residual(T: TransitionOperator, a: int) -> float:
    """``max_S |(Gamma f_a)(S) - lambda_a f_a(S)|`` with ``lambda_a = 1 - |a|/(2n)``."""
    if T.family.kind != "local":
        raise ValueError("multipole eigenmodes are defined for the local family")
    lam = 1.0 - int(a).bit_count() / (2.0 * T.n)
    f = multipole_mode(T, a)
    return float(np.max(np.abs(T.apply(f) - lam * f)))


def hypercube_spectrum(n: int, idle: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form lazy hypercube walk: eigenvalues ``1 - idle' * 2k/n`` with multiplicity C(n, k).

    ``idle`` is the hop probability per step (1/4 for the local family,
    ``2/2^n`` for all-to-all).
    """
    k = np.arange(n + 1)
    vals = 1.0 - idle * 2.0 * k / n
    mult = np.array([math.comb(n, int(j)) for j in k])
    return vals, mult
