"""Time evolution on subset spaces: exact distributions, sampled circuits and TV diagnostics.

Time ``t`` always counts individual gates. Exact evolution iterates
:meth:`TransitionOperator.apply`; sampled evolution applies uniformly drawn
gates to every element of a subset at once.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .chain import DEFAULT_INDEX_BUDGET, TransitionOperator
from .errors import CapacityError, FitError
from .gates import GateFamily
from .subsetcore import (
    MAX_QUBITS_EXACT,
    Subset,
    binomial_table,
    rank_array,
    rank_subset,
    subset_count,
    unrank_array,
    write_distribution_csv,
)

NORMALIZATION_TOL = 1e-12


class SubsetDistribution:
    """Probability vector over Sigma_m, stored densely and indexed by colex rank."""

    def __init__(self, n: int, m: int, probs, check: bool = True):
        self.n = n
        self.m = m
        self.probs = np.asarray(probs, dtype=float)
        dim = subset_count(n, m)
        if self.probs.shape != (dim,):
            raise ValueError(f"expected a vector of length C(2^{n}, {m}) = {dim}, got {self.probs.shape}")
        if check:
            if np.any(self.probs < -NORMALIZATION_TOL):
                raise ValueError("negative probabilities")
            if abs(self.probs.sum() - 1.0) > 1e-10:
                raise ValueError(f"distribution sums to {self.probs.sum()!r}, not 1")

    def __repr__(self):
        return f"SubsetDistribution(n={self.n}, m={self.m}, support={np.count_nonzero(self.probs)})"

    @property
    def dim(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, n: int, m: int, budget: int = DEFAULT_INDEX_BUDGET) -> "SubsetDistribution":
        dim = subset_count(n, m)
        if dim > budget:
            raise CapacityError(f"|Sigma_{m}| = {dim} exceeds budget {budget}", dim)
        return cls(n, m, np.full(dim, 1.0 / dim))

    @classmethod
    def delta(cls, S: Subset, budget: int = DEFAULT_INDEX_BUDGET) -> "SubsetDistribution":
        dim = subset_count(S.n, S.m)
        if dim > budget:
            raise CapacityError(f"|Sigma_{S.m}| = {dim} exceeds budget {budget}", dim)
        p = np.zeros(dim)
        p[rank_subset(S)] = 1.0
        return cls(S.n, S.m, p)

    @classmethod
    def from_dict(cls, n: int, m: int, weights: dict) -> "SubsetDistribution":
        """From ``{Subset or rank: weight}``; weights are normalized."""
        p = np.zeros(subset_count(n, m))
        for key, w in weights.items():
            r = rank_subset(key) if isinstance(key, Subset) else int(key)
            p[r] += w
        return cls(n, m, p / p.sum())

    def to_dict(self) -> dict:
        return {int(r): float(self.probs[r]) for r in np.flatnonzero(self.probs)}

    def to_csv(self, path, skip_zero: bool = True) -> None:
        write_distribution_csv(path, self.probs, skip_zero)


def _vec(p):
    return p.probs if isinstance(p, SubsetDistribution) else np.asarray(p, dtype=float)


def tv_distance(p, q) -> float:
    """Half the L1 distance between two distributions on the same space."""
    if isinstance(p, SubsetDistribution) and isinstance(q, SubsetDistribution):
        if (p.n, p.m) != (q.n, q.m):
            raise ValueError(f"distributions live on (n={p.n}, m={p.m}) and (n={q.n}, m={q.m})")
    a, b = _vec(p), _vec(q)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return 0.5 * float(np.abs(a - b).sum())


def tv_to_uniform(p) -> float:
    a = _vec(p)
    return 0.5 * float(np.abs(a - 1.0 / a.size).sum())


@dataclass
class TvTrace:
    times: np.ndarray
    distances: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "tv"])
            for t, d in zip(self.times, self.distances):
                w.writerow([int(t), repr(float(d))])

    @classmethod
    def from_csv(cls, path) -> "TvTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0].astype(np.int64), data[:, 1])


def evolve_exact(
    T: TransitionOperator, p0, t_max: int, record_every: int = 1, stop_below: float = 0.0
) -> tuple[TvTrace, SubsetDistribution]:
    """Iterate Gamma from ``p0`` for ``t_max`` gates, recording TV to uniform.

    With ``stop_below > 0`` the run ends early once the recorded TV drops below it.
    """
    p = _vec(p0).copy()
    if p.size != T.dim:
        raise ValueError(f"initial vector has length {p.size}, operator dimension is {T.dim}")
    times, dists = [0], [tv_to_uniform(p)]
    for t in range(1, t_max + 1):
        p = T.apply(p)
        if t % record_every == 0 or t == t_max:
            times.append(t)
            dists.append(tv_to_uniform(p))
            if dists[-1] < stop_below:
                break
    return TvTrace(np.array(times), np.array(dists)), SubsetDistribution(T.n, T.m, p, check=False)


@dataclass
class MixingResult:
    t_mix: int | None
    tv: float

    @property
    def reached(self) -> bool:
        return self.t_mix is not None


def mixing_time(T: TransitionOperator, p0, eps: float = 0.25, t_cap: int = 100_000) -> MixingResult:
    """First ``t`` with ``||p_t - pi||_tv <= eps`` from ``p0``; ``t_mix=None`` if ``t_cap`` is hit."""
    p = _vec(p0).copy()
    d = tv_to_uniform(p)
    for t in range(t_cap + 1):
        if d <= eps:
            return MixingResult(t, d)
        if t == t_cap:
            break
        p = T.apply(p)
        d = tv_to_uniform(p)
    return MixingResult(None, d)


def worst_case_mixing_time(
    T: TransitionOperator, eps: float = 0.25, t_cap: int = 100_000, max_dim: int = 4096
) -> MixingResult:
    """``min{t : max_S ||Gamma^t delta_S - pi||_tv <= eps}`` by evolving every delta at once."""
    if T.dim > max_dim:
        raise CapacityError(f"worst-case mixing evolves a {T.dim}^2 block; limit is {max_dim}", T.dim)
    P = np.eye(T.dim)
    u = 1.0 / T.dim

    def worst(P):
        return 0.5 * float(np.abs(P - u).sum(axis=0).max())

    d = worst(P)
    for t in range(t_cap + 1):
        if d <= eps:
            return MixingResult(t, d)
        if t == t_cap:
            break
        P = T.apply(P)
        d = worst(P)
    return MixingResult(None, d)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for realization ``index``; independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _gate_draws(family: GateFamily, t: int, seed: int, indices) -> np.ndarray:
    out = np.empty((len(indices), t), dtype=np.int64)
    for row, i in enumerate(indices):
        out[row] = trajectory_rng(seed, int(i)).integers(family.size, size=t)
    return out


def sample_trajectory(
    family: GateFamily, S0: Subset, t: int, seed: int, index: int = 0, record_every: int | None = None
) -> list[Subset]:
    """Apply ``t`` random gates to ``S0``; returns snapshots at 0, ``record_every``, ... and ``t``."""
    if S0.n != family.n:
        raise ValueError(f"subset has {S0.n} qubits, family has {family.n}")
    every = record_every or max(t, 1)
    gates = _gate_draws(family, t, seed, [index])[0]
    z = S0.as_array()
    out = [S0]
    for s in range(t):
        z = family.apply(gates[s], z)
        if (s + 1) % every == 0 or s + 1 == t:
            out.append(Subset(tuple(int(v) for v in np.sort(z)), S0.n))
    return out


def sample_ensemble(
    family: GateFamily, S0: Subset, t: int, realizations: int, seed: int, chunk: int = 2048
) -> np.ndarray:
    """Final subsets of ``realizations`` independent circuits, one sorted row each."""
    if S0.n != family.n:
        raise ValueError(f"subset has {S0.n} qubits, family has {family.n}")
    out = np.empty((realizations, S0.m), dtype=np.uint64)
    for lo in range(0, realizations, chunk):
        idx = range(lo, min(lo + chunk, realizations))
        gates = _gate_draws(family, t, seed, idx)
        z = np.broadcast_to(S0.as_array(), (len(idx), S0.m)).copy()
        for s in range(t):
            z = family.apply(gates[:, s : s + 1], z)
        out[lo : lo + len(idx)] = np.sort(z, axis=1)
    return out


def empirical_distribution(rows: np.ndarray, n: int) -> SubsetDistribution:
    """Histogram of sampled subsets over Sigma_m."""
    m = rows.shape[1]
    if n > MAX_QUBITS_EXACT:
        raise CapacityError(f"exact indexing supports n <= {MAX_QUBITS_EXACT}")
    ranks = rank_array(rows, binomial_table(1 << n, m))
    counts = np.bincount(ranks, minlength=subset_count(n, m))
    return SubsetDistribution(n, m, counts / counts.sum())


def parse_initial_state(text: str) -> Subset:
    """``"00+++"``: site ``j`` is ``|0>``, ``|1>`` or ``|+>``; the subset spans every ``+`` site."""
    if not text or set(text) - set("01+"):
        raise ValueError(f"initial state must be a string over {{0, 1, +}}, got {text!r}")
    n = len(text)
    base = sum(1 << j for j, c in enumerate(text) if c == "1")
    free = [j for j, c in enumerate(text) if c == "+"]
    els = []
    for bits in itertools.product((0, 1), repeat=len(free)):
        els.append(base | sum(b << j for b, j in zip(bits, free)))
    return Subset.of(els, n)


@dataclass
class ObservableTrace:
    """Circuit averages of ``<Z_i>`` and ``<Z_i>^2``, arrays indexed by (record, site)."""

    times: np.ndarray
    zbar: np.ndarray
    z2bar: np.ndarray
    realizations: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "site", "zbar", "z2bar"])
            for a, t in enumerate(self.times):
                for i in range(self.zbar.shape[1]):
                    w.writerow([int(t), i, repr(float(self.zbar[a, i])), repr(float(self.z2bar[a, i]))])

    def crossing_times(self, threshold: float, which: str = "z2bar") -> np.ndarray:
        """First recorded time each site's average drops below ``threshold`` (``nan`` if never)."""
        data = getattr(self, which)
        below = data < threshold
        hit = below.any(axis=0)
        first = np.argmax(below, axis=0)
        return np.where(hit, self.times[first].astype(float), np.nan)


def _site_z(z: np.ndarray, n: int) -> np.ndarray:
    """``<Z_i>`` of each subset state: ``(n_{z_i=0} - n_{z_i=1}) / K`` for rows of ``z``."""
    shifts = np.arange(n, dtype=np.uint64)
    bits = (z[..., None] >> shifts) & np.uint64(1)
    return 1.0 - 2.0 * bits.mean(axis=-2)


def observable_trace(
    family: GateFamily,
    initial,
    t_max: int,
    realizations: int = 10_000,
    seed: int = 0,
    record_every: int = 1,
    chunk: int = 2048,
) -> ObservableTrace:
    """Per-site ``<Z_i>``-bar and ``<Z_i>^2``-bar over independent circuit realizations.

    ``initial`` is a :class:`Subset` or a string such as ``"00+++"``.
    """
    S0 = parse_initial_state(initial) if isinstance(initial, str) else initial
    if S0.n != family.n:
        raise ValueError(f"initial state has {S0.n} sites, family has {family.n}")
    n = family.n
    times = np.array(sorted(set(range(0, t_max + 1, record_every)) | {t_max}))
    zsum = np.zeros((times.size, n))
    z2sum = np.zeros((times.size, n))
    for lo in range(0, realizations, chunk):
        idx = range(lo, min(lo + chunk, realizations))
        gates = _gate_draws(family, t_max, seed, idx)
        z = np.broadcast_to(S0.as_array(), (len(idx), S0.m)).copy()
        rec = 0
        for s in range(t_max + 1):
            if s > 0:
                z = family.apply(gates[:, s - 1 : s], z)
            if s == times[rec]:
                zi = _site_z(z, n)
                zsum[rec] += zi.sum(axis=0)
                z2sum[rec] += (zi * zi).sum(axis=0)
                rec += 1
    return ObservableTrace(times, zsum / realizations, z2sum / realizations, realizations)


def _support_rows(p, n: int, K: int):
    """(rows, weights) for a dense distribution or a ``{Subset or rank: prob}`` map."""
    if isinstance(p, dict):
        table = binomial_table(1 << n, K)
        items = list(p.items())
        ranks = np.array([rank_subset(k) if isinstance(k, Subset) else int(k) for k, _ in items], dtype=np.int64)
        w = np.array([v for _, v in items], dtype=float)
    else:
        table = binomial_table(1 << n, K)
        vec = _vec(p)
        ranks = np.flatnonzero(vec)
        w = vec[ranks]
    return unrank_array(ranks, K, n, table), w


def phi_map(p, m: int, n: int | None = None, K: int | None = None, chunk: int = 1 << 16) -> SubsetDistribution:
    """Push a distribution on Sigma_K to Sigma_m by choosing ``m`` of the ``K`` elements uniformly.

    ``p`` is a :class:`SubsetDistribution` or a sparse ``{Subset or rank: prob}``
    map (then ``n`` and ``K`` must be given).
    """
    if isinstance(p, SubsetDistribution):
        n, K = p.n, p.m
    elif n is None or K is None:
        raise ValueError("sparse input needs n and K")
    if not 1 <= m <= K:
        raise ValueError(f"need 1 <= m <= K = {K}, got m = {m}")
    rows, w = _support_rows(p, n, K)
    combos = np.array(list(itertools.combinations(range(K), m)), dtype=np.intp)
    table = binomial_table(1 << n, m)
    out = np.zeros(subset_count(n, m))
    step = max(1, chunk // len(combos))
    for lo in range(0, rows.shape[0], step):
        sub = rows[lo : lo + step][:, combos]  # (rows, C(K,m), m), rows already sorted
        ranks = rank_array(sub.reshape(-1, m), table)
        wts = np.repeat(w[lo : lo + step], len(combos))
        out += np.bincount(ranks, weights=wts, minlength=out.size)
    out /= math.comb(K, m)
    return SubsetDistribution(n, m, out / out.sum(), check=False)


def induced_initial(S0: Subset, m: int) -> SubsetDistribution:
    """Uniform mixture over the ``m``-element sub-subsets of ``S0``."""
    if m > S0.m:
        raise ValueError(f"m = {m} exceeds |S0| = {S0.m}")
    return phi_map({S0: 1.0}, m, n=S0.n, K=S0.m)


@dataclass
class LateTimeFit:
    lam: float
    dt: float
    npoints: int
    r2: float


def fit_late_time(trace: TvTrace, window: tuple[float, float] = (1e-8, 1e-2)) -> LateTimeFit:
    """Least-squares fit ``tv ~ lam^(t - dt)`` over samples with ``tv`` inside ``window``."""
    lo, hi = window
    if lo <= 0 or hi <= lo:
        raise FitError(f"window must satisfy 0 < low < high, got {window}")
    t = np.asarray(trace.times, dtype=float)
    d = np.asarray(trace.distances, dtype=float)
    sel = (d >= lo) & (d <= hi)
    if sel.sum() < 2:
        raise FitError(f"only {int(sel.sum())} samples inside window {window}")
    x, y = t[sel], np.log(d[sel])
    slope, intercept = np.polyfit(x, y, 1)
    if slope >= 0:
        raise FitError("trace does not decay inside the window")
    resid = y - (slope * x + intercept)
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss if ss > 0 else 1.0
    return LateTimeFit(float(np.exp(slope)), float(-intercept / slope), int(sel.sum()), r2)


def linear_r2(x, y) -> tuple[float, float, float]:
    """(slope, intercept, R^2) of an ordinary least-squares line."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(((y - y.mean()) ** 2).sum())
    return float(slope), float(intercept), 1.0 - float((resid**2).sum()) / ss if ss > 0 else 1.0


@dataclass
class RunManifest:
    experiment: str
    config: dict
    version: str
    wall_time: float = 0.0
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.time)

    def write(self, path) -> None:
        data = asdict(self)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
