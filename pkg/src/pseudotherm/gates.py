"""Automaton gate families: enumerable sets of bit-flip permutations of the hypercube.

Every gate here flips one target bit when a condition on other bits holds, so
each gate is an involution. Four families are provided:

``local``
    ``u_{iab}``: flip bit ``i`` iff bit ``i-1 (mod n)`` equals ``a`` and bit
    ``i+1 (mod n)`` equals ``b``. Index ``4*i + 2*a + b``; ``4n`` gates, ``n >= 3``.
``alltoall``
    globally controlled NOT: flip bit ``i`` iff the other ``n-1`` bits equal the
    control word ``a``. Index ``i * 2^(n-1) + a`` where ``a`` packs the other bits
    in increasing site order; ``n * 2^(n-1)`` gates.
``notcnot``
    ``X_i`` (indices ``0..n-1``) followed by ``C_{c,a} X_t`` for ordered pairs
    ``c != t`` and control value ``a``; ``n + 2n(n-1)`` gates. Affine, so it
    fails to be irreducible on subsets of size 4.
``simple``
    width-2 simple permutations: flip bit ``i`` iff ``g(z_j, z_k) = 1`` for distinct
    ``i``, unordered ``{j < k}`` not containing ``i`` and a non-zero Boolean
    function ``g`` on two bits (15 choices).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .subsetcore import MAX_QUBITS, Subset, check_bitstring

KINDS = ("local", "alltoall", "notcnot", "simple")
_ALIASES = {
    "local": "local",
    "localccx": "local",
    "alltoall": "alltoall",
    "alltoallcnx": "alltoall",
    "cnx": "alltoall",
    "notcnot": "notcnot",
    "simple": "simple",
    "simplepermw2": "simple",
}


@dataclass(frozen=True)
class GateFamily:
    kind: str
    n: int

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower().replace("_", "").replace("-", ""))
        if kind is None:
            raise ValueError(f"unknown gate family {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if not 1 <= self.n <= MAX_QUBITS:
            raise ValueError(f"qubit count must be in [1, {MAX_QUBITS}], got {self.n}")
        if kind in ("local", "simple") and self.n < 3:
            raise ValueError(f"family {kind} requires n >= 3")
        if kind == "alltoall" and self.n > 24:
            raise ValueError("family alltoall supports n <= 24")
        if kind == "notcnot" and self.n < 1:
            raise ValueError("family notcnot requires n >= 1")

    @property
    def size(self) -> int:
        n = self.n
        if self.kind == "local":
            return 4 * n
        if self.kind == "alltoall":
            return n << (n - 1)
        if self.kind == "notcnot":
            return n + 2 * n * (n - 1)
        return n * ((n - 1) * (n - 2) // 2) * 15

    @property
    def spec(self) -> str:
        return f"{self.kind}:{self.n}"

    @classmethod
    def from_spec(cls, spec: str) -> "GateFamily":
        kind, n = spec.split(":")
        return cls(kind, int(n))

    # Each gate is "flip bit target[g] iff cond_g(z)". For the three mask-type
    # families cond_g(z) is (z & mask[g]) == value[g]; for "simple" it is a
    # truth-table lookup on bits (j, k).

    @cached_property
    def _tables(self) -> dict:
        n, G = self.n, self.size
        target = np.zeros(G, dtype=np.uint64)
        if self.kind == "simple":
            j = np.zeros(G, dtype=np.uint64)
            k = np.zeros(G, dtype=np.uint64)
            func = np.zeros(G, dtype=np.uint64)
            g = 0
            for i in range(n):
                others = [s for s in range(n) if s != i]
                for jj, kk in itertools.combinations(others, 2):
                    for f in range(1, 16):
                        target[g], j[g], k[g], func[g] = i, jj, kk, f
                        g += 1
            return {"target": target, "j": j, "k": k, "func": func}
        mask = np.zeros(G, dtype=np.uint64)
        value = np.zeros(G, dtype=np.uint64)
        for g in range(G):
            t, ms, val = self._decode_mask(g)
            target[g], mask[g], value[g] = t, ms, val
        return {"target": target, "mask": mask, "value": value}

    def _decode_mask(self, g: int) -> tuple[int, int, int]:
        n = self.n
        if self.kind == "local":
            i, a, b = g // 4, (g >> 1) & 1, g & 1
            left, right = (i - 1) % n, (i + 1) % n
            return i, (1 << left) | (1 << right), (a << left) | (b << right)
        if self.kind == "alltoall":
            i, a = divmod(g, 1 << (n - 1))
            low = a & ((1 << i) - 1)
            high = (a >> i) << (i + 1)
            full = ((1 << n) - 1) ^ (1 << i)
            return i, full, low | high
        # notcnot
        if g < n:
            return g, 0, 0
        c, rest = divmod(g - n, 2 * (n - 1))
        tpos, a = divmod(rest, 2)
        t = tpos if tpos < c else tpos + 1
        return t, 1 << c, a << c

    def describe(self, index: int) -> dict:
        """Human-readable parameters of gate ``index``."""
        self._check_index(index)
        n = self.n
        if self.kind == "local":
            return {"target": index // 4, "a": (index >> 1) & 1, "b": index & 1}
        if self.kind == "alltoall":
            i, a = divmod(index, 1 << (n - 1))
            return {"target": i, "control_word": a}
        if self.kind == "notcnot":
            t, mask, value = self._decode_mask(index)
            if mask == 0:
                return {"gate": "X", "target": t}
            c = mask.bit_length() - 1
            return {"gate": "CX", "control": c, "control_value": value >> c, "target": t}
        tb = self._tables
        return {
            "target": int(tb["target"][index]),
            "j": int(tb["j"][index]),
            "k": int(tb["k"][index]),
            "function": int(tb["func"][index]),
        }

    def _check_index(self, index):
        idx = np.asarray(index)
        if np.any(idx < 0) or np.any(idx >= self.size):
            raise IndexError(f"gate index outside [0, {self.size}) for family {self.spec}")

    def flip_bits(self, index, z):
        """Bits XOR-ed into ``z`` by gate(s) ``index``; broadcasts over numpy arrays."""
        tb = self._tables
        z = np.asarray(z, dtype=np.uint64)
        index = np.asarray(index, dtype=np.intp)
        target = tb["target"][index]
        if self.kind == "simple":
            one = np.uint64(1)
            zj = (z >> tb["j"][index]) & one
            zk = (z >> tb["k"][index]) & one
            hit = (tb["func"][index] >> ((zj << one) | zk)) & one
        else:
            hit = ((z & tb["mask"][index]) == tb["value"][index]).astype(np.uint64)
        return hit << target

    def apply(self, index, z):
        """Image of word(s) ``z`` under gate(s) ``index`` (vectorized)."""
        z = np.asarray(z, dtype=np.uint64)
        return z ^ self.flip_bits(index, z)

    def permutation(self, index: int) -> np.ndarray:
        """Gate ``index`` as a permutation array of ``range(2^n)``."""
        if self.n > 24:
            raise ValueError("explicit permutations need n <= 24")
        return self.apply(index, np.arange(1 << self.n, dtype=np.uint64)).astype(np.int64)


@dataclass(frozen=True)
class GateId:
    family: GateFamily
    index: int

    def __post_init__(self):
        if not 0 <= self.index < self.family.size:
            raise IndexError(f"gate index {self.index} outside [0, {self.family.size})")


def apply_to_bitstring(g: GateId, z: int, n: int | None = None) -> int:
    """Image of a single word; ``n`` (if given) must match the family."""
    if n is not None and n != g.family.n:
        raise ValueError(f"bitstring has {n} qubits, family has {g.family.n}")
    z = check_bitstring(z, g.family.n)
    return int(g.family.apply(g.index, np.uint64(z)))


def apply_to_subset(g: GateId, S: Subset) -> Subset:
    """Elementwise image, re-canonicalized; cardinality is preserved."""
    if S.n != g.family.n:
        raise ValueError(f"subset has {S.n} qubits, family has {g.family.n}")
    img = g.family.apply(g.index, S.as_array())
    return Subset(tuple(int(z) for z in np.sort(img)), S.n)


def sample_gate(family: GateFamily, rng) -> GateId:
    """Uniform gate from ``family`` using a numpy Generator (or seed)."""
    rng = np.random.default_rng(rng)
    return GateId(family, int(rng.integers(family.size)))


def sample_gate_indices(family: GateFamily, rng, size) -> np.ndarray:
    rng = np.random.default_rng(rng)
    dtype = np.int16 if family.size < 2**15 else np.int64
    return rng.integers(family.size, size=size, dtype=dtype)


def is_involution(family: GateFamily) -> np.ndarray:
    """Per-gate flag: ``apply(g, apply(g, z)) == z`` on every word (n <= 20)."""
    if family.n > 20:
        raise ValueError("exhaustive involution check needs n <= 20")
    z = np.arange(1 << family.n, dtype=np.uint64)
    flags = np.empty(family.size, dtype=bool)
    for g in range(family.size):
        flags[g] = np.array_equal(family.apply(g, family.apply(g, z)), z)
    return flags


def permutation_parity(perm: np.ndarray) -> int:
    """0 for even permutations, 1 for odd (via cycle count)."""
    perm = np.asarray(perm)
    seen = np.zeros(perm.size, dtype=bool)
    cycles = 0
    for start in range(perm.size):
        if seen[start]:
            continue
        cycles += 1
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
    return (perm.size - cycles) % 2


def circuit_to_json(gates: list[GateId]) -> str:
    """Serialize a gate sequence as ``[[family_spec, index], ...]``."""
    return json.dumps([[g.family.spec, int(g.index)] for g in gates])


def circuit_from_json(text: str) -> list[GateId]:
    families: dict[str, GateFamily] = {}
    out = []
    for spec, index in json.loads(text):
        fam = families.setdefault(spec, GateFamily.from_spec(spec))
        out.append(GateId(fam, int(index)))
    return out
