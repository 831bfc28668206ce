import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import colex_order
from pseudotherm.errors import CapacityError, InvalidSubsetError
from pseudotherm.subsetcore import (
    Subset,
    binomial_table,
    enumerate_subsets,
    format_bits,
    parse_bits,
    rank_array,
    rank_subset,
    read_distribution_csv,
    relative_coordinate,
    sub_subsets,
    subset_from_json,
    subset_to_json,
    unrank_array,
    unrank_subset,
    write_distribution_csv,
)


def test_rank_of_smallest_subset_is_zero():
    assert rank_subset(Subset((0, 1, 2), 3)) == 0
    assert rank_subset(Subset((0, 1, 2), 10)) == 0


def test_rank_matches_colex_enumeration():
    order = colex_order(4, 2)
    assert order.index((1, 3)) == 4
    assert rank_subset(Subset((1, 3), 2)) == 4
    for j, s in enumerate(order):
        assert rank_subset(Subset(s, 2)) == j


def test_unrank_examples():
    assert unrank_subset(0, 3, 2).elements == (0, 1, 2)
    assert unrank_subset(4, 2, 2).elements == (1, 3)
    assert unrank_subset(math.comb(8, 4) - 1, 4, 3).elements == (4, 5, 6, 7)


def test_unrank_out_of_range():
    with pytest.raises(IndexError):
        unrank_subset(math.comb(8, 4), 4, 3)
    with pytest.raises(IndexError):
        unrank_subset(-1, 4, 3)


def test_round_trip_n3_m4_exhaustive():
    order = colex_order(8, 4)
    assert len(order) == 70
    for j, s in enumerate(order):
        S = Subset(s, 3)
        assert rank_subset(S) == j
        assert unrank_subset(j, 4, 3) == S


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_bijection_exhaustive_small_n(n):
    D = 1 << n
    for m in range(1, D + 1):
        if math.comb(D, m) > 20000:
            continue
        rows = enumerate_subsets(n, m)
        expected = np.array(colex_order(D, m))
        assert np.array_equal(rows.astype(np.int64), expected)
        table = binomial_table(D, m)
        assert np.array_equal(rank_array(rows, table), np.arange(len(rows)))


@settings(max_examples=200, deadline=None)
@given(st.integers(5, 12), st.data())
def test_bijection_sampled_large(n, data):
    D = 1 << n
    m = data.draw(st.integers(1, 6))
    els = data.draw(st.sets(st.integers(0, D - 1), min_size=m, max_size=m))
    S = Subset.of(els, n)
    r = rank_subset(S)
    assert 0 <= r < math.comb(D, m)
    assert unrank_subset(r, m, n) == S
    table = binomial_table(D, m)
    assert rank_array(S.as_array()[None, :], table)[0] == r
    assert tuple(unrank_array(np.array([r]), m, n, table)[0]) == S.elements


def test_vectorized_ranking_matches_scalar_random():
    rng = np.random.default_rng(3)
    n, m = 10, 5
    table = binomial_table(1 << n, m)
    ranks = rng.integers(0, math.comb(1 << n, m), size=500)
    rows = unrank_array(ranks, m, n, table)
    for r, row in zip(ranks[:50], rows[:50]):
        assert unrank_subset(int(r), m, n).elements == tuple(int(x) for x in row)
    assert np.array_equal(rank_array(rows, table), ranks)


def test_subset_validation():
    with pytest.raises(InvalidSubsetError):
        Subset((1, 1), 2)
    with pytest.raises(InvalidSubsetError):
        Subset((2, 1), 2)
    with pytest.raises(InvalidSubsetError):
        Subset((0, 4), 2)
    with pytest.raises(InvalidSubsetError):
        Subset((), 2)
    with pytest.raises(InvalidSubsetError):
        Subset.of([3, 1, 3], 2)
    assert Subset.of([3, 1, 0], 2).elements == (0, 1, 3)


def test_binomial_overflow_is_an_error():
    with pytest.raises(CapacityError):
        binomial_table(1 << 24, 40)


def test_sub_subsets_enumerate():
    assert sub_subsets(Subset((0, 1), 2), 2) == [Subset((0, 1), 2)]
    got = {s.elements for s in sub_subsets(Subset((0, 1, 2), 2), 2)}
    assert got == {(0, 1), (0, 2), (1, 2)}
    S = Subset(tuple(range(0, 16, 2)), 4)
    for m in range(1, 9):
        subs = sub_subsets(S, m)
        assert len(subs) == math.comb(8, m)
        assert len(set(subs)) == len(subs)
        assert all(set(s.elements) <= set(S.elements) for s in subs)


def test_sub_subsets_rejects_large_m():
    with pytest.raises(ValueError):
        sub_subsets(Subset((0, 1), 2), 3)


def test_sub_subsets_sampling_is_uniform():
    S = Subset(tuple(range(3, 11)), 4)
    draws = sub_subsets(S, 3, mode="sample", count=300_000, seed=11)
    counts = {}
    for d in draws:
        counts[d] = counts.get(d, 0) + 1
    assert len(counts) == 56
    N, p = 300_000, 1 / 56
    sigma = math.sqrt(N * p * (1 - p))
    assert all(abs(c - N * p) <= 3 * sigma for c in counts.values())
    # a global chi-square check backs up the per-bin gate
    chi2 = sum((c - N * p) ** 2 / (N * p) for c in counts.values())
    assert chi2 < 55 + 4 * math.sqrt(2 * 55)


def test_sub_subsets_sampling_deterministic():
    S = Subset(tuple(range(8)), 3)
    a = sub_subsets(S, 3, mode="sample", count=100, seed=5)
    b = sub_subsets(S, 3, mode="sample", count=100, seed=5)
    assert a == b


def test_relative_coordinate():
    assert relative_coordinate(Subset((0b001, 0b011), 3)) == 0b010
    assert relative_coordinate(Subset((0b000, 0b111), 3)) == 0b111
    for a, b in itertools.combinations(range(16), 2):
        assert relative_coordinate(Subset((a, b), 4)) != 0
        assert relative_coordinate(Subset.of((b, a), 4)) == a ^ b
    with pytest.raises(ValueError):
        relative_coordinate(Subset((0, 1, 2), 2))


def test_bits_text_convention():
    assert parse_bits("011") == 0b110
    assert format_bits(0b110, 3) == "011"


def test_json_and_csv(tmp_path):
    S = Subset((1, 5, 9), 4)
    assert subset_from_json(subset_to_json(S), 4) == S
    p = np.zeros(10)
    p[[1, 7]] = [0.25, 0.75]
    path = tmp_path / "d.csv"
    write_distribution_csv(path, p)
    assert path.read_text().splitlines()[0] == "rank,probability"
    assert np.array_equal(read_distribution_csv(path, 10), p)
