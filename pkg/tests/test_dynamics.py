import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import phi_dict
from pseudotherm.chain import TransitionOperator, top_eigenvalues
from pseudotherm.dynamics import (
    ObservableTrace,
    SubsetDistribution,
    TvTrace,
    empirical_distribution,
    evolve_exact,
    fit_late_time,
    induced_initial,
    linear_r2,
    mixing_time,
    observable_trace,
    parse_initial_state,
    phi_map,
    sample_ensemble,
    sample_trajectory,
    tv_distance,
    tv_to_uniform,
    worst_case_mixing_time,
)
from pseudotherm.errors import FitError
from pseudotherm.gates import GateFamily
from pseudotherm.subsetcore import Subset, enumerate_subsets, subset_count


def local(n):
    return GateFamily("local", n)


def random_distribution(rng, n, K, support=None):
    dim = subset_count(n, K)
    p = np.zeros(dim)
    idx = rng.choice(dim, size=support or dim, replace=False)
    p[idx] = rng.dirichlet(np.ones(idx.size))
    return SubsetDistribution(n, K, p)


def test_distribution_validation():
    with pytest.raises(ValueError):
        SubsetDistribution(3, 2, np.ones(28))
    with pytest.raises(ValueError):
        SubsetDistribution(3, 2, np.ones(5) / 5)
    d = SubsetDistribution.from_dict(3, 2, {Subset((0, 1), 3): 2.0, 5: 2.0})
    assert d.to_dict() == {0: 0.5, 5: 0.5}


def test_tv_examples():
    p = SubsetDistribution.delta(Subset((1, 2), 3))
    assert tv_distance(p, p) == 0
    assert tv_distance(p, SubsetDistribution.uniform(3, 2)) == pytest.approx(1 - 1 / 28, abs=1e-15)
    assert tv_distance([1, 0], [0, 1]) == 1
    with pytest.raises(ValueError):
        tv_distance(p, SubsetDistribution.uniform(3, 3))


def test_parse_initial_state():
    S = parse_initial_state("00+++")
    assert S.n == 5 and S.m == 8
    assert S.elements == tuple(range(0, 32, 4))
    assert parse_initial_state("1+").elements == (1, 3)
    with pytest.raises(ValueError):
        parse_initial_state("0x")


def test_evolve_from_uniform_stays_at_zero():
    T = TransitionOperator(local(4), 2)
    trace, final = evolve_exact(T, SubsetDistribution.uniform(4, 2), 30)
    assert np.max(trace.distances) <= 1e-15
    assert abs(final.probs.sum() - 1) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_tv_non_increasing(seed, m):
    rng = np.random.default_rng(seed)
    T = TransitionOperator(local(4), m)
    p0 = random_distribution(rng, 4, m, support=min(3, T.dim))
    trace, final = evolve_exact(T, p0, 60)
    assert np.all(np.diff(trace.distances) <= 1e-14)
    assert np.all((trace.distances >= 0) & (trace.distances <= 1))
    assert abs(final.probs.sum() - 1) <= 1e-12


def test_late_time_rates_small_m():
    S0 = parse_initial_state("00+++")
    lam = {}
    for m in (1, 2):
        T = TransitionOperator(local(5), m)
        trace, _ = evolve_exact(T, induced_initial(S0, m), 1500, stop_below=1e-9)
        lam[m] = fit_late_time(trace).lam
        spec = top_eigenvalues(T, k=2)
        assert abs(lam[m] - spec.eigenvalues[1]) <= 0.01
    assert lam[1] == pytest.approx(0.90, abs=0.01)
    assert lam[2] == pytest.approx(0.92, abs=0.01)


def test_fit_synthetic_exponential():
    t = np.arange(0, 400)
    trace = TvTrace(t, 0.9 ** (t - 10.0))
    fit = fit_late_time(trace)
    assert fit.lam == pytest.approx(0.9, abs=1e-10)
    assert fit.dt == pytest.approx(10, abs=1e-10)


def test_fit_errors():
    t = np.arange(5)
    with pytest.raises(FitError):
        fit_late_time(TvTrace(t, np.full(5, 0.5)))
    with pytest.raises(FitError):
        fit_late_time(TvTrace(t, np.zeros(5)))
    with pytest.raises(FitError):
        fit_late_time(TvTrace(t, 0.5**t), window=(0.0, 1.0))


def test_trace_csv_round_trip(tmp_path):
    trace = TvTrace(np.arange(4), np.array([1.0, 0.5, 0.25, 1 / 3]))
    trace.to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,tv"
    back = TvTrace.from_csv(tmp_path / "t.csv")
    assert np.array_equal(back.distances, trace.distances)


def test_mixing_time_basics():
    T = TransitionOperator(local(4), 2)
    assert mixing_time(T, SubsetDistribution.uniform(4, 2)).t_mix == 0
    res = mixing_time(T, SubsetDistribution.delta(Subset((0, 1), 4)), t_cap=2)
    assert res.t_mix is None and not res.reached and 0.25 < res.tv <= 1
    full = mixing_time(T, SubsetDistribution.delta(Subset((0, 1), 4)))
    assert full.reached and full.tv <= 0.25


def test_worst_case_dominates_any_start():
    T = TransitionOperator(local(4), 2)
    worst = worst_case_mixing_time(T).t_mix
    for r in (0, 17, 119):
        S = Subset(tuple(int(x) for x in enumerate_subsets(4, 2)[r]), 4)
        assert mixing_time(T, SubsetDistribution.delta(S)).t_mix <= worst


def test_single_particle_mixing_scales_like_n_log_n():
    ns = np.arange(4, 11)
    t = [worst_case_mixing_time(TransitionOperator(local(int(n)), 1)).t_mix for n in ns]
    slope, _, r2 = linear_r2(np.log(ns), np.log(t))
    assert 1.0 < slope < 1.0 + 1.0 / math.log(4)
    assert linear_r2(ns * np.log(ns), t)[2] >= 0.99


@pytest.mark.parametrize("n,m", [(3, 1), (3, 2), (4, 1), (4, 2), (5, 1), (5, 2)])
def test_counting_bound(n, m):
    t_mix = worst_case_mixing_time(TransitionOperator(local(n), m)).t_mix
    assert t_mix >= math.log(math.comb(1 << n, m) / 2) / math.log(4 * n)


def test_sample_trajectory_basics():
    f = local(4)
    S0 = Subset((0, 3, 9), 4)
    assert sample_trajectory(f, S0, 0, seed=1) == [S0]
    traj = sample_trajectory(f, S0, 50, seed=1, record_every=5)
    assert len(traj) == 11 and all(S.m == 3 for S in traj)
    assert traj == sample_trajectory(f, S0, 50, seed=1, record_every=5)
    assert traj != sample_trajectory(f, S0, 50, seed=1, index=1, record_every=5)


def test_ensemble_independent_of_chunking():
    f = local(5)
    S0 = Subset((1, 2, 7), 5)
    a = sample_ensemble(f, S0, 40, 50, seed=3, chunk=7)
    b = sample_ensemble(f, S0, 40, 50, seed=3, chunk=2048)
    assert np.array_equal(a, b)
    traj = sample_trajectory(f, S0, 40, seed=3, index=13)[-1]
    assert tuple(int(x) for x in a[13]) == traj.elements


def test_monte_carlo_matches_exact_marginal():
    f = local(3)
    S0 = Subset((0, 1), 3)
    R, t = 100_000, 200
    rows = sample_ensemble(f, S0, t, R, seed=2024)
    emp = empirical_distribution(rows, 3).probs
    _, exact = evolve_exact(TransitionOperator(f, 2), SubsetDistribution.delta(S0), t)
    sigma = np.sqrt(exact.probs * (1 - exact.probs) / R)
    assert np.all(np.abs(emp - exact.probs) <= 3 * sigma)


def test_monte_carlo_matches_exact_before_mixing():
    f = local(3)
    S0 = Subset((0, 1), 3)
    R, t = 50_000, 6
    emp = empirical_distribution(sample_ensemble(f, S0, t, R, seed=99), 3).probs
    _, exact = evolve_exact(TransitionOperator(f, 2), SubsetDistribution.delta(S0), t)
    sigma = np.sqrt(exact.probs * (1 - exact.probs) / R)
    assert np.all(np.abs(emp - exact.probs) <= 3 * sigma + 1e-15)


def test_observable_initial_profile():
    ob = observable_trace(local(6), "0+1+00", 0, realizations=1, seed=0)
    assert np.array_equal(ob.zbar[0], [1, 0, -1, 0, 1, 1])
    assert np.array_equal(ob.z2bar[0], [1, 0, 1, 0, 1, 1])


def test_single_particle_z_decay():
    n, R = 6, 20_000
    ob = observable_trace(local(n), Subset((0,), n), 60, realizations=R, seed=5, record_every=10)
    exact = (1 - 1 / (2 * n)) ** ob.times
    sigma = np.sqrt((1 - exact**2) / R)
    assert np.all(np.abs(ob.zbar - exact[:, None]) <= 3 * sigma[:, None] + 1e-12)
    assert np.allclose(ob.z2bar, 1.0)


def test_observable_csv(tmp_path):
    ob = observable_trace(local(4), "++00", 8, realizations=10, seed=1, record_every=4)
    ob.to_csv(tmp_path / "o.csv")
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0] == "t,site,zbar,z2bar"
    assert len(lines) == 1 + 3 * 4


def test_crossing_times():
    ob = ObservableTrace(np.array([0, 10, 20]), np.zeros((3, 2)), np.array([[1, 1], [0.2, 1], [0.1, 0.4]]), 1)
    c = ob.crossing_times(0.5)
    assert c.tolist() == [10, 20]


def test_phi_identity_and_uniform():
    rng = np.random.default_rng(0)
    p = random_distribution(rng, 3, 4, support=6)
    assert np.allclose(phi_map(p, 4).probs, p.probs, atol=1e-15)
    assert np.allclose(phi_map(SubsetDistribution.uniform(3, 4), 2).probs, 1 / 28, atol=1e-15)
    with pytest.raises(ValueError):
        phi_map(p, 5)


def test_phi_matches_set_oracle():
    rng = np.random.default_rng(1)
    p = random_distribution(rng, 3, 4, support=9)
    states = enumerate_subsets(3, 4)
    pd = {frozenset(int(x) for x in states[r]): p.probs[r] for r in np.flatnonzero(p.probs)}
    want = phi_dict(pd, 2)
    got = phi_map(p, 2)
    rows = enumerate_subsets(3, 2)
    for r, row in enumerate(rows):
        assert got.probs[r] == pytest.approx(want.get(frozenset(int(x) for x in row), 0.0), abs=1e-15)


def test_phi_sparse_input():
    rng = np.random.default_rng(2)
    p = random_distribution(rng, 4, 5, support=10)
    sparse = {int(r): float(p.probs[r]) for r in np.flatnonzero(p.probs)}
    assert np.allclose(phi_map(sparse, 3, n=4, K=5).probs, phi_map(p, 3).probs, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_phi_semigroup(seed):
    rng = np.random.default_rng(seed)
    p = random_distribution(rng, 3, 4, support=int(rng.integers(1, 10)))
    two_step = phi_map(phi_map(p, 3), 2).probs
    assert np.max(np.abs(two_step - phi_map(p, 2).probs)) <= 1e-12
    q = phi_map(p, 2).probs
    assert np.all(q >= 0) and abs(q.sum() - 1) <= 1e-12


def test_phi_tv_monotone_in_m():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = random_distribution(rng, 3, 5, support=int(rng.integers(1, 12)))
        deltas = [tv_to_uniform(phi_map(p, m)) for m in range(1, 6)]
        assert np.all(np.diff(deltas) >= -1e-12)


def test_induced_initial():
    S0 = Subset((1, 4, 6, 7), 3)
    assert np.array_equal(induced_initial(S0, 4).probs, SubsetDistribution.delta(S0).probs)
    q = induced_initial(S0, 2)
    assert np.count_nonzero(q.probs) == 6 and np.allclose(q.probs[q.probs > 0], 1 / 6)
    with pytest.raises(ValueError):
        induced_initial(S0, 5)


@pytest.mark.parametrize("t", [0, 1, 5, 12])
def test_induced_chain_commutes_with_phi(t):
    f = local(3)
    S0 = Subset((1, 4, 6, 7), 3)
    _, pK = evolve_exact(TransitionOperator(f, 4), SubsetDistribution.delta(S0), t)
    _, pm = evolve_exact(TransitionOperator(f, 2), induced_initial(S0, 2), t)
    assert np.max(np.abs(phi_map(pK, 2).probs - pm.probs)) <= 1e-12
