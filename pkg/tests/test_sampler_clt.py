import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nbwalk import sampler_clt as sc
from nbwalk.exact_count import second_moment, walk_directions
from nbwalk.lattice import hypercube, nearest_neighbor, parse_step_set



def king():
    return parse_step_set('{"dim": 2, "points": [[1,0],[-1,0],[0,1],[0,-1],[1,1],[-1,-1],[1,-1],[-1,1]]}', 2)


def test_two_step_paths_uniform():
    s = nearest_neighbor(2)
    ens = sc.sample_paths(s, 2, 120_000, seed=7)
    freq = sc.path_frequencies(ens)
    assert len(freq) == 12
    p = 1 / 12
    se = math.sqrt(p * (1 - p) / 120_000)
    for c in freq.values():
        assert abs(c / 120_000 - p) <= 4 * se


def test_first_step_endpoint_uniform():
    s = nearest_neighbor(3)
    ens = sc.sample_endpoints(s, 1, 60_000, seed=3)
    uniq, counts = np.unique(ens.endpoints, axis=0, return_counts=True)
    assert len(uniq) == 6
    se = math.sqrt((1 / 6) * (5 / 6) / 60_000)
    assert np.all(np.abs(counts / 60_000 - 1 / 6) <= 4 * se)


def test_n_zero():
    ens = sc.sample_paths(nearest_neighbor(2), 0, 5, seed=1)
    assert ens.directions.shape == (5, 0) and not ens.endpoints.any()


def test_seed_replay_and_thread_invariance():
    s = nearest_neighbor(2)
    a = sc.sample_paths(s, 30, 40_000, seed=11, workers=1)
    b = sc.sample_paths(s, 30, 40_000, seed=11, workers=4)
    assert np.array_equal(a.directions, b.directions)
    assert np.array_equal(a.endpoints, b.endpoints)
    assert a.dump_directions() == b.dump_directions()
    c = sc.sample_paths(s, 30, 40_000, seed=12)
    assert not np.array_equal(a.directions, c.directions)


def test_endpoint_and_path_ensembles_agree():
    s = hypercube(5)
    a = sc.sample_paths(s, 9, 20_000, seed=5)
    b = sc.sample_endpoints(s, 9, 20_000, seed=5)
    assert np.array_equal(a.endpoints, b.endpoints)
    assert np.array_equal(a.positions()[:, -1], a.endpoints)


def test_env_thread_count(monkeypatch):
    monkeypatch.setenv("NBW_THREADS", "3")
    assert sc._workers(None) == 3
    monkeypatch.delenv("NBW_THREADS")
    assert sc._workers(None) == 1


@pytest.mark.parametrize("n", [1, 2, 3])
def test_chi_square_against_enumeration(n):
    s = nearest_neighbor(2)
    support = [tuple(int(c) for c in p) for p in walk_directions(s, n)]
    ens = sc.sample_paths(s, n, 50_000, seed=100 + n)
    stat, p, unexpected = sc.chi_square_uniform(ens, support)
    assert unexpected == 0
    assert p > 1e-3


@settings(max_examples=15)
@given(st.integers(1, 4), st.integers(0, 25), st.integers(0, 2**32 - 1))
def test_samples_are_backtrack_free(d, n, seed):
    ens = sc.sample_paths(nearest_neighbor(d) if d > 1 else hypercube(4), n, 500, seed=seed)
    assert ens.backtrack_free()
    for path in list(ens)[:3]:
        assert path.rng_seed[0] == seed and len(path.positions) == n + 1


@pytest.mark.parametrize("n", [4, 8])
def test_mean_square_matches_exact_second_moment(n):
    s = nearest_neighbor(2)
    ens = sc.sample_endpoints(s, n, 100_000, seed=n)
    sq = np.einsum("ij,ij->i", ens.endpoints, ens.endpoints).astype(float)
    se = sq.std(ddof=1) / math.sqrt(len(sq))
    assert abs(sq.mean() - float(second_moment(s, n))) <= 4 * se


def test_statistics_json():
    ens = sc.sample_endpoints(nearest_neighbor(2), 10, 1000, seed=2)
    st_ = ens.statistics()
    assert st_["rng"] == "numpy.random.PCG64" and st_["count"] == 1000
    assert len(st_["covariance"]) == 2


# -- covariance targets ------------------------------------------------------------------

def test_nn_target():
    t = sc.CovarianceTarget.of(nearest_neighbor(3))
    assert np.allclose(t.H, np.eye(3) / 3)
    assert np.allclose(t.M, np.eye(3) / 2)


def test_king_target():
    t = sc.CovarianceTarget.of(king())
    assert np.allclose(t.H, np.eye(2) * 6 / 8)
    assert np.allclose(t.M, t.H * 8 / 6)


def test_target_needs_three_steps():
    with pytest.raises(ValueError):
        sc.CovarianceTarget.of(nearest_neighbor(1))


def test_empirical_covariance_near_target():
    s = nearest_neighbor(2)
    est = sc.empirical_covariance(sc.sample_endpoints(s, 400, 20_000, seed=9))
    assert est.within(sc.CovarianceTarget.of(s).M, sigmas=4)


# -- deterministic CLT -------------------------------------------------------------------

@pytest.mark.parametrize("s,k", [(nearest_neighbor(2), (1.0, 0.0)), (nearest_neighbor(3), (1.0, 1.0, 0.0))])
def test_char_function_converges(s, k):
    val = sc.endpoint_char_function_exact(s, 10_000, k)
    assert abs(val - sc.gaussian_limit(s, k)) <= 0.01


def test_nn_gaussian_formula():
    d = 3
    k = np.array([0.3, -1.2, 0.5])
    assert sc.gaussian_limit(nearest_neighbor(d), k) == pytest.approx(math.exp(-(k @ k) / (2 * d - 2)))


def test_fdd_example():
    rep = sc.fdd_gaussian_check(nearest_neighbor(2), 10_000, [0.5, 1.0], [(1, 0), (0, 1)])
    assert rep.deviation <= 0.02
    assert rep.to_dict()["breakpoints"] == [0.5, 1.0]


def test_fdd_zero_waves():
    rep = sc.fdd_gaussian_check(nearest_neighbor(3), 500, [0.3, 0.7, 1.0], [(0, 0, 0)] * 3)
    assert rep.value == pytest.approx(1) and rep.limit == 1 and rep.deviation <= 1e-12
