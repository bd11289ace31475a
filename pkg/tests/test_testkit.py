import numpy as np
import pytest

from tamics.graph_model import InteractionGraph, format_social_network
from tamics.testkit import (DEFAULT_GUARD, EnumGuard, GuardExceeded, brute_force_cores, brute_force_tamics,
                            enum_degree_prob, exact_spread, gen_synthetic, run_oracle_suite, tail_by_enumeration)


def test_enum_degree_examples():
    g = InteractionGraph(3, [1, 2], [0, 0], [0.5, 0.8])
    assert enum_degree_prob(g, 0, 2, "in") == pytest.approx(0.4)
    assert enum_degree_prob(g, 0, 0, "in") == 1.0
    assert enum_degree_prob(g, 1, 1, "in") == 0.0
    with pytest.raises(ValueError):
        enum_degree_prob(g, 0, 1, "both")


def test_guard_refuses_large_inputs():
    with pytest.raises(GuardExceeded, match="limit"):
        tail_by_enumeration([0.5] * 21, 1)
    n = 13
    g = InteractionGraph(n, np.arange(n - 1), np.arange(1, n), np.full(n - 1, 0.5))
    with pytest.raises(GuardExceeded):
        brute_force_cores(g, 1, 1, 0.1)
    tight = EnumGuard(max_edges=3)
    with pytest.raises(GuardExceeded):
        exact_spread(InteractionGraph(5, [0, 1, 2, 3], [1, 2, 3, 4], [0.5] * 4), guard=tight)
    assert DEFAULT_GUARD.max_edges == 20 and DEFAULT_GUARD.max_vertices == 12


def test_brute_force_cores_trivial():
    assert brute_force_cores(InteractionGraph(0, [], [], []), 1, 1, 0.5) == []
    pair = InteractionGraph(2, [0, 1], [1, 0], [1.0, 1.0])
    assert brute_force_cores(pair, 1, 1, 1.0) == [[0, 1]]


def test_brute_force_tamics_trivial():
    chain = InteractionGraph(3, [0, 1], [1, 2], [0.5, 0.5])
    assert not brute_force_tamics(chain, 1, 1, 0.1).found
    pair = InteractionGraph(2, [0, 1], [1, 0], [1.0, 1.0])
    res = brute_force_tamics(pair, 1, 1, 0.5)
    assert res.optima == ((0, 1),) and res.value == 2.0


def test_gen_synthetic_density_and_shape():
    net = gen_synthetic(100, 10, 3, seed=1)
    assert abs(net.m - 1000) <= 100
    assert np.all(net.src != net.dst)
    assert len(set(zip(net.src.tolist(), net.dst.tolist()))) == net.m
    assert np.all(net.weights >= 0) and np.all(net.weights.sum(axis=1) <= 1 + 1e-12)
    one = gen_synthetic(50, 4, 1, seed=2)
    assert one.weights.shape[1] == 1


def test_gen_synthetic_deterministic():
    a = format_social_network(gen_synthetic(200, 5, 4, seed=7))
    b = format_social_network(gen_synthetic(200, 5, 4, seed=7))
    assert a == b
    assert a != format_social_network(gen_synthetic(200, 5, 4, seed=8))


def test_gen_synthetic_dense_branch():
    net = gen_synthetic(10, 8, 2, seed=3)
    assert net.m > 45 and len(set(zip(net.src.tolist(), net.dst.tolist()))) == net.m


@pytest.mark.parametrize("args", [(1, 1, 2), (10, 1, 0), (10, 20, 2), (10, -1, 2)])
def test_gen_synthetic_rejects(args):
    with pytest.raises(ValueError):
        gen_synthetic(*args, seed=0)


def test_oracle_suite_passes_and_catches_fault():
    results = list(run_oracle_suite(cases=10, seed=3))
    assert all(r.passed for r in results), [r for r in results if not r.passed]
    broken = {r.name: r.passed for r in run_oracle_suite(cases=10, seed=3, fault="dp")}
    assert broken["degree-dp-vs-enumeration"] is False
    with pytest.raises(ValueError):
        list(run_oracle_suite(cases=0))
    with pytest.raises(ValueError):
        list(run_oracle_suite(fault="heap"))
