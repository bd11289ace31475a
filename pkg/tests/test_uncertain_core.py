import numpy as np
import pytest
from hypothesis import given, strategies as st

from tamics.graph_model import InteractionGraph, build_supergraph, extract_interaction_graph
from tamics.testkit import (brute_force_cores, deterministic_dcore, enum_degree_prob, random_uncertain_graph,
                            tail_by_enumeration)
from tamics.uncertain_core import (PeelState, compute_cores, core_vertices, dcore_bounds, degree_dp,
                                   eta_thresholds, remove_edge_update)

from conftest import V1, V2, V3, V4, V5, V6


def star_in(probs):
    """Vertex 0 with one in-edge of each probability."""
    n = len(probs) + 1
    return InteractionGraph(n, list(range(1, n)), [0] * len(probs), probs, vertices=np.ones(n, bool))


def graph_strategy(max_vertices=8, max_edges=14):
    return st.integers(0, 2**32 - 1).map(
        lambda s: random_uncertain_graph(np.random.default_rng(s), max_vertices, max_edges, certain_share=0.15))


# ---------------------------------------------------------------------------
# degree DP


def test_dp_no_edges():
    dp = degree_dp(star_in([]), 0, 1, 1)
    assert dp.in_tail == 0.0
    assert degree_dp(star_in([]), 0, 0, 0).in_tail == 1.0


def test_dp_single_edge():
    assert degree_dp(star_in([0.3]), 0, 1, 0).in_tail == pytest.approx(0.3)


def test_dp_two_edges():
    g = star_in([0.5, 0.8])
    assert degree_dp(g, 0, 1, 0).in_tail == pytest.approx(0.9, abs=1e-12)
    assert degree_dp(g, 0, 2, 0).in_tail == pytest.approx(0.4, abs=1e-12)
    dp = degree_dp(g, 0, 2, 0)
    assert dp.in_prob == pytest.approx([0.1, 0.5])


@given(graph_strategy(), st.integers(0, 4), st.integers(0, 4))
def test_dp_matches_enumeration(g, k, l):
    for v in g.vertices():
        dp = degree_dp(g, int(v), k, l)
        assert abs(dp.in_tail - enum_degree_prob(g, int(v), k, "in")) <= 1e-9
        assert abs(dp.out_tail - enum_degree_prob(g, int(v), l, "out")) <= 1e-9
        assert np.all(dp.in_prob >= -1e-12) and dp.in_prob.sum() <= 1 + 1e-9
        assert abs(dp.in_tail - (1 - dp.in_prob.sum())) <= 1e-9


def test_remove_update_examples():
    dp = degree_dp(star_in([0.5, 0.8]), 0, 2, 0)
    after = remove_edge_update(dp, (2, 0))
    assert after.in_prob[0] == pytest.approx(0.5) and after.in_prob[1] == pytest.approx(0.5)
    assert after.in_tail == pytest.approx(0.0)
    one = remove_edge_update(degree_dp(star_in([0.5, 0.8]), 0, 1, 0), (2, 0))
    assert one.in_tail == pytest.approx(0.5)
    certain = remove_edge_update(degree_dp(star_in([1.0, 0.5]), 0, 1, 0), (1, 0))
    assert certain.in_prob[0] == pytest.approx(0.5)
    last = remove_edge_update(degree_dp(star_in([0.7]), 0, 1, 0), (1, 0))
    assert last.in_prob[0] == 1.0 and last.in_tail == 0.0


def test_remove_update_rejects_foreign_edge():
    with pytest.raises(ValueError):
        remove_edge_update(degree_dp(star_in([0.7]), 0, 1, 0), (0, 1))


@given(st.lists(st.sampled_from([0.2, 0.5, 0.9, 1.0, 1 - 1e-8, 0.999999]), min_size=1, max_size=9),
       st.integers(1, 4), st.randoms(use_true_random=False))
def test_remove_sequence_matches_fresh(probs, k, rnd):
    g = star_in(probs)
    dp = degree_dp(g, 0, k, 0)
    left = list(range(1, len(probs) + 1))
    rnd.shuffle(left)
    while left:
        u = left.pop()
        dp = remove_edge_update(dp, (u, 0))
        rest = [probs[i - 1] for i in sorted(left)]
        assert abs(dp.in_tail - tail_by_enumeration(rest, k)) <= 1e-9
        fresh = degree_dp(g.induced([0] + left), 0, k, 0)
        assert np.allclose(dp.in_prob, fresh.in_prob, atol=1e-9, rtol=0)


# ---------------------------------------------------------------------------
# cores


def test_running_example_cores(example_net):
    g = extract_interaction_graph(example_net, (0.5, 0.5))
    cores = compute_cores(g, 1, 2, 0.6)
    assert [c.tolist() for c in cores] == [[V2, V4, V5]]
    state = PeelState(g, 1, 2)
    state.peel(0.6)
    assert [state.product(v) for v in (V2, V4, V5)] == pytest.approx([0.64, 0.6, 1.0])
    assert [c.tolist() for c in compute_cores(g, 1, 2, 0.36)] == [[V2, V4, V5, V6]]


def test_removal_order_in_running_example(example_net):
    g = extract_interaction_graph(example_net, (0.5, 0.5))
    state = PeelState(g, 1, 2)
    removed = state.peel(0.36)
    assert removed.tolist() == [V1, V3]


def test_bidirected_cycle_threshold():
    pairs = [(0, 1), (1, 2), (2, 0), (1, 0), (2, 1), (0, 2)]
    g = InteractionGraph(3, [a for a, _ in pairs], [b for _, b in pairs], [0.9] * 6)
    # each vertex: Pr[in >= 1] = Pr[out >= 1] = 1 - 0.01
    value = (1 - 0.1 ** 2) ** 2
    assert [c.tolist() for c in compute_cores(g, 1, 1, value)] == [[0, 1, 2]]
    assert compute_cores(g, 1, 1, value + 1e-9) == []
    assert brute_force_cores(g, 1, 1, value) == [[0, 1, 2]]


def test_directed_cycle_with_plain_edges():
    g = InteractionGraph(3, [0, 1, 2], [1, 2, 0], [0.9] * 3)
    assert [c.tolist() for c in compute_cores(g, 1, 1, 0.81)] == [[0, 1, 2]]
    assert compute_cores(g, 1, 1, 0.82) == []


@given(graph_strategy(10, 24), st.integers(1, 2), st.integers(1, 2), st.sampled_from([0.1, 0.3, 0.6, 0.9]))
def test_cores_match_brute_force(g, k, l, eta):
    got = [c.tolist() for c in compute_cores(g, k, l, eta)]
    assert got == brute_force_cores(g, k, l, eta)


@given(graph_strategy(10, 30), st.integers(1, 3), st.integers(1, 3), st.floats(0.01, 0.9))
def test_cores_monotone(g, k, l, eta):
    base = set(core_vertices(g, k, l, eta).tolist())
    assert set(core_vertices(g, k + 1, l, eta).tolist()) <= base
    assert set(core_vertices(g, k, l + 1, eta).tolist()) <= base
    assert set(core_vertices(g, k, l, min(1.0, eta + 0.1)).tolist()) <= base
    assert base <= set(core_vertices(g, k, l, eta / 2).tolist())


def test_cores_order_independent(rng):
    for _ in range(20):
        g = random_uncertain_graph(rng, 10, 30)
        want = [c.tolist() for c in compute_cores(g, 1, 2, 0.3)]
        for _ in range(10):
            perm = rng.permutation(g.n)
            h = InteractionGraph(g.n, perm[g.src], perm[g.dst], g.p, vertices=np.ones(g.n, bool))
            inv = np.argsort(perm)
            got = sorted(sorted(inv[c].tolist()) for c in compute_cores(h, 1, 2, 0.3))
            assert got == want


def test_cores_are_weakly_connected_and_valid(rng):
    for _ in range(30):
        g = random_uncertain_graph(rng, 10, 30)
        for core in compute_cores(g, 1, 1, 0.2):
            sub = g.induced(core)
            for v in core:
                dp = degree_dp(sub, int(v), 1, 1)
                assert dp.product >= 0.2
            assert len(PeelState(sub, 0, 0).components()) == 1


# ---------------------------------------------------------------------------
# thresholds and D-core bounds


def test_running_example_thresholds(example_net):
    sup = build_supergraph(example_net)
    thr = eta_thresholds(sup, 1, 2)
    assert thr[V1] == pytest.approx(0.25, abs=1e-9)
    assert thr[V6] == pytest.approx(0.36, abs=1e-9)
    for v in (V2, V4, V5):
        assert thr[v] == pytest.approx(0.6, abs=1e-9)
    assert thr[V3] == 0.0


def test_thresholds_zero_without_structure():
    g = InteractionGraph(3, [0, 1], [1, 2], [0.9, 0.9])
    assert eta_thresholds(g, 1, 1).tolist() == [0.0, 0.0, 0.0]


@given(graph_strategy(9, 24), st.integers(1, 2), st.integers(1, 2))
def test_threshold_membership(g, k, l):
    thr = eta_thresholds(g, k, l)
    for v in g.vertices():
        t = thr[v]
        if t > 0:
            assert v in core_vertices(g, k, l, t)
            if t < 1:
                assert v not in core_vertices(g, k, l, t + 1e-9)
        else:
            assert v not in core_vertices(g, k, l, 1e-12)


def test_dcore_bounds_examples():
    tri = InteractionGraph(3, [0, 0, 1, 1, 2, 2], [1, 2, 0, 2, 0, 1], [0.5] * 6)
    assert dcore_bounds(tri) == (2, 2)
    path = InteractionGraph(3, [0, 1], [1, 2], [1.0, 1.0])
    assert dcore_bounds(path) == (0, 0)
    pair = InteractionGraph(2, [0, 1], [1, 0], [0.3, 0.3])
    assert dcore_bounds(pair) == (1, 1)
    assert dcore_bounds(InteractionGraph(0, [], [], [])) == (0, 0)


def test_vanishing_eta_gives_deterministic_dcore(rng):
    for _ in range(50):
        g = random_uncertain_graph(rng, 9, 25)
        assert core_vertices(g, 1, 1, 1e-15).tolist() == deterministic_dcore(g, 1, 1)


def test_dcore_bounds_agree_with_peeling(rng):
    for _ in range(30):
        g = random_uncertain_graph(rng, 9, 30)
        kmax, lmax = dcore_bounds(g)
        if kmax:
            assert deterministic_dcore(g, kmax, 0)
        assert not deterministic_dcore(g, kmax + 1, 0)
        if lmax:
            assert deterministic_dcore(g, 0, lmax)
        assert not deterministic_dcore(g, 0, lmax + 1)
