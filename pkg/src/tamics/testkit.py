"""Reference oracles and instance generators.

Everything here is written against the raw edge lists of an
:class:`~tamics.graph_model.InteractionGraph` with its own traversal and
enumeration code, so cross-checks against the main modules compare two
independent implementations.  All exponential routines check an
:class:`EnumGuard` first and refuse oversized inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .graph_model import InteractionGraph, SocialNetwork, load_social_network, parse_social_network


class GuardExceeded(ValueError):
    pass


@dataclass(frozen=True)
class EnumGuard:
    max_edges: int = 20
    max_vertices: int = 12

    def check_edges(self, m: int, what: str = "edges"):
        if m > self.max_edges:
            raise GuardExceeded(f"{what}: {m} exceeds the enumeration limit of {self.max_edges}")

    def check_vertices(self, n: int):
        if n > self.max_vertices:
            raise GuardExceeded(f"vertices: {n} exceeds the subset enumeration limit of {self.max_vertices}")


DEFAULT_GUARD = EnumGuard()


def _edge_list(graph: InteractionGraph) -> list[tuple[int, int, float]]:
    return [(int(u), int(v), float(p)) for u, v, p in zip(graph.src, graph.dst, graph.p)]


# ---------------------------------------------------------------------------
# degree probabilities


def _worlds(m: int) -> np.ndarray:
    """All 0/1 assignments of ``m`` edges, one per row."""
    return ((np.arange(1 << m)[:, None] >> np.arange(m)) & 1).astype(bool)


def tail_by_enumeration(probs, k: int, guard: EnumGuard = DEFAULT_GUARD) -> float:
    """``Pr[#successes >= k]`` for independent Bernoulli ``probs``, by listing outcomes."""
    probs = np.asarray(probs, dtype=np.float64)
    if k <= 0:
        return 1.0
    guard.check_edges(len(probs), "incident edges")
    if len(probs) < k:
        return 0.0
    w = _worlds(len(probs))
    weight = np.prod(np.where(w, probs, 1.0 - probs), axis=1)
    return float(weight[w.sum(axis=1) >= k].sum())


def enum_degree_prob(graph: InteractionGraph, v: int, k: int, side: str,
                     guard: EnumGuard = DEFAULT_GUARD) -> float:
    """Exact ``Pr[deg(v) >= k]`` on ``side`` ('in' or 'out') over all incident-edge worlds."""
    if side not in ("in", "out"):
        raise ValueError("side must be 'in' or 'out'")
    probs = [p for a, b, p in _edge_list(graph) if (b if side == "in" else a) == v]
    return tail_by_enumeration(probs, k, guard)


# ---------------------------------------------------------------------------
# cores


class _SubsetChecker:
    """Membership test for the (k, l, eta) constraint inside arbitrary vertex subsets."""

    def __init__(self, graph: InteractionGraph, k: int, l: int, guard: EnumGuard):
        self.verts = [int(v) for v in np.flatnonzero(graph.present)]
        guard.check_vertices(len(self.verts))
        self.pos = {v: i for i, v in enumerate(self.verts)}
        self.k, self.l, self.guard = k, l, guard
        self.inc = {v: [] for v in self.verts}
        self.outg = {v: [] for v in self.verts}
        for a, b, p in _edge_list(graph):
            self.outg[a].append((self.pos[b], p))
            self.inc[b].append((self.pos[a], p))
        self._cache: dict[tuple, float] = {}

    def _tail(self, v, side, mask):
        key = (v, side, mask)
        hit = self._cache.get(key)
        if hit is None:
            nbrs = self.inc[v] if side == "in" else self.outg[v]
            probs = [p for j, p in nbrs if mask >> j & 1]
            hit = tail_by_enumeration(probs, self.k if side == "in" else self.l, self.guard)
            self._cache[key] = hit
        return hit

    def product(self, v, mask):
        return self._tail(v, "in", mask) * self._tail(v, "out", mask)

    def valid(self, mask, eta) -> bool:
        return all(self.product(v, mask) >= eta for i, v in enumerate(self.verts) if mask >> i & 1)

    def members(self, mask) -> list[int]:
        return [v for i, v in enumerate(self.verts) if mask >> i & 1]

    def connected(self, mask) -> bool:
        members = self.members(mask)
        if not members:
            return False
        seen = {members[0]}
        todo = [members[0]]
        while todo:
            v = todo.pop()
            for j, _ in self.inc[v] + self.outg[v]:
                w = self.verts[j]
                if mask >> j & 1 and w not in seen:
                    seen.add(w)
                    todo.append(w)
        return len(seen) == len(members)

    def split(self, mask) -> list[list[int]]:
        parts = []
        rest = mask
        while rest:
            i = (rest & -rest).bit_length() - 1
            comp = 1 << i
            frontier = [i]
            while frontier:
                j = frontier.pop()
                v = self.verts[j]
                for t, _ in self.inc[v] + self.outg[v]:
                    if rest >> t & 1 and not comp >> t & 1:
                        comp |= 1 << t
                        frontier.append(t)
            parts.append(self.members(comp))
            rest &= ~comp
        return sorted(parts)


def brute_force_cores(graph: InteractionGraph, k: int, l: int, eta: float,
                      guard: EnumGuard = DEFAULT_GUARD) -> list[list[int]]:
    """Maximal (k, l, eta)-cores by checking every vertex subset.

    Valid subsets are closed under union, so the maximal ones merge into a
    single vertex set, which is then split into weak components.
    """
    chk = _SubsetChecker(graph, k, l, guard)
    best = 0
    for mask in range(1, 1 << len(chk.verts)):
        if mask & ~best and chk.valid(mask, eta):
            best |= mask
    return chk.split(best)


def _closure_sizes(nv: int, edges: list[tuple[int, int, float]], alpha: float,
                   guard: EnumGuard) -> np.ndarray:
    """Expected forward-reachable count per local vertex, via boolean matrix closure per world."""
    m = len(edges)
    guard.check_edges(m)
    if nv == 0:
        return np.zeros(0)
    w = _worlds(m)
    pp = np.array([alpha * p for _, _, p in edges])
    weight = np.prod(np.where(w, pp, 1.0 - pp), axis=1) if m else np.ones(1)
    reach = np.broadcast_to(np.eye(nv, dtype=np.float32), (len(w), nv, nv)).copy()
    for e, (a, b, _) in enumerate(edges):
        reach[w[:, e], a, b] = 1.0
    for _ in range(max(1, int(np.ceil(np.log2(max(nv, 2)))))):
        reach = np.minimum(reach @ reach, 1.0)
    return weight @ reach.sum(axis=2)


def exact_spread(graph: InteractionGraph, alpha: float = 1.0, guard: EnumGuard = DEFAULT_GUARD) -> np.ndarray:
    """Exact single-seed influence of every vertex id (1 for ids outside the graph)."""
    verts = [int(v) for v in np.flatnonzero(graph.present)]
    pos = {v: i for i, v in enumerate(verts)}
    edges = [(pos[a], pos[b], p) for a, b, p in _edge_list(graph)]
    out = np.ones(graph.n)
    out[verts] = _closure_sizes(len(verts), edges, alpha, guard)
    return out


@dataclass(frozen=True)
class BruteForceResult:
    value: float
    optima: tuple[tuple[int, ...], ...]
    scores: np.ndarray

    @property
    def found(self) -> bool:
        return bool(self.optima)


def brute_force_tamics(graph: InteractionGraph, k: int, l: int, eta: float, alpha: float = 1.0,
                       guard: EnumGuard = DEFAULT_GUARD, scores=None) -> BruteForceResult:
    """Best influential community over all connected subsets meeting the constraint.

    ``optima`` lists every optimal community that is inclusion-maximal among
    the optimal ones (any of them is a correct answer).  ``scores`` defaults
    to the exact single-seed influence.
    """
    chk = _SubsetChecker(graph, k, l, guard)
    if scores is None:
        scores = exact_spread(graph, alpha, guard)
    scores = np.asarray(scores, dtype=np.float64)
    cands = []
    for mask in range(1, 1 << len(chk.verts)):
        if chk.connected(mask) and chk.valid(mask, eta):
            cands.append((min(scores[v] for v in chk.members(mask)), mask))
    if not cands:
        return BruteForceResult(float("nan"), (), scores)
    value = max(c for c, _ in cands)
    top = [mask for c, mask in cands if c == value]
    maximal = [a for a in top if not any(b != a and a & b == a for b in top)]
    optima = tuple(sorted(tuple(chk.members(a)) for a in maximal))
    return BruteForceResult(float(value), optima, scores)


def is_influential_community(graph: InteractionGraph, vertices, k: int, l: int, eta: float, scores,
                             guard: EnumGuard = DEFAULT_GUARD) -> bool:
    """Check connection, cohesiveness and maximality (against all connected supersets)."""
    chk = _SubsetChecker(graph, k, l, guard)
    mask = 0
    for v in vertices:
        mask |= 1 << chk.pos[int(v)]
    if not (chk.connected(mask) and chk.valid(mask, eta)):
        return False
    own = min(scores[v] for v in chk.members(mask))
    full = (1 << len(chk.verts)) - 1
    free = [i for i in range(len(chk.verts)) if not mask >> i & 1]
    for r in range(1, len(free) + 1):
        for extra in itertools.combinations(free, r):
            sup = mask
            for i in extra:
                sup |= 1 << i
            sup &= full
            if chk.connected(sup) and chk.valid(sup, eta) and min(scores[v] for v in chk.members(sup)) >= own:
                return False
    return True


def deterministic_dcore(graph: InteractionGraph, k: int, l: int) -> list[int]:
    """Vertices of the (k, l)-D-core of the skeleton, by plain repeated filtering."""
    alive = set(int(v) for v in np.flatnonzero(graph.present))
    edges = [(a, b) for a, b, _ in _edge_list(graph)]
    changed = True
    while changed:
        changed = False
        indeg = dict.fromkeys(alive, 0)
        outdeg = dict.fromkeys(alive, 0)
        for a, b in edges:
            if a in alive and b in alive:
                outdeg[a] += 1
                indeg[b] += 1
        for v in list(alive):
            if indeg[v] < k or outdeg[v] < l:
                alive.discard(v)
                changed = True
    return sorted(alive)


# ---------------------------------------------------------------------------
# generators


def gen_synthetic(n: int, avg_degree: float, z: int, seed: int) -> SocialNetwork:
    """Directed random network with Dirichlet(1) topic weights scaled by a Uniform(0, 1) magnitude.

    The edge count is drawn as Binomial(n(n-1), avg_degree/(n-1)) and that
    many distinct ordered pairs are placed uniformly; edges come out sorted.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if z < 1:
        raise ValueError("z must be at least 1")
    pairs = n * (n - 1)
    if not 0 <= avg_degree <= n - 1:
        raise ValueError(f"average degree must lie in [0, {n - 1}] for n={n}")
    rng = np.random.default_rng(seed)
    m = int(rng.binomial(pairs, avg_degree / (n - 1)))
    if m > pairs // 2:
        codes = np.sort(rng.choice(pairs, size=m, replace=False))
    else:
        codes = np.zeros(0, dtype=np.int64)
        while len(codes) < m:
            extra = rng.integers(0, pairs, size=int((m - len(codes)) * 1.05) + 16)
            codes = np.unique(np.concatenate([codes, extra]))
        codes = np.sort(rng.permutation(codes)[:m])
    src = codes // (n - 1)
    off = codes % (n - 1)
    dst = off + (off >= src)
    weights = rng.dirichlet(np.ones(z), size=m) * rng.uniform(0.0, 1.0, size=(m, 1))
    return SocialNetwork(n, z, src, dst, weights)


def random_uncertain_graph(rng: np.random.Generator, max_vertices: int, max_edges: int, *,
                           density: float | None = None, certain_share: float = 0.0) -> InteractionGraph:
    """Small random uncertain digraph on ids ``0..n-1`` (all present)."""
    n = int(rng.integers(1, max_vertices + 1))
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
    limit = min(max_edges, len(pairs))
    if density is None:
        m = int(rng.integers(0, limit + 1))
    else:
        m = min(limit, int(rng.binomial(len(pairs), density)))
    chosen = rng.choice(len(pairs), size=m, replace=False) if m else np.zeros(0, dtype=np.int64)
    src = np.array([pairs[i][0] for i in chosen], dtype=np.int64)
    dst = np.array([pairs[i][1] for i in chosen], dtype=np.int64)
    p = rng.uniform(0.05, 1.0, size=m)
    if certain_share:
        p[rng.random(m) < certain_share] = 1.0
    return InteractionGraph(n, src, dst, p, vertices=np.ones(n, dtype=bool))


def random_network(rng: np.random.Generator, n: int, m: int, z: int, *, sparse_weights: bool = True) -> SocialNetwork:
    """Small random social network; with ``sparse_weights`` some topic entries are zero."""
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
    m = min(m, len(pairs))
    chosen = rng.choice(len(pairs), size=m, replace=False) if m else np.zeros(0, dtype=np.int64)
    src = np.array([pairs[i][0] for i in chosen], dtype=np.int64)
    dst = np.array([pairs[i][1] for i in chosen], dtype=np.int64)
    w = rng.uniform(0.0, 1.0, size=(m, z))
    if sparse_weights:
        w[rng.random((m, z)) < 0.3] = 0.0
    return SocialNetwork(n, z, src, dst, w)


def running_example() -> SocialNetwork:
    """Six-vertex, two-topic network used throughout the docs and tests (v_i has id i-1)."""
    text = resources.files("tamics").joinpath("data/running_example.txt").read_text()
    return parse_social_network(text)


__all__ = [
    "EnumGuard", "GuardExceeded", "BruteForceResult", "tail_by_enumeration", "enum_degree_prob",
    "brute_force_cores", "exact_spread", "brute_force_tamics", "is_influential_community",
    "deterministic_dcore", "gen_synthetic", "random_uncertain_graph", "random_network",
    "running_example", "load_social_network",
]


# ---------------------------------------------------------------------------
# oracle suite

FAULTS = ("dp",)


@dataclass(frozen=True)
class CheckResult:
    name: str
    cases: int
    failures: int
    allowed: int = 0
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.failures <= self.allowed


def _dp_under_test(fault: str | None):
    from .uncertain_core import degree_dp

    if fault != "dp":
        return degree_dp

    def broken(graph, v, k, l):
        # off-by-one truncation: tails of k+1 instead of k
        return degree_dp(graph, v, k + 1, l)
    return broken


def _check_dp(rng, cases, fault):
    from .uncertain_core import remove_edge_update

    dp_fn = _dp_under_test(fault)
    bad, note = 0, ""
    for _ in range(cases):
        g = random_uncertain_graph(rng, 8, 14, certain_share=0.2)
        k, l = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        for v in np.flatnonzero(g.present):
            dp = dp_fn(g, int(v), k, l)
            want_in = enum_degree_prob(g, int(v), k, "in")
            want_out = enum_degree_prob(g, int(v), l, "out")
            if abs(dp.in_tail - want_in) > 1e-9 or abs(dp.out_tail - want_out) > 1e-9:
                bad += 1
                note = note or f"vertex {v}: in {dp.in_tail:.12g} vs {want_in:.12g}"
                break
            if fault is None and dp.in_edges:
                u = dp.in_edges[0][0]
                upd = remove_edge_update(dp, (u, int(v)))
                probs = [p for a, p in dp.in_edges if a != u]
                if abs(upd.in_tail - tail_by_enumeration(probs, k)) > 1e-9:
                    bad += 1
                    note = note or f"removal update at vertex {v}"
                    break
    return bad, note


def _check_cores(rng, cases, fault):
    from .uncertain_core import compute_cores

    bad, note = 0, ""
    for _ in range(cases):
        g = random_uncertain_graph(rng, 8, 20)
        k, l = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        eta = float(rng.choice([0.1, 0.3, 0.6, 0.9]))
        got = [c.tolist() for c in compute_cores(g, k, l, eta)]
        want = brute_force_cores(g, k, l, eta)
        if got != want:
            bad += 1
            note = note or f"k={k} l={l} eta={eta}: {got} vs {want}"
    return bad, note


def _check_thresholds(rng, cases, fault):
    from .uncertain_core import core_vertices, eta_thresholds

    bad, note = 0, ""
    for _ in range(cases):
        g = random_uncertain_graph(rng, 10, 30)
        k, l = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        thr = eta_thresholds(g, k, l)
        for eta in rng.uniform(0.01, 1.0, size=4):
            got = core_vertices(g, k, l, float(eta)).tolist()
            want = np.flatnonzero(g.present & (thr >= eta)).tolist()
            if got != want:
                bad += 1
                note = note or f"eta={eta:.4f}: {got} vs {want}"
                break
    return bad, note


def _check_exact_influence(rng, cases, fault):
    from .influence import exact_influence

    bad, note = 0, ""
    for _ in range(cases):
        g = random_uncertain_graph(rng, 7, 12)
        a, b = exact_influence(g), exact_spread(g)
        if not np.allclose(a, b, rtol=0, atol=1e-9):
            bad += 1
            note = note or f"max gap {np.max(np.abs(a - b)):.3g}"
    return bad, note


def _check_ris(rng, cases, fault):
    from .influence import SampleParams, estimate_influence

    bad = 0
    params = SampleParams(eps=0.1, delta=0.1)
    for i in range(cases):
        g = random_uncertain_graph(rng, 8, 14)
        p = SampleParams(params.eps, params.delta, params.alpha, int(rng.integers(2**32)))
        est = estimate_influence(g, p, threads=1).scores
        if np.max(np.abs(est - exact_spread(g))) > params.eps * g.n:
            bad += 1
    return bad, f"{bad} of {cases} outside eps*n"


def _check_search(rng, cases, fault):
    from .query import search_communities
    from .uncertain_core import PeelState

    bad, note = 0, ""
    for _ in range(cases):
        g = random_uncertain_graph(rng, 8, 18)
        k, l = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        eta = float(rng.choice([0.1, 0.3, 0.6]))
        scores = exact_spread(g)
        state = PeelState(g, k, l)
        state.peel(eta)
        cores = state.components()
        got = search_communities(state, cores, scores, eta) if cores else None
        want = brute_force_tamics(g, k, l, eta, scores=scores)
        ok = (got is None) == (not want.found)
        if ok and got is not None:
            ok = abs(got.influence - want.value) <= 1e-9 and got.vertices in want.optima
        if not ok:
            bad += 1
            note = note or f"k={k} l={l} eta={eta}: {got and got.vertices} vs {want.optima}"
    return bad, note


def _check_index(rng, cases, fault):
    from .graph_model import build_supergraph, extract_interaction_graph
    from .index.tuc import build_tuc_list, candidate_vertices
    from .uncertain_core import core_vertices

    bad, note = 0, ""
    for _ in range(cases):
        net = random_network(rng, int(rng.integers(3, 10)), int(rng.integers(3, 30)), int(rng.integers(1, 4)))
        tuc = build_tuc_list(build_supergraph(net))
        q = rng.dirichlet(np.ones(net.z))
        q /= q.sum()
        g = extract_interaction_graph(net, q, check=False)
        k, l = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        eta = float(rng.uniform(0.01, 1.0))
        core = core_vertices(g, k, l, eta)
        cand = candidate_vertices(tuc, k, l, eta)
        if not np.isin(core, cand).all():
            bad += 1
            note = note or f"k={k} l={l} eta={eta:.3f}: core {core.tolist()} not within {cand.tolist()}"
    return bad, note


ORACLE_CHECKS = (
    ("degree-dp-vs-enumeration", _check_dp, 1.0),
    ("cores-vs-brute-force", _check_cores, 1.0),
    ("threshold-membership", _check_thresholds, 1.0),
    ("exact-influence-agreement", _check_exact_influence, 0.5),
    ("ris-error-bound", _check_ris, 1.0),
    ("search-optimality", _check_search, 1.0),
    ("index-candidate-superset", _check_index, 1.0),
)


def run_oracle_suite(cases: int = 50, seed: int = 0, fault: str | None = None, only=None):
    """Cross-check the main modules against the oracles above; yields one :class:`CheckResult` per property.

    ``fault`` injects a known bug (``"dp"``) to exercise the harness itself.
    """
    if cases < 1:
        raise ValueError("cases must be at least 1")
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; expected one of {FAULTS}")
    for i, (name, fn, share) in enumerate(ORACLE_CHECKS):
        if only is not None and name not in only:
            continue
        rng = np.random.default_rng([seed, i])
        n = max(1, int(cases * share))
        bad, note = fn(rng, n, fault)
        allowed = int(0.1 * n) if name == "ris-error-bound" else 0
        yield CheckResult(name, n, bad, allowed, note)
