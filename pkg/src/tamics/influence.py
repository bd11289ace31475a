"""Influence under the topic-aware independent cascade model.

Estimation follows reverse influence sampling: sample ``theta`` live-edge
subgraphs (edge ``e`` kept with probability ``alpha * p(e)``) and credit each
vertex with the number of reverse-reachable sets it belongs to.  A vertex
``u`` is in ``RR(v, G')`` exactly when ``u`` reaches ``v`` in ``G'``, so the
per-subgraph credit of ``u`` is the size of its forward-reachable set, which
is what the kernel counts.

Random numbers come from SplitMix64 used in counter mode: the uniform for
edge slot ``j`` of subgraph ``s`` is ``mix(key_s + (j + 1) * GOLDEN)`` with
``key_s = mix(mix(seed + GOLDEN) + (s + 1) * GOLDEN)``, mapped to ``[0, 1)``
by its top 53 bits.  Edge slots are positions in the graph's ``(src, dst)``
sorted edge arrays, so tables depend only on the graph, the seed and
``theta``, never on the number of worker threads.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from numba import njit, prange

from .graph_model import InteractionGraph

# numba probes an outdated TBB on some systems and warns before falling back
warnings.filterwarnings("ignore", message="The TBB threading layer", category=numba.NumbaWarning)

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0
EXACT_MAX_EDGES = 20


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _stream_key(seed, s):
    return _mix(_mix(seed + GOLDEN) + (np.uint64(s) + np.uint64(1)) * GOLDEN)


@njit(cache=True)
def _uniform(key, j):
    return float(_mix(key + (np.uint64(j) + np.uint64(1)) * GOLDEN) >> np.uint64(11)) * _INV53


def derive_seed(seed: int, index: int) -> int:
    """Deterministic child seed for job ``index`` (used for per-vector tables)."""
    return int(_stream_key(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), index))


# ---------------------------------------------------------------------------
# parameters and tables


@dataclass(frozen=True)
class SampleParams:
    eps: float = 0.1
    delta: float = 0.1
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def theta(self, n: int) -> int:
        """Number of sampled subgraphs: ``ceil(ln(2n / delta) / (2 eps^2))``."""
        n = max(int(n), 1)
        return max(1, math.ceil(math.log(2 * n / self.delta) / (2 * self.eps ** 2)))


@dataclass(frozen=True, eq=False)
class InfluenceTable:
    """Estimated influence of every vertex id w.r.t. one topic vector."""

    scores: np.ndarray
    theta: int
    topic: tuple[float, ...] | None = None
    seed: int = field(default=0)

    def __getitem__(self, v):
        return self.scores[v]

    def __len__(self):
        return len(self.scores)


def community_influence(table: InfluenceTable | np.ndarray, vertices) -> float:
    """Influence of a community: the minimum member score."""
    vs = np.asarray(vertices, dtype=np.int64)
    if vs.size == 0:
        raise ValueError("community must be nonempty")
    scores = table.scores if isinstance(table, InfluenceTable) else np.asarray(table)
    return float(scores[vs].min())


# ---------------------------------------------------------------------------
# live subgraphs


@njit(cache=True)
def _live_mask(thr, key0, s):
    key = _stream_key(key0, s)
    out = np.empty(len(thr), dtype=np.bool_)
    for e in range(len(thr)):
        out[e] = (_mix(key + (np.uint64(e) + np.uint64(1)) * GOLDEN) >> np.uint64(11)) < thr[e]
    return out


def sample_live_subgraph(graph: InteractionGraph, alpha: float, seed: int, index: int = 0) -> InteractionGraph:
    """Live-edge subgraph number ``index`` of the stream ``seed``.

    Each edge is kept independently with probability ``alpha * p(e)``; the
    result is deterministic (all kept edges have probability 1).  These are
    exactly the subgraphs :func:`estimate_influence` samples.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    keep = _live_mask(live_thresholds(alpha * graph.p), np.uint64(seed), index)
    return InteractionGraph(graph.n, graph.src[keep], graph.dst[keep], np.ones(int(keep.sum())),
                            vertices=graph.present, eid=graph.eid[keep], source=graph.source)


# ---------------------------------------------------------------------------
# reverse influence sampling


@njit(cache=True)
def _live_slots(thr, key, live):
    # branch-free compaction of the edge slots whose coin comes up live
    c = 0
    for e in range(len(thr)):
        r = _mix(key + (np.uint64(e) + np.uint64(1)) * GOLDEN) >> np.uint64(11)
        live[c] = e
        c += r < thr[e]
    return c


@njit(cache=True)
def _sample_counts(src, dst, thr, key0, lo, hi, row, live, ldst, node, rstart, stack, sources):
    # node[v, 0]: visit tick; node[v, 1]: (sample tag << 32) | index of v's live run
    tick = np.int64(0)
    for s in range(lo, hi):
        key = _stream_key(key0, s)
        c = _live_slots(thr, key, live)
        tag = np.int64(s + 1)
        ns = 0
        prev = -1
        for i in range(c):
            e = live[i]
            u = src[e]
            ldst[i] = dst[e]
            if u != prev:
                node[u, 1] = (tag << 32) | ns
                rstart[ns] = i
                sources[ns] = u
                ns += 1
                prev = u
        rstart[ns] = c
        for a in range(ns):
            u = sources[a]
            tick += 1
            node[u, 0] = tick
            extra = 0
            top = 0
            lo_j = rstart[a]
            hi_j = rstart[a + 1]
            while True:
                for j in range(lo_j, hi_j):
                    w = ldst[j]
                    if node[w, 0] != tick:
                        node[w, 0] = tick
                        extra += 1
                        info = node[w, 1]
                        if (info >> 32) == tag:
                            stack[top] = info & 0xFFFFFFFF
                            top += 1
                if top == 0:
                    break
                top -= 1
                b = stack[top]
                lo_j = rstart[b]
                hi_j = rstart[b + 1]
            row[u] += extra


@njit(parallel=True, cache=True)
def _ris_counts(src, dst, thr, n, key0, first, count, nchunks):
    m = len(src)
    counts = np.zeros((nchunks, n), dtype=np.int64)
    for c in prange(nchunks):
        lo = first + (count * c) // nchunks
        hi = first + (count * (c + 1)) // nchunks
        live = np.empty(max(m, 1), dtype=np.int32)
        ldst = np.empty(max(m, 1), dtype=np.int32)
        node = np.zeros((max(n, 1), 2), dtype=np.int64)
        rstart = np.zeros(n + 1, dtype=np.int32)
        stack = np.empty(max(n, 1), dtype=np.int64)
        sources = np.empty(max(n, 1), dtype=np.int32)
        _sample_counts(src, dst, thr, key0, lo, hi, counts[c], live, ldst, node, rstart, stack, sources)
    return counts.sum(axis=0) + count


def live_thresholds(pp: np.ndarray) -> np.ndarray:
    """Integer form of the retention test: ``u < pp`` iff ``top53 < ceil(pp * 2**53)``."""
    return np.ceil(np.asarray(pp, dtype=np.float64) * 2.0 ** 53).astype(np.uint64)


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit value, else ``TAMICS_THREADS``, else hardware parallelism."""
    if threads is None:
        env = os.environ.get("TAMICS_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("thread count must be positive")
    return threads


def _apply_threads(threads: int | None) -> int:
    t = min(resolve_threads(threads), numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(t)
    return t


def reach_counts(graph: InteractionGraph, alpha: float, seed: int, first: int, count: int,
                 threads: int | None = None) -> np.ndarray:
    """Summed forward-reachable-set sizes over subgraphs ``first .. first+count-1``."""
    nchunks = max(1, min(_apply_threads(threads), count))
    if graph.n >= 2**31 or graph.m >= 2**31:
        raise ValueError("graph too large for 32-bit vertex and edge slots")
    thr = live_thresholds(alpha * graph.p)
    return _ris_counts(graph.src.astype(np.int32), graph.dst.astype(np.int32), thr, graph.n,
                       np.uint64(seed), first, count, nchunks)


def estimate_influence(graph: InteractionGraph, params: SampleParams, *, theta: int | None = None,
                       threads: int | None = None) -> InfluenceTable:
    """RIS estimate of every vertex's influence.

    ``theta`` defaults to ``params.theta(graph.n)``, which gives
    ``|estimate - truth| <= eps * n`` for all vertices with probability at
    least ``1 - delta``.
    """
    theta = params.theta(graph.n) if theta is None else int(theta)
    if theta < 1:
        raise ValueError("theta must be at least 1")
    counts = reach_counts(graph, params.alpha, params.seed, 0, theta, threads)
    scores = counts / theta
    return InfluenceTable(scores, theta, graph.source if isinstance(graph.source, tuple) else None, params.seed)


# ---------------------------------------------------------------------------
# oracles


def exact_influence(graph: InteractionGraph, alpha: float = 1.0, *, max_edges: int = EXACT_MAX_EDGES) -> np.ndarray:
    """Expected cascade size from each single seed, by enumerating all live-edge worlds.

    Refuses graphs with more than ``max_edges`` edges (``2**m`` worlds).
    """
    if graph.m > max_edges:
        raise ValueError(f"exact influence enumerates 2^m worlds; m={graph.m} exceeds the limit of {max_edges}")
    verts = graph.vertices()
    if len(verts) > 63:
        raise ValueError("exact influence supports at most 63 vertices")
    local = {int(v): i for i, v in enumerate(verts)}
    a = np.array([local[int(s)] for s in graph.src], dtype=np.int64)
    b = np.array([local[int(d)] for d in graph.dst], dtype=np.int64)
    pp = alpha * graph.p
    m = graph.m
    worlds = np.arange(1 << m, dtype=np.int64)
    prob = np.ones(len(worlds))
    live = []
    for e in range(m):
        bit = ((worlds >> e) & 1).astype(bool)
        live.append(bit)
        prob *= np.where(bit, pp[e], 1.0 - pp[e])
    nv = len(verts)
    reach = np.empty((nv, len(worlds)), dtype=np.int64)
    for i in range(nv):
        reach[i] = 1 << i
    changed = True
    while changed:
        changed = False
        for e in range(m):
            upd = reach[a[e]] | np.where(live[e], reach[b[e]], 0)
            if np.any(upd != reach[a[e]]):
                reach[a[e]] = upd
                changed = True
    out = np.ones(graph.n)
    sizes = np.bitwise_count(reach.astype(np.uint64)).astype(np.float64)
    out[verts] = sizes @ prob
    return out


@njit(cache=True)
def _cascade_rounds(out_ptr, out_dst, pp, seeds, rounds, state):
    n = len(out_ptr) - 1
    stamp = np.zeros(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    total = 0
    for r in range(1, rounds + 1):
        head = 0
        tail = 0
        for s in seeds:
            if stamp[s] != r:
                stamp[s] = r
                queue[tail] = s
                tail += 1
        while head < tail:
            u = queue[head]
            head += 1
            for e in range(out_ptr[u], out_ptr[u + 1]):
                w = out_dst[e]
                if stamp[w] == r:
                    continue
                state += GOLDEN
                if float(_mix(state) >> np.uint64(11)) * _INV53 < pp[e]:
                    stamp[w] = r
                    queue[tail] = w
                    tail += 1
        total += tail
    return total


def simulate_ic(graph: InteractionGraph, seeds, rounds: int, alpha: float = 1.0,
                rng: np.random.Generator | int | None = None) -> float:
    """Mean final number of active vertices over ``rounds`` forward cascades."""
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    seeds = np.unique(np.asarray(list(seeds), dtype=np.int64))
    if len(seeds) and not graph.present[seeds].all():
        raise ValueError("seeds must be vertices of the graph")
    rng = np.random.default_rng(rng)
    state = np.uint64(rng.integers(0, 2**63, dtype=np.int64))
    pp = alpha * graph.p
    total = _cascade_rounds(graph.out_ptr, graph.dst, pp, seeds, int(rounds), state)
    return total / rounds
