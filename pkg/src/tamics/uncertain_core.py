"""(k, l, eta)-cores of uncertain directed graphs.

Every vertex keeps the truncated distribution of its in- and out-degree in
the current (peeled) subgraph.  Edges with probability exactly 1 are kept
out of the distribution as a *certain* count, so dropping one is the exact
shift ``Pr[d(-e) = i] = Pr[d = i + 1]``.  For the remaining edges only the
first ``k`` (resp. ``l``) states are stored, which is all that
``Pr[d >= k] = 1 - sum_{i<k} Pr[d = i]`` needs.

Removing an edge with ``p <= 0.5`` uses the division update; above that the
update amplifies rounding error by ``p / (1 - p)`` per state, so the vertex
is recomputed from its surviving neighbours instead.  Products within
``BOUNDARY_TOL`` of the threshold are recomputed from scratch before being
compared, which makes core membership a deterministic function of the
surviving vertex set regardless of peeling history.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from numba import njit

from .graph_model import InteractionGraph

RECOMPUTE_ABOVE = 0.5
BOUNDARY_TOL = 1e-9


# ---------------------------------------------------------------------------
# per-vertex degree distributions (numba kernels)


@njit(cache=True)
def _fresh(ptr, nbr, prob, alive, v, trunc, dist, row):
    """Fill ``dist[row, :trunc]`` from scratch; return the certain-edge count."""
    for i in range(trunc):
        dist[row, i] = 0.0
    if trunc > 0:
        dist[row, 0] = 1.0
    cert = 0
    for e in range(ptr[v], ptr[v + 1]):
        if not alive[nbr[e]]:
            continue
        p = prob[e]
        if p >= 1.0:
            cert += 1
            continue
        q = 1.0 - p
        for i in range(trunc - 1, 0, -1):
            dist[row, i] = dist[row, i] * q + dist[row, i - 1] * p
        if trunc > 0:
            dist[row, 0] *= q
    return cert


@njit(cache=True)
def _tail(dist, row, cert, trunc):
    """``Pr[d >= trunc]`` given the uncertain pmf prefix and certain count."""
    need = trunc - cert
    if need <= 0:
        return 1.0
    s = 0.0
    for i in range(need):
        s += dist[row, i]
    t = 1.0 - s
    if t < 0.0:
        return 0.0
    if t > 1.0:
        return 1.0
    return t


@njit(cache=True)
def _remove_uncertain(dist, row, trunc, p):
    """Division update for dropping one uncertain edge of probability ``p``."""
    q = 1.0 - p
    prev = 0.0
    for i in range(trunc):
        val = (dist[row, i] - p * prev) / q
        if val < 0.0:
            val = 0.0
        elif val > 1.0:
            val = 1.0
        dist[row, i] = val
        prev = val


@njit(cache=True)
def _drop_edge(ptr, nbr, prob, alive, u, p, trunc, dist, cert):
    """Update ``u``'s distribution for losing an incident edge (already dead in ``alive``)."""
    if p >= 1.0:
        cert[u] -= 1
    elif p > RECOMPUTE_ABOVE:
        cert[u] = _fresh(ptr, nbr, prob, alive, u, trunc, dist, u)
    else:
        _remove_uncertain(dist, u, trunc, p)


@njit(cache=True)
def _product(v, k, l, in_dist, in_cert, out_dist, out_cert):
    return _tail(in_dist, v, in_cert[v], k) * _tail(out_dist, v, out_cert[v], l)


@njit(cache=True)
def _fresh_product(v, k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                   in_dist, in_cert, out_dist, out_cert):
    in_cert[v] = _fresh(in_ptr, in_src, in_p, alive, v, k, in_dist, v)
    out_cert[v] = _fresh(out_ptr, out_dst, out_p, alive, v, l, out_dist, v)
    return _product(v, k, l, in_dist, in_cert, out_dist, out_cert)


@njit(cache=True)
def _checked_product(v, k, l, eta, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                     in_dist, in_cert, out_dist, out_cert):
    prod = _product(v, k, l, in_dist, in_cert, out_dist, out_cert)
    if abs(prod - eta) <= BOUNDARY_TOL:
        prod = _fresh_product(v, k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                              in_dist, in_cert, out_dist, out_cert)
    return prod


@njit(cache=True)
def _init_state(k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                in_dist, in_cert, out_dist, out_cert):
    for v in range(len(alive)):
        if alive[v]:
            in_cert[v] = _fresh(in_ptr, in_src, in_p, alive, v, k, in_dist, v)
            out_cert[v] = _fresh(out_ptr, out_dst, out_p, alive, v, l, out_dist, v)


@njit(cache=True)
def _remove_vertex(v, k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                   in_dist, in_cert, out_dist, out_cert):
    """Delete ``v`` and its edges, updating neighbours' distributions."""
    alive[v] = 0
    for e in range(out_ptr[v], out_ptr[v + 1]):
        u = out_dst[e]
        if alive[u]:
            _drop_edge(in_ptr, in_src, in_p, alive, u, out_p[e], k, in_dist, in_cert)
    for e in range(in_ptr[v], in_ptr[v + 1]):
        u = in_src[e]
        if alive[u]:
            _drop_edge(out_ptr, out_dst, out_p, alive, u, in_p[e], l, out_dist, out_cert)


@njit(cache=True)
def _cascade(seeds, eta, k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
             in_dist, in_cert, out_dist, out_cert, queued, queue, removed):
    """Remove ``seeds`` (those still alive) and, FIFO, every vertex pushed below ``eta``.

    Writes the removed vertices to ``removed`` in removal order; returns their count.
    """
    head = 0
    tail = 0
    for s in seeds:
        if alive[s] and not queued[s]:
            queued[s] = 1
            queue[tail] = s
            tail += 1
    nrem = 0
    while head < tail:
        v = queue[head]
        head += 1
        queued[v] = 0
        if not alive[v]:
            continue
        _remove_vertex(v, k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                       in_dist, in_cert, out_dist, out_cert)
        removed[nrem] = v
        nrem += 1
        for e in range(out_ptr[v], out_ptr[v + 1]):
            u = out_dst[e]
            if alive[u] and not queued[u]:
                if _checked_product(u, k, l, eta, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                                    in_dist, in_cert, out_dist, out_cert) < eta:
                    queued[u] = 1
                    queue[tail] = u
                    tail += 1
        for e in range(in_ptr[v], in_ptr[v + 1]):
            u = in_src[e]
            if alive[u] and not queued[u]:
                if _checked_product(u, k, l, eta, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                                    in_dist, in_cert, out_dist, out_cert) < eta:
                    queued[u] = 1
                    queue[tail] = u
                    tail += 1
    return nrem


@njit(cache=True)
def _violators(candidates, eta, k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
               in_dist, in_cert, out_dist, out_cert):
    out = np.empty(len(candidates), dtype=np.int64)
    c = 0
    for v in candidates:
        if alive[v] and _checked_product(v, k, l, eta, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                                         in_dist, in_cert, out_dist, out_cert) < eta:
            out[c] = v
            c += 1
    return out[:c]


@njit(cache=True)
def _weak_components(seeds, alive, out_ptr, out_dst, in_ptr, in_src, label, order, ptr):
    """Label the weakly connected components reached from ``seeds`` (ascending).

    Component ``c`` is written to ``order[ptr[c]:ptr[c+1]]``, sorted
    ascending, components ordered by smallest member.  Returns the count.
    """
    ptr[0] = 0
    size = 0
    ncomp = 0
    for s in seeds:
        if not alive[s] or label[s] >= 0:
            continue
        start = size
        label[s] = ncomp
        order[size] = s
        size += 1
        head = start
        while head < size:
            v = order[head]
            head += 1
            for e in range(out_ptr[v], out_ptr[v + 1]):
                u = out_dst[e]
                if alive[u] and label[u] < 0:
                    label[u] = ncomp
                    order[size] = u
                    size += 1
            for e in range(in_ptr[v], in_ptr[v + 1]):
                u = in_src[e]
                if alive[u] and label[u] < 0:
                    label[u] = ncomp
                    order[size] = u
                    size += 1
        order[start:size] = np.sort(order[start:size])
        ncomp += 1
        ptr[ncomp] = size
    # reset labels so the scratch array can be reused
    for i in range(size):
        label[order[i]] = -1
    return ncomp


# ---------------------------------------------------------------------------
# peeling state


class PeelState:
    """Mutable peeling state over an interaction graph for fixed ``k, l``.

    The state is shared by core computation and by the community search of
    the query module: all communities in play are disjoint weakly connected
    components of the surviving vertex set, so one set of distributions
    serves all of them.
    """

    def __init__(self, graph: InteractionGraph, k: int, l: int, vertices=None):
        if k < 0 or l < 0:
            raise ValueError("k and l must be nonnegative")
        self.graph = graph
        self.k = int(k)
        self.l = int(l)
        n = graph.n
        alive = graph.present.copy()
        if vertices is not None:
            mask = np.zeros(n, dtype=bool)
            mask[np.asarray(vertices, dtype=np.int64)] = True
            alive &= mask
        self.alive = alive.astype(np.uint8)
        self.in_dist = np.zeros((n, max(self.k, 1)))
        self.out_dist = np.zeros((n, max(self.l, 1)))
        self.in_cert = np.zeros(n, dtype=np.int64)
        self.out_cert = np.zeros(n, dtype=np.int64)
        self._queued = np.zeros(n, dtype=np.uint8)
        self._label = np.full(n, -1, dtype=np.int64)
        self._queue = np.empty(n, dtype=np.int64)
        self._removed = np.empty(n, dtype=np.int64)
        self._order = np.empty(n, dtype=np.int64)
        self._ptr = np.empty(n + 1, dtype=np.int64)
        _init_state(self.k, self.l, *self._csr(), *self._arrays())

    def _csr(self):
        g = self.graph
        return g.in_ptr, g.in_src, g.in_p, g.out_ptr, g.dst, g.p

    def _arrays(self):
        return self.alive, self.in_dist, self.in_cert, self.out_dist, self.out_cert

    def alive_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.alive)

    def in_tail(self, v: int) -> float:
        return float(_tail(self.in_dist, v, self.in_cert[v], self.k))

    def out_tail(self, v: int) -> float:
        return float(_tail(self.out_dist, v, self.out_cert[v], self.l))

    def product(self, v: int) -> float:
        return float(_product(v, self.k, self.l, self.in_dist, self.in_cert, self.out_dist, self.out_cert))

    def fresh_product(self, v: int) -> float:
        return float(_fresh_product(v, self.k, self.l, *self._csr(), *self._arrays()))

    def peel(self, eta: float, candidates=None) -> np.ndarray:
        """Remove every vertex (cascading) whose product falls below ``eta``."""
        cand = self.alive_vertices() if candidates is None else np.asarray(candidates, dtype=np.int64)
        seeds = _violators(cand, float(eta), self.k, self.l, *self._csr(), *self._arrays())
        return self.delete(seeds, eta)

    def delete(self, vertices, eta: float) -> np.ndarray:
        """Delete ``vertices`` and cascade removals below ``eta``; return removed ids."""
        seeds = np.atleast_1d(np.asarray(vertices, dtype=np.int64))
        nrem = _cascade(seeds, float(eta), self.k, self.l, *self._csr(), *self._arrays(), self._queued,
                        self._queue, self._removed)
        return self._removed[:nrem].copy()

    def components(self, seeds=None) -> list[np.ndarray]:
        """Weakly connected components of the survivors (optionally those reached from ``seeds``)."""
        seeds = self.alive_vertices() if seeds is None else np.sort(np.asarray(seeds, dtype=np.int64))
        g = self.graph
        order, ptr = self._order, self._ptr
        ncomp = _weak_components(seeds, self.alive, g.out_ptr, g.dst, g.in_ptr, g.in_src, self._label, order, ptr)
        return [order[ptr[i]:ptr[i + 1]].copy() for i in range(ncomp)]


# ---------------------------------------------------------------------------
# public per-vertex DP


@dataclass(frozen=True, eq=False)
class DegreeDp:
    """Degree distributions of one vertex, truncated at ``k`` (in) and ``l`` (out).

    ``in_edges``/``out_edges`` hold the current ``(neighbour, p)`` pairs in
    ascending neighbour order; ``in_prob[i] = Pr[d_in = i]`` for ``i < k``.
    """

    vertex: int
    k: int
    l: int
    in_edges: tuple[tuple[int, float], ...]
    out_edges: tuple[tuple[int, float], ...]
    in_pmf: np.ndarray  # uncertain-edge pmf prefix
    in_certain: int
    out_pmf: np.ndarray
    out_certain: int

    @staticmethod
    def _shifted(pmf, cert, trunc):
        out = np.zeros(trunc)
        for i in range(cert, trunc):
            out[i] = pmf[i - cert]
        return out

    @property
    def in_prob(self) -> np.ndarray:
        return self._shifted(self.in_pmf, self.in_certain, self.k)

    @property
    def out_prob(self) -> np.ndarray:
        return self._shifted(self.out_pmf, self.out_certain, self.l)

    @property
    def in_tail(self) -> float:
        return float(_tail(self.in_pmf.reshape(1, -1), 0, self.in_certain, self.k))

    @property
    def out_tail(self) -> float:
        return float(_tail(self.out_pmf.reshape(1, -1), 0, self.out_certain, self.l))

    @property
    def product(self) -> float:
        return self.in_tail * self.out_tail


def _pmf_from(edges, trunc):
    dist = np.zeros((1, max(trunc, 1)))
    nbr = np.array([u for u, _ in edges], dtype=np.int64)
    prob = np.array([p for _, p in edges], dtype=np.float64)
    alive = np.ones(int(nbr.max()) + 1 if len(nbr) else 1, dtype=np.uint8)
    cert = _fresh(np.array([0, len(nbr)], dtype=np.int64), nbr, prob, alive, 0, trunc, dist, 0)
    return dist[0].copy(), int(cert)


def degree_dp(graph: InteractionGraph, v: int, k: int, l: int) -> DegreeDp:
    """Degree distributions of ``v`` in ``graph`` by the subset-size recurrence."""
    if k < 0 or l < 0:
        raise ValueError("k and l must be nonnegative")
    src, pin = graph.in_edges(v)
    dst, pout = graph.out_edges(v)
    in_edges = tuple(zip(src.tolist(), pin.tolist()))
    out_edges = tuple(zip(dst.tolist(), pout.tolist()))
    in_pmf, in_c = _pmf_from(in_edges, k)
    out_pmf, out_c = _pmf_from(out_edges, l)
    return DegreeDp(int(v), k, l, in_edges, out_edges, in_pmf, in_c, out_pmf, out_c)


def remove_edge_update(dp: DegreeDp, edge: tuple[int, int]) -> DegreeDp:
    """Distributions after deleting ``edge = (u, w)`` incident to ``dp.vertex``."""
    u, w = edge
    v = dp.vertex
    if w == v and any(a == u for a, _ in dp.in_edges):
        side = "in"
        edges, pmf, cert, trunc, other = dp.in_edges, dp.in_pmf, dp.in_certain, dp.k, u
    elif u == v and any(b == w for b, _ in dp.out_edges):
        side = "out"
        edges, pmf, cert, trunc, other = dp.out_edges, dp.out_pmf, dp.out_certain, dp.l, w
    else:
        raise ValueError(f"edge {edge} is not a current edge of vertex {v}")
    p = next(q for a, q in edges if a == other)
    rest = tuple((a, q) for a, q in edges if a != other)
    if p >= 1.0:
        new_pmf, new_cert = pmf.copy(), cert - 1
    elif p > RECOMPUTE_ABOVE:
        new_pmf, new_cert = _pmf_from(rest, trunc)
    else:
        buf = pmf.reshape(1, -1).copy()
        _remove_uncertain(buf, 0, trunc, p)
        new_pmf, new_cert = buf[0], cert
    if side == "in":
        return DegreeDp(v, dp.k, dp.l, rest, dp.out_edges, new_pmf, new_cert, dp.out_pmf, dp.out_certain)
    return DegreeDp(v, dp.k, dp.l, dp.in_edges, rest, dp.in_pmf, dp.in_certain, new_pmf, new_cert)


# ---------------------------------------------------------------------------
# cores


def compute_cores(graph: InteractionGraph, k: int, l: int, eta: float) -> list[np.ndarray]:
    """Maximal (k, l, eta)-cores as ascending vertex arrays, ordered by smallest member."""
    state = PeelState(graph, k, l)
    state.peel(eta)
    return state.components()


def core_vertices(graph: InteractionGraph, k: int, l: int, eta: float) -> np.ndarray:
    state = PeelState(graph, k, l)
    state.peel(eta)
    return state.alive_vertices()


@njit(cache=True)
def _eta_peel(k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
              in_dist, in_cert, out_dist, out_cert, thresholds):
    n = len(alive)
    # initial removal of vertices that cannot meet (k, l) at all
    zero = np.empty(n, dtype=np.int64)
    nz = 0
    for v in range(n):
        if alive[v] and _product(v, k, l, in_dist, in_cert, out_dist, out_cert) == 0.0:
            zero[nz] = v
            nz += 1
    for i in range(nz):
        _remove_vertex(zero[i], k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                       in_dist, in_cert, out_dist, out_cert)
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for v in range(n):
        if alive[v]:
            heap.append((_product(v, k, l, in_dist, in_cert, out_dist, out_cert), np.int64(v)))
    heapq.heapify(heap)
    cur = 0.0
    while len(heap) > 0:
        key, v = heapq.heappop(heap)
        if not alive[v]:
            continue
        now = _product(v, k, l, in_dist, in_cert, out_dist, out_cert)
        if now != key:
            heapq.heappush(heap, (now, v))
            continue
        exact = _fresh_product(v, k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                               in_dist, in_cert, out_dist, out_cert)
        if exact > cur:
            cur = exact
        thresholds[v] = cur
        _remove_vertex(v, k, l, in_ptr, in_src, in_p, out_ptr, out_dst, out_p, alive,
                       in_dist, in_cert, out_dist, out_cert)
        # products of neighbours only decrease; re-key them
        for e in range(out_ptr[v], out_ptr[v + 1]):
            u = out_dst[e]
            if alive[u]:
                heapq.heappush(heap, (_product(u, k, l, in_dist, in_cert, out_dist, out_cert), u))
        for e in range(in_ptr[v], in_ptr[v + 1]):
            u = in_src[e]
            if alive[u]:
                heapq.heappush(heap, (_product(u, k, l, in_dist, in_cert, out_dist, out_cert), u))


def eta_thresholds(graph: InteractionGraph, k: int, l: int) -> np.ndarray:
    """Largest eta for which some (k, l, eta)-core contains each vertex.

    Returns an array over the graph's id space; absent vertices get 0.
    Ties in the minimum product are broken by the lower vertex id.
    """
    state = PeelState(graph, k, l)
    thresholds = np.zeros(graph.n)
    _eta_peel(state.k, state.l, *state._csr(), *state._arrays(), thresholds)
    return thresholds


@njit(cache=True)
def _degree_peel(ptr_in, src_in, ptr_out, dst_out, present):
    """Max over the peeling of the minimum in-degree (classic core number bound)."""
    n = len(present)
    deg = np.zeros(n, dtype=np.int64)
    alive = present.copy()
    maxdeg = 0
    for v in range(n):
        if alive[v]:
            deg[v] = ptr_in[v + 1] - ptr_in[v]
            if deg[v] > maxdeg:
                maxdeg = deg[v]
    # bucket queue keyed by current in-degree
    bucket_head = np.full(maxdeg + 1, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    prv = np.full(n, -1, dtype=np.int64)
    for v in range(n - 1, -1, -1):
        if alive[v]:
            d = deg[v]
            nxt[v] = bucket_head[d]
            if bucket_head[d] >= 0:
                prv[bucket_head[d]] = v
            bucket_head[d] = v
    best = 0
    d = 0
    remaining = 0
    for v in range(n):
        if alive[v]:
            remaining += 1
    while remaining > 0:
        while bucket_head[d] < 0:
            d += 1
        v = bucket_head[d]
        bucket_head[d] = nxt[v]
        if nxt[v] >= 0:
            prv[nxt[v]] = -1
        alive[v] = False
        remaining -= 1
        if d > best:
            best = d
        for e in range(ptr_out[v], ptr_out[v + 1]):
            u = dst_out[e]
            if alive[u] and deg[u] > d:
                # unlink u from its bucket and move it one lower
                du = deg[u]
                if prv[u] >= 0:
                    nxt[prv[u]] = nxt[u]
                else:
                    bucket_head[du] = nxt[u]
                if nxt[u] >= 0:
                    prv[nxt[u]] = prv[u]
                deg[u] = du - 1
                prv[u] = -1
                nxt[u] = bucket_head[du - 1]
                if bucket_head[du - 1] >= 0:
                    prv[bucket_head[du - 1]] = u
                bucket_head[du - 1] = u
        if d > 0:
            d -= 1
    return best


def dcore_bounds(graph: InteractionGraph) -> tuple[int, int]:
    """``(k_max, l_max)``: largest min in-degree / out-degree over subgraphs of the skeleton."""
    if graph.m == 0:
        return 0, 0
    present = graph.present.copy()
    k_max = _degree_peel(graph.in_ptr, graph.in_src, graph.out_ptr, graph.dst, present)
    l_max = _degree_peel(graph.out_ptr, graph.dst, graph.in_ptr, graph.in_src, present)
    return int(k_max), int(l_max)
