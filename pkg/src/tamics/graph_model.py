"""Social networks, topic-based interaction graphs and community statistics.

A :class:`SocialNetwork` carries one nonnegative ``z``-dimensional weight
vector per directed edge.  Projecting it onto a topic distribution ``q`` via a
normalization function gives an :class:`InteractionGraph`, an uncertain
digraph whose edge ``e`` exists with probability ``f(<w(e), q>)``.  The
supergraph uses ``f(max_i w_i(e))`` instead and dominates every projection.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

VERTEX_TOPICS_MARKER = "#vertex-topics"
QUERY_SUM_TOL = 1e-9


class GraphFormatError(ValueError):
    """Raised when a graph file or an in-memory network violates the format."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormalizationFn:
    """Monotone map from ``[0, inf)`` onto ``[0, 1]`` with ``f(0) = 0``."""

    kind: str = "clamp"

    KINDS = ("clamp", "exponential")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown normalization {self.kind!r}; expected one of {self.KINDS}")

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "clamp":
            y = np.minimum(x, 1.0)
        else:
            y = -np.expm1(-x)
        # absorb floating-point residue
        return np.clip(y, 0.0, 1.0)

    @property
    def code(self) -> int:
        return self.KINDS.index(self.kind)

    @classmethod
    def from_code(cls, code: int) -> "NormalizationFn":
        return cls(cls.KINDS[code])


CLAMP = NormalizationFn("clamp")
EXPONENTIAL = NormalizationFn("exponential")


def as_normalization(f: NormalizationFn | str | None) -> NormalizationFn:
    if f is None:
        return CLAMP
    if isinstance(f, NormalizationFn):
        return f
    return NormalizationFn(f)


# ---------------------------------------------------------------------------
# social network


@dataclass(frozen=True, eq=False)
class SocialNetwork:
    """Directed network with a topic-weight vector on every edge.

    ``src``/``dst`` are int64 arrays of length ``m`` and ``weights`` is an
    ``(m, z)`` float64 array.  Edge order is whatever the caller supplied.
    """

    n: int
    z: int
    src: np.ndarray
    dst: np.ndarray
    weights: np.ndarray
    vertex_topics: np.ndarray | None = None

    def __post_init__(self):
        src = np.ascontiguousarray(self.src, dtype=np.int64)
        dst = np.ascontiguousarray(self.dst, dtype=np.int64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim == 1 and len(src) == 0:
            w = w.reshape(0, self.z)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "weights", w)
        if self.vertex_topics is not None:
            vt = np.ascontiguousarray(self.vertex_topics, dtype=np.float64)
            object.__setattr__(self, "vertex_topics", vt)
        self._validate()
        for arr in (self.src, self.dst, self.weights, self.vertex_topics):
            if arr is not None:
                arr.setflags(write=False)

    def _validate(self):
        n, z = self.n, self.z
        if n < 0:
            raise GraphFormatError("vertex count must be nonnegative")
        if z < 1:
            raise GraphFormatError("topic count z must be at least 1")
        m = len(self.src)
        if len(self.dst) != m or self.weights.shape != (m, z):
            raise GraphFormatError(f"edge arrays disagree: expected weights of shape ({m}, {z}), got {self.weights.shape}")
        if m:
            bad = np.flatnonzero((self.src < 0) | (self.src >= n) | (self.dst < 0) | (self.dst >= n))
            if len(bad):
                raise GraphFormatError(f"edge {bad[0]} has a vertex id outside [0, {n})")
            loops = np.flatnonzero(self.src == self.dst)
            if len(loops):
                raise GraphFormatError(f"edge {loops[0]} is a self-loop on vertex {self.src[loops[0]]}")
            if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
                bad = np.flatnonzero(~np.all(np.isfinite(self.weights) & (self.weights >= 0), axis=1))
                raise GraphFormatError(f"edge {bad[0]} has a negative or non-finite weight")
            keys = self.src * n + self.dst
            order = np.argsort(keys, kind="stable")
            dup = np.flatnonzero(keys[order][1:] == keys[order][:-1])
            if len(dup):
                i = int(order[dup[0] + 1])
                raise GraphFormatError(f"edge {i} duplicates ({self.src[i]}, {self.dst[i]})")
        if self.vertex_topics is not None:
            vt = self.vertex_topics
            if vt.shape != (n, z):
                raise GraphFormatError(f"vertex topics must have shape ({n}, {z}), got {vt.shape}")
            if np.any(vt < 0) or not np.all(np.isfinite(vt)):
                raise GraphFormatError("vertex topic vectors must be finite and nonnegative")

    @property
    def m(self) -> int:
        return len(self.src)

    def __repr__(self):
        return f"SocialNetwork(n={self.n}, m={self.m}, z={self.z})"


def check_topic_vector(q: Sequence[float], z: int, *, require_sum: bool = True) -> np.ndarray:
    """Validate a query topic vector and return it as a float64 array."""
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.shape != (z,):
        raise ValueError(f"topic vector has dimension {len(q)}, network has z={z}")
    if np.any(q < 0) or np.any(q > 1) or not np.all(np.isfinite(q)):
        raise ValueError("topic vector components must lie in [0, 1]")
    if require_sum and abs(float(q.sum()) - 1.0) > QUERY_SUM_TOL:
        raise ValueError(f"topic vector must sum to 1 (got {float(q.sum())!r})")
    return q


# ---------------------------------------------------------------------------
# graph text format


def _parse_error_line(lines: list[str], z: int | None, start: int) -> GraphFormatError | None:
    """Slow path: find the first malformed line after the header."""
    for i in range(start, len(lines)):
        toks = lines[i].split()
        if not toks or toks[0] == VERTEX_TOPICS_MARKER:
            continue
        if z is not None and len(toks) != z + 2:
            return GraphFormatError(f"expected {z + 2} fields (src dst w1..w{z}), got {len(toks)}", i + 1)
        try:
            int(toks[0]), int(toks[1])
            [float(t) for t in toks[2:]]
        except ValueError:
            return GraphFormatError(f"cannot parse {lines[i].strip()!r}", i + 1)
    return None


def parse_social_network(text: str) -> SocialNetwork:
    lines = text.splitlines()
    # skip leading blank lines
    first = 0
    while first < len(lines) and not lines[first].strip():
        first += 1
    if first == len(lines):
        raise GraphFormatError("empty graph file", 1)
    header = lines[first].split()
    if len(header) != 3:
        raise GraphFormatError("header must be 'n m z'", first + 1)
    try:
        n, m, z = (int(t) for t in header)
    except ValueError:
        raise GraphFormatError(f"header must hold three integers, got {lines[first].strip()!r}", first + 1) from None
    if n < 0 or m < 0:
        raise GraphFormatError("n and m must be nonnegative", first + 1)
    if z < 1:
        raise GraphFormatError("topic count z must be at least 1", first + 1)

    marker = None
    for i in range(first + 1, len(lines)):
        if lines[i].strip() == VERTEX_TOPICS_MARKER:
            marker = i
            break
    edge_end = marker if marker is not None else len(lines)
    edge_lines = [i for i in range(first + 1, edge_end) if lines[i].strip()]
    if len(edge_lines) != m:
        at = edge_lines[m] + 1 if len(edge_lines) > m else edge_end + 1
        raise GraphFormatError(f"header declares {m} edges, found {len(edge_lines)}", at)

    body = "\n".join(lines[i] for i in edge_lines)
    toks = body.split()
    if len(toks) != m * (z + 2):
        raise _parse_error_line(lines, z, first + 1) or GraphFormatError("edge block has the wrong number of fields")
    try:
        table = np.array(toks, dtype=np.float64).reshape(m, z + 2)
    except ValueError:
        raise _parse_error_line(lines, z, first + 1) or GraphFormatError("unparseable edge block") from None
    ids = table[:, :2]
    if m and (np.any(ids != np.floor(ids)) or np.any(~np.isfinite(ids))):
        row = int(np.flatnonzero(np.any(ids != np.floor(ids), axis=1) | np.any(~np.isfinite(ids), axis=1))[0])
        raise GraphFormatError("vertex ids must be integers", edge_lines[row] + 1)
    src = ids[:, 0].astype(np.int64)
    dst = ids[:, 1].astype(np.int64)
    weights = np.ascontiguousarray(table[:, 2:])

    vertex_topics = None
    if marker is not None:
        vt_lines = [i for i in range(marker + 1, len(lines)) if lines[i].strip()]
        if len(vt_lines) != n:
            raise GraphFormatError(f"vertex-topic block must hold {n} lines, found {len(vt_lines)}", marker + 1)
        vertex_topics = np.zeros((n, z))
        seen = np.zeros(n, dtype=bool)
        for i in vt_lines:
            toks = lines[i].split()
            if len(toks) != z + 1:
                raise GraphFormatError(f"expected {z + 1} fields (v w1..w{z}), got {len(toks)}", i + 1)
            try:
                v = int(toks[0])
                vec = [float(t) for t in toks[1:]]
            except ValueError:
                raise GraphFormatError(f"cannot parse {lines[i].strip()!r}", i + 1) from None
            if not 0 <= v < n or seen[v]:
                raise GraphFormatError(f"bad or repeated vertex id {v}", i + 1)
            seen[v] = True
            vertex_topics[v] = vec

    try:
        return SocialNetwork(n, z, src, dst, weights, vertex_topics)
    except GraphFormatError as exc:
        # map the edge index in the message back to a file line
        msg = str(exc)
        parts = msg.split()
        if parts[0] == "edge" and parts[1].isdigit():
            raise GraphFormatError(msg, edge_lines[int(parts[1])] + 1) from None
        raise


def load_social_network(path: str | Path) -> SocialNetwork:
    """Read a graph in the whitespace-separated text format."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_social_network(text)


def format_social_network(net: SocialNetwork) -> str:
    out = io.StringIO()
    out.write(f"{net.n} {net.m} {net.z}\n")
    src = net.src.tolist()
    dst = net.dst.tolist()
    for s, d, w in zip(src, dst, net.weights.tolist()):
        out.write(f"{s} {d} {' '.join(map(repr, w))}\n")
    if net.vertex_topics is not None:
        out.write(VERTEX_TOPICS_MARKER + "\n")
        for v, w in enumerate(net.vertex_topics.tolist()):
            out.write(f"{v} {' '.join(map(repr, w))}\n")
    return out.getvalue()


def save_social_network(net: SocialNetwork, path: str | Path) -> None:
    Path(path).write_text(format_social_network(net), encoding="utf-8")


# ---------------------------------------------------------------------------
# fingerprint

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


@njit(cache=True)
def _fnv1a64(data, h):
    for b in data:
        h = (h ^ np.uint64(b)) * _FNV_PRIME
    return h


def fnv1a64(data: bytes | np.ndarray, h: int | None = None) -> int:
    buf = np.frombuffer(data, dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else data.view(np.uint8).ravel()
    start = _FNV_OFFSET if h is None else np.uint64(h)
    return int(_fnv1a64(buf, start))


def canonical_bytes(net: SocialNetwork) -> list[np.ndarray]:
    """Little-endian binary canonical form of a network, in hashing order."""
    parts = [np.array([net.n, net.m, net.z], dtype="<i8"), net.src.astype("<i8"), net.dst.astype("<i8"),
             net.weights.astype("<f8")]
    if net.vertex_topics is not None:
        parts.append(net.vertex_topics.astype("<f8"))
    return parts


def graph_fingerprint(net: SocialNetwork) -> tuple[int, int, int]:
    """Return ``(n, m, fnv1a64)`` over the canonical binary form of ``net``."""
    h = int(_FNV_OFFSET)
    for part in canonical_bytes(net):
        h = fnv1a64(np.ascontiguousarray(part), h)
    return net.n, net.m, h


# ---------------------------------------------------------------------------
# interaction graphs


@njit(cache=True)
def _edge_dot(weights, q, rows):
    out = np.empty(len(rows))
    z = weights.shape[1]
    for j in range(len(rows)):
        r = rows[j]
        s = 0.0
        for t in range(z):
            s += weights[r, t] * q[t]
        out[j] = s
    return out


class InteractionGraph:
    """Uncertain directed graph stored as out- and in-CSR arrays.

    Vertex ids live in ``[0, n)``, the id space of the originating network;
    ``present`` marks the ones that belong to the graph.  Edges are sorted by
    ``(src, dst)``, so every out-list and in-list is in ascending neighbour id.
    ``eid`` maps each stored edge back to its index in the network.
    """

    def __init__(self, n, src, dst, p, *, vertices=None, eid=None, source=None):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0)
        eid = np.arange(len(src), dtype=np.int64) if eid is None else np.asarray(eid, dtype=np.int64)
        keep = p > 0
        src, dst, p, eid = src[keep], dst[keep], p[keep], eid[keep]
        order = np.lexsort((dst, src))
        self.n = int(n)
        self.src = src[order]
        self.dst = dst[order]
        self.p = p[order]
        self.eid = eid[order]
        self.source = source

        present = np.zeros(self.n, dtype=bool)
        if vertices is None:
            present[self.src] = True
            present[self.dst] = True
        else:
            vertices = np.asarray(vertices)
            if vertices.dtype == bool:
                present |= vertices
            else:
                present[vertices.astype(np.int64)] = True
            if len(self.src) and not (present[self.src].all() and present[self.dst].all()):
                raise ValueError("edge endpoint outside the given vertex set")
        self.present = present

        self.out_ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.src, minlength=self.n), out=self.out_ptr[1:])
        in_order = np.lexsort((self.src, self.dst))
        self.in_edge = in_order  # position of the in-list entry in the out-sorted arrays
        self.in_src = self.src[in_order]
        self.in_p = self.p[in_order]
        self.in_ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.dst, minlength=self.n), out=self.in_ptr[1:])
        for arr in (self.src, self.dst, self.p, self.eid, self.present, self.out_ptr, self.in_ptr,
                    self.in_edge, self.in_src, self.in_p):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.src)

    def vertices(self) -> np.ndarray:
        return np.flatnonzero(self.present)

    def num_vertices(self) -> int:
        return int(self.present.sum())

    def out_edges(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.out_ptr[v], self.out_ptr[v + 1]
        return self.dst[a:b], self.p[a:b]

    def in_edges(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.in_ptr[v], self.in_ptr[v + 1]
        return self.in_src[a:b], self.in_p[a:b]

    def edge_probability(self, u: int, v: int) -> float:
        dst, p = self.out_edges(u)
        i = np.searchsorted(dst, v)
        if i < len(dst) and dst[i] == v:
            return float(p[i])
        return 0.0

    def edges(self) -> Iterable[tuple[int, int, float]]:
        return zip(self.src.tolist(), self.dst.tolist(), self.p.tolist())

    def induced(self, vertices) -> "InteractionGraph":
        """Subgraph induced by ``vertices`` (ids or boolean mask)."""
        mask = np.zeros(self.n, dtype=bool)
        vertices = np.asarray(vertices)
        if vertices.dtype == bool:
            mask |= vertices
        else:
            mask[vertices.astype(np.int64)] = True
        mask &= self.present
        keep = mask[self.src] & mask[self.dst]
        return InteractionGraph(self.n, self.src[keep], self.dst[keep], self.p[keep], vertices=mask,
                                eid=self.eid[keep], source=self.source)

    def canonical_bytes(self) -> bytes:
        return b"".join([
            np.array([self.n, self.m], dtype="<i8").tobytes(),
            self.present.astype(np.uint8).tobytes(),
            self.src.astype("<i8").tobytes(), self.dst.astype("<i8").tobytes(),
            self.p.astype("<f8").tobytes(),
        ])

    def __repr__(self):
        return f"InteractionGraph(vertices={self.num_vertices()}, edges={self.m}, source={self.source!r})"


def extract_interaction_graph(net: SocialNetwork, q, f: NormalizationFn | str | None = None, *,
                              vertices=None, check: bool = True) -> InteractionGraph:
    """Project ``net`` onto topic vector ``q``: ``p(e) = f(<w(e), q>)``.

    Edges with ``p(e) = 0`` are dropped and the vertex set is the set of
    endpoints of kept edges.  When ``vertices`` is given, only edges with
    both endpoints inside it are considered and the vertex set is exactly
    ``vertices`` (the induced-subgraph form used by indexed queries).
    ``check=False`` skips the sum-to-one test (index vectors need only be
    nonnegative).
    """
    f = as_normalization(f)
    q = check_topic_vector(q, net.z, require_sum=check)
    if vertices is None:
        rows = np.arange(net.m, dtype=np.int64)
    else:
        mask = np.zeros(net.n, dtype=bool)
        vertices = np.asarray(vertices)
        if vertices.dtype == bool:
            mask |= vertices
        else:
            mask[vertices.astype(np.int64)] = True
        rows = np.flatnonzero(mask[net.src] & mask[net.dst])
    p = f(_edge_dot(net.weights, q, rows))
    src, dst = net.src[rows], net.dst[rows]
    if vertices is None:
        return InteractionGraph(net.n, src, dst, p, eid=rows, source=tuple(q.tolist()))
    keep = p > 0
    return InteractionGraph(net.n, src[keep], dst[keep], p[keep], vertices=mask, eid=rows[keep],
                            source=tuple(q.tolist()))


def build_supergraph(net: SocialNetwork, f: NormalizationFn | str | None = None) -> InteractionGraph:
    """Uncertain graph with ``p(e) = f(max_i w_i(e))`` over all network vertices."""
    f = as_normalization(f)
    wmax = net.weights.max(axis=1) if net.m else np.zeros(0)
    p = f(wmax)
    g = InteractionGraph(net.n, net.src, net.dst, p, vertices=np.ones(net.n, dtype=bool), source="supergraph")
    return g


# ---------------------------------------------------------------------------
# communities


@dataclass(frozen=True)
class Community:
    vertices: tuple[int, ...]
    influence: float
    scores: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not self.vertices:
            raise ValueError("a community needs at least one vertex")

    def __len__(self):
        return len(self.vertices)


@dataclass(frozen=True)
class CommunityStats:
    size: int
    density: float
    influence: float
    similarity: float | None = None


def edge_density(vertices, graph: InteractionGraph) -> float:
    """``|E_C| / (|V_C| (|V_C| - 1))`` over the induced directed edges; 0 below two vertices."""
    vs = np.unique(np.asarray(vertices, dtype=np.int64))
    size = len(vs)
    if size < 2:
        return 0.0
    mask = np.zeros(graph.n, dtype=bool)
    mask[vs] = True
    inner = int(np.count_nonzero(mask[graph.src] & mask[graph.dst]))
    return inner / (size * (size - 1))


def community_stats(community: Community, graph: InteractionGraph, net: SocialNetwork, q,
                    f: NormalizationFn | str | None = None) -> CommunityStats:
    vs = np.asarray(community.vertices, dtype=np.int64)
    if not graph.present[vs].all():
        raise ValueError("community is not contained in the graph")
    sim = None
    if net.vertex_topics is not None:
        f = as_normalization(f)
        q = np.asarray(q, dtype=np.float64)
        sim = float(np.mean(f(net.vertex_topics[vs] @ q)))
    return CommunityStats(len(vs), edge_density(vs, graph), float(community.influence), sim)


def angle(a, b) -> float:
    """Angle in radians between two nonzero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = float(a @ b) / (math.sqrt(float(a @ a)) * math.sqrt(float(b @ b)))
    return math.acos(min(1.0, max(-1.0, c)))
