"""Cone tree over precomputed topic vectors, with influence tables at the leaves."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..graph_model import NormalizationFn, SocialNetwork, as_normalization, extract_interaction_graph
from ..influence import InfluenceTable, SampleParams, derive_seed, estimate_influence

MAX_LLOYD_ITERS = 100
LLOYD_TOL = 1e-6


class BuildTimeout(RuntimeError):
    """Raised when index construction passes its deadline."""

    def __init__(self, message: str, done: int, total: int, elapsed: float):
        super().__init__(message)
        self.done = done
        self.total = total
        self.elapsed = elapsed


def angles(vectors: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angle (radians) between each row of ``vectors`` and ``v``."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    v = np.asarray(v, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", vectors, vectors)) * np.sqrt(v @ v)
    cos = (vectors @ v) / norms
    return np.arccos(np.clip(cos, -1.0, 1.0))


# ---------------------------------------------------------------------------
# representative vectors


def sample_topic_vectors(count: int, z: int, seed: int) -> np.ndarray:
    """``count`` draws from the symmetric Dirichlet(1) over ``z`` topics."""
    return np.random.default_rng(seed).dirichlet(np.ones(z), size=count)


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def select_topic_vectors(samples, h: int, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """``h`` cluster centres of ``samples`` under cosine similarity.

    k-means++ seeding on ``1 - cos`` followed by spherical Lloyd steps; the
    centres are rescaled to sum to one.  With at most ``h`` samples the
    samples themselves are returned.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("samples must be a nonempty 2-D array")
    if h < 1:
        raise ValueError("h must be at least 1")
    if np.any(x < 0) or np.any(x.sum(axis=1) <= 0):
        raise ValueError("sample vectors must be nonnegative and nonzero")
    if len(x) <= h:
        return x.copy()
    rng = np.random.default_rng(rng)
    u = _unit(x)
    n = len(u)

    chosen = [int(rng.integers(n))]
    dist = np.maximum(1.0 - u @ u[chosen[0]], 0.0)
    while len(chosen) < h:
        total = dist.sum()
        if total <= 0:
            # every point coincides with a centre; pad with uniform picks
            chosen.extend(int(i) for i in rng.integers(n, size=h - len(chosen)))
            break
        nxt = int(np.searchsorted(np.cumsum(dist), rng.random() * total, side="right"))
        nxt = min(nxt, n - 1)
        chosen.append(nxt)
        dist = np.minimum(dist, np.maximum(1.0 - u @ u[nxt], 0.0))
    centres = u[chosen].copy()

    for _ in range(MAX_LLOYD_ITERS):
        label = np.argmax(u @ centres.T, axis=1)
        sums = np.zeros_like(centres)
        np.add.at(sums, label, u)
        norms = np.linalg.norm(sums, axis=1)
        moved = centres.copy()
        ok = norms > 0
        moved[ok] = sums[ok] / norms[ok, None]
        shift = float(np.max(np.linalg.norm(moved - centres, axis=1)))
        centres = moved
        if shift < LLOYD_TOL:
            break
    return centres / centres.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# tree


@dataclass(frozen=True, eq=False)
class TieNode:
    members: np.ndarray
    axis: np.ndarray
    aperture: float
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.left < 0


@dataclass(eq=False)
class TieTree:
    vectors: np.ndarray
    nodes: list[TieNode]
    tables: dict[int, InfluenceTable]
    leaf_size: int
    build_seconds: float = field(default=0.0, compare=False)

    @property
    def h(self) -> int:
        return len(self.vectors)

    def leaves(self) -> list[int]:
        return [i for i, nd in enumerate(self.nodes) if nd.is_leaf]

    def __eq__(self, other):
        if not isinstance(other, TieTree):
            return NotImplemented
        if self.leaf_size != other.leaf_size or len(self.nodes) != len(other.nodes):
            return False
        if not np.array_equal(self.vectors, other.vectors) or self.tables.keys() != other.tables.keys():
            return False
        for a, b in zip(self.nodes, other.nodes):
            if (a.left, a.right, a.aperture) != (b.left, b.right, b.aperture):
                return False
            if not (np.array_equal(a.members, b.members) and np.array_equal(a.axis, b.axis)):
                return False
        return all(np.array_equal(self.tables[g].scores, other.tables[g].scores)
                   and self.tables[g].theta == other.tables[g].theta
                   and self.tables[g].seed == other.tables[g].seed for g in self.tables)


def _node(vectors: np.ndarray, members: np.ndarray) -> TieNode:
    axis = vectors[members].mean(axis=0)
    return TieNode(members, axis, float(angles(vectors[members], axis).max()))


def split_members(vectors: np.ndarray, members: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two-pivot split: random pivot, farthest vector as second pivot, nearer pivot wins."""
    pivot = members[int(rng.integers(len(members)))]
    far = members[int(np.argmax(angles(vectors[members], vectors[pivot])))]
    near_x = angles(vectors[members], vectors[pivot])
    near_y = angles(vectors[members], vectors[far])
    side = near_x <= near_y
    sx, sy = members[side], members[~side]
    if len(sy) == 0:
        # all members share one direction
        half = len(members) // 2
        sx, sy = members[:half], members[half:]
    return sx, sy


def build_tree_structure(vectors, leaf_size: int, seed: int) -> list[TieNode]:
    """Nodes in preorder (root first, left subtree before right)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if len(vectors) == 0:
        raise ValueError("need at least one topic vector")
    if leaf_size < 1:
        raise ValueError("leaf size must be at least 1")
    rng = np.random.default_rng(seed)
    nodes: list[TieNode] = []
    stack = [(np.arange(len(vectors), dtype=np.int64), -1, 0)]
    while stack:
        members, parent, side = stack.pop()
        idx = len(nodes)
        nodes.append(_node(vectors, members))
        if parent >= 0:
            p = nodes[parent]
            nodes[parent] = TieNode(p.members, p.axis, p.aperture,
                                    idx if side == 0 else p.left, idx if side == 1 else p.right)
        if len(members) > leaf_size:
            sx, sy = split_members(vectors, members, rng)
            stack.append((sy, idx, 1))
            stack.append((sx, idx, 0))
    return nodes


def build_tie_tree(net: SocialNetwork, vectors, leaf_size: int, params: SampleParams,
                   f: NormalizationFn | str | None = None, *, threads: int | None = None,
                   deadline: float | None = None,
                   progress: Callable[[int, int], None] | None = None) -> TieTree:
    """Cone tree over ``vectors`` with an influence table per vector.

    Split pivots draw from ``params.seed``; the table of vector ``i`` uses
    the child seed ``derive_seed(params.seed, i)``.  ``deadline`` is a
    ``time.perf_counter()`` value after which construction stops with
    :class:`BuildTimeout`.
    """
    t0 = time.perf_counter()
    f = as_normalization(f)
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != net.z:
        raise ValueError(f"topic vectors must have {net.z} components")
    if np.any(vectors < 0):
        raise ValueError("topic vectors must be nonnegative")
    nodes = build_tree_structure(vectors, leaf_size, params.seed)
    tables = {}
    order = [int(g) for nd in nodes if nd.is_leaf for g in nd.members]
    for done, g in enumerate(order):
        if deadline is not None and time.perf_counter() > deadline:
            elapsed = time.perf_counter() - t0
            raise BuildTimeout(f"deadline passed after {done} of {len(order)} influence tables "
                               f"({elapsed:.1f}s)", done, len(order), elapsed)
        graph = extract_interaction_graph(net, vectors[g], f, check=False)
        sub = SampleParams(params.eps, params.delta, params.alpha, derive_seed(params.seed, g))
        table = estimate_influence(graph, sub, threads=threads)
        tables[g] = InfluenceTable(table.scores, table.theta, tuple(vectors[g].tolist()), sub.seed)
        if progress is not None:
            progress(done + 1, len(order))
    return TieTree(vectors, nodes, tables, leaf_size, time.perf_counter() - t0)


def descend(tree: TieTree, q) -> int:
    """Leaf reached by always following the child whose axis is closer in angle."""
    q = np.asarray(q, dtype=np.float64)
    cur = 0
    while not tree.nodes[cur].is_leaf:
        nd = tree.nodes[cur]
        a = angles(tree.nodes[nd.left].axis, q)[0]
        b = angles(tree.nodes[nd.right].axis, q)[0]
        cur = nd.left if a <= b else nd.right
    return cur


def nearest_topic_vector(tree: TieTree, q) -> tuple[np.ndarray, InfluenceTable]:
    """Approximate nearest stored vector (greedy descent, no backtracking) and its table."""
    leaf = tree.nodes[descend(tree, q)]
    g = int(leaf.members[int(np.argmin(angles(tree.vectors[leaf.members], q)))])
    return tree.vectors[g], tree.tables.get(g)


def exact_nearest(vectors, q) -> int:
    """Index of the stored vector with the smallest angle to ``q`` (linear scan)."""
    return int(np.argmin(angles(vectors, q)))
