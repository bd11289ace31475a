"""Topic-aware most influential community search: online and indexed execution."""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .graph_model import (Community, InteractionGraph, NormalizationFn, SocialNetwork, as_normalization,
                          check_topic_vector, extract_interaction_graph)
from .influence import InfluenceTable, SampleParams, estimate_influence
from .uncertain_core import PeelState

FOUND = "found"
NO_CORE = "no-core-exists"
STAGES = ("extract", "core", "influence", "search")

ScoreSource = Union[InfluenceTable, np.ndarray, Callable[[InteractionGraph], np.ndarray], None]


@dataclass(frozen=True)
class QueryRequest:
    q: tuple[float, ...]
    k: int = 2
    l: int = 5
    eta: float = 0.2
    params: SampleParams = field(default_factory=SampleParams)
    mode: str = "online"

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(x) for x in np.asarray(self.q, dtype=np.float64).ravel()))
        if self.k < 1 or self.l < 1:
            raise ValueError("k and l must be positive integers")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.mode not in ("online", "indexed"):
            raise ValueError("mode must be 'online' or 'indexed'")


@dataclass(frozen=True, eq=False)
class QueryResult:
    status: str
    community: Community | None
    mode: str
    timings: dict[str, float]
    graph: InteractionGraph | None = field(default=None, repr=False)
    topic: tuple[float, ...] | None = None
    candidates: int | None = None

    @property
    def found(self) -> bool:
        return self.status == FOUND

    @property
    def vertices(self) -> tuple[int, ...]:
        return self.community.vertices if self.community else ()


class _Clock:
    def __init__(self):
        self.timings = dict.fromkeys(STAGES, 0.0)
        self._t = time.perf_counter()

    def lap(self, stage: str):
        now = time.perf_counter()
        self.timings[stage] += now - self._t
        self._t = now


def _scores_for(graph: InteractionGraph, source: ScoreSource, params: SampleParams, threads) -> np.ndarray:
    if source is None:
        return estimate_influence(graph, params, threads=threads).scores
    if isinstance(source, InfluenceTable):
        return source.scores
    if callable(source):
        return np.asarray(source(graph), dtype=np.float64)
    return np.asarray(source, dtype=np.float64)


def search_communities(state: PeelState, cores: list[np.ndarray], scores: np.ndarray,
                       eta: float) -> Community | None:
    """Best community reachable by repeatedly peeling the weakest member.

    Communities sit in a max-heap keyed by their influence (minimum member
    score); ties pop the community with the smaller minimum vertex id first.
    A popped community replaces the incumbent only if strictly better.
    ``state`` must hold exactly the union of ``cores`` as its survivors.
    """
    tie = itertools.count()
    heap = []

    def push(members):
        heap.append((-float(scores[members].min()), int(members[0]), next(tie), members))

    for c in cores:
        push(c)
    heapq.heapify(heap)
    best, best_score = None, -np.inf
    while heap:
        neg, _, _, members = heapq.heappop(heap)
        if -neg > best_score:
            best, best_score = members, -neg
        weakest = members[int(np.argmin(scores[members]))]
        state.delete([weakest], eta)
        rest = members[state.alive[members].astype(bool)]
        if len(rest):
            for comp in state.components(rest):
                heapq.heappush(heap, (-float(scores[comp].min()), int(comp[0]), next(tie), comp))
    if best is None:
        return None
    return Community(tuple(int(v) for v in best), float(best_score),
                     tuple(float(x) for x in scores[best]))


def _finish(state, cores, scores, eta, clock, mode, graph, **extra) -> QueryResult:
    community = search_communities(state, cores, scores, eta) if cores else None
    clock.lap("search")
    status = FOUND if community is not None else NO_CORE
    return QueryResult(status, community, mode, clock.timings, graph, **extra)


def online_query(net: SocialNetwork, req: QueryRequest, f: NormalizationFn | str | None = None, *,
                 influence: ScoreSource = None, threads: int | None = None) -> QueryResult:
    """Answer ``req`` from scratch: project, peel cores, estimate influence, search.

    ``influence`` substitutes the sampled estimate (a table, a score array
    over vertex ids, or a callable taking the interaction graph).
    """
    clock = _Clock()
    graph = extract_interaction_graph(net, req.q, f)
    clock.lap("extract")
    state = PeelState(graph, req.k, req.l)
    state.peel(req.eta)
    cores = state.components()
    clock.lap("core")
    scores = _scores_for(graph, influence, req.params, threads)
    clock.lap("influence")
    return _finish(state, cores, scores, req.eta, clock, "online", graph)


def indexed_query(net: SocialNetwork, req: QueryRequest, tuc, tie, f: NormalizationFn | str | None = None, *,
                  influence: ScoreSource = None) -> QueryResult:
    """Answer ``req`` with the threshold lists and the topic tree.

    Influence comes from the stored table of the tree's nearest topic vector
    (unless ``influence`` overrides it) and the search runs on the subgraph
    induced by the threshold-list candidates.
    """
    from .index.tie import nearest_topic_vector
    from .index.tuc import candidate_vertices

    f = as_normalization(f)
    q = check_topic_vector(req.q, net.z)
    clock = _Clock()
    gamma, table = nearest_topic_vector(tie, q)
    cand = candidate_vertices(tuc, req.k, req.l, req.eta)
    clock.lap("influence")
    extra = {"topic": tuple(float(x) for x in gamma), "candidates": int(len(cand))}
    if len(cand) == 0:
        return QueryResult(NO_CORE, None, "indexed", clock.timings, None, **extra)
    graph = extract_interaction_graph(net, q, f, vertices=cand)
    clock.lap("extract")
    state = PeelState(graph, req.k, req.l)
    state.peel(req.eta)
    cores = state.components()
    clock.lap("core")
    scores = table.scores if influence is None else _scores_for(graph, influence, req.params, None)
    return _finish(state, cores, scores, req.eta, clock, "indexed", graph, **extra)


def run_query(net: SocialNetwork, req: QueryRequest, f=None, *, tuc=None, tie=None, threads=None) -> QueryResult:
    if req.mode == "indexed":
        if tuc is None or tie is None:
            raise ValueError("indexed mode needs a loaded index")
        return indexed_query(net, req, tuc, tie, f)
    return online_query(net, req, f, threads=threads)


def delete_cascade(core: InteractionGraph, k: int, l: int, eta: float, v: int) -> list[np.ndarray]:
    """Delete ``v`` from ``core``, cascade removals below ``eta``, return the weak components left."""
    if not core.present[v]:
        raise ValueError(f"vertex {v} is not in the core")
    state = PeelState(core, k, l)
    state.delete([v], eta)
    return state.components()
