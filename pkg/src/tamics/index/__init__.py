"""Offline index: per-cell threshold lists plus a cone tree of influence tables."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..graph_model import NormalizationFn, SocialNetwork, as_normalization, build_supergraph, graph_fingerprint
from ..influence import SampleParams
from .storage import (IndexFormatError, IndexMeta, IndexMismatchError, TamicsIndex, check_compatible, index_bytes, load_index,
                      parse_index, save_index)
from .tie import (BuildTimeout, TieNode, TieTree, build_tie_tree, build_tree_structure, descend, exact_nearest,
                  nearest_topic_vector, sample_topic_vectors, select_topic_vectors)
from .tuc import TucCell, TucList, build_tuc_list, candidate_vertices, first_key_at_least

SAMPLES_PER_VECTOR = 10


def topic_vectors_for(z: int, h: int, seed: int, samples=None) -> np.ndarray:
    """``h`` representative vectors: clustered from ``samples`` or from Dirichlet(1) draws."""
    if samples is None:
        samples = sample_topic_vectors(SAMPLES_PER_VECTOR * h, z, seed)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != z:
        raise ValueError(f"sample vectors must have {z} components")
    return select_topic_vectors(samples, h, np.random.default_rng(seed))


def build_index(net: SocialNetwork, f: NormalizationFn | str | None = None, params: SampleParams | None = None, *,
                h: int = 1000, leaf_size: int = 5, vectors=None, samples=None, threads: int | None = None,
                deadline: float | None = None,
                progress: Callable[[int, int], None] | None = None) -> TamicsIndex:
    """Build both index structures for ``net``.

    ``vectors`` fixes the representative topic vectors directly; otherwise
    ``h`` of them are chosen from ``samples`` (or synthetic draws).
    """
    f = as_normalization(f)
    params = params or SampleParams()
    tuc = build_tuc_list(build_supergraph(net, f))
    if vectors is None:
        vectors = topic_vectors_for(net.z, h, params.seed, samples)
    vectors = np.asarray(vectors, dtype=np.float64)
    tie = build_tie_tree(net, vectors, leaf_size, params, f, threads=threads, deadline=deadline, progress=progress)
    meta = IndexMeta(graph_fingerprint(net), f, params.alpha, params.eps, params.delta, len(vectors), leaf_size,
                     params.seed)
    return TamicsIndex(meta, tuc, tie)


__all__ = [
    "BuildTimeout", "IndexFormatError", "IndexMeta", "IndexMismatchError", "TamicsIndex", "TieNode", "TieTree", "TucCell", "TucList",
    "build_index", "build_tie_tree", "build_tree_structure", "build_tuc_list", "candidate_vertices",
    "check_compatible", "descend", "exact_nearest", "first_key_at_least", "index_bytes", "load_index",
    "nearest_topic_vector", "parse_index", "sample_topic_vectors", "save_index", "select_topic_vectors",
    "topic_vectors_for",
]
