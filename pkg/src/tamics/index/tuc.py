"""Per-(k, l) lists of vertices grouped by eta-threshold over the supergraph."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..graph_model import InteractionGraph
from ..uncertain_core import dcore_bounds, eta_thresholds


@dataclass(frozen=True, eq=False)
class TucCell:
    """Distinct nonzero thresholds (ascending) and the vertices holding each."""

    keys: np.ndarray
    groups: tuple[np.ndarray, ...]

    def __len__(self):
        return len(self.keys)

    def vertex_count(self) -> int:
        return int(sum(len(g) for g in self.groups))

    def __eq__(self, other):
        return (isinstance(other, TucCell) and np.array_equal(self.keys, other.keys)
                and len(self.groups) == len(other.groups)
                and all(np.array_equal(a, b) for a, b in zip(self.groups, other.groups)))


@dataclass(frozen=True, eq=False)
class TucList:
    k_max: int
    l_max: int
    cells: dict[tuple[int, int], TucCell] = field(default_factory=dict)
    build_seconds: float = field(default=0.0, compare=False)

    def cell(self, k: int, l: int) -> TucCell | None:
        return self.cells.get((k, l))

    def __eq__(self, other):
        return (isinstance(other, TucList) and (self.k_max, self.l_max) == (other.k_max, other.l_max)
                and self.cells.keys() == other.cells.keys()
                and all(self.cells[c] == other.cells[c] for c in self.cells))

    def vertex_entries(self) -> int:
        return sum(c.vertex_count() for c in self.cells.values())


def group_thresholds(thresholds: np.ndarray) -> TucCell:
    """Group vertex ids by exact threshold value, dropping zeros."""
    ids = np.flatnonzero(thresholds > 0)
    vals = thresholds[ids]
    order = np.lexsort((ids, vals))
    ids, vals = ids[order], vals[order]
    keys, starts = np.unique(vals, return_index=True)
    bounds = np.append(starts, len(ids))
    groups = tuple(ids[bounds[i]:bounds[i + 1]].astype(np.int64) for i in range(len(keys)))
    return TucCell(keys.astype(np.float64), groups)


def build_tuc_list(supergraph: InteractionGraph) -> TucList:
    """Threshold lists for every cell ``1 <= k <= k_max``, ``1 <= l <= l_max``."""
    t0 = time.perf_counter()
    k_max, l_max = dcore_bounds(supergraph)
    cells = {}
    for k in range(1, k_max + 1):
        for l in range(1, l_max + 1):
            cells[(k, l)] = group_thresholds(eta_thresholds(supergraph, k, l))
    return TucList(k_max, l_max, cells, time.perf_counter() - t0)


def first_key_at_least(cell: TucCell, eta: float) -> int:
    """Index of the first key ``>= eta`` (``len(cell)`` when there is none)."""
    return int(np.searchsorted(cell.keys, eta, side="left"))


def candidate_vertices(tuc: TucList, k: int, l: int, eta: float) -> np.ndarray:
    """Vertices whose threshold in cell ``(k, l)`` is at least ``eta``, ascending."""
    cell = tuc.cell(k, l)
    if cell is None:
        return np.zeros(0, dtype=np.int64)
    j = first_key_at_least(cell, eta)
    if j >= len(cell):
        return np.zeros(0, dtype=np.int64)
    return np.sort(np.concatenate(cell.groups[j:]))
