"""Binary index files.

Layout (all integers little-endian u64/i64, reals IEEE-754 binary64)::

    magic "TAMIXv1\\0" | version | n | m | hash | f-code
    alpha | eps | delta | h | leaf_size | seed
    section "TUC\\0\\0\\0\\0\\0" | byte length | payload
    section "TIE\\0\\0\\0\\0\\0" | byte length | payload

TUC payload: k_max, l_max, then for every cell in row-major order the key
count and, per key, the key, the group size and the delta-encoded group.
TIE payload: h, z, the h x z vectors, leaf size, node count, per node
(left, right, aperture, axis, member count, delta-encoded members), then
the table count and per table (vector index, theta, seed, n, scores).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..graph_model import NormalizationFn, SocialNetwork, as_normalization, graph_fingerprint
from ..influence import InfluenceTable
from .tie import TieNode, TieTree
from .tuc import TucCell, TucList

MAGIC = b"TAMIXv1\0"
VERSION = 1
TUC_TAG = b"TUC\0\0\0\0\0"
TIE_TAG = b"TIE\0\0\0\0\0"


class IndexFormatError(ValueError):
    pass


class IndexMismatchError(IndexFormatError):
    """The index was built for a different graph or normalization."""


@dataclass(frozen=True)
class IndexMeta:
    fingerprint: tuple[int, int, int]
    f: NormalizationFn
    alpha: float
    eps: float
    delta: float
    h: int
    leaf_size: int
    seed: int
    version: int = VERSION


@dataclass(eq=False)
class TamicsIndex:
    meta: IndexMeta
    tuc: TucList
    tie: TieTree

    def __iter__(self):
        return iter((self.tuc, self.tie))

    def __eq__(self, other):
        return (isinstance(other, TamicsIndex) and self.meta == other.meta and self.tuc == other.tuc
                and self.tie == other.tie)


# ---------------------------------------------------------------------------
# writing


def _u64(*vals) -> bytes:
    return np.array(vals, dtype="<u8").tobytes()


def _i64(*vals) -> bytes:
    return np.array(vals, dtype="<i8").tobytes()


def _f64(vals) -> bytes:
    return np.ascontiguousarray(vals, dtype="<f8").tobytes()


def _deltas(ids: np.ndarray) -> bytes:
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) and np.any(np.diff(ids) < 0):
        raise ValueError("vertex lists must be ascending")
    return np.diff(ids, prepend=0).astype("<u8").tobytes()


def _tuc_payload(tuc: TucList) -> bytes:
    out = [_u64(tuc.k_max, tuc.l_max)]
    for k in range(1, tuc.k_max + 1):
        for l in range(1, tuc.l_max + 1):
            cell = tuc.cells[(k, l)]
            out.append(_u64(len(cell)))
            for key, group in zip(cell.keys, cell.groups):
                out.append(_f64([key]))
                out.append(_u64(len(group)))
                out.append(_deltas(group))
    return b"".join(out)


def _tie_payload(tie: TieTree) -> bytes:
    h, z = tie.vectors.shape
    out = [_u64(h, z), _f64(tie.vectors), _u64(tie.leaf_size, len(tie.nodes))]
    for nd in tie.nodes:
        out.append(_i64(nd.left, nd.right))
        out.append(_f64([nd.aperture]))
        out.append(_f64(nd.axis))
        out.append(_u64(len(nd.members)))
        out.append(_deltas(nd.members))
    out.append(_u64(len(tie.tables)))
    for g in sorted(tie.tables):
        t = tie.tables[g]
        out.append(_u64(g, t.theta, t.seed, len(t.scores)))
        out.append(_f64(t.scores))
    return b"".join(out)


def index_bytes(index: TamicsIndex) -> bytes:
    m = index.meta
    head = [MAGIC, _u64(m.version, *m.fingerprint, m.f.code), _f64([m.alpha, m.eps, m.delta]),
            _u64(m.h, m.leaf_size, m.seed)]
    parts = head
    for tag, payload in ((TUC_TAG, _tuc_payload(index.tuc)), (TIE_TAG, _tie_payload(index.tie))):
        parts += [tag, _u64(len(payload)), payload]
    return b"".join(parts)


def save_index(index: TamicsIndex, path: str | Path) -> int:
    """Write ``index`` atomically; returns the file size in bytes."""
    data = index_bytes(index)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return len(data)


# ---------------------------------------------------------------------------
# reading


class _Reader:
    def __init__(self, data: bytes, base: int = 0):
        self.data = data
        self.pos = 0
        self.base = base

    def take(self, nbytes: int, what: str) -> memoryview:
        if nbytes < 0 or self.pos + nbytes > len(self.data):
            raise IndexFormatError(f"truncated index: {what} needs {nbytes} bytes at byte offset "
                                   f"{self.base + self.pos}, only {len(self.data) - self.pos} left")
        view = memoryview(self.data)[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return view

    def u64(self, count: int = 1, what: str = "integer") -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<u8", count=count)

    def one(self, what: str) -> int:
        return int(self.u64(1, what)[0])

    def i64(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<i8", count=count)

    def f64(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8", count=count)

    def ids(self, count: int, what: str) -> np.ndarray:
        return np.cumsum(self.u64(count, what).astype(np.int64))

    def count(self, what: str, limit: int | None = None) -> int:
        at = self.base + self.pos
        val = self.one(what)
        cap = (len(self.data) - self.pos) if limit is None else limit
        if val > cap:
            raise IndexFormatError(f"corrupt index: {what} = {val} at byte offset {at} exceeds the file")
        return val


def _read_tuc(r: _Reader) -> TucList:
    k_max = r.count("k_max")
    l_max = r.count("l_max")
    cells = {}
    for k in range(1, k_max + 1):
        for l in range(1, l_max + 1):
            nkeys = r.count(f"key count of cell ({k},{l})")
            keys = np.empty(nkeys)
            groups = []
            for j in range(nkeys):
                keys[j] = r.f64(1, "threshold key")[0]
                size = r.count("group size")
                groups.append(r.ids(size, "vertex group"))
            cells[(k, l)] = TucCell(keys, tuple(groups))
    return TucList(k_max, l_max, cells)


def _read_tie(r: _Reader) -> TieTree:
    h = r.count("vector count")
    z = r.count("topic count")
    vectors = r.f64(h * z, "topic vectors").reshape(h, z).copy()
    leaf_size = r.one("leaf size")
    nnodes = r.count("node count")
    nodes = []
    for _ in range(nnodes):
        left, right = (int(x) for x in r.i64(2, "child links"))
        aperture = float(r.f64(1, "aperture")[0])
        axis = r.f64(z, "axis").copy()
        size = r.count("member count")
        nodes.append(TieNode(r.ids(size, "members"), axis, aperture, left, right))
    ntab = r.count("table count")
    tables = {}
    for _ in range(ntab):
        g, theta, seed, n = (int(x) for x in r.u64(4, "table header"))
        if n > len(r.data):
            raise IndexFormatError(f"corrupt index: table length {n} exceeds the file")
        scores = r.f64(n, "influence scores")
        tables[g] = InfluenceTable(scores, theta, tuple(vectors[g].tolist()) if g < h else None, seed)
    return TieTree(vectors, nodes, tables, leaf_size)


def parse_index(data: bytes) -> TamicsIndex:
    r = _Reader(data)
    magic = bytes(r.take(8, "magic"))
    if magic != MAGIC:
        raise IndexFormatError(f"not an index file (magic {magic!r})")
    version = r.one("version")
    if version != VERSION:
        raise IndexFormatError(f"unsupported index version {version} (expected {VERSION})")
    n, m, digest, fcode = (int(x) for x in r.u64(4, "header"))
    alpha, eps, delta = (float(x) for x in r.f64(3, "header"))
    h, leaf_size, seed = (int(x) for x in r.u64(3, "header"))
    try:
        f = NormalizationFn.from_code(fcode)
    except (ValueError, IndexError):
        raise IndexFormatError(f"unknown normalization code {fcode}") from None
    meta = IndexMeta((n, m, digest), f, alpha, eps, delta, h, leaf_size, seed, version)
    sections = {}
    for tag in (TUC_TAG, TIE_TAG):
        got = bytes(r.take(8, "section tag"))
        if got != tag:
            raise IndexFormatError(f"expected section {tag!r} at byte offset {r.pos - 8}, found {got!r}")
        length = r.one("section length")
        start = r.pos
        name = tag.rstrip(b"\0").decode()
        body = r.take(length, f"section {name}")
        sections[tag] = _Reader(bytes(body), base=start)
    tuc = _read_tuc(sections[TUC_TAG])
    tie = _read_tie(sections[TIE_TAG])
    for sub in sections.values():
        if sub.pos != len(sub.data):
            raise IndexFormatError(f"trailing bytes inside a section at byte offset {sub.base + sub.pos}")
    if r.pos != len(data):
        raise IndexFormatError(f"trailing bytes after the last section at byte offset {r.pos}")
    return TamicsIndex(meta, tuc, tie)


def check_compatible(meta: IndexMeta, net: SocialNetwork | None = None, f: NormalizationFn | str | None = None):
    if net is not None:
        fp = graph_fingerprint(net)
        if fp != meta.fingerprint:
            raise IndexMismatchError(
                "graph fingerprint mismatch: index was built for (n={}, m={}, hash={:016x}), "
                "this graph is (n={}, m={}, hash={:016x})".format(*meta.fingerprint, *fp))
    if f is not None and as_normalization(f).kind != meta.f.kind:
        raise IndexMismatchError(f"normalization mismatch: index uses {meta.f.kind}, requested {as_normalization(f).kind}")


def load_index(path: str | Path, net: SocialNetwork | None = None, f: NormalizationFn | str | None = None) -> TamicsIndex:
    """Read an index file, optionally refusing it unless it matches ``net`` and ``f``."""
    with open(path, "rb") as fh:
        data = fh.read()
    index = parse_index(data)
    check_compatible(index.meta, net, f)
    return index


__all__ = ["IndexFormatError", "IndexMismatchError", "IndexMeta", "TamicsIndex", "save_index", "load_index", "parse_index",
           "index_bytes", "check_compatible", "MAGIC", "VERSION"]
