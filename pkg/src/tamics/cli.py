"""Command-line entry point: ``tamics gen | index | query | bench | verify``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph_model import (GraphFormatError, NormalizationFn, SocialNetwork, check_topic_vector, community_stats,
                          edge_density, load_social_network, save_social_network)
from .influence import SampleParams, community_influence, estimate_influence, resolve_threads
from .query import FOUND, STAGES, QueryRequest, QueryResult, indexed_query, online_query

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_ORACLE = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class RunConfig:
    graph: str | None
    f: NormalizationFn
    params: SampleParams
    threads: int
    index: str | None
    fmt: str
    running_example: bool = False


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list, np.ndarray)):
        return ",".join(_fmt(x) for x in v) if len(v) else "-"
    if v is None:
        return "na"
    return str(v)


def format_record(fields: dict) -> str:
    """One ``key=value`` line; list values are comma-joined, empty lists print as ``-``."""
    return " ".join(f"{k}={_fmt(v)}" for k, v in fields.items())


def parse_record(line: str) -> dict[str, str]:
    out = {}
    for tok in line.split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise ValueError(f"not a key=value token: {tok!r}")
        out[key] = val
    return out


def parse_records(text: str) -> list[dict[str, str]]:
    return [parse_record(ln) for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def _emit(fields: dict, fmt: str, human: str | None = None):
    if fmt == "machine" or human is None:
        print(format_record(fields))
    else:
        print(human)


# ---------------------------------------------------------------------------
# argument handling


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def _add_common(p: argparse.ArgumentParser, *, graph: bool = True, sampling: bool = True):
    if graph:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--graph", help="graph file (text format: 'n m z' header, then 'src dst w1..wz' lines)")
        src.add_argument("--running-example", action="store_true", help="use the bundled six-vertex network")
        p.add_argument("--f", choices=NormalizationFn.KINDS, default="clamp",
                       help="normalization of <w, q> into a probability (default: clamp)")
    if sampling:
        p.add_argument("--alpha", type=float, default=1.0,
                       help="activation scaling factor in (0, 1] (not fixed by the method; default 1.0)")
        p.add_argument("--eps", type=float, default=0.1,
                       help="influence error bound as a fraction of n (not fixed by the method; default 0.1)")
        p.add_argument("--delta", type=float, default=0.1,
                       help="failure probability of the error bound (not fixed by the method; default 0.1)")
        p.add_argument("--threads", type=_positive_int, default=None,
                       help="worker threads (default: $TAMICS_THREADS, else all cores)")
    p.add_argument("--seed", type=_seed, default=0, help="random seed (default 0)")
    p.add_argument("--format", dest="fmt", choices=("human", "machine"), default="human",
                   help="human-readable text or key=value lines")


def _config(args) -> RunConfig:
    try:
        params = SampleParams(args.eps, args.delta, args.alpha, args.seed)
        threads = resolve_threads(args.threads)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    graph = getattr(args, "graph", None)
    running = getattr(args, "running_example", False)
    if graph is None and not running:
        raise CliError("a graph is required: pass --graph FILE or --running-example")
    return RunConfig(graph, NormalizationFn(args.f), params, threads, getattr(args, "index", None), args.fmt,
                     running)


def _load_graph(cfg: RunConfig) -> SocialNetwork:
    if cfg.running_example:
        from .testkit import running_example
        return running_example()
    return load_social_network(cfg.graph)


def _parse_q(text: str, z: int) -> np.ndarray:
    try:
        q = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise CliError(f"cannot parse topic vector {text!r}") from None
    try:
        return check_topic_vector(q, z)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def read_query_batch(path: str, z: int) -> list[tuple[int, int, float, np.ndarray]]:
    """Batch file: one ``k l eta q1 .. qz`` line per query; ``#`` starts a comment."""
    out = []
    for no, line in enumerate(Path(path).read_text().splitlines(), 1):
        toks = line.split("#", 1)[0].split()
        if not toks:
            continue
        if len(toks) != z + 3:
            raise CliError(f"{path}:{no}: expected 'k l eta' plus {z} topic weights, got {len(toks)} fields")
        try:
            k, l, eta = int(toks[0]), int(toks[1]), float(toks[2])
            q = check_topic_vector([float(t) for t in toks[3:]], z)
        except ValueError as exc:
            raise CliError(f"{path}:{no}: {exc}") from None
        out.append((k, l, eta, q))
    return out


def _request(k, l, eta, q, cfg, mode) -> QueryRequest:
    try:
        return QueryRequest(tuple(q), k, l, eta, cfg.params, mode)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _load_index(cfg: RunConfig, net: SocialNetwork):
    from .index import load_index

    if cfg.index is None:
        raise CliError("indexed mode needs --index FILE (build one with 'tamics index')")
    idx = load_index(cfg.index, net, cfg.f)
    if idx.meta.alpha != cfg.params.alpha:
        raise CliError(f"index was built with alpha={idx.meta.alpha}, query asks for alpha={cfg.params.alpha}")
    return idx


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    from .testkit import gen_synthetic

    try:
        net = gen_synthetic(args.n, args.avg_degree, args.z, args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    save_social_network(net, args.out)
    _emit({"n": net.n, "m": net.m, "z": net.z, "path": args.out}, args.fmt,
          f"wrote {args.out}: n={net.n} m={net.m} z={net.z}")
    return EXIT_OK


def cmd_index(args) -> int:
    from .index import build_index, save_index

    cfg = _config(args)
    net = _load_graph(cfg)
    samples = None
    if args.samples:
        try:
            samples = np.loadtxt(args.samples, ndmin=2)
        except ValueError as exc:
            raise CliError(f"{args.samples}: {exc}") from None
    try:
        idx = build_index(net, cfg.f, cfg.params, h=args.h, leaf_size=args.leaf_size, samples=samples,
                          threads=cfg.threads)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    size = save_index(idx, args.out)
    from .index.storage import _tie_payload, _tuc_payload

    tuc, tie = idx.tuc, idx.tie
    rows = [
        {"structure": "tuc", "k_max": tuc.k_max, "l_max": tuc.l_max, "cells": len(tuc.cells),
         "entries": tuc.vertex_entries(), "bytes": len(_tuc_payload(tuc)), "build_s": round(tuc.build_seconds, 6)},
        {"structure": "tie", "vectors": tie.h, "nodes": len(tie.nodes), "leaves": len(tie.leaves()),
         "tables": len(tie.tables), "bytes": len(_tie_payload(tie)), "build_s": round(tie.build_seconds, 6)},
        {"structure": "file", "path": args.out, "bytes": size},
    ]
    if args.no_timing:
        for r in rows:
            r.pop("build_s", None)
    for r in rows:
        _emit(r, cfg.fmt, "  ".join(f"{k}={_fmt(v)}" for k, v in r.items()))
    return EXIT_OK


def _result_fields(i: int, req: QueryRequest, res: QueryResult, net, cfg, stats: bool, timing: bool) -> dict:
    fields = {"query": i, "mode": res.mode, "k": req.k, "l": req.l, "eta": req.eta, "status": res.status,
              "vertices": list(res.vertices),
              "influence": res.community.influence if res.found else None}
    if stats:
        if res.found:
            st = community_stats(res.community, res.graph, net, req.q, cfg.f)
            fields["density"] = st.density
            fields["similarity"] = st.similarity
        else:
            fields["density"] = fields["similarity"] = None
    if res.topic is not None:
        fields["topic"] = list(res.topic)
    if timing:
        for s in STAGES:
            fields[f"t_{s}"] = round(res.timings[s], 6)
        fields["t_total"] = round(sum(res.timings.values()), 6)
    return fields


def _human_result(f: dict) -> str:
    head = f"query {f['query']} [{f['mode']}] k={f['k']} l={f['l']} eta={f['eta']}: {f['status']}"
    if f["status"] == FOUND:
        head += f"\n  vertices: {' '.join(str(v) for v in f['vertices'])}\n  influence: {f['influence']:.6g}"
    for key in ("density", "similarity"):
        if key in f:
            head += f"\n  {key}: {_fmt(f[key])}"
    if "t_total" in f:
        head += "\n  time: " + " ".join(f"{s}={f['t_' + s]:.4f}s" for s in STAGES) + f" total={f['t_total']:.4f}s"
    return head


def _run(net, req, cfg, idx):
    if req.mode == "indexed":
        return indexed_query(net, req, idx.tuc, idx.tie, cfg.f)
    return online_query(net, req, cfg.f, threads=cfg.threads)


def cmd_query(args) -> int:
    cfg = _config(args)
    if (args.q is None) == (args.queries is None):
        raise CliError("give exactly one of --q or --queries")
    net = _load_graph(cfg)
    if args.q is not None:
        batch = [(args.k, args.l, args.eta, _parse_q(args.q, net.z))]
    else:
        batch = read_query_batch(args.queries, net.z)
    idx = _load_index(cfg, net) if args.mode == "indexed" else None
    for i, (k, l, eta, q) in enumerate(batch):
        req = _request(k, l, eta, q, cfg, args.mode)
        res = _run(net, req, cfg, idx)
        fields = _result_fields(i, req, res, net, cfg, args.stats, not args.no_timing)
        _emit(fields, cfg.fmt, _human_result(fields))
    return EXIT_OK


def _ratio(a: float, b: float) -> float | None:
    return a / b if b else None


def cmd_bench(args) -> int:
    cfg = _config(args)
    net = _load_graph(cfg)
    if args.queries is not None:
        batch = read_query_batch(args.queries, net.z)
    else:
        rng = np.random.default_rng(cfg.params.seed)
        batch = []
        for _ in range(args.count):
            q = rng.dirichlet(np.ones(net.z))
            batch.append((args.k, args.l, args.eta, q / q.sum()))
    both = args.mode == "both"
    idx = _load_index(cfg, net) if both and batch else None
    modes = ("online", "indexed") if both else ("online",)
    sums = {m: dict.fromkeys(STAGES, 0.0) for m in modes}
    quality = {"influence": [], "density": [], "size": []}
    found = dict.fromkeys(modes, 0)
    for k, l, eta, q in batch:
        results = {}
        for m in modes:
            res = _run(net, _request(k, l, eta, q, cfg, m), cfg, idx)
            results[m] = res
            found[m] += res.found
            for s in STAGES:
                sums[m][s] += res.timings[s]
        if both and results["online"].found and results["indexed"].found:
            on, ix = results["online"], results["indexed"]
            g = on.graph
            # judge both answers under the same (online) influence estimate
            table = estimate_influence(g, cfg.params, threads=cfg.threads)
            quality["influence"].append(_ratio(community_influence(table, ix.vertices),
                                               community_influence(table, on.vertices)))
            quality["density"].append(_ratio(edge_density(ix.vertices, g), edge_density(on.vertices, g)))
            quality["size"].append(len(ix.vertices) / len(on.vertices))

    nq = len(batch)
    _emit({"queries": nq, "modes": "+".join(modes), **{f"found_{m}": found[m] for m in modes}}, cfg.fmt,
          f"{nq} queries, modes: {', '.join(modes)}; found " + ", ".join(f"{m}={found[m]}" for m in modes))
    if nq == 0:
        return EXIT_OK
    rows = []
    for s in (*STAGES, "total"):
        row = {"stage": s}
        for m in modes:
            tot = sum(sums[m].values()) if s == "total" else sums[m][s]
            row[f"{m}_mean_s"] = round(tot / nq, 6)
        if both:
            row["speedup"] = _ratio(row["online_mean_s"], row["indexed_mean_s"])
            if row["speedup"] is not None:
                row["speedup"] = round(row["speedup"], 3)
        rows.append(row)
    if not args.no_timing:
        if cfg.fmt == "human":
            cols = list(rows[0])
            print("  ".join(f"{c:>16}" for c in cols))
            for r in rows:
                print("  ".join(f"{_fmt(r[c]):>16}" for c in cols))
        else:
            for r in rows:
                print(format_record(r))
    if both:
        qrow = {"quality": "indexed/online", "compared": len(quality["size"])}
        for key, vals in quality.items():
            vals = [v for v in vals if v is not None]
            qrow[f"{key}_ratio"] = round(float(np.mean(vals)), 6) if vals else None
        _emit(qrow, cfg.fmt, "quality (indexed/online, mean over queries answered by both): "
              + " ".join(f"{k}={_fmt(v)}" for k, v in qrow.items() if k != "quality"))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .testkit import run_oracle_suite

    try:
        checks = run_oracle_suite(args.cases, args.seed, args.inject_fault)
        failed = 0
        for r in checks:
            failed += not r.passed
            fields = {"property": r.name, "result": "pass" if r.passed else "fail", "cases": r.cases,
                      "failures": r.failures}
            if r.detail and not r.passed:
                fields["detail"] = r.detail.replace(" ", "_")
            human = f"{'PASS' if r.passed else 'FAIL'}  {r.name}  ({r.failures} failures in {r.cases} cases)"
            if r.detail and not r.passed:
                human += f"\n      {r.detail}"
            _emit(fields, args.fmt, human)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return EXIT_ORACLE if failed else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tamics",
                                     description="Topic-aware most influential community search on uncertain graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic network")
    p.add_argument("--n", type=int, required=True, help="vertex count (at least 2)")
    p.add_argument("--avg-degree", type=float, default=10.0, help="expected out-degree (default 10)")
    p.add_argument("--z", type=int, required=True, help="topic count (at least 1)")
    p.add_argument("--out", required=True, help="output graph file")
    _add_common(p, graph=False, sampling=False)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("index", help="build the threshold lists and the topic tree")
    _add_common(p)
    p.add_argument("--out", required=True, help="output index file")
    p.add_argument("--h", type=_positive_int, default=1000, help="number of representative topic vectors")
    p.add_argument("--leaf-size", type=_positive_int, default=5, help="tree leaf capacity (default 5)")
    p.add_argument("--samples", help="file of sample topic vectors, one per line (default: Dirichlet(1) draws)")
    p.add_argument("--no-timing", action="store_true", help="omit build times")
    p.set_defaults(func=cmd_index)

    def query_flags(p):
        p.add_argument("--index", help="index file (needed for indexed mode)")
        p.add_argument("--k", type=_positive_int, default=2, help="in-degree bound (default 2)")
        p.add_argument("--l", type=_positive_int, default=5, help="out-degree bound (default 5)")
        p.add_argument("--eta", type=float, default=0.2, help="probability threshold in (0, 1] (default 0.2)")
        p.add_argument("--queries", help="batch file, one 'k l eta q1 .. qz' line per query")
        p.add_argument("--no-timing", action="store_true", help="omit timing fields (byte-stable output)")

    p = sub.add_parser("query", help="answer one query or a batch")
    _add_common(p)
    query_flags(p)
    p.add_argument("--q", help="topic vector, comma-separated, summing to 1")
    p.add_argument("--mode", choices=("online", "indexed"), default="online")
    p.add_argument("--stats", action="store_true", help="also report edge density and topic similarity")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="time a query batch online and indexed")
    _add_common(p)
    query_flags(p)
    p.add_argument("--count", type=int, default=100, help="random Dirichlet queries when --queries is absent")
    p.add_argument("--mode", choices=("both", "online"), default="both",
                   help="'online' skips the index and the speedup column")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="cross-check the algorithms against brute-force oracles")
    p.add_argument("--cases", type=_positive_int, default=50, help="random instances per property (default 50)")
    p.add_argument("--inject-fault", choices=("dp",), default=None,
                   help="deliberately break a component to test the harness")
    _add_common(p, graph=False, sampling=False)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    from .index.storage import IndexFormatError, IndexMismatchError

    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "count", 0) < 0:
        parser.error("--count must be nonnegative")
    try:
        code = args.func(args)
    except CliError as exc:
        print(f"tamics: error: {exc}", file=sys.stderr)
        code = exc.code
    except IndexMismatchError as exc:
        print(f"tamics: error: {exc}", file=sys.stderr)
        code = EXIT_VALIDATION
    except (GraphFormatError, IndexFormatError, OSError) as exc:
        print(f"tamics: error: {exc}", file=sys.stderr)
        code = EXIT_IO
    except ValueError as exc:
        print(f"tamics: error: {exc}", file=sys.stderr)
        code = EXIT_VALIDATION
    sys.stdout.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
