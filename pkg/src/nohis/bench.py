"""Query benchmark over NOHIS-tree, the PDDP baseline and a sequential scan."""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .pddp import DEFAULT_MIN_LEAF
from .search import NeighborList, SequentialScan, knn_search, same_neighbors
from .tree import NohisTree, build_nohis, build_pddp_baseline

MODES = ("nohis", "pddp", "scan")
BENCH_SCHEMA = "nohis.bench/1"


class CrossModeMismatch(AssertionError):
    """Two exact searchers disagreed; a correctness failure, not noise."""


@dataclass
class BenchReport:
    mode: str
    dataset_size: int
    cluster_count: Optional[int]
    mean_query_time: float               # seconds
    mean_leaves_visited: Optional[float]
    k: int
    query_count: int
    build_time: Optional[float] = None   # seconds

    def as_dict(self) -> dict:
        return asdict(self)


def build_searchers(data, image_ids=None, modes: Sequence[str] = MODES, c_max=None,
                    min_leaf: int = DEFAULT_MIN_LEAF, global_indices=None):
    """Returns {mode: (searcher, build seconds)}."""
    out = {}
    for mode in modes:
        t0 = time.perf_counter()
        if mode == "nohis":
            s = build_nohis(data, image_ids, c_max, min_leaf, global_indices)
        elif mode == "pddp":
            s = build_pddp_baseline(data, image_ids, c_max, min_leaf, global_indices)
        elif mode == "scan":
            s = SequentialScan(data, image_ids, global_indices)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        out[mode] = (s, time.perf_counter() - t0)
    return out


def _run_query(searcher, q, k):
    if isinstance(searcher, NohisTree):
        return knn_search(searcher, q, k)
    return searcher.knn(q, k), None


def run_bench(data, queries, k: int = 20, modes: Sequence[str] = MODES, repeat: int = 3,
              c_max=None, min_leaf: int = DEFAULT_MIN_LEAF, image_ids=None,
              searchers: Optional[Dict] = None) -> List[BenchReport]:
    """Time every mode on the same queries and check they return the same neighbors.

    Per-query time is the median over ``repeat`` passes; reports carry
    the mean over queries. Raises :class:`CrossModeMismatch` if any two
    modes disagree on a query.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if searchers is None:
        searchers = build_searchers(data, image_ids, modes, c_max, min_leaf)
    reports = []
    results: Dict[str, List[NeighborList]] = {}
    for mode in modes:
        searcher, build_time = searchers[mode]
        times = np.empty((repeat, len(queries)))
        lists, leaves = [], []
        for r in range(repeat):
            for i, q in enumerate(queries):
                t0 = time.perf_counter()
                nl, stats = _run_query(searcher, q, k)
                times[r, i] = time.perf_counter() - t0
                if r == 0:
                    lists.append(nl)
                    if stats is not None:
                        leaves.append(stats.leaves_visited)
        results[mode] = lists
        per_query = np.median(times, axis=0)
        is_tree = isinstance(searcher, NohisTree)
        reports.append(BenchReport(
            mode=mode,
            dataset_size=int(np.asarray(data).shape[0]),
            cluster_count=searcher.leaf_count if is_tree else None,
            mean_query_time=float(per_query.mean()) if len(queries) else 0.0,
            mean_leaves_visited=float(statistics.fmean(leaves)) if is_tree and leaves else None,
            k=k,
            query_count=len(queries),
            build_time=build_time,
        ))
    ref_mode = modes[0]
    for mode in modes[1:]:
        for i, (a, b) in enumerate(zip(results[ref_mode], results[mode])):
            why = same_neighbors(a, b)
            if why is not None:
                raise CrossModeMismatch(
                    f"query {i}: {ref_mode} vs {mode}: {why}\n"
                    f"  {ref_mode}: {a.entries()}\n  {mode}: {b.entries()}")
    return reports


def ratios(reports: Sequence[BenchReport]) -> dict:
    by = {r.mode: r for r in reports}
    out = {}
    if "nohis" in by and "scan" in by and by["nohis"].mean_query_time > 0:
        out["scan_over_nohis_time"] = by["scan"].mean_query_time / by["nohis"].mean_query_time
    if "nohis" in by and "pddp" in by:
        if by["nohis"].mean_query_time > 0:
            out["pddp_over_nohis_time"] = by["pddp"].mean_query_time / by["nohis"].mean_query_time
        if by["pddp"].mean_leaves_visited:
            out["nohis_over_pddp_leaves"] = (by["nohis"].mean_leaves_visited
                                             / by["pddp"].mean_leaves_visited)
    return out


def to_tsv(reports: Sequence[BenchReport]) -> str:
    cols = ["mode", "dataset_size", "cluster_count", "mean_query_time_ms",
            "mean_leaves_visited", "k", "query_count"]
    lines = ["\t".join(cols)]
    for r in reports:
        lines.append("\t".join([
            r.mode, str(r.dataset_size),
            "-" if r.cluster_count is None else str(r.cluster_count),
            f"{r.mean_query_time * 1e3:.4f}",
            "-" if r.mean_leaves_visited is None else f"{r.mean_leaves_visited:.2f}",
            str(r.k), str(r.query_count),
        ]))
    return "\n".join(lines)


def to_json(reports: Sequence[BenchReport]) -> dict:
    return {"schema": BENCH_SCHEMA, "reports": [r.as_dict() for r in reports],
            "ratios": ratios(reports)}
