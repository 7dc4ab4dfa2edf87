"""Command-line interface: gen, gen-images, extract, build, query, bench.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import List, Optional

import numpy as np

from . import __version__
from .bench import MODES, CrossModeMismatch, run_bench, to_json, to_tsv
from .descriptors import (
    DescriptorSet,
    HarrisParams,
    extract_descriptors,
    load_image,
    read_descriptors,
    write_descriptors,
)
from .errors import NohisError
from .pddp import DEFAULT_MIN_LEAF
from .retrieval import DEFAULT_K, SCORING, query_by_image
from .search import knn_search, range_search
from .synth import mixture_dataset, write_image_corpus
from .tree import build_nohis, build_pddp_baseline, deserialize, serialize

log = logging.getLogger("nohis")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
STATS_SCHEMA = "nohis.stats/1"
IMAGE_EXTENSIONS = (".pgm", ".png")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    data, queries, labels = mixture_dataset(args.count, args.dim, args.components, args.queries,
                                            args.spread, args.seed, args.anisotropy)
    write_descriptors(args.output, DescriptorSet.from_vectors(data, labels))
    print(f"wrote {len(data)} vectors of dimension {args.dim} to {args.output}")
    if args.queries:
        if not args.queries_output:
            raise UsageError("--queries requires --queries-output")
        write_descriptors(args.queries_output, DescriptorSet.from_vectors(queries))
        print(f"wrote {len(queries)} queries to {args.queries_output}")
    return EXIT_OK


def cmd_gen_images(args) -> int:
    paths = write_image_corpus(args.output, args.count, args.seed, args.size)
    print(f"wrote {len(paths)} images to {args.output}")
    return EXIT_OK


def _harris_params(args) -> HarrisParams:
    p = HarrisParams()
    if getattr(args, "max_points", None) is not None:
        p.max_points = args.max_points
    if getattr(args, "kappa", None) is not None:
        p.kappa = args.kappa
    if getattr(args, "scales", None):
        if min(args.scales) <= 0:
            raise UsageError("--scales must be positive")
        p.scales = list(args.scales)
    return p


def list_images(directory: str) -> List[str]:
    names = sorted(n for n in os.listdir(directory)
                   if n.lower().endswith(IMAGE_EXTENSIONS))
    return [os.path.join(directory, n) for n in names]


def cmd_extract(args) -> int:
    if not os.path.isdir(args.images):
        print(f"error: cannot read image directory {args.images}", file=sys.stderr)
        return EXIT_DATA
    paths = list_images(args.images)
    if not paths:
        _warn(f"no .pgm/.png images in {args.images}")
    params = _harris_params(args)
    t0 = time.perf_counter()
    ex = extract_descriptors(list(enumerate(paths)), params, jobs=args.jobs)
    elapsed = time.perf_counter() - t0
    for image_id, msg in ex.failures:
        _warn(f"{paths[image_id]}: {msg}")
    write_descriptors(args.output, ex.descriptors)
    for image_id, path in enumerate(paths):
        if image_id in ex.counts:
            print(f"{image_id}\t{os.path.basename(path)}\t{ex.counts[image_id]}")
    print(f"# {len(ex.descriptors)} descriptors from {len(ex.counts)} images "
          f"({len(ex.failures)} failed) in {elapsed:.2f}s")
    return EXIT_OK


def cmd_build(args) -> int:
    dset = read_descriptors(args.input)
    if len(dset) == 0:
        print("error: descriptor file is empty", file=sys.stderr)
        return EXIT_DATA
    if np.all(dset.vectors == dset.vectors[0]):
        _warn("all descriptors are identical; index has a single leaf")
    builder = build_pddp_baseline if args.baseline == "pddp" else build_nohis
    t0 = time.perf_counter()
    tree = builder(dset.vectors, dset.image_ids, args.cmax, args.min_leaf, dset.global_indices)
    elapsed = time.perf_counter() - t0
    serialize(tree, args.output)
    print(f"leaves\t{tree.leaf_count}")
    print(f"depth\t{tree.depth()}")
    print(f"descriptors\t{tree.descriptor_count}")
    print(f"build_time_s\t{elapsed:.3f}")
    return EXIT_OK


def _print_neighbors(rows, header: Optional[str]) -> None:
    if header:
        print(header)
    for rank, nb in enumerate(rows, 1):
        print(f"{rank}\t{nb.index}\t{np.sqrt(nb.sq_dist):.6f}\t{nb.cluster}\t{nb.image_id}")


def cmd_query(args) -> int:
    tree = deserialize(args.index)
    if args.image:
        img = load_image(args.image)
        ranking = query_by_image(tree, img, args.k, args.top, scoring=args.scoring)
        for rank, e in enumerate(ranking.entries, 1):
            print(f"{rank}\t{e.image_id}\t{e.score:.6f}\t{e.supporting_matches}")
        if args.stats:
            out = {"schema": STATS_SCHEMA, "query_descriptors": ranking.query_descriptors,
                   "leaf_count": tree.leaf_count, **ranking.stats.as_dict()}
            print(json.dumps(out, sort_keys=True))
        return EXIT_OK

    queries = read_descriptors(args.vector)
    if queries.dimension != tree.dimension:
        print(f"error: query dimension {queries.dimension} != index dimension {tree.dimension}",
              file=sys.stderr)
        return EXIT_DATA
    multi = len(queries) > 1
    for i, q in enumerate(queries.vectors):
        header = f"# query {i}" if multi else None
        if args.range is not None:
            rows, stats = range_search(tree, q, args.range)
        else:
            nl, stats = knn_search(tree, q, args.k)
            rows = nl.entries()
        _print_neighbors(rows, header)
        if stats.leaves_visited > tree.leaf_count:
            print("error: visited more leaves than the index holds", file=sys.stderr)
            return EXIT_INTERNAL
        if args.stats:
            out = {"schema": STATS_SCHEMA, "query": i, "leaf_count": tree.leaf_count,
                   **stats.as_dict()}
            print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        raise UsageError(f"unknown modes {bad}; choose from {','.join(MODES)}")
    data = read_descriptors(args.input)
    queries = read_descriptors(args.queries)
    if len(data) == 0:
        print("error: descriptor file is empty", file=sys.stderr)
        return EXIT_DATA
    if queries.dimension != data.dimension:
        print(f"error: query dimension {queries.dimension} != data dimension {data.dimension}",
              file=sys.stderr)
        return EXIT_DATA
    try:
        reports = run_bench(data.vectors, queries.vectors, args.k, modes, args.repeat,
                            args.cmax, args.min_leaf, data.image_ids)
    except CrossModeMismatch as exc:
        print(f"error: exact searchers disagree\n{exc}", file=sys.stderr)
        return EXIT_INTERNAL
    print(to_tsv(reports))
    blob = json.dumps(to_json(reports), sort_keys=True)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(blob + "\n")
    else:
        print(blob)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nohis", description="NOHIS-tree indexing and exact k-NN search")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a seeded Gaussian-mixture vector file (NOHV)")
    g.add_argument("--output", required=True)
    g.add_argument("--count", type=int, default=50_000)
    g.add_argument("--dim", type=int, default=12)
    g.add_argument("--components", type=int, default=50)
    g.add_argument("--spread", type=float, default=1.0)
    g.add_argument("--anisotropy", type=float, default=None,
                   help="per-axis std decay factor for randomly rotated components")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--queries", type=int, default=0, help="also draw this many held-out queries")
    g.add_argument("--queries-output")
    g.set_defaults(func=cmd_gen)

    gi = sub.add_parser("gen-images", help="write a seeded synthetic PGM image corpus")
    gi.add_argument("--output", required=True)
    gi.add_argument("--count", type=int, default=50)
    gi.add_argument("--size", type=int, default=256)
    gi.add_argument("--seed", type=int, default=0)
    gi.set_defaults(func=cmd_gen_images)

    e = sub.add_parser("extract", help="extract 12-d Zernike descriptors from a directory of images")
    e.add_argument("--images", required=True)
    e.add_argument("--output", required=True)
    e.add_argument("--max-points", type=int)
    e.add_argument("--kappa", type=float)
    e.add_argument("--scales", type=float, nargs="+", help="Gaussian scale ladder (default 1.6 * 1.35^i, i = 0..4)")
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(func=cmd_extract)

    b = sub.add_parser("build", help="build a NOHI index from a NOHV file")
    b.add_argument("--input", required=True)
    b.add_argument("--output", required=True)
    b.add_argument("--cmax", type=int, default=None, help="leaf budget (default: count / 500)")
    b.add_argument("--min-leaf", type=int, default=DEFAULT_MIN_LEAF)
    b.add_argument("--baseline", choices=["pddp"], help="build the unoriented PDDP-tree instead")
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="k-NN / range query against an index")
    q.add_argument("--index", required=True)
    src = q.add_mutually_exclusive_group(required=True)
    src.add_argument("--vector", help="NOHV file of query vectors")
    src.add_argument("--image", help="query image (PGM/PNG)")
    q.add_argument("-k", type=int, default=DEFAULT_K)
    q.add_argument("--range", type=float, help="radius for a range query (vector mode)")
    q.add_argument("--top", type=int, default=10, help="images to list (image mode)")
    q.add_argument("--scoring", choices=SCORING, default="kernel")
    q.add_argument("--stats", action="store_true")
    q.set_defaults(func=cmd_query)

    be = sub.add_parser("bench", help="compare nohis, pddp and scan on the same queries")
    be.add_argument("--input", required=True)
    be.add_argument("--queries", required=True)
    be.add_argument("-k", type=int, default=DEFAULT_K)
    be.add_argument("--modes", default=",".join(MODES))
    be.add_argument("--repeat", type=int, default=3)
    be.add_argument("--cmax", type=int, default=None)
    be.add_argument("--min-leaf", type=int, default=DEFAULT_MIN_LEAF)
    be.add_argument("--json", help="write the JSON report here instead of stdout")
    be.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("k", "top", "repeat", "min_leaf", "jobs", "cmax", "count"):
        val = getattr(args, name, None)
        if val is not None and val < 1:
            parser.error(f"--{name.replace('_', '-')} must be >= 1")
    if getattr(args, "range", None) is not None and args.range < 0:
        parser.error("--range must be >= 0")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"nohis: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NohisError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
