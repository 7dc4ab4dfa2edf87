"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or execute this
file); the lines are repeated in the terminal summary.
"""

import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS
from nohis.bench import ratios, run_bench
from nohis.descriptors import (
    DESCRIPTOR_DIM,
    GrayImage,
    extract_descriptors,
    harris_multiscale,
    load_image,
    zernike_moments,
)
from nohis.linalg import make_reflection, reflect
from nohis.retrieval import DEFAULT_K, query_by_image
from nohis.search import (
    SequentialScan,
    brute_force_knn,
    chain_bound,
    knn_search,
    range_search,
    same_neighbors,
)
from nohis.synth import mixture_dataset, write_image_corpus
from nohis.tree import build_nohis, build_pddp_baseline, from_bytes, to_bytes

K = 20


def record(num, title, ok, detail):
    ACCEPTANCE_RESULTS.append((num, title, bool(ok), detail))
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def exactness_setup():
    """Criterion-1 datasets and trees, shared with criteria 2, 3, 6 and 9."""
    t0 = time.perf_counter()
    data, queries, labels = mixture_dataset(50_000, dim=12, components=50, queries=200, seed=11)
    main = {
        "nohis": build_nohis(data, labels),
        "nohis_499": build_nohis(data, labels, c_max=499),
        "pddp_499": build_pddp_baseline(data, labels, c_max=499),
    }
    extra = {}
    for dim in (2, 3, 8, 32):
        d, q, l = mixture_dataset(10_000, dim=dim, components=50, queries=200, seed=100 + dim)
        extra[dim] = (d, q, build_nohis(d, l))
    return {"data": data, "queries": queries, "labels": labels, "trees": main,
            "extra": extra, "build_seconds": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def image_corpus(tmp_path_factory):
    directory = tmp_path_factory.mktemp("corpus")
    paths = write_image_corpus(directory, count=50, seed=0)
    ex = extract_descriptors(list(enumerate(paths)))
    return paths, ex


def test_criterion_01_exactness(exactness_setup):
    s = exactness_setup
    t0 = time.perf_counter()
    failures, checked = [], 0
    for name, tree in s["trees"].items():
        scan = SequentialScan(s["data"], s["labels"])
        for i, q in enumerate(s["queries"]):
            why = same_neighbors(knn_search(tree, q, K)[0], scan.knn(q, K))
            checked += 1
            if why:
                failures.append(f"{name} q{i}: {why}")
    for dim, (d, q, tree) in s["extra"].items():
        scan = SequentialScan(d)
        for i, qq in enumerate(q):
            why = same_neighbors(knn_search(tree, qq, K)[0], scan.knn(qq, K))
            checked += 1
            if why:
                failures.append(f"dim {dim} q{i}: {why}")
    total = s["build_seconds"] + time.perf_counter() - t0
    ok = not failures and total < 120
    record(1, "exactness vs brute force", ok,
           f"{checked} queries, {len(failures)} mismatches, {total:.1f}s total"
           + (f"; first: {failures[0]}" if failures else ""))


def test_criterion_02_non_overlap(exactness_setup):
    trees = list(exactness_setup["trees"].values())
    trees = [t for t in trees if t.oriented]
    trees += [t for _, _, t in exactness_setup["extra"].values()]
    nodes = violations = 0
    for tree in trees:
        for node in tree.internal_nodes():
            nodes += 1
            a, b = node.mbr_left, node.mbr_right
            separated = a.t[0] <= b.s[0] + 1e-9
            # open interiors are disjoint iff some axis has no positive-length overlap
            disjoint = np.any(np.minimum(a.t, b.t) - np.maximum(a.s, b.s) <= 0)
            violations += not (separated and disjoint)
    record(2, "non-overlap of sibling MBRs", violations == 0,
           f"{nodes} internal nodes over {len(trees)} trees, {violations} violations")


def test_criterion_03_visited_clusters(exactness_setup):
    s = exactness_setup
    nohis, pddp = s["trees"]["nohis_499"], s["trees"]["pddp_499"]
    a = np.mean([knn_search(nohis, q, K)[1].leaves_visited for q in s["queries"]])
    b = np.mean([knn_search(pddp, q, K)[1].leaves_visited for q in s["queries"]])
    ratio = a / b
    record(3, "visited-cluster reduction", a < b,
           f"leaves {nohis.leaf_count}/{pddp.leaf_count}; mean visited NOHIS {a:.2f} vs "
           f"PDDP {b:.2f}; ratio {ratio:.3f} (target <= 0.5 {'met' if ratio <= 0.5 else 'missed'})")


def test_criterion_04_speedup():
    data, queries, labels = mixture_dataset(500_000, dim=12, components=50, queries=100, seed=21)
    reports = run_bench(data, queries, k=K, repeat=3, image_ids=labels)
    by = {r.mode: r for r in reports}
    r = ratios(reports)
    speed = r["scan_over_nohis_time"]
    ok = (by["nohis"].mean_query_time < by["scan"].mean_query_time
          and by["nohis"].mean_query_time <= by["pddp"].mean_query_time)
    record(4, "speedup trend", ok,
           f"mean query ms NOHIS {by['nohis'].mean_query_time * 1e3:.2f}, "
           f"PDDP {by['pddp'].mean_query_time * 1e3:.2f}, "
           f"scan {by['scan'].mean_query_time * 1e3:.2f}; scan/NOHIS {speed:.2f}x "
           f"(target >= 2x {'met' if speed >= 2 else 'missed'}), "
           f"PDDP/NOHIS {r['pddp_over_nohis_time']:.2f}x")


def test_criterion_05_isometry_involution():
    rng = np.random.default_rng(5)
    worst = {"isometry": 0.0, "involution": 0.0, "e1": 0.0}
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(2, 33))
        u = rng.normal(size=n)
        u /= np.linalg.norm(u)
        spec = make_reflection(u)
        x, y = rng.normal(size=n) * 10, rng.normal(size=n) * 10
        e1 = np.zeros(n)
        e1[0] = 1.0
        errs = {
            "isometry": abs(np.linalg.norm(reflect(spec, x) - reflect(spec, y))
                            - np.linalg.norm(x - y)),
            "involution": np.max(np.abs(reflect(spec, reflect(spec, x)) - x)),
            "e1": np.max(np.abs(reflect(spec, e1) - u)),
        }
        for key, v in errs.items():
            worst[key] = max(worst[key], float(v))
        bad += (errs["isometry"] > 1e-12 or errs["involution"] > 1e-12 or errs["e1"] > 1e-9)
    record(5, "reflection isometry/involution", bad == 0,
           f"1000 triples, {bad} violations; worst isometry {worst['isometry']:.1e}, "
           f"involution {worst['involution']:.1e}, S(e1)-U {worst['e1']:.1e}")


def test_criterion_06_mindist_soundness(exactness_setup):
    s = exactness_setup
    rng = np.random.default_rng(6)
    candidates = [(t, s["data"]) for t in s["trees"].values()]
    candidates += [(t, d) for d, _, t in s["extra"].values()]
    path_cache = {id(t): list(t.paths()) for t, _ in candidates}
    violations, worst = 0, -np.inf
    for _ in range(1000):
        tree, data = candidates[int(rng.integers(len(candidates)))]
        paths = path_cache[id(tree)]
        path, leaf = paths[int(rng.integers(len(paths)))]
        q = data[int(rng.integers(len(data)))] + rng.normal(size=tree.dimension)
        bound, _, _ = chain_bound(path, q)
        orig = data[leaf.global_indices.astype(np.int64)]
        best = float(((orig - q) ** 2).sum(axis=1).min())
        worst = max(worst, bound - best)
        violations += bound > best + 1e-9
    record(6, "MINDIST chain soundness", violations == 0,
           f"1000 (query, leaf) pairs, {violations} violations, max(bound - min dist) {worst:.2e}")


def test_criterion_07_descriptor_contract(image_corpus):
    paths, ex = image_corpus
    dims_ok = ex.descriptors.vectors.shape[1] == DESCRIPTOR_DIM and len(ex.descriptors) > 0
    worst, checked = 0.0, 0
    for path in paths[:10]:
        img = load_image(path)
        rot = GrayImage(np.ascontiguousarray(np.rot90(img.pixels)))
        w = img.width
        for p in harris_multiscale(img)[:20]:
            r = 6.0 * p.scale
            z = zernike_moments(img, p.x, p.y, r)
            z_rot = zernike_moments(rot, p.y, w - 1 - p.x, r)
            worst = max(worst, float(np.max(np.abs(np.abs(z) - np.abs(z_rot)))))
            checked += 1
    flat = harris_multiscale(GrayImage(np.full((128, 128), 0.6)))
    ok = dims_ok and worst <= 1e-9 and checked > 0 and flat == []
    record(7, "descriptor contract", ok,
           f"{len(ex.descriptors)} descriptors of dimension {ex.descriptors.vectors.shape[1]}; "
           f"90-degree magnitude error {worst:.1e} over {checked} points; "
           f"constant image points {len(flat)}")


def test_criterion_08_self_retrieval(image_corpus):
    paths, ex = image_corpus
    d = ex.descriptors
    tree = build_nohis(d.vectors, d.image_ids)
    hits, misses = 0, []
    for image_id, path in enumerate(paths):
        ranking = query_by_image(tree, load_image(path), k=DEFAULT_K)
        if ranking.entries and ranking.entries[0].image_id == image_id:
            hits += 1
        else:
            misses.append((image_id, ranking.entries[0].image_id if ranking.entries else None))
    record(8, "self-retrieval", hits == len(paths),
           f"{hits}/{len(paths)} ranked first at k={DEFAULT_K} "
           f"({len(d)} descriptors, {tree.leaf_count} leaves)"
           + (f"; misses (query, winner): {misses}" if misses else ""))


def test_criterion_09_serialization(exactness_setup):
    s = exactness_setup
    tree = s["trees"]["nohis"]
    blob = to_bytes(tree)
    back = from_bytes(blob)
    same = sum(knn_search(tree, q, K)[0] == knn_search(back, q, K)[0]
               for q in s["queries"][:100])
    twice = to_bytes(back) == blob
    record(9, "serialization round-trip", same == 100 and twice,
           f"{same}/100 bit-identical neighbor lists; re-serialization "
           f"{'byte-identical' if twice else 'differs'} ({len(blob)} bytes)")


def test_criterion_10_range_knn_consistency():
    rng = np.random.default_rng(10)
    bad, boundary_only = [], 0
    for case in range(100):
        n = int(rng.integers(2, 13))
        m = int(rng.integers(50, 3000))
        if case % 2:
            # small integer grid: many exact distance ties
            data = rng.integers(-3, 4, size=(m, n)).astype(np.float64)
            q = rng.integers(-3, 4, size=n).astype(np.float64)
        else:
            data = rng.normal(size=(m, n)) * rng.uniform(0.1, 10)
            q = rng.normal(size=n)
        k = int(rng.integers(1, 40))
        tree = build_nohis(data, c_max=int(rng.integers(1, 30)), min_leaf=4)
        nl, _ = knn_search(tree, q, k)
        kth = float(nl.dists[-1])
        hits, _ = range_search(tree, q, kth, squared=True)
        got = {h.index for h in hits}
        if not {n_.index for n_ in nl} <= got:
            bad.append(f"case {case}: range misses a knn entry")
            continue
        if any(h.sq_dist > kth for h in hits):
            bad.append(f"case {case}: range returns an entry beyond the radius")
            continue
        ref = SequentialScan(data).range(q, kth, squared=True)
        want = {h.index for h in ref}
        if got != want:
            # only entries whose distance equals kth up to round-off may differ
            d = SequentialScan(data).sq_dists(q)
            diff = np.array(sorted(got ^ want), dtype=np.int64)
            if np.all(np.abs(d[diff] - kth) <= 1e-9 * max(kth, 1e-300)):
                boundary_only += 1
            else:
                bad.append(f"case {case}: differs from linear scan at {diff[:5].tolist()}")
    record(10, "range/knn consistency", not bad,
           f"100 cases, {len(bad)} failures, {boundary_only} differing only at round-off ties"
           + (f"; first: {bad[0]}" if bad else ""))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
