import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nohis.errors import DimensionMismatchError
from nohis.search import (
    Neighbor,
    NeighborList,
    SequentialScan,
    brute_force_knn,
    chain_bound,
    knn_search,
    mindist,
    range_search,
    same_neighbors,
)
from nohis.tree import Mbr, build_nohis, build_pddp_baseline

UNIT = Mbr(np.array([0.0, 0.0]), np.array([1.0, 1.0]))


def independent_knn(data, q, k):
    """Second scan: full sort on (distance, index), no partial selection."""
    d = ((data - q) ** 2).sum(axis=1)
    order = sorted(range(len(d)), key=lambda i: (d[i], i))[:k]
    return [(i, d[i]) for i in order]


class TestMindist:
    def test_inside(self):
        assert mindist([0.5, 0.5], UNIT) == 0.0

    def test_on_face(self):
        assert mindist([1.0, 0.3], UNIT) == 0.0

    def test_one_axis(self):
        assert mindist([2.0, 0.5], UNIT) == pytest.approx(1.0)

    def test_corner(self):
        assert mindist([2.0, 2.0], UNIT) == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            mindist([1.0, 2.0, 3.0], UNIT)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, (10, 3), elements=st.floats(-50, 50)),
           arrays(np.float64, 3, elements=st.floats(-50, 50)))
    def test_lower_bound(self, X, q):
        r = Mbr(X.min(axis=0), X.max(axis=0))
        best = ((X - q) ** 2).sum(axis=1).min()
        assert mindist(q, r) <= best * (1 + 1e-12) + 1e-12


class TestNeighborList:
    def test_kth_infinite_until_full(self):
        nl = NeighborList(3)
        nl.offer(np.array([5], np.uint64), 0, np.array([0], np.uint32), np.array([1.0]))
        assert nl.kth == np.inf
        nl.offer(np.array([6, 7], np.uint64), 0, np.zeros(2, np.uint32), np.array([3.0, 2.0]))
        assert nl.kth == 3.0
        assert [n.index for n in nl] == [5, 7, 6]

    def test_strictly_closer_only(self):
        nl = NeighborList(1)
        nl.offer(np.array([2], np.uint64), 0, np.zeros(1, np.uint32), np.array([1.0]))
        assert nl.offer(np.array([1], np.uint64), 0, np.zeros(1, np.uint32), np.array([1.0])) == 0
        assert nl.entries()[0].index == 2

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            NeighborList(0)


class TestKnn:
    def test_dataset_of_k_vectors(self, rng):
        X = rng.normal(size=(20, 4))
        tree = build_nohis(X, c_max=4, min_leaf=2)
        nl, _ = knn_search(tree, rng.normal(size=4), 20)
        assert sorted(n.index for n in nl) == list(range(20))

    def test_stored_descriptor_head(self, trees_10k, mixture_10k):
        data = mixture_10k[0]
        for i in (0, 17, 9999):
            nl, _ = knn_search(trees_10k[0], data[i], 5)
            first = nl.entries()[0]
            assert first.sq_dist == 0.0 and first.index == i

    def test_matches_brute_force(self, trees_10k, mixture_10k):
        data, queries, labels = mixture_10k
        for tree in trees_10k:
            for q in queries:
                got, stats = knn_search(tree, q, 20)
                want = brute_force_knn(data, q, 20, labels)
                assert same_neighbors(got, want) is None
                assert stats.leaves_visited <= tree.leaf_count

    def test_cluster_and_image_ids(self, trees_10k, mixture_10k):
        tree = trees_10k[0]
        owner = {}
        for leaf in tree.leaves():
            for g in leaf.global_indices:
                owner[int(g)] = leaf.cluster_id
        nl, _ = knn_search(tree, mixture_10k[1][0], 10)
        for n in nl:
            assert n.cluster == owner[n.index]
            assert n.image_id == mixture_10k[2][n.index]

    def test_nohis_visits_fewer_leaves(self, trees_10k, mixture_10k):
        visits = [[knn_search(t, q, 20)[1].leaves_visited for q in mixture_10k[1]]
                  for t in trees_10k]
        assert np.mean(visits[0]) < np.mean(visits[1])

    def test_duplicates_tie_order(self):
        X = np.zeros((100, 3))
        X[50:] = 1.0
        tree = build_nohis(X, c_max=4, min_leaf=2)
        nl, _ = knn_search(tree, np.zeros(3), 10)
        assert [n.index for n in nl] == list(range(10))

    def test_dimension_mismatch(self, trees_10k):
        with pytest.raises(DimensionMismatchError):
            knn_search(trees_10k[0], np.zeros(3), 5)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 120), st.integers(1, 5)),
                  elements=st.floats(-20, 20, width=16)),
           st.integers(1, 15), st.integers(1, 10), st.integers(0, 2**31))
    def test_oracle_property(self, X, k, c_max, seed):
        # width=16 floats give many exact duplicates and distance ties
        q = np.random.default_rng(seed).uniform(-20, 20, X.shape[1])
        for build in (build_nohis, build_pddp_baseline):
            tree = build(X, c_max=c_max, min_leaf=2)
            got, _ = knn_search(tree, q, k)
            assert same_neighbors(got, brute_force_knn(X, q, k)) is None


class TestRange:
    def test_radius_zero_duplicates(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [3.0, 0.0]] * 10)
        tree = build_nohis(X, c_max=4, min_leaf=2)
        hits, _ = range_search(tree, [1.0, 1.0], 0.0)
        assert sorted(h.index for h in hits) == sorted(np.flatnonzero((X == 1.0).all(axis=1)))

    def test_radius_zero_stored_points(self, trees_10k, mixture_10k):
        data = mixture_10k[0]
        for i in range(0, 10_000, 97):
            hits, _ = range_search(trees_10k[0], data[i], 0.0)
            assert [(h.index, h.sq_dist) for h in hits] == [(i, 0.0)]

    def test_huge_radius(self, trees_10k, mixture_10k):
        hits, stats = range_search(trees_10k[0], mixture_10k[1][0], 1e6)
        assert len(hits) == 10_000
        assert stats.leaves_visited == trees_10k[0].leaf_count

    def test_matches_scan(self, trees_10k, mixture_10k):
        data = mixture_10k[0]
        scan = SequentialScan(data, mixture_10k[2])
        for q in mixture_10k[1][:30]:
            for r in (1.0, 2.5):
                got, _ = range_search(trees_10k[0], q, r)
                want = scan.range(q, r)
                assert [h.index for h in got] == [h.index for h in want]

    def test_negative_radius(self, trees_10k):
        with pytest.raises(ValueError):
            range_search(trees_10k[0], np.zeros(12), -1.0)


class TestChainBound:
    def test_sound(self, trees_10k, mixture_10k, rng):
        tree = trees_10k[0]
        paths = list(tree.paths())
        for q in mixture_10k[1][:20]:
            for path, leaf in paths:
                bound, q_leaf, bounds = chain_bound(path, q)
                orig = tree.original_coords(path, leaf)
                assert bound <= ((orig - q) ** 2).sum(axis=1).min() + 1e-9
                assert bounds == sorted(bounds)
                # the query expressed in the leaf frame keeps its distances
                d_leaf = ((leaf.coords - q_leaf) ** 2).sum(axis=1)
                np.testing.assert_allclose(d_leaf, ((orig - q) ** 2).sum(axis=1),
                                           rtol=1e-9, atol=1e-9)


class TestSequentialScan:
    def test_k_equals_m(self, rng):
        X = rng.normal(size=(30, 3))
        q = rng.normal(size=3)
        nl = SequentialScan(X).knn(q, 30)
        d = [n.sq_dist for n in nl]
        assert d == sorted(d) and len(d) == 30

    def test_stored_point_head(self, rng):
        X = rng.normal(size=(30, 3))
        assert SequentialScan(X).knn(X[4], 1).entries()[0] == Neighbor(4, -1, 0, 0.0)

    def test_independent_scan(self, rng):
        for _ in range(10):
            X = rng.integers(-3, 4, size=(200, 4)).astype(float)
            q = rng.integers(-3, 4, size=4).astype(float)
            got = [(n.index, n.sq_dist) for n in SequentialScan(X).knn(q, 15)]
            assert got == independent_knn(X, q, 15)


class TestSameNeighbors:
    def test_permuted_ties_accepted(self):
        a = [Neighbor(0, 0, 0, 1.0), Neighbor(1, 0, 0, 2.0)]
        b = [Neighbor(0, 0, 0, 1.0), Neighbor(2, 0, 0, 2.0)]
        assert same_neighbors(a, b) is None

    def test_different_core_rejected(self):
        a = [Neighbor(0, 0, 0, 1.0), Neighbor(1, 0, 0, 2.0)]
        b = [Neighbor(3, 0, 0, 1.0), Neighbor(1, 0, 0, 2.0)]
        assert same_neighbors(a, b) is not None

    def test_distance_mismatch(self):
        a = [Neighbor(0, 0, 0, 1.0)]
        b = [Neighbor(0, 0, 0, 1.1)]
        assert "distance" in same_neighbors(a, b)
