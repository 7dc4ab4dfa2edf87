"""Exact k-NN and range search over a NOHIS-tree, plus the sequential-scan oracle.

All distances are squared Euclidean. The k-NN descent is depth-first:
at an internal node the query is reflected into the node's frame, both
child rectangles are bounded with MINDIST, and the nearer child is
explored first. A child's bound is raised to the bound of its parent
(``maxDist``) because child rectangles are not nested inside the
parent's rectangle, and the subtree is skipped once that bound reaches
the current k-th distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, EmptyClusterError
from .linalg import as_vector, as_vector_set
from .tree import LeafNode, Mbr, NohisTree

NO_CLUSTER = -1


class Neighbor(NamedTuple):
    index: int
    cluster: int
    image_id: int
    sq_dist: float


class NeighborList:
    """Capacity-k neighbor list, ascending by (squared distance, descriptor index).

    Missing entries behave as +inf for :attr:`kth`.
    """

    __slots__ = ("k", "indices", "clusters", "image_ids", "dists")

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.indices = np.empty(0, dtype=np.uint64)
        self.clusters = np.empty(0, dtype=np.int64)
        self.image_ids = np.empty(0, dtype=np.uint32)
        self.dists = np.empty(0, dtype=np.float64)

    @property
    def kth(self) -> float:
        if self.dists.shape[0] < self.k:
            return math.inf
        return float(self.dists[-1])

    def offer(self, indices, clusters, image_ids, dists) -> int:
        """Insert the candidates strictly closer than the current k-th distance.

        Returns how many candidates passed the threshold.
        """
        keep = dists < self.kth
        n = int(np.count_nonzero(keep))
        if n == 0:
            return 0
        idx = np.concatenate([self.indices, indices[keep]])
        cl = np.concatenate([self.clusters, np.broadcast_to(clusters, dists.shape)[keep]])
        img = np.concatenate([self.image_ids, image_ids[keep]])
        d = np.concatenate([self.dists, dists[keep]])
        order = np.lexsort((idx, d))[: self.k]
        self.indices, self.clusters = idx[order], cl[order]
        self.image_ids, self.dists = img[order], d[order]
        return n

    def __len__(self) -> int:
        return int(self.dists.shape[0])

    def __iter__(self) -> Iterator[Neighbor]:
        for i in range(len(self)):
            yield Neighbor(int(self.indices[i]), int(self.clusters[i]),
                           int(self.image_ids[i]), float(self.dists[i]))

    def entries(self) -> List[Neighbor]:
        return list(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NeighborList):
            return NotImplemented
        return (self.k == other.k
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.clusters, other.clusters)
                and np.array_equal(self.image_ids, other.image_ids)
                and self.dists.tobytes() == other.dists.tobytes())

    def __repr__(self) -> str:
        return f"NeighborList(k={self.k}, entries={self.entries()!r})"


@dataclass
class SearchStats:
    leaves_visited: int = 0
    internal_nodes_visited: int = 0
    distance_computations: int = 0
    prunes: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def mindist(q_prime, r: Mbr) -> float:
    """Squared distance from ``q_prime`` to the closest point of the closed rectangle."""
    q = as_vector(q_prime)
    if q.shape != r.s.shape:
        raise DimensionMismatchError(f"query has dimension {q.shape[0]}, rectangle {r.s.shape[0]}")
    diff = q - np.clip(q, r.s, r.t)
    return float(diff @ diff)


def _check_query(tree: NohisTree, q) -> np.ndarray:
    if tree is None or tree.descriptor_count == 0:
        raise EmptyClusterError("empty tree")
    q = as_vector(q)
    if q.shape[0] != tree.dimension:
        raise DimensionMismatchError(
            f"query has dimension {q.shape[0]}, index has {tree.dimension}")
    return q


def _leaf_sq_dists(leaf: LeafNode, q: np.ndarray) -> np.ndarray:
    diff = leaf.coords - q
    return np.einsum("ij,ij->i", diff, diff)


def knn_search(tree: NohisTree, q, k: int) -> Tuple[NeighborList, SearchStats]:
    q = _check_query(tree, q)
    result = NeighborList(k)
    stats = SearchStats()
    # (node, query in the node's incoming frame, lower bound for the subtree)
    stack = [(tree.root, q, 0.0)]
    while stack:
        node, qq, bound = stack.pop()
        if bound >= result.kth:
            stats.prunes += 1
            continue
        if node.is_leaf:
            stats.leaves_visited += 1
            stats.distance_computations += node.size
            d = _leaf_sq_dists(node, qq)
            result.offer(node.global_indices, node.cluster_id, node.image_ids, d)
            continue
        stats.internal_nodes_visited += 1
        qp = node.reflection(qq)
        diff = qp - np.clip(qp, node.lo, node.hi)
        md = np.einsum("ij,ij->i", diff, diff)
        b_right = max(bound, float(md[0]))
        b_left = max(bound, float(md[1]))
        # Pushed second = popped first: nearer child (right on ties) goes last.
        if md[0] <= md[1]:
            stack.append((node.left, qp, b_left))
            stack.append((node.right, qp, b_right))
        else:
            stack.append((node.right, qp, b_right))
            stack.append((node.left, qp, b_left))
    return result, stats


def range_search(tree: NohisTree, q, radius: float, squared: bool = False
                 ) -> Tuple[List[Neighbor], SearchStats]:
    """All descriptors with squared distance <= radius**2, ascending.

    With ``squared=True``, ``radius`` is already a squared distance.
    """
    q = _check_query(tree, q)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    limit = float(radius) if squared else float(radius) ** 2
    stats = SearchStats()
    hits = []
    stack = [(tree.root, q, 0.0)]
    while stack:
        node, qq, bound = stack.pop()
        if bound > limit:
            stats.prunes += 1
            continue
        if node.is_leaf:
            stats.leaves_visited += 1
            stats.distance_computations += node.size
            d = _leaf_sq_dists(node, qq)
            sel = np.flatnonzero(d <= limit)
            for i in sel:
                hits.append(Neighbor(int(node.global_indices[i]), node.cluster_id,
                                     int(node.image_ids[i]), float(d[i])))
            continue
        stats.internal_nodes_visited += 1
        qp = node.reflection(qq)
        diff = qp - np.clip(qp, node.lo, node.hi)
        md = np.einsum("ij,ij->i", diff, diff)
        stack.append((node.left, qp, max(bound, float(md[1]))))
        stack.append((node.right, qp, max(bound, float(md[0]))))
    hits.sort(key=lambda h: (h.sq_dist, h.index))
    return hits, stats


def chain_bound(path, q) -> Tuple[float, np.ndarray, List[float]]:
    """Follow ``path`` (pairs of internal node and side, 0 = right) as the search would.

    Returns the final max-chain bound, the query expressed in the leaf's
    frame, and the bound passed down at each step.
    """
    qq = as_vector(q)
    bound = 0.0
    bounds = []
    for node, side in path:
        qq = node.reflection(qq)
        r = node.mbr_right if side == 0 else node.mbr_left
        bound = max(bound, mindist(qq, r))
        bounds.append(bound)
    return bound, qq, bounds


class SequentialScan:
    """Linear scan in the original coordinates; the exactness oracle and the slowest baseline."""

    def __init__(self, data, image_ids=None, global_indices=None):
        self.data = as_vector_set(data)
        m = self.data.shape[0]
        self.image_ids = (np.zeros(m, dtype=np.uint32) if image_ids is None
                          else np.asarray(image_ids, dtype=np.uint32))
        self.global_indices = (np.arange(m, dtype=np.uint64) if global_indices is None
                               else np.asarray(global_indices, dtype=np.uint64))
        self.dimension = self.data.shape[1]

    def sq_dists(self, q) -> np.ndarray:
        q = as_vector(q)
        if q.shape[0] != self.dimension:
            raise DimensionMismatchError(
                f"query has dimension {q.shape[0]}, data has {self.dimension}")
        diff = self.data - q
        return np.einsum("ij,ij->i", diff, diff)

    def knn(self, q, k: int) -> NeighborList:
        d = self.sq_dists(q)
        out = NeighborList(k)
        m = d.shape[0]
        if k < m:
            cut = np.partition(d, k - 1)[k - 1]
            cand = np.flatnonzero(d <= cut)
        else:
            cand = np.arange(m)
        order = cand[np.lexsort((self.global_indices[cand], d[cand]))][:k]
        out.indices = self.global_indices[order]
        out.clusters = np.full(order.shape[0], NO_CLUSTER, dtype=np.int64)
        out.image_ids = self.image_ids[order]
        out.dists = d[order]
        return out

    def range(self, q, radius: float, squared: bool = False) -> List[Neighbor]:
        limit = float(radius) if squared else float(radius) ** 2
        d = self.sq_dists(q)
        sel = np.flatnonzero(d <= limit)
        sel = sel[np.lexsort((self.global_indices[sel], d[sel]))]
        return [Neighbor(int(self.global_indices[i]), NO_CLUSTER, int(self.image_ids[i]),
                         float(d[i])) for i in sel]


def brute_force_knn(data, q, k: int, image_ids=None, global_indices=None) -> NeighborList:
    return SequentialScan(data, image_ids, global_indices).knn(q, k)


def same_neighbors(a: Sequence[Neighbor], b: Sequence[Neighbor], rtol: float = 1e-9,
                   atol: float = 1e-12) -> Optional[str]:
    """Compare two exact result lists, tolerating permutations among tied distances.

    Returns None when they agree, otherwise a short description of the
    first difference.
    """
    a, b = list(a), list(b)
    if len(a) != len(b):
        return f"length {len(a)} != {len(b)}"
    if not a:
        return None
    da = np.array([n.sq_dist for n in a])
    db = np.array([n.sq_dist for n in b])
    if not np.allclose(da, db, rtol=rtol, atol=atol):
        i = int(np.argmax(~np.isclose(da, db, rtol=rtol, atol=atol)))
        return f"distance mismatch at rank {i}: {da[i]!r} vs {db[i]!r}"
    boundary = max(da[-1], db[-1])
    cut = boundary - (rtol * boundary + atol)
    core_a = {n.index for n in a if n.sq_dist < cut}
    core_b = {n.index for n in b if n.sq_dist < cut}
    if core_a != core_b:
        return f"index sets differ: {sorted(core_a ^ core_b)[:10]}"
    return None
