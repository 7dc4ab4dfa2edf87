"""Principal Direction Divisive Partitioning.

The descriptor set is bisected by the hyperplane through the centroid that
is orthogonal to the leading principal direction. Splitting always picks
the current leaf with the largest scatter, until ``c_max`` leaves exist or
nothing is left that can be split.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DegenerateClusterError, EmptyClusterError, UnbalancedSplitError
from .linalg import as_vector_set, leading_principal_component

log = logging.getLogger(__name__)

DEFAULT_MIN_LEAF = 32
DESCRIPTORS_PER_CLUSTER = 500
MIN_SCATTER = 1e-12


def default_cmax(m: int) -> int:
    """Leaf budget used when none is given: roughly one cluster per 500 descriptors."""
    return max(1, int(round(m / DESCRIPTORS_PER_CLUSTER)))


@dataclass
class Cluster:
    indices: np.ndarray           # global descriptor indices, ascending
    centroid: np.ndarray
    scatter: float
    seq: int = 0                  # creation order, tie-breaker for the priority queue
    direction: Optional[np.ndarray] = None
    pivot: Optional[float] = None
    right: Optional["Cluster"] = None
    left: Optional["Cluster"] = None

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])

    @property
    def is_leaf(self) -> bool:
        return self.right is None

    def leaves(self) -> List["Cluster"]:
        out, stack = [], [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.append(node.left)
                stack.append(node.right)
        return out


@dataclass
class SplitOutcome:
    right: Cluster
    left: Cluster
    direction: np.ndarray
    pivot: float


def make_cluster(data: np.ndarray, indices: np.ndarray, seq: int = 0) -> Cluster:
    if indices.size == 0:
        raise EmptyClusterError()
    pts = data[indices]
    w = pts.mean(axis=0)
    centered = pts - w
    scatter = float(np.einsum("ij,ij->", centered, centered))
    return Cluster(indices=indices, centroid=w, scatter=scatter, seq=seq)


def split_cluster(cluster: Cluster, data) -> SplitOutcome:
    """Bisect ``cluster``: g(d) = U.d - U.w >= 0 goes right, g < 0 goes left."""
    data = np.asarray(data, dtype=np.float64)
    if cluster.size < 2 or cluster.scatter <= 0:
        raise DegenerateClusterError()
    pts = data[cluster.indices]
    u = leading_principal_component(pts)
    pivot = float(u @ cluster.centroid)
    g = pts @ u - pivot
    right_mask = g >= 0
    n_right = int(np.count_nonzero(right_mask))
    if n_right == 0 or n_right == cluster.size:
        raise UnbalancedSplitError()
    right = make_cluster(data, cluster.indices[right_mask])
    left = make_cluster(data, cluster.indices[~right_mask])
    return SplitOutcome(right=right, left=left, direction=u, pivot=pivot)


@dataclass
class PddpHierarchy:
    root: Cluster
    dimension: int
    descriptor_count: int
    # scatter of each split node, in split order
    split_log: List[float] = field(default_factory=list)

    def leaves(self) -> List[Cluster]:
        return self.root.leaves()


def _splittable(c: Cluster, min_leaf: int) -> bool:
    return c.size >= 2 and c.size >= 2 * min_leaf and c.scatter >= MIN_SCATTER


def pddp_build(data, c_max: Optional[int] = None, min_leaf: int = DEFAULT_MIN_LEAF) -> PddpHierarchy:
    """Grow the PDDP hierarchy by always splitting the largest-scatter leaf.

    Stops at ``c_max`` leaves or when no leaf is splittable (fewer than
    ``2 * min_leaf`` members, or scatter below 1e-12).
    """
    X = as_vector_set(data)
    m = X.shape[0]
    if c_max is None:
        c_max = default_cmax(m)
    if c_max < 1 or min_leaf < 1:
        raise ValueError("c_max and min_leaf must be >= 1")

    seq = 0
    root = make_cluster(X, np.arange(m, dtype=np.int64), seq)
    hier = PddpHierarchy(root=root, dimension=X.shape[1], descriptor_count=m)
    heap = []
    if _splittable(root, min_leaf):
        heap.append((-root.scatter, root.seq, root))
    n_leaves = 1
    while n_leaves < c_max and heap:
        _, _, node = heapq.heappop(heap)
        try:
            out = split_cluster(node, X)
        except (DegenerateClusterError, UnbalancedSplitError) as exc:
            log.warning("leaving cluster of %d descriptors unsplit: %s", node.size, exc)
            continue
        node.direction, node.pivot = out.direction, out.pivot
        for child in (out.right, out.left):
            seq += 1
            child.seq = seq
            if _splittable(child, min_leaf):
                heapq.heappush(heap, (-child.scatter, child.seq, child))
        node.right, node.left = out.right, out.left
        hier.split_log.append(node.scatter)
        n_leaves += 1
    return hier
