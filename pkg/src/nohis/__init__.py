"""NOHIS-tree: non-overlapping hierarchical index with exact k-NN search."""

__version__ = "0.1.0"

from .errors import NohisError
from .linalg import (
    Reflection,
    centroid,
    leading_principal_component,
    make_reflection,
    reflect,
    reflect_set,
    scatter_value,
)
from .pddp import pddp_build, split_cluster
from .search import (
    NeighborList,
    SearchStats,
    SequentialScan,
    brute_force_knn,
    knn_search,
    mindist,
    range_search,
)
from .tree import Mbr, NohisTree, build_nohis, build_pddp_baseline, deserialize, mbr_of, serialize

__all__ = [
    "NohisError", "Reflection", "centroid", "leading_principal_component", "make_reflection",
    "reflect", "reflect_set", "scatter_value", "pddp_build", "split_cluster", "NeighborList",
    "SearchStats", "SequentialScan", "brute_force_knn", "knn_search", "mindist", "range_search",
    "Mbr", "NohisTree", "build_nohis", "build_pddp_baseline", "deserialize", "mbr_of", "serialize",
]
