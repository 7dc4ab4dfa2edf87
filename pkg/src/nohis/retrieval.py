"""Query-by-image: per-descriptor k-NN followed by image-level voting."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

from .descriptors import GrayImage, HarrisParams, image_descriptors
from .errors import DimensionMismatchError, FeaturelessQueryError
from .search import NeighborList, SearchStats, knn_search
from .tree import NohisTree

DEFAULT_K = 20
SCORING = ("kernel", "count")


class RankedImage(NamedTuple):
    image_id: int
    score: float
    supporting_matches: int


@dataclass
class ImageRanking:
    entries: List[RankedImage] = field(default_factory=list)
    # summed over the query's descriptors; only filled for tree searchers
    stats: Optional[SearchStats] = None
    query_descriptors: int = 0

    def image_ids(self) -> List[int]:
        return [e.image_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def query_by_vector(tree: NohisTree, q, k: int = DEFAULT_K) -> NeighborList:
    return knn_search(tree, q, k)[0]


def match_weight(sq_dist: float, scoring: str = "kernel") -> float:
    if scoring == "kernel":
        return 1.0 / (1.0 + sq_dist)
    if scoring == "count":
        return 1.0
    raise ValueError(f"unknown scoring {scoring!r}")


def rank_images(neighbor_lists, top: Optional[int] = None, scoring: str = "kernel") -> ImageRanking:
    """Sum match weights per image over all neighbor lists; highest score first.

    Ties are broken by ascending image id.
    """
    scores = defaultdict(float)
    support = defaultdict(int)
    for nl in neighbor_lists:
        for nb in nl:
            scores[nb.image_id] += match_weight(nb.sq_dist, scoring)
            support[nb.image_id] += 1
    entries = [RankedImage(i, scores[i], support[i]) for i in sorted(scores)]
    entries.sort(key=lambda e: (-e.score, e.image_id))
    if top is not None:
        entries = entries[:top]
    return ImageRanking(entries)


def query_by_image(searcher, img: GrayImage, k: int = DEFAULT_K, top: Optional[int] = 10,
                   params: Optional[HarrisParams] = None, scoring: str = "kernel") -> ImageRanking:
    """Rank indexed images against ``img``.

    ``searcher`` is a :class:`NohisTree` or anything with a ``knn(q, k)``
    method returning a NeighborList (e.g. :class:`~nohis.search.SequentialScan`).
    """
    _, vecs = image_descriptors(img, params)
    if vecs.shape[0] == 0:
        raise FeaturelessQueryError()
    dim = getattr(searcher, "dimension", vecs.shape[1])
    if dim != vecs.shape[1]:
        raise DimensionMismatchError(f"index dimension {dim} != descriptor dimension {vecs.shape[1]}")
    if isinstance(searcher, NohisTree):
        total = SearchStats()
        lists = []
        for v in vecs:
            nl, st = knn_search(searcher, v, k)
            lists.append(nl)
            total.leaves_visited += st.leaves_visited
            total.internal_nodes_visited += st.internal_nodes_visited
            total.distance_computations += st.distance_computations
            total.prunes += st.prunes
    else:
        total = None
        lists = [searcher.knn(v, k) for v in vecs]
    ranking = rank_images(lists, top, scoring)
    ranking.stats = total
    ranking.query_descriptors = int(vecs.shape[0])
    return ranking
