"""NOHIS-tree construction and the NOHI index file format.

Each internal node stores the reflection that maps the first axis onto the
node's split direction, plus the bounding rectangles of both children
expressed in the reflected frame. Because the split hyperplane is
orthogonal to the direction, the two rectangles are separated along the
first axis and never overlap. Leaves keep descriptor coordinates in the
cumulative reflected frame of their path.

``build_pddp_baseline`` produces the same split structure with identity
reflections, i.e. axis-aligned (and generally overlapping) rectangles.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator, List, Optional, Tuple, Union

import numpy as np

from .errors import (
    BadMagicError,
    CorruptIndexError,
    DimensionMismatchError,
    TruncatedStreamError,
    VersionMismatchError,
)
from .linalg import IDENTITY, Reflection, as_vector_set, make_reflection
from .pddp import DEFAULT_MIN_LEAF, Cluster, pddp_build

MAGIC = b"NOHI"
VERSION = 1
FLAG_BASELINE = 0x1
_HEADER = struct.Struct("<4sHHIQQ")
_INTERNAL_TAG = 0
_LEAF_TAG = 1


@dataclass(eq=False)
class Mbr:
    s: np.ndarray   # per-dimension minima
    t: np.ndarray   # per-dimension maxima

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(x >= self.s - tol) and np.all(x <= self.t + tol))


def mbr_of(data) -> Mbr:
    X = as_vector_set(data)
    return Mbr(X.min(axis=0), X.max(axis=0))


class InternalNode:
    __slots__ = ("reflection", "mbr_right", "mbr_left", "right", "left",
                 "lo", "hi", "direction", "pivot")

    def __init__(self, reflection: Reflection, mbr_right: Mbr, mbr_left: Mbr,
                 direction: Optional[np.ndarray] = None, pivot: Optional[float] = None):
        self.reflection = reflection
        self.mbr_right = mbr_right
        self.mbr_left = mbr_left
        self.right = None
        self.left = None
        # row 0 = right child, row 1 = left child; lets the search bound both at once
        self.lo = np.stack([mbr_right.s, mbr_left.s])
        self.hi = np.stack([mbr_right.t, mbr_left.t])
        # split direction and threshold in this node's incoming frame; not serialized
        self.direction = direction
        self.pivot = pivot

    is_leaf = False


class LeafNode:
    __slots__ = ("coords", "global_indices", "image_ids", "cluster_id")

    def __init__(self, coords: np.ndarray, global_indices: np.ndarray,
                 image_ids: np.ndarray, cluster_id: int):
        if not (len(coords) == len(global_indices) == len(image_ids) >= 1):
            raise ValueError("leaf arrays must be aligned and non-empty")
        self.coords = coords
        self.global_indices = global_indices
        self.image_ids = image_ids
        self.cluster_id = cluster_id

    is_leaf = True

    @property
    def size(self) -> int:
        return int(self.coords.shape[0])


Node = Union[InternalNode, LeafNode]


class NohisTree:
    """Immutable index; safe for any number of concurrent readers."""

    def __init__(self, root: Node, dimension: int, descriptor_count: int,
                 leaf_count: int, oriented: bool = True):
        self.root = root
        self.dimension = dimension
        self.descriptor_count = descriptor_count
        self.leaf_count = leaf_count
        self.oriented = oriented

    def nodes(self) -> Iterator[Node]:
        """Pre-order traversal, right child before left."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.left)
                stack.append(node.right)

    def leaves(self) -> List[LeafNode]:
        return [n for n in self.nodes() if n.is_leaf]

    def internal_nodes(self) -> List[InternalNode]:
        return [n for n in self.nodes() if not n.is_leaf]

    def depth(self) -> int:
        best, stack = 0, [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if not node.is_leaf:
                stack.append((node.right, d + 1))
                stack.append((node.left, d + 1))
        return best

    def paths(self) -> Iterator[Tuple[List[Tuple[InternalNode, int]], LeafNode]]:
        """Yield each leaf with its root path as (internal node, side) pairs; side 0 = right."""
        stack = [(self.root, [])]
        while stack:
            node, path = stack.pop()
            if node.is_leaf:
                yield path, node
            else:
                stack.append((node.left, path + [(node, 1)]))
                stack.append((node.right, path + [(node, 0)]))

    def original_coords(self, path: List[Tuple[InternalNode, int]], leaf: LeafNode) -> np.ndarray:
        """Undo the reflections along ``path`` (each is its own inverse)."""
        X = leaf.coords
        for node, _ in reversed(path):
            X = node.reflection(X)
        return X

    def knn(self, q, k: int):
        from .search import knn_search
        return knn_search(self, q, k)[0]

    def range(self, q, radius: float):
        from .search import range_search
        return range_search(self, q, radius)


def _build(data, image_ids, global_indices, c_max, min_leaf, oriented: bool) -> NohisTree:
    X = as_vector_set(data)
    m, n = X.shape
    image_ids = (np.zeros(m, dtype=np.uint32) if image_ids is None
                 else np.asarray(image_ids, dtype=np.uint32))
    global_indices = (np.arange(m, dtype=np.uint64) if global_indices is None
                      else np.asarray(global_indices, dtype=np.uint64))
    if image_ids.shape != (m,) or global_indices.shape != (m,):
        raise ValueError("image_ids/global_indices must align with data")

    hier = pddp_build(X, c_max, min_leaf)

    # Work items: (cluster, coords of its members in the incoming frame,
    # reflections applied so far, parent node, side).
    root_holder: List[Node] = []
    work = [(hier.root, X, (), None, 0)]
    while work:
        cluster, coords, path, parent, side = work.pop()
        if cluster.is_leaf:
            idx = cluster.indices
            node = LeafNode(coords, global_indices[idx], image_ids[idx], -1)
        else:
            node, children = _split_node(cluster, coords, path, oriented)
            for child_side, (child, child_coords) in enumerate(children):
                work.append((child, child_coords, path + (node.reflection,), node, child_side))
        if parent is None:
            root_holder.append(node)
        elif side == 0:
            parent.right = node
        else:
            parent.left = node

    tree = NohisTree(root_holder[0], n, m, 0, oriented)
    leaf_no = 0
    for node in tree.nodes():
        if node.is_leaf:
            node.cluster_id = leaf_no
            leaf_no += 1
    tree.leaf_count = leaf_no
    return tree


def _split_node(cluster: Cluster, coords: np.ndarray, path: Tuple[Reflection, ...],
                oriented: bool):
    right_mask = np.isin(cluster.indices, cluster.right.indices, assume_unique=True)
    if oriented:
        # Carry the split direction into the local frame rather than re-running
        # the eigensolver there: the result is the same vector, and the
        # partition stays bit-identical to the baseline's.
        u = cluster.direction
        for refl in path:
            u = refl(u)
        u = u / np.linalg.norm(u)
        refl = make_reflection(u)
        w_local = coords.mean(axis=0)
        pivot = float(u @ w_local)
        local = refl(coords)
    else:
        u, refl, pivot, local = cluster.direction, IDENTITY, cluster.pivot, coords
    right_pts, left_pts = local[right_mask], local[~right_mask]
    node = InternalNode(refl, mbr_of(right_pts), mbr_of(left_pts), direction=u, pivot=pivot)
    return node, [(cluster.right, right_pts), (cluster.left, left_pts)]


def build_nohis(data, image_ids=None, c_max: Optional[int] = None,
                min_leaf: int = DEFAULT_MIN_LEAF, global_indices=None) -> NohisTree:
    """Build a NOHIS-tree over the rows of ``data``."""
    return _build(data, image_ids, global_indices, c_max, min_leaf, oriented=True)


def build_pddp_baseline(data, image_ids=None, c_max: Optional[int] = None,
                        min_leaf: int = DEFAULT_MIN_LEAF, global_indices=None) -> NohisTree:
    """Same PDDP splits as :func:`build_nohis`, axis-aligned rectangles in the original basis."""
    return _build(data, image_ids, global_indices, c_max, min_leaf, oriented=False)


# ---------------------------------------------------------------------------
# NOHI serialization

def _leaf_dtype(n: int) -> np.dtype:
    return np.dtype([("g", "<u8"), ("img", "<u4"), ("x", "<f8", (n,))])


def serialize(tree: NohisTree, sink: Union[BinaryIO, str, os.PathLike]) -> None:
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            serialize(tree, fh)
        return
    n = tree.dimension
    nodes = list(tree.nodes())
    flags = 0 if tree.oriented else FLAG_BASELINE
    sink.write(_HEADER.pack(MAGIC, VERSION, flags, n, tree.descriptor_count, len(nodes)))
    zeros = np.zeros(n, dtype="<f8")
    dt = _leaf_dtype(n)
    for node in nodes:
        if node.is_leaf:
            sink.write(struct.pack("<BIQ", _LEAF_TAG, node.cluster_id, node.size))
            rec = np.empty(node.size, dtype=dt)
            rec["g"] = node.global_indices
            rec["img"] = node.image_ids
            rec["x"] = node.coords
            sink.write(rec.tobytes())
        else:
            v = node.reflection.v
            sink.write(struct.pack("<BB", _INTERNAL_TAG, 1 if v is None else 0))
            parts = [zeros if v is None else v, node.mbr_right.s, node.mbr_right.t,
                     node.mbr_left.s, node.mbr_left.t]
            sink.write(np.concatenate(parts).astype("<f8").tobytes())


def to_bytes(tree: NohisTree) -> bytes:
    buf = io.BytesIO()
    serialize(tree, buf)
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        end = self.pos + size
        if end > len(self.data):
            raise TruncatedStreamError()
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def deserialize(source: Union[BinaryIO, bytes, str, os.PathLike],
                expected_dimension: Optional[int] = None) -> NohisTree:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, (bytes, bytearray, memoryview)):
        data = bytes(source)
    else:
        data = source.read()

    if len(data) >= 4 and data[:4] != MAGIC:
        raise BadMagicError()
    r = _Reader(data)
    magic, version, flags, n, count, node_count = r.unpack(_HEADER.format)
    if magic != MAGIC:
        raise BadMagicError()
    if version != VERSION:
        raise VersionMismatchError(f"unsupported index version {version} (expected {VERSION})")
    if n == 0:
        raise CorruptIndexError("index dimension is 0")
    if expected_dimension is not None and n != expected_dimension:
        raise DimensionMismatchError(
            f"index dimension {n} does not match expected {expected_dimension}")

    dt = _leaf_dtype(n)
    root_holder: List[Node] = []
    pending = [(None, 0)]
    leaf_count = 0
    seen = 0
    for _ in range(node_count):
        if not pending:
            raise CorruptIndexError("node records do not form a binary tree")
        parent, side = pending.pop()
        (tag,) = r.unpack("<B")
        if tag == _INTERNAL_TAG:
            (identity,) = r.unpack("<B")
            vals = np.frombuffer(r.take(5 * n * 8), dtype="<f8").astype(np.float64)
            v, sr, tr, sl, tl = (vals[i * n:(i + 1) * n] for i in range(5))
            refl = IDENTITY if identity else Reflection(v.copy())
            node = InternalNode(refl, Mbr(sr.copy(), tr.copy()), Mbr(sl.copy(), tl.copy()))
            pending.append((node, 1))
            pending.append((node, 0))
        elif tag == _LEAF_TAG:
            cluster_id, size = r.unpack("<IQ")
            if size == 0:
                raise CorruptIndexError("empty leaf")
            rec = np.frombuffer(r.take(size * dt.itemsize), dtype=dt)
            node = LeafNode(np.ascontiguousarray(rec["x"], dtype=np.float64),
                            rec["g"].astype(np.uint64), rec["img"].astype(np.uint32),
                            cluster_id)
            leaf_count += 1
            seen += size
        else:
            raise CorruptIndexError(f"unknown node tag {tag}")
        if parent is None:
            root_holder.append(node)
        elif side == 0:
            parent.right = node
        else:
            parent.left = node
    if pending or not root_holder:
        raise CorruptIndexError("node records do not form a binary tree")
    if r.pos != len(data):
        raise CorruptIndexError("trailing bytes after last node")
    if seen != count:
        raise CorruptIndexError(f"header says {count} descriptors, leaves hold {seen}")
    return NohisTree(root_holder[0], n, count, leaf_count, oriented=not (flags & FLAG_BASELINE))


def from_bytes(data: bytes, expected_dimension: Optional[int] = None) -> NohisTree:
    return deserialize(data, expected_dimension)

