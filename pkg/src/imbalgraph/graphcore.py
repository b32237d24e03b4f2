"""Immutable sparse multi-relation graph, feature, and label containers.

All containers validate on construction and freeze their numpy buffers
(read-only flags), so instances can be shared across worker threads.
"""

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

# Split tags. Stored per node as int8 codes.
TRAIN, VAL, TEST, UNLABELED = 0, 1, 2, 3
SPLIT_NAMES = {TRAIN: "train", VAL: "val", TEST: "test", UNLABELED: "unlabeled"}
SPLIT_CODES = {name: code for code, name in SPLIT_NAMES.items()}

UNLABELED_CLASS = -1  # label sentinel for nodes without a class


class GraphConstructionError(ValueError):
    """Raised when a graph, feature, or label container fails validation."""


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr:
        out = out.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CsrBlock:
    """A square sparse matrix in canonical CSR form.

    Canonical means: within each row the column indices are strictly
    increasing (so duplicates are impossible). Weights are optional;
    absent means every stored entry has weight 1.
    """

    indptr: np.ndarray
    indices: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "indptr", _frozen(self.indptr, np.int64))
        object.__setattr__(self, "indices", _frozen(self.indices, np.int64))
        if self.weights is not None:
            object.__setattr__(self, "weights", _frozen(self.weights, np.float64))
        if self.indptr.ndim != 1 or self.indices.ndim != 1:
            raise GraphConstructionError("CSR arrays must be one-dimensional")
        if len(self.indptr) < 1 or self.indptr[0] != 0:
            raise GraphConstructionError("CSR row offsets must start at 0")
        if np.any(np.diff(self.indptr) < 0):
            raise GraphConstructionError("CSR row offsets must be non-decreasing")
        if self.indptr[-1] != len(self.indices):
            raise GraphConstructionError(
                f"last row offset {self.indptr[-1]} != number of stored edges {len(self.indices)}"
            )
        if self.weights is not None and len(self.weights) != len(self.indices):
            raise GraphConstructionError("weight array length must match column indices")
        n = len(self.indptr) - 1
        if self.num_entries and (self.indices.min() < 0 or self.indices.max() >= n):
            raise GraphConstructionError("column index out of range")
        rows = self.row_ids()
        same_row = np.diff(rows) == 0
        if np.any(same_row & (np.diff(self.indices) <= 0)):
            raise GraphConstructionError("column indices not strictly increasing within a row")

    @property
    def num_entries(self) -> int:
        return int(len(self.indices))

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry, in storage order."""
        return np.repeat(np.arange(len(self.indptr) - 1), np.diff(self.indptr))

    def row(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node] : self.indptr[node + 1]]


@dataclass(frozen=True)
class SparseGraph:
    """Multi-relation graph over dense node ids 0..num_nodes-1."""

    num_nodes: int
    relations: tuple

    def __post_init__(self):
        object.__setattr__(self, "relations", tuple(self.relations))
        if self.num_nodes < 0:
            raise GraphConstructionError("num_nodes must be non-negative")
        if not self.relations:
            raise GraphConstructionError("a graph needs at least one relation block")
        for r, block in enumerate(self.relations):
            if len(block.indptr) != self.num_nodes + 1:
                raise GraphConstructionError(
                    f"relation {r}: row offsets length {len(block.indptr)} != num_nodes+1"
                )
            if np.any(block.row_ids() == block.indices):
                raise GraphConstructionError(f"relation {r}: explicit self-loop stored")

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def neighbors(self, node: int, relation: int = 0) -> np.ndarray:
        return self.relations[relation].row(node)

    def degrees(self, relation: int = 0) -> np.ndarray:
        return np.diff(self.relations[relation].indptr)

    def edges(self, relation: int = 0) -> Iterator[tuple]:
        """Yield every stored (src, dst) entry of one relation."""
        block = self.relations[relation]
        for s, d in zip(block.row_ids().tolist(), block.indices.tolist()):
            yield (s, d)

    def edge_array(self, relation: int = 0) -> np.ndarray:
        """All stored (src, dst) entries of one relation as an (E, 2) array."""
        block = self.relations[relation]
        if not block.num_entries:
            return np.empty((0, 2), np.int64)
        return np.stack([block.row_ids(), block.indices], axis=1)


def _canonical_block(num_nodes: int, src: np.ndarray, dst: np.ndarray) -> CsrBlock:
    """Dedupe, drop self-loops, sort by (src, dst), and pack as CSR."""
    keep = src != dst
    src, dst = src[keep], dst[keep]
    if len(src):
        pairs = np.unique(np.stack([src, dst], axis=1), axis=0)
        src, dst = pairs[:, 0], pairs[:, 1]
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=num_nodes), out=indptr[1:])
    return CsrBlock(indptr=indptr, indices=dst)


def graph_from_relations(num_nodes: int, relation_edges: Sequence) -> SparseGraph:
    """Build a graph from one (E, 2) src/dst array per relation, as stored.

    No symmetrization; rows are deduplicated and canonicalized. Useful for
    rebuilding induced subgraphs without disturbing relation ids.
    """
    blocks = []
    for pairs in relation_edges:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if len(pairs) and (pairs.min() < 0 or pairs.max() >= num_nodes):
            raise GraphConstructionError("edge endpoint outside 0..num_nodes-1")
        blocks.append(_canonical_block(num_nodes, pairs[:, 0], pairs[:, 1]))
    return SparseGraph(num_nodes=num_nodes, relations=tuple(blocks))


def build_graph(
    num_nodes: int,
    edges: Sequence,
    symmetrize: bool = True,
    num_relations: Optional[int] = None,
) -> SparseGraph:
    """Build a canonical SparseGraph from (src, dst, relation_id) triples.

    Duplicate edges collapse to a single stored entry; self-loops are
    dropped (normalization re-adds them). With ``symmetrize`` (default),
    each edge is stored in both directions, treating relations as
    undirected neighborhoods.

    Raises:
        GraphConstructionError: on an out-of-range node or relation id,
            naming the offending edge.
    """
    arr = edges if isinstance(edges, np.ndarray) else np.asarray(list(edges), dtype=np.int64)
    arr = arr.astype(np.int64, copy=False)
    if arr.size == 0:
        arr = np.empty((0, 3), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise GraphConstructionError("edges must be (src, dst) or (src, dst, relation_id) triples")
    if arr.shape[1] == 2:
        arr = np.concatenate([arr, np.zeros((len(arr), 1), dtype=np.int64)], axis=1)

    bad = np.nonzero((arr[:, 0] < 0) | (arr[:, 0] >= num_nodes) | (arr[:, 1] < 0) | (arr[:, 1] >= num_nodes))[0]
    if len(bad):
        s, d, r = arr[bad[0]]
        raise GraphConstructionError(f"edge ({s}, {d}, relation {r}) references a node outside 0..{num_nodes - 1}")

    rel_ids = arr[:, 2]
    if num_relations is None:
        num_relations = int(rel_ids.max()) + 1 if len(arr) else 1
    if len(arr):
        if rel_ids.min() < 0 or rel_ids.max() >= num_relations:
            bad_r = int(rel_ids.min()) if rel_ids.min() < 0 else int(rel_ids.max())
            raise GraphConstructionError(f"relation id {bad_r} outside 0..{num_relations - 1}")
        present = np.unique(rel_ids)
        if num_relations > 1 and not np.array_equal(present, np.arange(present.max() + 1)):
            raise GraphConstructionError("relation ids must be contiguous from 0")

    blocks = []
    for r in range(num_relations):
        mask = rel_ids == r
        src, dst = arr[mask, 0], arr[mask, 1]
        if symmetrize:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        blocks.append(_canonical_block(num_nodes, src, dst))
    return SparseGraph(num_nodes=num_nodes, relations=tuple(blocks))


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense row-major node-by-feature matrix of finite float64 values."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise GraphConstructionError(f"feature matrix must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise GraphConstructionError("feature matrix contains non-finite values")
        object.__setattr__(self, "data", _frozen(arr, np.float64))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelSet:
    """Per-node class labels, split tags, and synthetic-node flags.

    ``labels[i]`` is a class id in [0, num_classes), or -1 exactly when
    ``split[i]`` is unlabeled. Synthetic (generated) nodes are always in
    the train split.
    """

    labels: np.ndarray
    split: np.ndarray
    synthetic: np.ndarray = None
    num_classes: int = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        split = np.asarray(self.split, dtype=np.int8)
        synthetic = (
            np.zeros(len(labels), dtype=bool)
            if self.synthetic is None
            else np.asarray(self.synthetic, dtype=bool)
        )
        if not (len(labels) == len(split) == len(synthetic)):
            raise GraphConstructionError("labels, split, and synthetic arrays must have equal length")
        if len(split) and (split.min() < TRAIN or split.max() > UNLABELED):
            raise GraphConstructionError("split tags must be train/val/test/unlabeled")
        num_classes = self.num_classes
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if np.any(labels >= 0) else 0
        if num_classes < 2:
            raise GraphConstructionError(f"need at least 2 classes, got {num_classes}")
        unlabeled = split == UNLABELED
        if np.any((labels[~unlabeled] < 0) | (labels[~unlabeled] >= num_classes)):
            raise GraphConstructionError("labeled node with class id outside [0, num_classes)")
        if np.any(labels[unlabeled] != UNLABELED_CLASS):
            raise GraphConstructionError("unlabeled nodes must carry the -1 label sentinel")
        if np.any(synthetic & (split != TRAIN)):
            raise GraphConstructionError("synthetic nodes must be tagged train")
        object.__setattr__(self, "labels", _frozen(labels, np.int64))
        object.__setattr__(self, "split", _frozen(split, np.int8))
        object.__setattr__(self, "synthetic", _frozen(synthetic, bool))
        object.__setattr__(self, "num_classes", int(num_classes))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def train_mask(self) -> np.ndarray:
        return self.split == TRAIN

    @property
    def val_mask(self) -> np.ndarray:
        return self.split == VAL

    @property
    def test_mask(self) -> np.ndarray:
        return self.split == TEST

    @property
    def real_mask(self) -> np.ndarray:
        return ~self.synthetic

    def split_mask(self, tag) -> np.ndarray:
        code = SPLIT_CODES[tag] if isinstance(tag, str) else int(tag)
        return self.split == code

    def train_class_counts(self, include_synthetic: bool = False) -> np.ndarray:
        """Per-class node counts in the train split."""
        mask = self.train_mask if include_synthetic else (self.train_mask & self.real_mask)
        return np.bincount(self.labels[mask], minlength=self.num_classes)


def imbalance_ratio(labels: LabelSet, class_a: int, class_b: int) -> float:
    """min(count_a, count_b) / max(count_a, count_b) over real labeled nodes.

    Counts cover train, val, and test nodes (synthetic excluded); the value
    lies in (0, 1], symmetric in its arguments.
    """
    mask = (labels.split != UNLABELED) & labels.real_mask
    counts = np.bincount(labels.labels[mask], minlength=labels.num_classes)
    count_a, count_b = int(counts[class_a]), int(counts[class_b])
    if count_a == 0 or count_b == 0:
        empty = class_a if count_a == 0 else class_b
        raise ValueError(f"class {empty} has no labeled members")
    return min(count_a, count_b) / max(count_a, count_b)


@dataclass(frozen=True)
class Dataset:
    """A graph with aligned features and labels."""

    graph: SparseGraph
    features: FeatureMatrix
    labels: LabelSet

    def __post_init__(self):
        n = self.graph.num_nodes
        if self.features.rows != n or len(self.labels) != n:
            raise GraphConstructionError(
                f"size mismatch: graph has {n} nodes, features {self.features.rows} rows, "
                f"labels {len(self.labels)} entries"
            )

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes
