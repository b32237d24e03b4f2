"""Neighborhood aggregation: normalized adjacency, k-hop propagation, and
assembly of the oversampling feature space (aggregated embedding
concatenated with the original features, one matrix per relation).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphcore import CsrBlock, Dataset, FeatureMatrix, SparseGraph, graph_from_relations


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetrically degree-normalized adjacency with self-loops.

    Entries hold (deg_i + 1)^-1/2 * (deg_j + 1)^-1/2 for every undirected
    edge plus the diagonal, i.e. the standard propagation operator of a
    graph convolution layer.
    """

    csr: CsrBlock
    num_nodes: int

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.csr.weights, self.csr.indices, self.csr.indptr),
            shape=(self.num_nodes, self.num_nodes),
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()


@dataclass(frozen=True)
class AggregationConfig:
    """Settings for building the feature space.

    hops: number of propagation steps (2 keeps neighborhood context without
        over-smoothing).
    concat_original: append the raw features after the aggregated ones.
    standardize: z-score each feature column on train-node statistics
        before propagating; zero-variance columns map to 0.
    """

    hops: int = 2
    concat_original: bool = True
    standardize: bool = True

    def __post_init__(self):
        if self.hops < 1:
            raise ValueError(f"hops must be >= 1, got {self.hops}")


def normalize(graph: SparseGraph, relation: int = 0) -> NormalizedAdjacency:
    """Build the normalized propagation operator for one relation.

    The relation's support is made symmetric (union with its transpose),
    self-loops are added, and each entry (i, j) gets weight
    (deg_i+1)^-1/2 (deg_j+1)^-1/2. Isolated nodes keep a unit self-loop.
    """
    n = graph.num_nodes
    block = graph.relations[relation]
    src, dst = block.row_ids(), block.indices
    # symmetric support; build_graph already symmetrizes by default, but
    # directed inputs must still propagate over undirected neighborhoods
    src_sym = np.concatenate([src, dst, np.arange(n)])
    dst_sym = np.concatenate([dst, src, np.arange(n)])
    pairs = np.unique(np.stack([src_sym, dst_sym], axis=1), axis=0)
    src_sym, dst_sym = pairs[:, 0], pairs[:, 1]

    degrees = np.bincount(src_sym, minlength=n) - 1  # self-loop excluded
    inv_sqrt = 1.0 / np.sqrt(degrees + 1.0)
    weights = inv_sqrt[src_sym] * inv_sqrt[dst_sym]

    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src_sym, minlength=n), out=indptr[1:])
    csr = CsrBlock(indptr=indptr, indices=dst_sym, weights=weights)
    return NormalizedAdjacency(csr=csr, num_nodes=n)


def union_adjacency(graph: SparseGraph) -> NormalizedAdjacency:
    """Normalized operator over the union of all relations' edges."""
    if graph.num_relations == 1:
        return normalize(graph, 0)
    pairs = [graph.edge_array(r) for r in range(graph.num_relations)]
    merged = np.concatenate(pairs, axis=0)
    return normalize(graph_from_relations(graph.num_nodes, [merged]), 0)


def propagate(adj: NormalizedAdjacency, features: FeatureMatrix, hops: int = 2) -> FeatureMatrix:
    """Apply the normalized adjacency ``hops`` times to the feature rows."""
    if features.rows != adj.num_nodes:
        raise ValueError(
            f"feature rows ({features.rows}) do not match adjacency size ({adj.num_nodes})"
        )
    if hops < 1:
        raise ValueError(f"hops must be >= 1, got {hops}")
    operator = adj.to_scipy()
    out = features.data
    for _ in range(hops):
        out = operator @ out
    return FeatureMatrix(out)


def standardize(values: np.ndarray, stat_mask: np.ndarray) -> np.ndarray:
    """Z-score columns using statistics of the rows selected by stat_mask.

    Columns whose selected rows have zero variance become all-zero, so
    constant features cannot dominate nearest-neighbor distances.
    """
    subset = values[stat_mask]
    if subset.shape[0] == 0:
        raise ValueError("standardization requires at least one statistics row")
    mean = subset.mean(axis=0)
    std = subset.std(axis=0)
    out = np.zeros_like(values)
    nz = std > 0.0
    out[:, nz] = (values[:, nz] - mean[nz]) / std[nz]
    return out


def build_feature_space(dataset: Dataset, cfg: AggregationConfig = AggregationConfig()) -> list:
    """Aggregate each relation and concatenate with the original features.

    Returns one FeatureMatrix per relation, each of width 2*d when
    concat_original is set (aggregated block first), else d. Row order
    matches the dataset's node order.
    """
    values = dataset.features.data
    if cfg.standardize:
        stat_mask = dataset.labels.train_mask & dataset.labels.real_mask
        if not stat_mask.any():
            stat_mask = np.ones(len(dataset.labels), dtype=bool)
        values = standardize(values, stat_mask)
    base = FeatureMatrix(values)

    spaces = []
    for relation in range(dataset.graph.num_relations):
        adj = normalize(dataset.graph, relation)
        aggregated = propagate(adj, base, cfg.hops)
        if cfg.concat_original:
            spaces.append(FeatureMatrix(np.concatenate([aggregated.data, base.data], axis=1)))
        else:
            spaces.append(aggregated)
    return spaces
