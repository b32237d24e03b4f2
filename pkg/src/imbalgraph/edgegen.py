"""Bilinear link prediction and the generated-edge noise study.

An edge generator scores node pairs with sigmoid(h_i @ W @ h_j) and is
fitted on the edges among a small fraction of nodes, against an equal
number of sampled non-edges. The noise study trains the same graph
classifier once on the true adjacency and once on a generator-synthesized
one, quantifying how much signal the synthesis loses.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .aggregator import standardize, union_adjacency
from .classifier import MODE_GCN, TrainConfig, predict, train
from .graphcore import Dataset, FeatureMatrix, SparseGraph, build_graph
from .metrics import evaluate
from .rng import STREAM_EDGE_EVAL, STREAM_EDGE_NEG, STREAM_EDGE_SPLIT, make_rng

logger = logging.getLogger(__name__)


@dataclass
class EdgeGenerator:
    """Bilinear pair scorer: sigmoid(h_i @ weight @ h_j).

    ``degree_cap`` bounds per-node degree during synthesis; it is set from
    the training graph's mean degree so synthesized adjacencies cannot
    blow up quadratically.
    """

    weight: np.ndarray
    threshold: float = 0.5
    degree_cap: Optional[int] = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.ndim != 2 or self.weight.shape[0] != self.weight.shape[1]:
            raise ValueError(f"edge weight matrix must be square, got {self.weight.shape}")
        if not np.all(np.isfinite(self.weight)):
            raise ValueError("edge weight matrix must be finite")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep scores strictly inside (0, 1) even when the logit saturates
    return np.clip(out, 1e-15, 1.0 - 1e-15)


def edge_score(gen: EdgeGenerator, h_i: np.ndarray, h_j: np.ndarray) -> float:
    """Score one pair; always in (0, 1)."""
    h_i = np.asarray(h_i, dtype=np.float64)
    h_j = np.asarray(h_j, dtype=np.float64)
    if h_i.shape != (gen.weight.shape[0],) or h_j.shape != (gen.weight.shape[0],):
        raise ValueError(
            f"feature rows must have length {gen.weight.shape[0]}, got {h_i.shape} and {h_j.shape}"
        )
    return float(_sigmoid(np.array([h_i @ gen.weight @ h_j]))[0])


def _pair_logits(gen: EdgeGenerator, values: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    left = values[pairs[:, 0]]
    right = values[pairs[:, 1]]
    return np.einsum("ij,jk,ik->i", left, gen.weight, right)


def _undirected_edge_set(graph: SparseGraph) -> np.ndarray:
    """Unique (i, j) pairs with i < j pooled over all relations."""
    pairs = []
    for r in range(graph.num_relations):
        arr = graph.edge_array(r)
        if len(arr):
            lo = np.minimum(arr[:, 0], arr[:, 1])
            hi = np.maximum(arr[:, 0], arr[:, 1])
            pairs.append(np.stack([lo, hi], axis=1))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(np.concatenate(pairs, axis=0), axis=0)


def split_nodes(num_nodes: int, fraction: float, seed: int):
    """Disjoint (train_nodes, test_nodes), each ``floor(fraction * n)`` long."""
    if not 0.0 < fraction <= 0.5:
        raise ValueError(f"node fraction must lie in (0, 0.5], got {fraction}")
    count = int(np.floor(fraction * num_nodes))
    perm = make_rng(seed, STREAM_EDGE_SPLIT).permutation(num_nodes)
    return np.sort(perm[:count]), np.sort(perm[count : 2 * count])


def _sample_non_edges(rng, nodes: np.ndarray, edge_set: set, count: int) -> np.ndarray:
    """Uniform distinct non-edges with both endpoints in ``nodes``."""
    chosen = set()
    out = []
    attempts = 0
    limit = max(10_000, 200 * count)
    while len(out) < count:
        attempts += 1
        if attempts > limit:
            raise ValueError("could not sample enough non-edges; graph too dense among these nodes")
        a, b = nodes[rng.integers(0, len(nodes))], nodes[rng.integers(0, len(nodes))]
        if a == b:
            continue
        key = (int(min(a, b)), int(max(a, b)))
        if key in edge_set or key in chosen:
            continue
        chosen.add(key)
        out.append(key)
    return np.asarray(out, dtype=np.int64)


def train_edge_generator(features: FeatureMatrix, graph: SparseGraph, train_fraction: float = 0.1,
                         seed: int = 0, epochs: int = 200, lr: float = 1e-2) -> EdgeGenerator:
    """Fit the bilinear scorer on edges among a node subsample.

    Positives are the undirected edges with both endpoints inside the
    sampled node set; negatives are an equal number of uniformly sampled
    non-edges there. Optimized with full-batch Adam on binary
    cross-entropy; fully determined by the seed.
    """
    if graph.num_nodes == 0:
        raise ValueError("cannot train an edge generator on an empty graph")
    train_nodes, _ = split_nodes(graph.num_nodes, train_fraction, seed)
    edge_pairs = _undirected_edge_set(graph)
    in_train = np.zeros(graph.num_nodes, dtype=bool)
    in_train[train_nodes] = True
    positives = edge_pairs[in_train[edge_pairs[:, 0]] & in_train[edge_pairs[:, 1]]]
    if len(positives) == 0:
        raise ValueError("no edges among the sampled training nodes")

    edge_set = {(int(a), int(b)) for a, b in edge_pairs}
    negatives = _sample_non_edges(make_rng(seed, STREAM_EDGE_NEG), train_nodes, edge_set, len(positives))

    pairs = np.concatenate([positives, negatives], axis=0)
    targets = np.concatenate([np.ones(len(positives)), np.zeros(len(negatives))])
    values = features.data
    d = features.cols

    gen = EdgeGenerator(weight=np.zeros((d, d)))
    m = np.zeros((d, d))
    v = np.zeros((d, d))
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    left, right = values[pairs[:, 0]], values[pairs[:, 1]]
    for t in range(1, epochs + 1):
        scores = _sigmoid(np.einsum("ij,jk,ik->i", left, gen.weight, right))
        grad = left.T @ ((scores - targets)[:, None] * right) / len(pairs)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        gen.weight = gen.weight - lr * (m / (1.0 - beta1**t)) / (np.sqrt(v / (1.0 - beta2**t)) + eps)

    mean_degree = 2.0 * len(edge_pairs) / max(graph.num_nodes, 1)
    gen.degree_cap = max(1, int(round(mean_degree * 4)))
    return gen


def synthesize_adjacency(gen: EdgeGenerator, features: FeatureMatrix) -> SparseGraph:
    """Discretize pair scores into a canonical graph.

    A pair (i, j) is kept when its score reaches the threshold and each
    endpoint ranks the other inside its top ``degree_cap`` candidates
    (ties broken toward lower node index), which bounds every node's
    degree.
    """
    n = features.rows
    values = features.data
    scores = _sigmoid(values @ gen.weight @ values.T)
    np.fill_diagonal(scores, -1.0)
    admissible = scores >= gen.threshold

    cap = gen.degree_cap if gen.degree_cap is not None else n
    keeps = np.zeros((n, n), dtype=bool)
    index_cols = np.arange(n)
    for i in range(n):
        cand = index_cols[admissible[i]]
        if len(cand) == 0:
            continue
        if len(cand) > cap:
            order = np.lexsort((cand, -scores[i, cand]))
            cand = cand[order[:cap]]
        keeps[i, cand] = True
    mutual = keeps & keeps.T
    src, dst = np.nonzero(np.triu(mutual, k=1))
    edges = np.column_stack([src, dst, np.zeros(len(src), dtype=np.int64)])
    return build_graph(n, edges, symmetrize=True)


def ranking_auc(pos_scores: np.ndarray, neg_scores: np.ndarray) -> float:
    """Probability a positive outranks a negative (ties count half)."""
    pos_scores = np.asarray(pos_scores, dtype=np.float64)
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    if len(pos_scores) == 0 or len(neg_scores) == 0:
        raise ValueError("need at least one positive and one negative score")
    combined = np.concatenate([pos_scores, neg_scores])
    order = np.argsort(combined, kind="mergesort")
    ranks = np.empty(len(combined), dtype=np.float64)
    ranks[order] = np.arange(1, len(combined) + 1)
    # average ranks over tie groups
    sorted_vals = combined[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    n_pos, n_neg = len(pos_scores), len(neg_scores)
    rank_sum = ranks[:n_pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _gcn_test_accuracy(dataset: Dataset, graph: SparseGraph, values: np.ndarray,
                       cfg: TrainConfig) -> float:
    adj = union_adjacency(graph)
    features = FeatureMatrix(values)
    model, _ = train(features, dataset.labels, cfg, mode=MODE_GCN, adj=adj)
    bundle = evaluate(predict(model, features, adj), dataset.labels, split="test")
    return bundle.acc


def noise_experiment(dataset: Dataset, cfg: TrainConfig = TrainConfig(), seed: int = 0,
                     node_fraction: float = 0.1,
                     synthetic_graph: Optional[SparseGraph] = None) -> dict:
    """Compare classification on true vs generator-synthesized edges.

    Fits the generator on ``node_fraction`` of the nodes, scores held-out
    pairs from a disjoint node set of the same size (AUC against 1:1
    sampled non-edges), then trains the graph classifier twice with
    identical seeds: once on the original adjacency and once on the
    synthesized one. ``synthetic_graph`` overrides synthesis for fixture
    injection.
    """
    gen = train_edge_generator(dataset.features, dataset.graph, node_fraction, seed)

    _, test_nodes = split_nodes(dataset.num_nodes, node_fraction, seed)
    edge_pairs = _undirected_edge_set(dataset.graph)
    in_test = np.zeros(dataset.num_nodes, dtype=bool)
    in_test[test_nodes] = True
    positives = edge_pairs[in_test[edge_pairs[:, 0]] & in_test[edge_pairs[:, 1]]]
    if len(positives) == 0:
        raise ValueError("no edges among the held-out nodes; cannot score edge prediction")
    edge_set = {(int(a), int(b)) for a, b in edge_pairs}
    eval_rng = make_rng(seed, STREAM_EDGE_EVAL)
    negatives = _sample_non_edges(eval_rng, test_nodes, edge_set, len(positives))
    edge_auc = ranking_auc(
        _sigmoid(_pair_logits(gen, dataset.features.data, positives)),
        _sigmoid(_pair_logits(gen, dataset.features.data, negatives)),
    )

    if synthetic_graph is None:
        synthetic_graph = synthesize_adjacency(gen, dataset.features)

    stat_mask = dataset.labels.train_mask & dataset.labels.real_mask
    values = standardize(dataset.features.data, stat_mask)
    run_cfg = replace(cfg, seed=seed)
    acc_original = _gcn_test_accuracy(dataset, dataset.graph, values, run_cfg)
    acc_synthetic = _gcn_test_accuracy(dataset, synthetic_graph, values, run_cfg)
    return {
        "edge_auc": float(edge_auc),
        "acc_original_edges": float(acc_original),
        "acc_synthetic_edges": float(acc_synthetic),
    }
