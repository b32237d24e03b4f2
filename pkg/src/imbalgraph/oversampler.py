"""Feature-space minority oversampling.

A plan is a list of (source, neighbor, delta, class) interpolation triples
drawn once from a seeded stream; applying the plan appends the synthetic
rows. Keeping plan and application separate lets the same plan align
synthetic nodes across several per-relation feature spaces.
"""

import csv
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graphcore import TRAIN, FeatureMatrix, LabelSet
from .rng import STREAM_JITTER, STREAM_PLAN, make_rng

logger = logging.getLogger(__name__)

# Relative jitter scale for the single-member-class fallback.
LONELY_JITTER_SCALE = 0.01


class LonelyClassError(ValueError):
    """A node has no same-class train peer to interpolate toward."""


@dataclass(frozen=True)
class OversampleConfig:
    """k-nearest-neighbor count and balancing target.

    ``target`` is the per-class train count to reach; None means match the
    largest class. Distances are Euclidean.
    """

    k: int = 5
    target: Optional[int] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.target is not None and self.target < 1:
            raise ValueError(f"target must be >= 1, got {self.target}")


@dataclass(frozen=True)
class SmotePlan:
    """Interpolation triples defining synthetic nodes.

    Row r of the synthetic block is
    (1 - deltas[r]) * X[sources[r]] + deltas[r] * X[neighbors[r]] and gets
    class ``classes[r]``. A triple with source == neighbor marks the
    duplication fallback for single-member classes; those rows receive a
    small jitter drawn from the plan seed when applied.
    """

    sources: np.ndarray
    neighbors: np.ndarray
    deltas: np.ndarray
    classes: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "sources", np.asarray(self.sources, dtype=np.int64))
        object.__setattr__(self, "neighbors", np.asarray(self.neighbors, dtype=np.int64))
        object.__setattr__(self, "deltas", np.asarray(self.deltas, dtype=np.float64))
        object.__setattr__(self, "classes", np.asarray(self.classes, dtype=np.int64))
        lengths = {len(self.sources), len(self.neighbors), len(self.deltas), len(self.classes)}
        if len(lengths) != 1:
            raise ValueError("plan arrays must have equal length")
        if len(self.deltas) and (self.deltas.min() < 0.0 or self.deltas.max() > 1.0):
            raise ValueError("interpolation coefficients must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.sources)


def knn_same_class(features: FeatureMatrix, labels: LabelSet, node: int, k: int) -> np.ndarray:
    """Up to k nearest same-class real train nodes, excluding the node itself.

    Ordered by (Euclidean distance, node index); equidistant peers resolve
    to the lower index, which pins the result bit-exactly.
    """
    mask = labels.train_mask & labels.real_mask
    if not mask[node]:
        raise ValueError(f"node {node} is not a real train node")
    peers = np.nonzero(mask & (labels.labels == labels.labels[node]))[0]
    peers = peers[peers != node]
    if len(peers) == 0:
        raise LonelyClassError(f"node {node} has no same-class train peer")
    diffs = features.data[peers] - features.data[node]
    # squared distances order identically to Euclidean and skip the sqrt rounding
    dists = np.einsum("ij,ij->i", diffs, diffs)
    order = np.lexsort((peers, dists))
    return peers[order][:k]


def make_plan(features: FeatureMatrix, labels: LabelSet, cfg: OversampleConfig = OversampleConfig(),
              seed: int = 0) -> SmotePlan:
    """Draw interpolation triples that balance every train class.

    Each class below the target contributes (target - count) triples:
    source drawn uniformly with replacement from the class's train nodes,
    neighbor uniformly from the source's k nearest same-class train nodes,
    delta ~ Uniform[0, 1). A class with a single train node falls back to
    duplication-with-jitter triples. The draw sequence is fixed, so the
    plan is fully determined by (features, labels, cfg, seed).
    """
    train_real = labels.train_mask & labels.real_mask
    if not train_real.any():
        raise ValueError("no real train nodes to oversample from")
    counts = labels.train_class_counts(include_synthetic=False)
    target = cfg.target if cfg.target is not None else int(counts.max())

    rng = make_rng(seed, STREAM_PLAN)
    sources, neighbors, deltas, classes = [], [], [], []
    for cls in range(labels.num_classes):
        count = int(counts[cls])
        deficit = target - count
        if deficit <= 0:
            continue
        if count == 0:
            logger.warning("class %d has no train nodes; cannot oversample it", cls)
            continue
        members = np.nonzero(train_real & (labels.labels == cls))[0]
        if count == 1:
            logger.warning(
                "class %d has a single train node; duplicating it %d times with jitter",
                cls, deficit,
            )
            only = int(members[0])
            sources.extend([only] * deficit)
            neighbors.extend([only] * deficit)
            deltas.extend([0.0] * deficit)
            classes.extend([cls] * deficit)
            continue
        knn_cache = {}
        for _ in range(deficit):
            src = int(members[rng.integers(0, len(members))])
            if src not in knn_cache:
                knn_cache[src] = knn_same_class(features, labels, src, cfg.k)
            candidates = knn_cache[src]
            nbr = int(candidates[rng.integers(0, len(candidates))])
            sources.append(src)
            neighbors.append(nbr)
            deltas.append(float(rng.random()))
            classes.append(cls)
    return SmotePlan(
        sources=np.asarray(sources, dtype=np.int64),
        neighbors=np.asarray(neighbors, dtype=np.int64),
        deltas=np.asarray(deltas, dtype=np.float64),
        classes=np.asarray(classes, dtype=np.int64),
        seed=int(seed),
    )


def apply_plan(features: FeatureMatrix, labels: LabelSet, plan: SmotePlan):
    """Append the plan's synthetic rows; returns (features, labels) copies.

    Synthetic labels carry the plan class, train split, and the synthetic
    flag. Original rows are untouched. Duplication-fallback triples
    (source == neighbor) get Gaussian jitter scaled to 1% of the
    per-column train standard deviation, drawn from the plan seed.
    """
    n = features.rows
    if len(plan) == 0:
        return features, labels
    for name, arr in (("source", plan.sources), ("neighbor", plan.neighbors)):
        if arr.min() < 0 or arr.max() >= n:
            raise ValueError(f"plan {name} index out of range for {n} feature rows")
    provenance = labels.train_mask & labels.real_mask
    if not (provenance[plan.sources].all() and provenance[plan.neighbors].all()):
        raise ValueError("plan references a node outside the real train split")
    if np.any(labels.labels[plan.sources] != plan.classes) or np.any(
        labels.labels[plan.neighbors] != plan.classes
    ):
        raise ValueError("plan class does not match its source/neighbor labels")

    data = features.data
    coeff = plan.deltas[:, None]
    new_rows = (1.0 - coeff) * data[plan.sources] + coeff * data[plan.neighbors]

    duplicated = plan.sources == plan.neighbors
    if duplicated.any():
        rng = make_rng(plan.seed, STREAM_JITTER)
        sigma = data[provenance].std(axis=0)
        noise = rng.standard_normal((int(duplicated.sum()), features.cols))
        new_rows[duplicated] += LONELY_JITTER_SCALE * sigma * noise

    out_features = FeatureMatrix(np.concatenate([data, new_rows], axis=0))
    out_labels = LabelSet(
        labels=np.concatenate([labels.labels, plan.classes]),
        split=np.concatenate([labels.split, np.full(len(plan), TRAIN, dtype=np.int8)]),
        synthetic=np.concatenate([labels.synthetic, np.ones(len(plan), dtype=bool)]),
        num_classes=labels.num_classes,
    )
    return out_features, out_labels


def write_plan_csv(path, plan: SmotePlan) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "neighbor", "delta", "class"])
        for s, u, d, c in zip(plan.sources, plan.neighbors, plan.deltas, plan.classes):
            writer.writerow([int(s), int(u), repr(float(d)), int(c)])


def read_plan_csv(path, seed: int = 0) -> SmotePlan:
    sources, neighbors, deltas, classes = [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            sources.append(int(row["source"]))
            neighbors.append(int(row["neighbor"]))
            deltas.append(float(row["delta"]))
            classes.append(int(row["class"]))
    return SmotePlan(sources=sources, neighbors=neighbors, deltas=deltas, classes=classes, seed=seed)
