"""Experiment orchestration: dataset loading, the synthetic benchmark,
imbalance subsampling, seeded repetitions, and result emission.

Every repetition r of a run owns seed ``base_seed + r``; splits, plans,
and training all derive their streams from that seed, so serial and
parallel execution produce identical tables.
"""

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import fileio
from .aggregator import AggregationConfig, build_feature_space, standardize, union_adjacency
from .classifier import (MODE_GCN, MODE_OS_MLP, MODE_SGC, TrainConfig, predict, train)
from .graphcore import (TEST, TRAIN, UNLABELED, UNLABELED_CLASS, VAL, Dataset,
                        FeatureMatrix, LabelSet, build_graph, graph_from_relations,
                        imbalance_ratio)
from .metrics import METRIC_KEYS, evaluate
from .oversampler import OversampleConfig, apply_plan, make_plan
from .rng import STREAM_SPLIT, STREAM_SUBSAMPLE, STREAM_SYNTH, make_rng

logger = logging.getLogger(__name__)

METHODS = ("vanilla_gcn", "os_gnn", "sgc")
CONFIG_SCHEMA = 1
THREADS_ENV = "IMBAL_THREADS"


@dataclass(frozen=True)
class SynthSpec:
    """Two-block stochastic block model with class-separated Gaussian features.

    Class 0 is the majority block (size ceil(n / (1 + rho))), class 1 the
    minority; intra-class pairs connect with probability intra_p,
    cross-class pairs with inter_p. Defaults keep the vanilla classifier
    imperfect so rebalancing has visible headroom; changing them
    re-baselines the acceptance runs.
    """

    num_nodes: int = 1000
    num_classes: int = 2
    rho: float = 0.1
    intra_p: float = 0.02
    inter_p: float = 0.005
    feature_dim: int = 16
    class_mean_separation: float = 1.0

    def __post_init__(self):
        if self.num_classes != 2:
            raise ValueError("the synthetic benchmark is two-class")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if not 0.0 <= self.inter_p < self.intra_p <= 1.0:
            raise ValueError("need 0 <= inter_p < intra_p <= 1")
        if self.num_nodes < 4 or self.feature_dim < 1:
            raise ValueError("num_nodes must be >= 4 and feature_dim >= 1")


@dataclass(frozen=True)
class DatasetPaths:
    edges: str
    features: str
    labels: str
    symmetrize: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Optional[DatasetPaths] = None
    synth: Optional[SynthSpec] = field(default_factory=SynthSpec)
    method: str = "os_gnn"
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    oversample: OversampleConfig = field(default_factory=OversampleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    repetitions: int = 5
    split_fractions: tuple = (0.1, 0.1, 0.8)
    base_seed: int = 0

    def __post_init__(self):
        if (self.dataset is None) == (self.synth is None):
            raise ValueError("configure exactly one of dataset paths or a synth spec")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        fractions = tuple(float(f) for f in self.split_fractions)
        if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be three values summing to 1, got {fractions}")
        object.__setattr__(self, "split_fractions", fractions)


def load_labelset(labels_path, id_map: dict):
    """Read a label CSV against a node-id map; returns (LabelSet, class_names).

    Class names map to ids in numeric order when every name parses as an
    integer, else lexicographically. Nodes missing from the file are
    unlabeled.
    """
    label_ids, label_strs, split_codes, synthetic = fileio.read_labels_csv(labels_path)
    for node_id in label_ids:
        if node_id not in id_map:
            raise ValueError(f"{labels_path}: label references unknown node id {node_id!r}")
    unique_names = set(label_strs)
    try:
        class_names = sorted(unique_names, key=int)
    except ValueError:
        class_names = sorted(unique_names)
    class_map = {name: i for i, name in enumerate(class_names)}

    n = len(id_map)
    labels = np.full(n, UNLABELED_CLASS, dtype=np.int64)
    split = np.full(n, UNLABELED, dtype=np.int8)
    synth_flags = np.zeros(n, dtype=bool)
    for node_id, name, code, flag in zip(label_ids, label_strs, split_codes, synthetic):
        idx = id_map[node_id]
        labels[idx] = class_map[name]
        split[idx] = code
        synth_flags[idx] = flag
    label_set = LabelSet(labels=labels, split=split, synthetic=synth_flags,
                         num_classes=len(class_names))
    return label_set, class_names


def load_features(features_path):
    """Read features (binary IGF1 or CSV) into (node_ids, float matrix)."""
    with open(features_path, "rb") as fh:
        is_binary = fh.read(4) == fileio.FEATURE_MAGIC
    if is_binary:
        values = fileio.read_features_binary(features_path)
        node_ids = [str(i) for i in range(values.shape[0])]
    else:
        node_ids, values = fileio.read_features_csv(features_path)
        if len(set(node_ids)) != len(node_ids):
            raise fileio.ParseError(f"{features_path}: duplicate node id")
    return node_ids, values


def load_dataset(edges_path, features_path, labels_path, symmetrize: bool = True,
                 target_classes=None):
    """Load and validate a dataset from disk.

    Returns (Dataset, mapping) where mapping records the dense-id order
    (``node_ids``) and the label-name order (``class_names``). External
    string ids are remapped to 0..N-1 in feature-file order; binary
    feature files imply integer ids 0..N-1.
    """
    node_ids, values = load_features(features_path)
    id_map = {node_id: i for i, node_id in enumerate(node_ids)}
    n = len(node_ids)

    raw_edges = fileio.read_edges_tsv(edges_path)
    edges = []
    for src, dst, rel in raw_edges:
        if src not in id_map:
            raise ValueError(f"{edges_path}: edge references unknown node id {src!r}")
        if dst not in id_map:
            raise ValueError(f"{edges_path}: edge references unknown node id {dst!r}")
        edges.append((id_map[src], id_map[dst], rel))
    graph = build_graph(n, edges, symmetrize=symmetrize)

    label_set, class_names = load_labelset(labels_path, id_map)
    class_map = {name: i for i, name in enumerate(class_names)}

    if label_set.num_classes == 2:
        rho = imbalance_ratio(label_set, 0, 1)
        logger.info("loaded %d nodes, %d classes, imbalance ratio %.3f", n,
                    label_set.num_classes, rho)
    if target_classes is not None:
        counts = label_set.train_class_counts()
        for name in target_classes:
            cls = class_map.get(str(name))
            if cls is None:
                raise ValueError(f"target class {name!r} does not appear in the label file")
            if counts[cls] == 0:
                raise ValueError(f"target class {name!r} has no train nodes")

    dataset = Dataset(graph=graph, features=FeatureMatrix(values), labels=label_set)
    mapping = {"node_ids": node_ids, "class_names": class_names}
    return dataset, mapping


def draw_split(labels: np.ndarray, fractions, rng: np.random.Generator) -> np.ndarray:
    """Stratified train/val/test tags; every class lands in train.

    Per class, a shuffled max(1, floor(f_train * n_c)) go to train, then
    max(1, floor(f_val * n_c)) (capped by what is left) to val, the rest
    to test. Nodes labeled -1 stay unlabeled.
    """
    labels = np.asarray(labels, dtype=np.int64)
    split = np.full(len(labels), UNLABELED, dtype=np.int8)
    f_train, f_val, _ = fractions
    for cls in range(int(labels.max()) + 1 if np.any(labels >= 0) else 0):
        members = np.nonzero(labels == cls)[0]
        m = len(members)
        if m == 0:
            continue
        shuffled = members[rng.permutation(m)]
        n_train = max(1, int(math.floor(f_train * m)))
        n_val = min(m - n_train, max(1, int(math.floor(f_val * m)))) if m > n_train else 0
        split[shuffled[:n_train]] = TRAIN
        split[shuffled[n_train : n_train + n_val]] = VAL
        split[shuffled[n_train + n_val :]] = TEST
    return split


def resplit(labels: LabelSet, fractions, seed: int) -> LabelSet:
    """Redraw the split tags of a real (non-augmented) label set."""
    if labels.synthetic.any():
        raise ValueError("cannot resplit labels that already contain synthetic nodes")
    rng = make_rng(seed, STREAM_SPLIT)
    split = draw_split(labels.labels, fractions, rng)
    return LabelSet(labels=labels.labels, split=split, num_classes=labels.num_classes)


def generate_synth(spec: SynthSpec, seed: int, fractions=(0.1, 0.1, 0.8)) -> Dataset:
    """Sample the benchmark dataset; deterministic in (spec, seed, fractions).

    Draw order: edge uniforms, feature normals, split permutations.
    """
    rng = make_rng(seed, STREAM_SYNTH)
    n = spec.num_nodes
    majority = int(math.ceil(n / (1.0 + spec.rho)))
    labels = np.ones(n, dtype=np.int64)
    labels[:majority] = 0

    uniforms = rng.random((n, n))
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, spec.intra_p, spec.inter_p)
    upper = np.triu(uniforms < prob, k=1)
    src, dst = np.nonzero(upper)
    edges = np.column_stack([src, dst, np.zeros(len(src), dtype=np.int64)])
    graph = build_graph(n, edges, symmetrize=True)

    means = np.where(labels[:, None] == 0, -0.5, 0.5) * spec.class_mean_separation
    values = rng.standard_normal((n, spec.feature_dim)) + means

    split = draw_split(labels, fractions, rng)
    label_set = LabelSet(labels=labels, split=split, num_classes=2)
    return Dataset(graph=graph, features=FeatureMatrix(values), labels=label_set)


def subsample_to_ratio(dataset: Dataset, rho_target: float, seed: int):
    """Remove uniform minority nodes until the class ratio reaches the target.

    Returns (subsampled dataset, kept original node ids). Split tags of
    survivors are preserved and the induced subgraph is re-canonicalized.
    Only increases imbalance; a target above the current ratio errors.
    """
    labels = dataset.labels
    labeled = (labels.split != UNLABELED) & labels.real_mask
    counts = np.bincount(labels.labels[labeled], minlength=labels.num_classes)
    active = np.nonzero(counts > 0)[0]
    if len(active) < 2:
        raise ValueError("need at least two populated classes to subsample")
    majority = int(active[np.argmax(counts[active])])
    minority = int(active[np.argmin(counts[active])])
    current = counts[minority] / counts[majority]
    if rho_target > current + 1e-12:
        raise ValueError(
            f"target ratio {rho_target} above current {current:.6f}; subsampling only removes nodes"
        )
    keep_count = int(math.floor(rho_target * counts[majority] + 1e-9))
    if keep_count >= counts[minority]:
        return dataset, np.arange(dataset.num_nodes)
    if keep_count < 1:
        raise ValueError(f"target ratio {rho_target} would empty the minority class")

    members = np.nonzero(labeled & (labels.labels == minority))[0]
    rng = make_rng(seed, STREAM_SUBSAMPLE)
    perm = rng.permutation(len(members))
    removed = np.zeros(dataset.num_nodes, dtype=bool)
    removed[members[perm[: len(members) - keep_count]]] = True
    kept = np.nonzero(~removed)[0]
    remap = np.full(dataset.num_nodes, -1, dtype=np.int64)
    remap[kept] = np.arange(len(kept))

    relation_edges = []
    for r in range(dataset.graph.num_relations):
        pairs = dataset.graph.edge_array(r)
        keep_edges = ~removed[pairs[:, 0]] & ~removed[pairs[:, 1]] if len(pairs) else np.zeros(0, bool)
        relation_edges.append(remap[pairs[keep_edges]])
    graph = graph_from_relations(len(kept), relation_edges)

    label_set = LabelSet(labels=labels.labels[kept], split=labels.split[kept],
                         synthetic=labels.synthetic[kept], num_classes=labels.num_classes)
    return Dataset(graph=graph, features=FeatureMatrix(dataset.features.data[kept]),
                   labels=label_set), kept


def joint_feature_space(spaces) -> FeatureMatrix:
    """Stack per-relation spaces column-wise for joint neighbor search."""
    if len(spaces) == 1:
        return spaces[0]
    return FeatureMatrix(np.concatenate([s.data for s in spaces], axis=1))


def run_single(dataset: Dataset, method: str, cfg: ExperimentConfig, seed: int):
    """One repetition of one method; returns (metrics bundle, info dict)."""
    train_cfg = replace(cfg.train, seed=seed)
    info = {"seed": int(seed), "method": method, "synthetic_nodes": 0}

    if method == "vanilla_gcn":
        adj = union_adjacency(dataset.graph)
        values = dataset.features.data
        if cfg.aggregation.standardize:
            stat = dataset.labels.train_mask & dataset.labels.real_mask
            values = standardize(values, stat)
        features = FeatureMatrix(values)
        model, report = train(features, dataset.labels, train_cfg, mode=MODE_GCN, adj=adj)
        predictions = predict(model, features, adj)
        eval_labels = dataset.labels
    elif method == "sgc":
        spaces = build_feature_space(dataset, cfg.aggregation)
        model, report = train(spaces, dataset.labels, train_cfg, mode=MODE_SGC)
        predictions = predict(model, spaces)
        eval_labels = dataset.labels
    elif method == "os_gnn":
        spaces = build_feature_space(dataset, cfg.aggregation)
        plan = make_plan(joint_feature_space(spaces), dataset.labels, cfg.oversample, seed)
        augmented = []
        eval_labels = dataset.labels
        for space in spaces:
            aug_space, eval_labels = apply_plan(space, dataset.labels, plan)
            augmented.append(aug_space)
        model, report = train(augmented, eval_labels, train_cfg, mode=MODE_OS_MLP)
        predictions = predict(model, augmented)
        info["synthetic_nodes"] = len(plan)
    else:
        raise ValueError(f"unknown method {method!r}")

    bundle = evaluate(predictions, eval_labels, split="test")
    info["best_epoch"] = int(report.best_epoch)
    info["epochs_run"] = len(report.total_losses)
    info["val_bacc"] = float(report.val_bacc)
    return bundle, info


def _dataset_for_repetition(cfg: ExperimentConfig, seed: int, base: Optional[Dataset]) -> Dataset:
    if cfg.synth is not None:
        return generate_synth(cfg.synth, seed, cfg.split_fractions)
    labels = resplit(base.labels, cfg.split_fractions, seed)
    return Dataset(graph=base.graph, features=base.features, labels=labels)


def worker_count() -> int:
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run all repetitions of the configured method and aggregate metrics.

    Repetition r uses seed base_seed + r for its split (or synthetic
    dataset), oversampling plan, and training. Repetitions may execute on
    a thread pool (capped by the IMBAL_THREADS env var); results are
    assembled in repetition order either way.
    """
    base = None
    if cfg.dataset is not None:
        base, _ = load_dataset(cfg.dataset.edges, cfg.dataset.features, cfg.dataset.labels,
                               symmetrize=cfg.dataset.symmetrize)

    def one(rep: int):
        seed = cfg.base_seed + rep
        dataset = _dataset_for_repetition(cfg, seed, base)
        bundle, info = run_single(dataset, cfg.method, cfg, seed)
        return bundle, info

    workers = min(worker_count(), cfg.repetitions)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(cfg.repetitions)))
    else:
        outcomes = [one(rep) for rep in range(cfg.repetitions)]

    per_repetition = []
    for bundle, info in outcomes:
        entry = dict(info)
        entry["metrics"] = bundle.to_dict()
        per_repetition.append(entry)

    summary = {}
    for key in METRIC_KEYS:
        values = np.array([entry["metrics"][key] for entry in per_repetition], dtype=np.float64)
        summary[key] = {
            "mean": float(values.mean()),
            "std": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
        }
    return {
        "schema": CONFIG_SCHEMA,
        "method": cfg.method,
        "repetitions": cfg.repetitions,
        "base_seed": cfg.base_seed,
        "lambda": cfg.train.lam,
        "split_fractions": list(cfg.split_fractions),
        "per_repetition": per_repetition,
        "summary": summary,
    }


def sweep_lambda(cfg: ExperimentConfig, values) -> list:
    """Run the experiment once per lambda value, preserving input order."""
    values = list(values)
    if not values:
        raise ValueError("lambda sweep needs at least one value")
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"lambda {v} outside [0, 1]")
    rows = []
    for v in values:
        run_cfg = replace(cfg, train=replace(cfg.train, lam=float(v)))
        results = run_experiment(run_cfg)
        row = {"lambda": float(v)}
        for key in ("acc", "tpr", "bacc", "f1_macro"):
            row[f"{key}_mean"] = results["summary"][key]["mean"]
            row[f"{key}_std"] = results["summary"][key]["std"]
        rows.append(row)
    return rows


SWEEP_COLUMNS = ("lambda", "acc_mean", "acc_std", "tpr_mean", "tpr_std",
                 "bacc_mean", "bacc_std", "f1_macro_mean", "f1_macro_std")


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join("%.12g" % row[col] for col in SWEEP_COLUMNS) + "\n")


def read_sweep_csv(path) -> list:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            rows.append({col: float(v) for col, v in zip(header, line.strip().split(","))})
    return rows


def results_csv_lines(results: dict) -> list:
    """Presentation table: percentages with two decimals, mean +/- std."""
    lines = ["method,metric,mean_pct,std_pct"]
    for key in METRIC_KEYS:
        cell = results["summary"][key]
        lines.append("%s,%s,%.2f,%.2f" % (results["method"], key,
                                          100.0 * cell["mean"], 100.0 * cell["std"]))
    return lines


def write_results(out_dir, results: dict) -> None:
    """Emit results.json, results.csv, and one JSON log per repetition."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.json", "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2)
        fh.write("\n")
    with open(out / "results.csv", "w", encoding="utf-8") as fh:
        fh.write("\n".join(results_csv_lines(results)) + "\n")
    for entry in results["per_repetition"]:
        rep_path = out / ("rep_%03d.json" % (entry["seed"] - results["base_seed"]))
        with open(rep_path, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, indent=2)
            fh.write("\n")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {
        "schema": CONFIG_SCHEMA,
        "method": cfg.method,
        "repetitions": cfg.repetitions,
        "split_fractions": list(cfg.split_fractions),
        "base_seed": cfg.base_seed,
        "aggregation": asdict(cfg.aggregation),
        "oversample": asdict(cfg.oversample),
        "train": asdict(cfg.train),
    }
    train = out["train"]
    train["lambda"] = train.pop("lam")
    if cfg.dataset is not None:
        out["dataset"] = asdict(cfg.dataset)
    if cfg.synth is not None:
        out["synth"] = asdict(cfg.synth)
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from the JSON schema; unknown keys are rejected."""
    raw = dict(raw)
    schema = raw.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ValueError(f"unsupported config schema {schema!r}")
    kwargs = {}
    if "dataset" in raw:
        kwargs["dataset"] = DatasetPaths(**raw.pop("dataset"))
        kwargs["synth"] = None
    if "synth" in raw:
        synth = raw.pop("synth")
        if "dataset" in kwargs and synth is not None:
            raise ValueError("config sets both dataset paths and a synth spec")
        if synth is not None:
            kwargs["synth"] = SynthSpec(**synth)
    if "aggregation" in raw:
        kwargs["aggregation"] = AggregationConfig(**raw.pop("aggregation"))
    if "oversample" in raw:
        kwargs["oversample"] = OversampleConfig(**raw.pop("oversample"))
    if "train" in raw:
        train_raw = dict(raw.pop("train"))
        if "lambda" in train_raw:
            train_raw["lam"] = train_raw.pop("lambda")
        kwargs["train"] = TrainConfig(**train_raw)
    for key in ("method", "repetitions", "base_seed"):
        if key in raw:
            kwargs[key] = raw.pop(key)
    if "split_fractions" in raw:
        kwargs["split_fractions"] = tuple(raw.pop("split_fractions"))
    if raw:
        raise ValueError(f"unknown config keys: {sorted(raw)}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))
