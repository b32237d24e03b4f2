"""Command-line entry point.

Subcommands mirror the pipeline stages (synth, aggregate, oversample,
train, predict, evaluate) plus the orchestrated experiments (run,
sweep-lambda, subsample-rho, edge-noise). ``run`` and friends accept a
JSON config file; explicit flags override file values. The IMBAL_THREADS
environment variable caps repetition parallelism.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fileio
from .aggregator import normalize, propagate, standardize, union_adjacency
from .classifier import (MODE_GCN, MODES, TrainConfig, load_model, predict, save_model,
                         train)
from .edgegen import noise_experiment
from .graphcore import SPLIT_NAMES, Dataset, FeatureMatrix, build_graph
from .harness import (DatasetPaths, ExperimentConfig, SynthSpec, generate_synth,
                      load_config, load_dataset, load_features, load_labelset,
                      resplit, run_experiment, subsample_to_ratio, sweep_lambda,
                      write_results, write_sweep_csv)
from .metrics import evaluate
from .oversampler import OversampleConfig, apply_plan, make_plan, write_plan_csv

logger = logging.getLogger(__name__)


def _write_dataset_files(out_dir: Path, dataset: Dataset, node_ids, class_names,
                         binary_features: bool) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    edges = []
    for r in range(dataset.graph.num_relations):
        for src, dst in dataset.graph.edge_array(r):
            edges.append((node_ids[src], node_ids[dst], r))
    fileio.write_edges_tsv(out_dir / "edges.tsv", edges)
    if binary_features:
        fileio.write_features_binary(out_dir / "features.bin", dataset.features.data)
    else:
        fileio.write_features_csv(out_dir / "features.csv", node_ids, dataset.features.data)
    labeled = dataset.labels.labels >= 0
    fileio.write_labels_csv(
        out_dir / "labels.csv",
        [node_ids[i] for i in np.nonzero(labeled)[0]],
        [class_names[dataset.labels.labels[i]] for i in np.nonzero(labeled)[0]],
        dataset.labels.split[labeled],
        dataset.labels.synthetic[labeled],
    )
    fileio.write_node_mapping(out_dir / "node_mapping.csv", node_ids)


def cmd_synth(args) -> int:
    spec = SynthSpec(num_nodes=args.n, rho=args.rho, intra_p=args.intra_p,
                     inter_p=args.inter_p, feature_dim=args.dim,
                     class_mean_separation=args.separation)
    dataset = generate_synth(spec, args.seed)
    node_ids = [str(i) for i in range(dataset.num_nodes)]
    _write_dataset_files(Path(args.out_dir), dataset, node_ids, ["0", "1"], args.binary_features)
    print(f"wrote synthetic dataset ({dataset.num_nodes} nodes, "
          f"{dataset.graph.relations[0].num_entries // 2} undirected edges) to {args.out_dir}")
    return 0


def _load_dataset_args(args) -> tuple:
    dataset, mapping = load_dataset(args.edges, args.features, args.labels,
                                    symmetrize=not args.directed)
    return dataset, mapping


def cmd_aggregate(args) -> int:
    node_ids, values = load_features(args.features)
    id_map = {node_id: i for i, node_id in enumerate(node_ids)}
    raw_edges = fileio.read_edges_tsv(args.edges)
    edges = [(id_map[s], id_map[d], r) for s, d, r in raw_edges]
    graph = build_graph(len(node_ids), edges, symmetrize=not args.directed)

    if args.standardize:
        stat_mask = np.ones(len(node_ids), dtype=bool)
        if args.labels:
            labels, _ = load_labelset(args.labels, id_map)
            train_real = labels.train_mask & labels.real_mask
            if train_real.any():
                stat_mask = train_real
        else:
            logger.warning("no --labels given; standardization statistics use all nodes")
        values = standardize(values, stat_mask)

    base = FeatureMatrix(values)
    out = Path(args.out)
    for r in range(graph.num_relations):
        space = propagate(normalize(graph, r), base, args.hops)
        data = space.data if args.no_concat else np.concatenate([space.data, base.data], axis=1)
        path = out if graph.num_relations == 1 else out.with_name(f"{out.stem}.rel{r}{out.suffix}")
        fileio.write_features_binary(path, data)
        print(f"wrote {data.shape[0]}x{data.shape[1]} feature space to {path}")
    return 0


def cmd_oversample(args) -> int:
    node_ids, values = load_features(args.features)
    id_map = {node_id: i for i, node_id in enumerate(node_ids)}
    labels, class_names = load_labelset(args.labels, id_map)
    features = FeatureMatrix(values)
    cfg = OversampleConfig(k=args.k, target=args.target)
    plan = make_plan(features, labels, cfg, args.seed)
    augmented, aug_labels = apply_plan(features, labels, plan)
    fileio.write_features_binary(args.out, augmented.data)
    write_plan_csv(args.plan_out, plan)
    if args.labels_out:
        # the binary feature output implies positional ids, so the label
        # rows follow the same dense numbering
        aug_ids = [str(i) for i in range(augmented.rows)]
        labeled = aug_labels.labels >= 0
        fileio.write_labels_csv(
            args.labels_out,
            [aug_ids[i] for i in np.nonzero(labeled)[0]],
            [class_names[aug_labels.labels[i]] for i in np.nonzero(labeled)[0]],
            aug_labels.split[labeled],
            aug_labels.synthetic[labeled],
        )
    print(f"generated {len(plan)} synthetic rows -> {args.out}")
    return 0


def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(lam=args.lam, lr=args.lr, weight_decay=args.weight_decay,
                       max_epochs=args.epochs, dropout=args.dropout, hidden=args.hidden,
                       seed=args.seed, early_stop_patience=args.patience,
                       sum_reduction=args.sum_reduction)


def _load_channels(paths) -> list:
    channels = []
    first_ids = None
    for path in paths:
        node_ids, values = load_features(path)
        if first_ids is None:
            first_ids = node_ids
        elif node_ids != first_ids:
            raise ValueError("feature channels disagree on node ids")
        channels.append(FeatureMatrix(values))
    return channels, first_ids


def cmd_train(args) -> int:
    channels, node_ids = _load_channels(args.features)
    id_map = {node_id: i for i, node_id in enumerate(node_ids)}
    labels, _ = load_labelset(args.labels, id_map)
    adj = None
    if args.mode == MODE_GCN:
        if not args.edges:
            raise SystemExit("gcn_baseline mode needs --edges")
        raw_edges = fileio.read_edges_tsv(args.edges)
        edges = [(id_map[s], id_map[d], r) for s, d, r in raw_edges]
        adj = union_adjacency(build_graph(len(node_ids), edges, symmetrize=not args.directed))
    cfg = _train_config_from_args(args)
    model, report = train(channels, labels, cfg, mode=args.mode, adj=adj)
    save_model(args.out, model)
    print(f"trained {args.mode} for {len(report.total_losses)} epochs "
          f"(best epoch {report.best_epoch}); saved to {args.out}")
    if args.report:
        payload = {
            "mode": args.mode,
            "epochs_run": len(report.total_losses),
            "best_epoch": report.best_epoch,
            "val_bacc": report.val_bacc,
            "labeled_losses": report.labeled_losses,
            "synthetic_losses": report.synthetic_losses,
            "total_losses": report.total_losses,
        }
        if report.final_metrics is not None:
            payload["val_metrics"] = report.final_metrics.to_dict()
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_predict(args) -> int:
    channels, node_ids = _load_channels(args.features)
    model = load_model(args.model)
    adj = None
    if model.mode == MODE_GCN:
        if not args.edges:
            raise SystemExit("this checkpoint needs --edges to rebuild its adjacency")
        id_map = {node_id: i for i, node_id in enumerate(node_ids)}
        raw_edges = fileio.read_edges_tsv(args.edges)
        edges = [(id_map[s], id_map[d], r) for s, d, r in raw_edges]
        adj = union_adjacency(build_graph(len(node_ids), edges, symmetrize=not args.directed))
    preds = predict(model, channels, adj)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("node_id,prediction\n")
        for node_id, pred in zip(node_ids, preds):
            fh.write(f"{node_id},{int(pred)}\n")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    with open(args.pred, "r", encoding="utf-8") as fh:
        header = fh.readline()
        rows = [line.strip().split(",") for line in fh if line.strip()]
    pred_map = {node_id: int(v) for node_id, v in rows}
    node_ids = list(pred_map)
    id_map = {node_id: i for i, node_id in enumerate(node_ids)}
    labels, class_names = load_labelset(args.labels, id_map)
    predictions = np.array([pred_map[node_id] for node_id in node_ids], dtype=np.int64)
    minority = None
    if args.minority_class is not None:
        if args.minority_class not in class_names:
            raise SystemExit(f"unknown minority class {args.minority_class!r}")
        minority = class_names.index(args.minority_class)
    bundle = evaluate(predictions, labels, split=args.split, minority_class=minority)
    text = json.dumps(bundle.to_dict(), indent=2)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def _experiment_config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.edges or args.features or args.labels:
        if not (args.edges and args.features and args.labels):
            raise SystemExit("--edges, --features, and --labels must be given together")
        cfg = replace(cfg, dataset=DatasetPaths(edges=args.edges, features=args.features,
                                                labels=args.labels,
                                                symmetrize=not args.directed),
                      synth=None)
    if args.rho is not None or args.n is not None:
        if cfg.synth is None:
            raise SystemExit("--rho/--n configure the synthetic benchmark, but dataset paths are set")
        synth = cfg.synth
        synth = replace(synth, rho=args.rho if args.rho is not None else synth.rho,
                        num_nodes=args.n if args.n is not None else synth.num_nodes)
        cfg = replace(cfg, synth=synth)
    if args.method:
        cfg = replace(cfg, method=args.method)
    if args.repetitions is not None:
        cfg = replace(cfg, repetitions=args.repetitions)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.lam is not None:
        cfg = replace(cfg, train=replace(cfg.train, lam=args.lam))
    return cfg


def cmd_run(args) -> int:
    cfg = _experiment_config_from_args(args)
    results = run_experiment(cfg)
    write_results(args.out_dir, results)
    for key, cell in results["summary"].items():
        print("%s %-10s %6.2f +/- %.2f" % (cfg.method, key, 100 * cell["mean"], 100 * cell["std"]))
    print(f"results written to {args.out_dir}")
    return 0


def cmd_sweep_lambda(args) -> int:
    cfg = _experiment_config_from_args(args)
    values = [float(v) for v in args.values.split(",") if v]
    rows = sweep_lambda(cfg, values)
    write_sweep_csv(args.out, rows)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def cmd_subsample_rho(args) -> int:
    dataset, mapping = _load_dataset_args(args)
    subsampled, kept = subsample_to_ratio(dataset, args.rho, args.seed)
    node_ids = [mapping["node_ids"][i] for i in kept]
    _write_dataset_files(Path(args.out_dir), subsampled, node_ids, mapping["class_names"],
                         args.binary_features)
    print(f"kept {len(kept)} of {dataset.num_nodes} nodes -> {args.out_dir}")
    return 0


def cmd_edge_noise(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig()
    if args.edges:
        dataset, _ = _load_dataset_args(args)
        base = dataset
        synth = None
    else:
        base = None
        synth = cfg.synth if cfg.synth is not None else SynthSpec()

    per_seed = []
    for s in range(args.seeds):
        seed = args.seed + s
        if synth is not None:
            ds = generate_synth(synth, seed, cfg.split_fractions)
        else:
            ds = Dataset(graph=base.graph, features=base.features,
                         labels=resplit(base.labels, cfg.split_fractions, seed))
        report = noise_experiment(ds, cfg.train, seed=seed)
        report["seed"] = seed
        per_seed.append(report)
    means = {
        key: float(np.mean([r[key] for r in per_seed]))
        for key in ("edge_auc", "acc_original_edges", "acc_synthetic_edges")
    }
    payload = {"per_seed": per_seed, "mean": means}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(json.dumps(means, indent=2))
    return 0


def _add_dataset_flags(parser, required: bool = False) -> None:
    parser.add_argument("--edges", required=required, help="edge TSV path")
    parser.add_argument("--features", required=required, help="feature CSV or IGF1 binary path")
    parser.add_argument("--labels", required=required, help="label CSV path")
    parser.add_argument("--directed", action="store_true",
                        help="keep input edges directed (no symmetrization)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imbalgraph",
                                     description="class-imbalanced graph node classification")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic benchmark dataset")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--intra-p", type=float, default=0.05)
    p.add_argument("--inter-p", type=float, default=0.005)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--binary-features", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("aggregate", help="build the propagated feature space")
    _add_dataset_flags(p)
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--no-concat", action="store_true", help="drop the raw-feature block")
    p.add_argument("--no-standardize", dest="standardize", action="store_false")
    p.add_argument("--out", required=True, help="output IGF1 path (per-relation suffixes if multiple)")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("oversample", help="balance train classes by interpolation")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="augmented features (IGF1)")
    p.add_argument("--plan-out", required=True, help="plan CSV path")
    p.add_argument("--labels-out", default=None, help="augmented label CSV path")
    p.set_defaults(func=cmd_oversample)

    p = sub.add_parser("train", help="train a classifier on prepared features")
    p.add_argument("--features", action="append", required=True,
                   help="feature file; repeat for multiple channels")
    p.add_argument("--labels", required=True)
    p.add_argument("--edges", default=None, help="edge TSV (gcn_baseline only)")
    p.add_argument("--directed", action="store_true")
    p.add_argument("--mode", choices=MODES, default="os_mlp")
    p.add_argument("--lambda", dest="lam", type=float, default=0.8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--sum-reduction", action="store_true",
                   help="raw-sum loss terms instead of per-node means")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--report", default=None, help="training report JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict classes with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", action="append", required=True)
    p.add_argument("--edges", default=None)
    p.add_argument("--directed", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a prediction CSV against labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", default="test", choices=list(SPLIT_NAMES.values())[:3])
    p.add_argument("--minority-class", default=None, help="class name; default smallest train class")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    for name, helptext in (("run", "run the full pipeline with repetitions"),
                           ("sweep-lambda", "run the experiment across lambda values")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="JSON config file")
        _add_dataset_flags(p)
        p.add_argument("--method", choices=["vanilla_gcn", "os_gnn", "sgc"], default=None)
        p.add_argument("--repetitions", type=int, default=None)
        p.add_argument("--seed", type=int, default=None, help="base seed")
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--rho", type=float, default=None, help="synthetic benchmark imbalance")
        p.add_argument("--n", type=int, default=None, help="synthetic benchmark size")
        if name == "run":
            p.add_argument("--out-dir", required=True)
            p.set_defaults(func=cmd_run)
        else:
            p.add_argument("--values", required=True, help="comma-separated lambda values")
            p.add_argument("--out", required=True, help="sweep CSV path")
            p.set_defaults(func=cmd_sweep_lambda)

    p = sub.add_parser("subsample-rho", help="increase imbalance by deleting minority nodes")
    _add_dataset_flags(p, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--binary-features", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_subsample_rho)

    p = sub.add_parser("edge-noise", help="compare true vs generated edges for classification")
    p.add_argument("--config", default=None)
    _add_dataset_flags(p)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edge_noise)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
