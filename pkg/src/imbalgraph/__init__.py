"""Class-imbalanced node classification on graphs.

The pipeline: aggregate k-hop neighborhoods into a feature space,
oversample minority classes there by interpolation, and train a
classifier with a weighted loss over real and synthetic nodes. Also ships
a vanilla graph-convolution baseline, a linear (SGC-style) variant, a
bilinear edge generator with its noise study, balanced evaluation
metrics, and a seeded experiment harness with a synthetic benchmark.
"""

from .aggregator import (AggregationConfig, NormalizedAdjacency, build_feature_space,
                         normalize, propagate, standardize, union_adjacency)
from .classifier import (MODE_GCN, MODE_OS_MLP, MODE_SGC, ClassifierModel, DivergenceError,
                         TrainConfig, TrainReport, backward, forward, forward_logits,
                         load_model, loss, predict, save_model, train)
from .edgegen import (EdgeGenerator, edge_score, noise_experiment, ranking_auc,
                      synthesize_adjacency, train_edge_generator)
from .graphcore import (Dataset, FeatureMatrix, GraphConstructionError, LabelSet,
                        SparseGraph, build_graph, imbalance_ratio)
from .harness import (DatasetPaths, ExperimentConfig, SynthSpec, generate_synth,
                      load_dataset, run_experiment, run_single, subsample_to_ratio,
                      sweep_lambda)
from .metrics import MetricsBundle, balanced_accuracy, confusion_matrix, evaluate
from .oversampler import (LonelyClassError, OversampleConfig, SmotePlan, apply_plan,
                          knn_same_class, make_plan)

__version__ = "0.1.0"

__all__ = [
    "AggregationConfig", "NormalizedAdjacency", "build_feature_space", "normalize",
    "propagate", "standardize", "union_adjacency",
    "MODE_GCN", "MODE_OS_MLP", "MODE_SGC", "ClassifierModel", "DivergenceError",
    "TrainConfig", "TrainReport", "backward", "forward", "forward_logits", "load_model", "loss",
    "predict", "save_model", "train",
    "EdgeGenerator", "edge_score", "noise_experiment", "ranking_auc",
    "synthesize_adjacency", "train_edge_generator",
    "Dataset", "FeatureMatrix", "GraphConstructionError", "LabelSet", "SparseGraph",
    "build_graph", "imbalance_ratio",
    "DatasetPaths", "ExperimentConfig", "SynthSpec", "generate_synth", "load_dataset",
    "run_experiment", "run_single", "subsample_to_ratio", "sweep_lambda",
    "MetricsBundle", "balanced_accuracy", "confusion_matrix", "evaluate",
    "LonelyClassError", "OversampleConfig", "SmotePlan", "apply_plan",
    "knn_same_class", "make_plan",
]
