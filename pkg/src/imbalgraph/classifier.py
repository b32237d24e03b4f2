"""Two-layer classifiers over the (augmented) feature space.

Three modes share one weight layout (W1: in_dim x hidden, W2: hidden x C):

  * ``os_mlp``        softmax(relu(X W1) W2), the identity-adjacency
                      classifier trained on oversampled features;
  * ``sgc``           softmax(X W1 W2), the linear variant;
  * ``gcn_baseline``  softmax(A relu(A X W1) W2) on a normalized
                      adjacency A, trained on the original graph.

Multi-channel models (one feature space per relation) sum the per-channel
logits before the softmax. Gradients are analytic; training is full-batch
Adam with an explicit L2 weight-decay term and early stopping on
validation balanced accuracy.
"""

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aggregator import NormalizedAdjacency
from .graphcore import FeatureMatrix, LabelSet
from .metrics import MetricsBundle, balanced_accuracy, evaluate
from .rng import STREAM_TRAIN, make_rng

MODE_OS_MLP = "os_mlp"
MODE_SGC = "sgc"
MODE_GCN = "gcn_baseline"
MODES = (MODE_OS_MLP, MODE_SGC, MODE_GCN)

PROB_FLOOR = 1e-12  # cross-entropy clamp
MODEL_MAGIC = b"IGM1"
_MODE_CODES = {MODE_OS_MLP: 0, MODE_SGC: 1, MODE_GCN: 2}
_MODE_NAMES = {code: name for name, code in _MODE_CODES.items()}


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


@dataclass
class ClassifierModel:
    """Per-channel weight matrices plus the forward mode.

    ``activation`` switches the hidden nonlinearity between "relu" and
    "identity"; identity exists for linearization checks and is never
    serialized.
    """

    mode: str
    w1: list
    w2: list
    activation: str = "relu"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.w1) != len(self.w2) or not self.w1:
            raise ValueError("need matching, non-empty per-channel weight lists")
        shapes1 = {w.shape for w in self.w1}
        shapes2 = {w.shape for w in self.w2}
        if len(shapes1) != 1 or len(shapes2) != 1:
            raise ValueError("per-channel weight shapes must be identical")
        if self.w1[0].shape[1] != self.w2[0].shape[0]:
            raise ValueError(
                f"W1 columns ({self.w1[0].shape[1]}) must match W2 rows ({self.w2[0].shape[0]})"
            )
        for w in list(self.w1) + list(self.w2):
            if not np.all(np.isfinite(w)):
                raise ValueError("model weights must be finite")

    @property
    def channels(self) -> int:
        return len(self.w1)

    @property
    def in_dim(self) -> int:
        return self.w1[0].shape[0]

    @property
    def hidden(self) -> int:
        return self.w1[0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.w2[0].shape[1]

    def copy_weights(self):
        return [w.copy() for w in self.w1], [w.copy() for w in self.w2]


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    ``lam`` weights the synthetic-node loss term; ``sum_reduction``
    switches both loss terms from per-node means to raw sums.
    """

    lam: float = 0.8
    lr: float = 1e-3
    weight_decay: float = 5e-4
    max_epochs: int = 500
    dropout: float = 0.3
    hidden: int = 128
    seed: int = 0
    early_stop_patience: int = 50
    sum_reduction: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.max_epochs < 1 or self.hidden < 1 or self.early_stop_patience < 0:
            raise ValueError("max_epochs and hidden must be >= 1, patience >= 0")


@dataclass
class TrainReport:
    """Per-epoch loss terms and the selected epoch.

    ``total_losses[e] == labeled_losses[e] + lam * synthetic_losses[e]``
    holds at every epoch; weight decay is applied through the gradients
    and not folded into these numbers.
    """

    labeled_losses: list = field(default_factory=list)
    synthetic_losses: list = field(default_factory=list)
    total_losses: list = field(default_factory=list)
    best_epoch: int = -1
    val_bacc: float = float("nan")
    final_metrics: Optional[MetricsBundle] = None


def _as_channels(features) -> list:
    if isinstance(features, FeatureMatrix):
        return [features]
    channels = list(features)
    if not channels:
        raise ValueError("need at least one feature channel")
    return channels


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=1, keepdims=True)
    return shifted


def _forward_channels(model: ClassifierModel, channels: list, adj, masks, dropout: float):
    probs, caches, _ = _forward_full(model, channels, adj, masks, dropout)
    return probs, caches


def _forward_full(model: ClassifierModel, channels: list, adj, masks, dropout: float):
    """Shared forward pass; returns (probs, per-channel caches, logits).

    ``masks`` holds one keep-mask per channel (or None for evaluation);
    dropout rescales kept units by 1/(1-p).
    """
    if len(channels) != model.channels:
        raise ValueError(f"model has {model.channels} channels, got {len(channels)} feature spaces")
    if model.mode == MODE_GCN:
        if adj is None:
            raise ValueError("gcn_baseline mode needs a normalized adjacency")
        if model.channels != 1:
            raise ValueError("gcn_baseline supports a single channel")
    elif adj is not None:
        raise ValueError(f"mode {model.mode} does not take an adjacency")

    rows = channels[0].rows
    operator = adj.to_scipy() if model.mode == MODE_GCN else None
    logits = None
    caches = []
    for c, fm in enumerate(channels):
        if fm.rows != rows:
            raise ValueError("feature channels disagree on the number of rows")
        if fm.cols != model.in_dim:
            raise ValueError(
                f"channel {c}: width {fm.cols} does not match W1 input dim {model.in_dim}"
            )
        x = fm.data
        if operator is not None:
            if adj.num_nodes != rows:
                raise ValueError(
                    f"adjacency size {adj.num_nodes} does not match {rows} feature rows"
                )
            x = operator @ x
        pre = x @ model.w1[c]
        if model.mode == MODE_SGC or model.activation == "identity":
            hidden = pre
        else:
            hidden = np.maximum(pre, 0.0)
        dropped = hidden
        if masks is not None and model.mode != MODE_SGC:
            dropped = hidden * (masks[c] / (1.0 - dropout))
        out = dropped @ model.w2[c]
        if operator is not None:
            out = operator @ out
        logits = out if logits is None else logits + out
        caches.append({"x": x, "pre": pre, "dropped": dropped})
    return _softmax(logits), caches, logits


def forward(model: ClassifierModel, features, adj: Optional[NormalizedAdjacency] = None) -> np.ndarray:
    """Per-node class probabilities (rows sum to 1); dropout disabled."""
    probs, _ = _forward_channels(model, _as_channels(features), adj, masks=None, dropout=0.0)
    return probs


def forward_logits(model: ClassifierModel, features, adj: Optional[NormalizedAdjacency] = None) -> np.ndarray:
    """Pre-softmax logits; dropout disabled."""
    _, _, logits = _forward_full(model, _as_channels(features), adj, masks=None, dropout=0.0)
    return logits


def predict(model: ClassifierModel, features, adj: Optional[NormalizedAdjacency] = None) -> np.ndarray:
    """Argmax class per node; ties resolve to the lowest class id."""
    return np.argmax(forward(model, features, adj), axis=1)


def _loss_masks(labels: LabelSet):
    labeled = labels.train_mask & labels.real_mask & (labels.labels >= 0)
    synthetic = labels.synthetic
    return labeled, synthetic


def _cross_entropy(probs: np.ndarray, targets: np.ndarray, rows: np.ndarray, sum_reduction: bool) -> float:
    if not rows.any():
        return 0.0
    picked = probs[rows, targets[rows]]
    values = -np.log(np.maximum(picked, PROB_FLOOR))
    return float(values.sum() if sum_reduction else values.mean())


def loss_terms(probs: np.ndarray, labels: LabelSet, sum_reduction: bool = False):
    """(labeled, synthetic) cross-entropy terms of the training objective."""
    if probs.shape[0] < len(labels):
        raise ValueError(f"probabilities cover {probs.shape[0]} rows but {len(labels)} nodes are labeled")
    labeled, synthetic = _loss_masks(labels)
    return (
        _cross_entropy(probs, labels.labels, labeled, sum_reduction),
        _cross_entropy(probs, labels.labels, synthetic, sum_reduction),
    )


def loss(probs: np.ndarray, labels: LabelSet, lam: float, sum_reduction: bool = False) -> float:
    """Labeled cross-entropy plus lam-weighted synthetic cross-entropy."""
    labeled, synthetic = loss_terms(probs, labels, sum_reduction)
    return labeled + lam * synthetic


def _logit_gradient(probs: np.ndarray, labels: LabelSet, lam: float, sum_reduction: bool) -> np.ndarray:
    """d(objective)/d(logits): softmax-CE rows scaled by term weights."""
    labeled, synthetic = _loss_masks(labels)
    grad = np.zeros_like(probs)
    for rows, weight in ((labeled, 1.0), (synthetic, lam)):
        count = int(rows.sum())
        if count == 0 or weight == 0.0:
            continue
        scale = weight if sum_reduction else weight / count
        block = probs[rows].copy()
        block[np.arange(count), labels.labels[rows]] -= 1.0
        grad[rows] = block * scale
    return grad


def _gradients(model, channels, caches, grad_logits, adj, masks, dropout, weight_decay):
    operator = adj.to_scipy() if model.mode == MODE_GCN else None
    upstream = operator.T @ grad_logits if operator is not None else grad_logits
    grads_w1, grads_w2 = [], []
    for c, cache in enumerate(caches):
        d_w2 = cache["dropped"].T @ upstream
        d_dropped = upstream @ model.w2[c].T
        if masks is not None and model.mode != MODE_SGC:
            d_dropped = d_dropped * (masks[c] / (1.0 - dropout))
        if model.mode != MODE_SGC and model.activation == "relu":
            d_pre = d_dropped * (cache["pre"] > 0.0)
        else:
            d_pre = d_dropped
        d_w1 = cache["x"].T @ d_pre
        grads_w1.append(d_w1 + 2.0 * weight_decay * model.w1[c])
        grads_w2.append(d_w2 + 2.0 * weight_decay * model.w2[c])
    return grads_w1, grads_w2


def backward(model: ClassifierModel, features, labels: LabelSet, cfg: TrainConfig,
             adj: Optional[NormalizedAdjacency] = None, masks=None):
    """Analytic gradients of the objective for every channel's (W1, W2).

    The objective is the lam-weighted cross-entropy of :func:`loss` plus
    weight_decay * sum of squared weights.
    """
    channels = _as_channels(features)
    probs, caches = _forward_channels(model, channels, adj, masks, cfg.dropout)
    grad_logits = _logit_gradient(probs, labels, cfg.lam, cfg.sum_reduction)
    return _gradients(model, channels, caches, grad_logits, adj, masks, cfg.dropout, cfg.weight_decay)


def objective(model: ClassifierModel, features, labels: LabelSet, cfg: TrainConfig,
              adj: Optional[NormalizedAdjacency] = None, masks=None) -> float:
    """The scalar the gradients differentiate (loss plus weight decay)."""
    channels = _as_channels(features)
    probs, _ = _forward_channels(model, channels, adj, masks, cfg.dropout)
    decay = sum(float(np.sum(w * w)) for w in model.w1 + model.w2)
    return loss(probs, labels, cfg.lam, cfg.sum_reduction) + cfg.weight_decay * decay


def init_model(mode: str, in_dim: int, hidden: int, num_classes: int, channels: int,
               rng: np.random.Generator, activation: str = "relu") -> ClassifierModel:
    """Glorot-uniform weights drawn channel by channel from ``rng``."""
    w1, w2 = [], []
    for _ in range(channels):
        a1 = np.sqrt(6.0 / (in_dim + hidden))
        w1.append(rng.uniform(-a1, a1, size=(in_dim, hidden)))
        a2 = np.sqrt(6.0 / (hidden + num_classes))
        w2.append(rng.uniform(-a2, a2, size=(hidden, num_classes)))
    return ClassifierModel(mode=mode, w1=w1, w2=w2, activation=activation)


class _Adam:
    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1**self.t)
            v_hat = self.v[i] / (1.0 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(features, labels: LabelSet, cfg: TrainConfig = TrainConfig(), mode: str = MODE_OS_MLP,
          adj: Optional[NormalizedAdjacency] = None):
    """Full-batch Adam training; returns (model, report).

    The model returned is the one with the best validation balanced
    accuracy (final weights when there is no validation split). Dropout
    masks come from the seeded train stream, so identical inputs give
    bit-identical reports.
    """
    channels = _as_channels(features)
    counts = labels.train_class_counts(include_synthetic=True)
    if np.any(counts == 0):
        missing = np.nonzero(counts == 0)[0].tolist()
        raise ValueError(f"classes {missing} have no train nodes (after oversampling)")

    rng = make_rng(cfg.seed, STREAM_TRAIN)
    model = init_model(
        mode, channels[0].cols, cfg.hidden, labels.num_classes, len(channels), rng
    )
    optimizer = _Adam([w.shape for w in model.w1 + model.w2], cfg.lr)

    val_mask = labels.val_mask & labels.real_mask
    has_val = bool(val_mask.any())
    val_true = labels.labels[val_mask]

    report = TrainReport()
    best_weights = None
    best_bacc = -np.inf
    epochs_since_best = 0
    use_dropout = cfg.dropout > 0.0 and mode != MODE_SGC
    n_rows = channels[0].rows

    for epoch in range(cfg.max_epochs):
        masks = None
        if use_dropout:
            masks = [rng.random((n_rows, cfg.hidden)) >= cfg.dropout for _ in channels]
        probs, caches = _forward_channels(model, channels, adj, masks, cfg.dropout)
        labeled_term, synth_term = loss_terms(probs, labels, cfg.sum_reduction)
        total = labeled_term + cfg.lam * synth_term
        if not np.isfinite(total):
            raise DivergenceError(epoch)
        report.labeled_losses.append(labeled_term)
        report.synthetic_losses.append(synth_term)
        report.total_losses.append(total)

        grad_logits = _logit_gradient(probs, labels, cfg.lam, cfg.sum_reduction)
        g1, g2 = _gradients(model, channels, caches, grad_logits, adj, masks,
                            cfg.dropout, cfg.weight_decay)
        optimizer.step(model.w1 + model.w2, g1 + g2)

        if has_val:
            eval_probs, _ = _forward_channels(model, channels, adj, None, 0.0)
            val_pred = np.argmax(eval_probs[val_mask], axis=1)
            bacc = balanced_accuracy(val_true, val_pred, labels.num_classes)
            if bacc > best_bacc:
                best_bacc = bacc
                best_weights = model.copy_weights()
                report.best_epoch = epoch
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= cfg.early_stop_patience > 0:
                    break

    if has_val and best_weights is not None:
        model.w1, model.w2 = best_weights
        report.val_bacc = best_bacc
        report.final_metrics = evaluate(predict(model, channels, adj), labels, split="val")
    else:
        report.best_epoch = len(report.total_losses) - 1
    return model, report


def save_model(path, model: ClassifierModel) -> None:
    """Write the IGM1 checkpoint: magic, mode byte, channel count, dims, weights."""
    if model.activation != "relu":
        raise ValueError("only relu-activation models are serialized")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<BQQQQ", _MODE_CODES[model.mode], model.channels,
                             model.in_dim, model.hidden, model.num_classes))
        for c in range(model.channels):
            fh.write(np.ascontiguousarray(model.w1[c], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(model.w2[c], dtype="<f8").tobytes())


def load_model(path) -> ClassifierModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
        mode_code, channels, in_dim, hidden, num_classes = struct.unpack("<BQQQQ", fh.read(33))
        if mode_code not in _MODE_NAMES:
            raise ValueError(f"{path}: unknown mode byte {mode_code}")
        w1, w2 = [], []
        for _ in range(channels):
            buf1 = fh.read(in_dim * hidden * 8)
            buf2 = fh.read(hidden * num_classes * 8)
            if len(buf1) != in_dim * hidden * 8 or len(buf2) != hidden * num_classes * 8:
                raise ValueError(f"{path}: truncated weight payload")
            w1.append(np.frombuffer(buf1, dtype="<f8").reshape(in_dim, hidden).copy())
            w2.append(np.frombuffer(buf2, dtype="<f8").reshape(hidden, num_classes).copy())
    return ClassifierModel(mode=_MODE_NAMES[mode_code], w1=w1, w2=w2)
