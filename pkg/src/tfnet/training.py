"""Training loop: Adam, per-epoch lr decay, constraint projection each step.

Signals are standardized per sample (zero mean, unit variance) on entry to
both training and evaluation, so the model never sees raw amplitudes.
"""

from dataclasses import dataclass, field

import numpy as np

from tfnet.nn import Model, softmax_cross_entropy
from tfnet.seeding import derive_rng

STD_GUARD = 1e-8  # keeps flat signals finite after standardization


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    initial_lr: float = 1e-3
    lr_decay: float = 0.96
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    dtype: str = "float64"
    snapshot_theta: bool = True
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm needs it)")
        if not 0.0 < self.initial_lr:
            raise ValueError("initial_lr must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.adam_eps <= 0.0:
            raise ValueError("adam_eps must be positive")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be 'float64' or 'float32'")
        if self.eval_batch_size < 1:
            raise ValueError("eval_batch_size must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    theta_snapshots: list[np.ndarray] = field(default_factory=list)

    @property
    def final_test_acc(self) -> float:
        if not self.test_acc:
            raise ValueError("history is empty")
        return self.test_acc[-1]


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads, lr):
        grads = list(grads)
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def standardize(x: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Per-sample z-score over the time axis."""
    x = np.asarray(x, dtype=dtype)
    mean = x.mean(axis=-1, keepdims=True)
    std = x.std(axis=-1, keepdims=True)
    return (x - mean) / (std + STD_GUARD)


def _as_batch(signals) -> np.ndarray:
    """Coerce (N, L) or (N, 1, L) to (N, 1, L)."""
    x = np.asarray(signals)
    if x.ndim == 2:
        x = x[:, None, :]
    if x.ndim != 3 or x.shape[1] != 1:
        raise ValueError(f"expected (N, L) or (N, 1, L) signals, got shape {x.shape}")
    return x


def evaluate(model: Model, signals, labels, batch_size=256):
    """Accuracy and confusion matrix (rows true, columns predicted)."""
    signals = _as_batch(signals)
    labels = np.asarray(labels)
    if signals.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if signals.shape[0] != labels.shape[0]:
        raise ValueError("signals and labels disagree on sample count")
    n = model.n_classes
    confusion = np.zeros((n, n), dtype=np.int64)
    for start in range(0, signals.shape[0], batch_size):
        xb = standardize(signals[start : start + batch_size], dtype=model.dtype)
        logits = model.forward(xb, training=False)
        pred = logits.argmax(axis=1)
        for t, p in zip(labels[start : start + batch_size], pred):
            confusion[int(t), int(p)] += 1
    accuracy = float(np.trace(confusion)) / float(confusion.sum())
    return accuracy, confusion


def train(model: Model, train_signals, train_labels, test_signals=None, test_labels=None,
          config: TrainConfig | None = None) -> TrainHistory:
    """Mini-batch training with shuffling, projection and per-epoch metrics.

    Only full batches run, so every step sees identical batch statistics
    (shuffling still cycles all samples across epochs); a dataset smaller
    than one batch trains as a single batch.  Test accuracy is recorded per
    epoch when a test set is given.
    """
    cfg = config or TrainConfig()
    dtype = np.dtype(cfg.dtype)
    x = _as_batch(train_signals)
    y = np.asarray(train_labels)
    if x.shape[0] < 2:
        raise ValueError("need at least two training samples")
    if x.shape[0] != y.shape[0]:
        raise ValueError("signals and labels disagree on sample count")
    if np.any(y < 0) or np.any(y >= model.n_classes):
        raise ValueError(f"labels must lie in [0, {model.n_classes})")
    model.dtype = dtype
    tf_layer = model.tfconv
    # kernel control parameters always live in float64; only backbone
    # weights must match the configured dtype
    exempt = set(id(p) for p in tf_layer.params) if tf_layer is not None else set()
    for p in model.parameters():
        if id(p) not in exempt and p.dtype != dtype and p.dtype.kind == "f":
            raise ValueError("model dtype does not match config dtype; rebuild the model")

    rng = derive_rng(cfg.seed, "train.shuffle")
    opt = Adam(model.parameters(), beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    history = TrainHistory()
    if tf_layer is not None and cfg.snapshot_theta:
        history.theta_snapshots.append(tf_layer.kernel_params.theta.copy())

    lr = cfg.initial_lr
    n = x.shape[0]
    xs = standardize(x, dtype=dtype)
    bs = min(cfg.batch_size, n)
    n_batches = n // bs
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        seen = 0
        for b in range(n_batches):
            idx = order[b * bs : (b + 1) * bs]
            xb = xs[idx]
            yb = y[idx]
            logits = model.forward(xb, training=True)
            loss, gl = softmax_cross_entropy(logits, yb)
            model.zero_grad()
            model.backward(gl)
            opt.step(model.gradients(), lr)
            model.project_params()
            loss_sum += loss * idx.size
            correct += int((logits.argmax(axis=1) == yb).sum())
            seen += idx.size
        history.train_loss.append(loss_sum / seen)
        history.train_acc.append(correct / seen)
        if test_signals is not None:
            acc, _ = evaluate(model, test_signals, test_labels,
                              batch_size=cfg.eval_batch_size)
            history.test_acc.append(acc)
        history.lr.append(lr)
        if tf_layer is not None and cfg.snapshot_theta:
            history.theta_snapshots.append(tf_layer.kernel_params.theta.copy())
        lr *= cfg.lr_decay
    return history
