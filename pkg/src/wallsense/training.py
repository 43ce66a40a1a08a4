"""Training loop (Adam + cross-entropy), stratified splits, and evaluation metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import GradientFlowError, Tensor, constant, log_softmax, mul, tsum
from .model import DualStreamClassifier


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    early_stop_patience: int = 10
    stop_at_val_acc: float = 1.0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ValueError("splits leave no training data")


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise GradientFlowError(
                    f"parameter {p.name or i} received no gradient; "
                    "it is detached from the loss graph")
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / (1.0 - b1 ** self.t)
            v_hat = self.v[i] / (1.0 - b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax logits."""
    n, n_classes = logits.shape
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), np.asarray(labels, dtype=int)] = 1.0
    picked = tsum(mul(log_softmax(logits, axis=-1), constant(onehot)))
    return mul(picked, Tensor(-1.0 / n))


def stratified_split(labels: np.ndarray, val_fraction: float, test_fraction: float,
                     seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint train/val/test index sets with per-class proportions."""
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B117]))
    train, val, test = [], [], []
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        idx = rng.permutation(idx)
        n = idx.size
        n_val = int(round(val_fraction * n))
        n_test = int(round(test_fraction * n))
        if n - n_val - n_test < 1:
            raise ValueError(f"class {cls} has too few samples for the split")
        val.append(idx[:n_val])
        test.append(idx[n_val:n_val + n_test])
        train.append(idx[n_val + n_test:])
    return (np.sort(np.concatenate(train)), np.sort(np.concatenate(val)),
            np.sort(np.concatenate(test)))


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=int)
    for t, p in zip(np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)):
        cm[t, p] += 1
    return cm


def metrics_from_confusion(cm: np.ndarray) -> dict:
    """Accuracy plus macro-averaged precision, recall, and F1."""
    cm = np.asarray(cm, dtype=float)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty evaluation split")
    diag = np.diag(cm)
    col = cm.sum(axis=0)
    row = cm.sum(axis=1)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    denom = precision + recall
    f1 = np.divide(2.0 * precision * recall, denom,
                   out=np.zeros_like(diag), where=denom > 0)
    return {
        "accuracy": float(diag.sum() / total),
        "macro_precision": float(precision.mean()),
        "macro_recall": float(recall.mean()),
        "macro_f1": float(f1.mean()),
        "per_class_recall": recall.tolist(),
        "confusion_matrix": cm.astype(int).tolist(),
    }


def predict(model: DualStreamClassifier, x: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Class predictions, evaluated in chunks to bound graph memory."""
    preds = []
    for i in range(0, x.shape[0], chunk):
        logits = model(Tensor(x[i:i + chunk]))
        preds.append(np.argmax(logits.data, axis=-1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=int)


def evaluate(model: DualStreamClassifier, x: np.ndarray, labels: np.ndarray) -> dict:
    if x.shape[0] == 0:
        raise ValueError("empty evaluation split")
    preds = predict(model, x)
    cm = confusion_matrix(labels, preds, model.cfg.num_classes)
    return metrics_from_confusion(cm)


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = -1.0
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "stopped_early": self.stopped_early,
        }


def _mean_loss(model: DualStreamClassifier, x: np.ndarray, labels: np.ndarray,
               chunk: int = 64) -> float:
    total = 0.0
    for i in range(0, x.shape[0], chunk):
        logits = model(Tensor(x[i:i + chunk]))
        loss = cross_entropy(logits, labels[i:i + chunk])
        total += loss.item() * (min(i + chunk, x.shape[0]) - i)
    return total / x.shape[0]


def train(model: DualStreamClassifier, x_train: np.ndarray, y_train: np.ndarray,
          x_val: np.ndarray, y_val: np.ndarray, cfg: TrainConfig) -> TrainReport:
    """Adam training with per-epoch logging and best-validation checkpointing.

    Deterministic under cfg.seed: shuffling, dropout, and initialization are
    the only random inputs and all are seeded.  The model is left holding the
    best-validation parameters.
    """
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7EA1]))
    drop_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD120]))
    report = TrainReport()
    best_state = model.state_dict()
    best_key = (-1.0, -float("inf"))

    no_improve = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(x_train.shape[0])
        epoch_loss = 0.0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            opt.zero_grad()
            logits = model(Tensor(x_train[batch]), train_rng=drop_rng)
            loss = cross_entropy(logits, y_train[batch])
            if not math.isfinite(loss.item()):
                raise DivergenceError(
                    f"loss became {loss.item()} at epoch {epoch}, step {start // cfg.batch_size}; "
                    "lower the learning rate")
            loss.backward()
            opt.step()
            epoch_loss += loss.item() * batch.size
        epoch_loss /= order.size

        val_metrics = evaluate(model, x_val, y_val)
        val_acc = val_metrics["accuracy"]
        val_loss = _mean_loss(model, x_val, y_val)
        report.epochs.append({
            "epoch": epoch,
            "train_loss": epoch_loss,
            "val_loss": val_loss,
            "val_accuracy": val_acc,
        })
        # Accuracy decides the best checkpoint; ties break on validation loss
        # so training past accuracy saturation still refines the kept weights.
        key = (val_acc, -val_loss)
        if key > best_key:
            best_key = key
            report.best_val_accuracy = val_acc
            report.best_epoch = epoch
            best_state = model.state_dict()
            no_improve = 0
        else:
            no_improve += 1
        if val_acc >= cfg.stop_at_val_acc or no_improve >= cfg.early_stop_patience:
            report.stopped_early = epoch + 1 < cfg.epochs
            break

    model.load_state_dict(best_state)
    return report
