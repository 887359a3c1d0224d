"""Training and evaluation loops.

Three tasks share one loop:

* ``angle-regression``: Euclidean loss between the sigmoid output and the
  normalised ground-truth angle.
* ``stn-classification``: cross-entropy on digit labels through a spatial
  transformer; the intermediate angle is what gets evaluated.
* ``digit-classification``: cross-entropy on upright digits (the classifier
  later rectified by R2N).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .dataset import Split, SplitSet
from .layers import Adam, cross_entropy_loss, euclidean_loss
from .models import Model, encode_angle
from .tensor_core import get_dtype

log = logging.getLogger(__name__)

TASKS = ("angle-regression", "stn-classification", "digit-classification")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 160
    batch_size: int = 128
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    task: str = "angle-regression"
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("epochs must be >= 0; batch_size and eval_every >= 1")
        if not self.lr >= 0:
            raise ValueError("learning rate must be non-negative")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")


@dataclass
class MetricsRecord:
    epoch: int
    train_loss: float
    val_rmse_degrees: float | None = None
    val_accuracy: float | None = None


@dataclass
class TrainResult:
    model: Model
    history: list[MetricsRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("nan")
    optimizer: Adam | None = None
    # parameters after the final step, before the best snapshot was restored
    last_params: list[np.ndarray] = field(default_factory=list)


def _batches(n: int, batch_size: int, order: np.ndarray):
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def predict_normalized(model: Model, images: np.ndarray, batch_size: int = 500) -> np.ndarray:
    """Raw sigmoid outputs s in [0, 1] (estimators) or decoded-back s (STN)."""
    out = []
    for lo in range(0, len(images), batch_size):
        x = images[lo:lo + batch_size]
        if hasattr(model, "loc"):
            model.forward(x, train=False)
            out.append(encode_angle(model.theta))
        else:
            out.append(model.forward(x, train=False)[:, 0].astype(np.float64))
    return np.concatenate(out) if out else np.zeros(0)


def predict_angles(model: Model, images: np.ndarray, batch_size: int = 500) -> np.ndarray:
    """Estimated angles in radians (dropout off)."""
    out = []
    for lo in range(0, len(images), batch_size):
        out.append(np.asarray(model.predict_angle(images[lo:lo + batch_size]), dtype=np.float64))
    return np.concatenate(out) if out else np.zeros(0)


def rmse_degrees(pred_rad: np.ndarray, true_rad: np.ndarray) -> float:
    diff = np.degrees(np.asarray(pred_rad, np.float64)) - np.degrees(np.asarray(true_rad, np.float64))
    return float(np.sqrt(np.mean(diff * diff)))


def evaluate_angle(model: Model, split: Split, batch_size: int = 500) -> float:
    if len(split) == 0:
        raise ValueError("cannot evaluate on an empty sample set")
    return rmse_degrees(predict_angles(model, split.images, batch_size), split.theta)


def predict_labels(model: Model, images: np.ndarray, batch_size: int = 500) -> np.ndarray:
    out = []
    for lo in range(0, len(images), batch_size):
        logits = model.forward(images[lo:lo + batch_size], train=False)
        out.append(logits.argmax(axis=1))
    return np.concatenate(out) if out else np.zeros(0, np.int64)


def evaluate_classification(model: Model, split: Split, batch_size: int = 500) -> float:
    if len(split) == 0:
        raise ValueError("cannot evaluate on an empty sample set")
    return float(np.mean(predict_labels(model, split.images, batch_size) == split.digits))


def _first_nonfinite(model: Model) -> str:
    for name, p in model.named_parameters():
        if not np.all(np.isfinite(p)):
            return f"parameter {name}"
    for name, g in model.named_gradients():
        if not np.all(np.isfinite(g)):
            return f"gradient {name}"
    return "model output"


def batch_loss(model: Model, split: Split, idx: np.ndarray, task: str, train: bool):
    x = split.images[idx].astype(get_dtype(), copy=False)
    out = model.forward(x, train=train)
    if task == "angle-regression":
        target = encode_angle(split.theta[idx]).astype(out.dtype)[:, None]
        return euclidean_loss(out, target)
    return cross_entropy_loss(out, split.digits[idx])


def dataset_loss(model: Model, split: Split, task: str, batch_size: int = 500) -> float:
    """Mean per-sample loss in eval mode."""
    total = 0.0
    for idx in _batches(len(split), batch_size, np.arange(len(split))):
        loss, _ = batch_loss(model, split, idx, task, train=False)
        total += loss * len(idx)
    return total / len(split)


def validate(model: Model, split: Split, task: str) -> MetricsRecord:
    rec = MetricsRecord(epoch=0, train_loss=float("nan"))
    if task != "digit-classification":
        rec.val_rmse_degrees = evaluate_angle(model, split)
    if task != "angle-regression":
        rec.val_accuracy = evaluate_classification(model, split)
    return rec


def _score(rec: MetricsRecord, task: str) -> float:
    """Higher is better."""
    if task == "angle-regression":
        return -rec.val_rmse_degrees
    return rec.val_accuracy


def snapshot(model: Model) -> list[np.ndarray]:
    return [p.copy() for p in model.parameters()]


def restore(model: Model, snap: list[np.ndarray]) -> None:
    for p, s in zip(model.parameters(), snap):
        p[...] = s


def train(model: Model, splits: SplitSet, config: TrainConfig, metrics_csv=None) -> TrainResult:
    """Adam training with per-epoch seeded shuffling and best-validation retention.

    On return the model holds the best-validation parameters; the optimizer
    in the result reflects the final step.
    """
    train_split, val_split = splits.train, splits.validation
    params = model.parameters()
    opt = Adam(params, config.lr, config.beta1, config.beta2)
    result = TrainResult(model=model, optimizer=opt)
    writer = _CsvLog(metrics_csv, config.task) if metrics_csv else None
    best_score, best_snap = -math.inf, snapshot(model)

    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(train_split))
        total = 0.0
        for idx in _batches(len(train_split), config.batch_size, order):
            loss, grad = batch_loss(model, train_split, idx, config.task, train=True)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}; first offender: {_first_nonfinite(model)}")
            model.backward(grad.astype(get_dtype(), copy=False))
            grads = model.gradients()
            for (name, _), g in zip(model.named_gradients(), grads):
                if not np.all(np.isfinite(g)):
                    raise TrainingDiverged(f"non-finite gradient {name} at epoch {epoch}")
            opt.step(grads)
            total += loss * len(idx)

        if epoch % config.eval_every and epoch != config.epochs:
            continue
        rec = validate(model, val_split, config.task)
        rec.epoch, rec.train_loss = epoch, total / len(train_split)
        result.history.append(rec)
        if writer:
            writer.append(rec)
        score = _score(rec, config.task)
        if score > best_score:
            best_score, best_snap = score, snapshot(model)
            result.best_epoch = epoch
            result.best_metric = rec.val_rmse_degrees if config.task == "angle-regression" else rec.val_accuracy
        log.info("epoch %d loss %.5f val_rmse %s val_acc %s", epoch, rec.train_loss,
                 _fmt(rec.val_rmse_degrees), _fmt(rec.val_accuracy))

    result.last_params = snapshot(model)
    restore(model, best_snap)
    return result


def _fmt(v):
    return "" if v is None else f"{v:.4f}"


class _CsvLog:
    """Append-only metrics CSV; the header is written once."""

    def __init__(self, path, task: str):
        self.path = Path(path)
        self.with_acc = task != "angle-regression"
        header = ["epoch", "train_loss", "val_rmse_degrees"] + (["val_accuracy"] if self.with_acc else [])
        if not self.path.exists() or self.path.stat().st_size == 0:
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(header)

    def append(self, rec: MetricsRecord) -> None:
        row = [rec.epoch, repr(float(rec.train_loss)), _csv_num(rec.val_rmse_degrees)]
        if self.with_acc:
            row.append(_csv_num(rec.val_accuracy))
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow(row)


def _csv_num(v):
    return "" if v is None else repr(float(v))


def history_as_dicts(history: list[MetricsRecord]) -> list[dict]:
    return [asdict(r) for r in history]
