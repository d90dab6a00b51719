"""Training protocol: Adam, plateau learning-rate decay, early stopping.

Validation loss drives both schedulers. An epoch counts as an improvement
when its validation loss is at least ``min_improvement`` below the best
seen so far; after ``plateau_patience`` consecutive non-improvements the
learning rate is multiplied by ``plateau_factor`` (and the plateau counter
resets), after ``early_stop_patience`` the run stops. The best epoch's
full model state (parameters and batch-norm running statistics) is
snapshotted on every improvement and restored when training ends, so the
returned model evaluates exactly like the recorded best epoch.

Shuffling draws from a stream keyed by (seed, epoch) only, so two models
trained with the same seed see the same rows in the same order at every
step.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .datagen import LabeledDataset
from .errors import ConfigError, DomainError, TrainingDiverged
from .nn.adam import Adam
from .nn.layers import softmax_cross_entropy
from .nn.model import Model


@dataclass
class TrainingConfig:
    learning_rate: float = 3e-4
    batch_size: int = 128
    max_epochs: int = 500
    plateau_factor: float = 0.5
    plateau_patience: int = 10
    early_stop_patience: int = 25
    min_improvement: float = 1e-6
    shuffle_each_epoch: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("patience values must be positive")
        if self.early_stop_patience <= self.plateau_patience:
            raise ConfigError("early_stop_patience must exceed plateau_patience")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if not (0.0 < self.plateau_factor < 1.0):
            raise ConfigError("plateau_factor must be in (0, 1)")


class PlateauEarlyStop:
    """The scheduler state machine, standalone so tests can drive it.

    ``observe`` returns (improved, reduce_lr, stop). With a constant loss
    stream the first observation improves (versus +inf), the learning
    rate reduces on observations 1 + k * plateau_patience for k >= 1, and
    stop fires on observation early_stop_patience + 1.
    """

    def __init__(self, plateau_patience: int, early_stop_patience: int,
                 min_improvement: float):
        self.plateau_patience = plateau_patience
        self.early_stop_patience = early_stop_patience
        self.min_improvement = min_improvement
        self.best = np.inf
        self.plateau_wait = 0
        self.stop_wait = 0

    def observe(self, val_loss: float) -> tuple[bool, bool, bool]:
        improved = val_loss < self.best - self.min_improvement
        if improved:
            self.best = val_loss
            self.plateau_wait = 0
            self.stop_wait = 0
            return True, False, False
        self.plateau_wait += 1
        self.stop_wait += 1
        reduce_lr = self.plateau_wait >= self.plateau_patience
        if reduce_lr:
            self.plateau_wait = 0
        return False, reduce_lr, self.stop_wait >= self.early_stop_patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    learning_rate: float


@dataclass
class TrainingHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    stop_reason: str = "max_epochs"  # early_stop | max_epochs
    best_epoch: int = 0
    wall_time_s: float = 0.0
    order_digest: str = ""  # sha256 over the minibatch row-index stream

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_acc,lr"]
        for r in self.epochs:
            lines.append(
                f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.val_accuracy!r},{r.learning_rate!r}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TrainingHistory":
        lines = [ln for ln in text.splitlines() if ln]
        history = cls()
        for ln in lines[1:]:
            epoch, train_loss, val_loss, val_acc, lr = ln.split(",")
            history.epochs.append(
                EpochRecord(int(epoch), float(train_loss), float(val_loss),
                            float(val_acc), float(lr))
            )
        return history


def epoch_order(seed: int, epoch: int, n_rows: int) -> np.ndarray:
    """Row permutation for one epoch; independent of the model trained."""
    return rngmod.stream(seed, rngmod.SHUFFLE, epoch).permutation(n_rows)


def _dataset_loss(model: Model, dataset: LabeledDataset, batch_size: int) -> tuple[float, float]:
    """Mean loss and accuracy in eval mode, accumulated in float64."""
    total, correct = 0.0, 0
    n = len(dataset)
    for start in range(0, n, batch_size):
        rows = dataset.spectra[start : start + batch_size]
        labels = dataset.labels[start : start + batch_size]
        logits = model.forward(model.prepare_input(rows), train=False)
        loss, _ = softmax_cross_entropy(logits, labels)
        total += loss * rows.shape[0]
        correct += int(np.sum(np.argmax(logits, axis=1) == labels))
    return total / n, correct / n


def train(
    model: Model,
    train_set: LabeledDataset,
    val_set: LabeledDataset,
    cfg: TrainingConfig,
) -> tuple[Model, TrainingHistory]:
    """Run the full protocol; returns the model restored to its best epoch."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise DomainError("training and validation sets must be non-empty")
    for ds in (train_set, val_set):
        if ds.labels.size and ds.labels.max() >= model.n_classes:
            raise DomainError(
                f"label {int(ds.labels.max())} out of range for {model.n_classes} classes"
            )

    started = time.perf_counter()
    history = TrainingHistory()
    if cfg.max_epochs == 0:
        return model, history

    optimizer = Adam(model.parameters(), lr=cfg.learning_rate)
    scheduler = PlateauEarlyStop(
        cfg.plateau_patience, cfg.early_stop_patience, cfg.min_improvement
    )
    order_hash = hashlib.sha256()
    best_state: list[np.ndarray] | None = None
    n = len(train_set)

    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.shuffle_each_epoch:
            order = epoch_order(cfg.seed, epoch, n)
        else:
            order = np.arange(n, dtype=np.int64)
        order_hash.update(order.astype("<i8").tobytes())

        loss_sum = 0.0
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            loss, grad = model.loss(train_set.spectra[idx], train_set.labels[idx], train=True)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, batch_index, optimizer.lr)
            model.zero_gradients()
            model.backward(grad)
            optimizer.step(model.parameters(), model.gradients())
            loss_sum += loss * idx.shape[0]

        val_loss, val_acc = _dataset_loss(model, val_set, cfg.batch_size)
        history.epochs.append(
            EpochRecord(epoch, loss_sum / n, val_loss, val_acc, optimizer.lr)
        )

        improved, reduce_lr, stop = scheduler.observe(val_loss)
        if improved:
            best_state = model.snapshot_state()
            history.best_epoch = epoch
        if reduce_lr:
            optimizer.lr *= cfg.plateau_factor
        if stop:
            history.stop_reason = "early_stop"
            break
    else:
        history.stop_reason = "max_epochs"

    if best_state is not None:
        model.restore_state(best_state)
    history.wall_time_s = time.perf_counter() - started
    history.order_digest = order_hash.hexdigest()
    return model, history


def evaluate(model: Model, dataset: LabeledDataset, batch_size: int = 256) -> dict:
    """Argmax predictions vs labels; ties break toward the lower class id."""
    if len(dataset) == 0:
        raise DomainError("cannot evaluate an empty dataset")
    predictions = model.predict(dataset.spectra, batch_size=batch_size)
    wrong = predictions != dataset.labels
    per_class: dict[int, int] = {}
    for label in dataset.labels[wrong]:
        per_class[int(label)] = per_class.get(int(label), 0) + 1
    return {
        "misclassifications": int(wrong.sum()),
        "accuracy": float(1.0 - wrong.mean()),
        "per_class_errors": per_class,
    }
