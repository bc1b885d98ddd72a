"""Training loop with early stopping and deterministic seeding.

One root seed spawns three independent generator streams (parameter
init, dropout masks, epoch shuffling) so changing one consumer never
shifts the others. Early stopping monitors validation macro-F1 and
restores the best snapshot before returning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, DivergenceError, GradientError, NumericError
from .evaluation import EvaluationReport, confusion, macro_metrics
from .fusion import batch_loss
from .model import StanceModel
from .optim import AdamW
from .tensor import backward


@dataclass
class TrainSettings:
    lr: float = 2e-6
    batch_size: int = 8
    epochs: int = 10
    weight_decay: float = 2e-6
    early_stopping: bool = True
    patience: int = 3
    class_weighting: bool = False


@dataclass
class TrainResult:
    history: List[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = 0.0
    stopped_early: bool = False


def rng_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator,
                                    np.random.Generator]:
    """(init, dropout, shuffle) generators from one root seed."""
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def inverse_frequency_weights(labels: Sequence[int], L: int) -> np.ndarray:
    """Weight each class by n_total / (L * n_class); absent classes get 0."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=L)
    weights = np.zeros(L, dtype=np.float64)
    present = counts > 0
    weights[present] = len(labels) / (L * counts[present])
    return weights


def _batches(n: int, batch_size: int, order: np.ndarray) -> List[np.ndarray]:
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def evaluate_model(model: StanceModel, examples: Sequence, batch_size: int = 8,
                   class_weights: Optional[np.ndarray] = None
                   ) -> Tuple[float, EvaluationReport]:
    """Mean loss and metric report over a dataset, no dropout."""
    if not examples:
        raise DataError("cannot evaluate on an empty dataset")
    label_idx = np.array([model.labels.index(ex.label) for ex in examples])
    preds = np.empty(len(examples), dtype=np.int64)
    total_loss = 0.0
    for batch in _batches(len(examples), batch_size, np.arange(len(examples))):
        batch_ex = [examples[i] for i in batch]
        result = model.forward(batch_ex, training=False)
        loss = batch_loss(result.probabilities, label_idx[batch], class_weights)
        total_loss += loss.item() * len(batch)
        preds[batch] = np.argmax(result.probabilities.data, axis=-1)
    cm = confusion(preds, label_idx, model.labels.L)
    report = macro_metrics(cm, label_names=model.labels.names)
    return total_loss / len(examples), report


def train_model(model: StanceModel, train_examples: Sequence,
                val_examples: Sequence, settings: TrainSettings,
                dropout_rng: np.random.Generator,
                shuffle_rng: np.random.Generator,
                log: Optional[Callable[[str], None]] = None) -> TrainResult:
    if not train_examples:
        raise DataError("training set is empty")
    if not val_examples:
        raise DataError("validation set is empty")

    labels = np.array([model.labels.index(ex.label) for ex in train_examples])
    weights = (inverse_frequency_weights(labels, model.labels.L)
               if settings.class_weighting else None)
    params = model.parameters()
    opt = AdamW(params.values(), lr=settings.lr,
                weight_decay=settings.weight_decay)

    result = TrainResult()
    best_snapshot: Dict[str, np.ndarray] = {}
    best_metric = -np.inf
    bad_epochs = 0
    n = len(train_examples)

    for epoch in range(1, settings.epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for batch in _batches(n, settings.batch_size, order):
            batch_ex = [train_examples[i] for i in batch]
            try:
                fwd = model.forward(batch_ex, training=True, rng=dropout_rng)
                loss = batch_loss(fwd.probabilities, labels[batch], weights)
                if not np.isfinite(loss.item()):
                    raise DivergenceError(f"loss became non-finite at epoch {epoch}")
                opt.zero_grad()
                backward(loss)
                opt.step()
            except (NumericError, GradientError) as exc:
                raise DivergenceError(f"training diverged at epoch {epoch}: {exc}") \
                    from exc
            epoch_loss += loss.item() * len(batch)
        train_loss = epoch_loss / n

        val_loss, report = evaluate_model(model, val_examples,
                                          settings.batch_size, weights)
        metric = report.macro["f1"]
        entry = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                 "val_accuracy": report.accuracy, "val_macro_f1": metric}
        result.history.append(entry)
        if log is not None:
            log(f"epoch {epoch:3d} train_loss {train_loss:.6f} "
                f"val_loss {val_loss:.6f} val_accuracy {report.accuracy:.4f} "
                f"val_macro_f1 {metric:.4f}")

        if metric > best_metric:
            best_metric = metric
            result.best_epoch = epoch
            result.best_metric = metric
            best_snapshot = {name: p.data.copy() for name, p in params.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if settings.early_stopping and bad_epochs > settings.patience:
                result.stopped_early = True
                break

    if best_snapshot:
        for name, p in params.items():
            p.data = best_snapshot[name]
    return result
