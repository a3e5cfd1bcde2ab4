"""Combined utterance + frame objective, batching and the training loop.

For a batch of S utterances with ground truth G_s, pooled prediction Q_s,
frame predictions q_{s,t} and valid frame count T_s the objective is::

    O = 1/S * sum_s [ (G_s - Q_s)^2 + alpha/T_s * sum_t (G_s - q_{s,t})^2 ]

The ground truth serves as the target of every frame. With masking on, only
the first T_s frames of a padded sequence enter pooling and the frame term;
with masking off the padded length is used instead, reproducing the
degradation that zero padding causes at large batch sizes.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .models import MOSNet, MosPrediction, pad_batch, predict_many
from .nn import Adam
from .rng import make_rng

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the objective becomes non-finite."""


@dataclass(frozen=True)
class TrainingConfig:
    alpha: float = 1.0
    batch_size: int = 64
    learning_rate: float = 1e-4
    patience_epochs: int = 5
    max_epochs: int = 100
    seed: int = 0
    mask_padding: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.batch_size < 1 or self.patience_epochs < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience_epochs and max_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class Dataset:
    """Spectrograms with utterance-level targets."""

    specs: list
    targets: np.ndarray
    ids: list | None = None
    system_ids: list | None = None

    def __post_init__(self):
        self.specs = [np.asarray(s) for s in self.specs]
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if len(self.specs) != self.targets.size:
            raise ValueError("specs and targets differ in length")
        if self.ids is None:
            self.ids = [str(k) for k in range(len(self.specs))]

    def __len__(self):
        return len(self.specs)

    def subset(self, index) -> "Dataset":
        index = list(index)
        return Dataset([self.specs[k] for k in index], self.targets[index],
                       [self.ids[k] for k in index],
                       None if self.system_ids is None else [self.system_ids[k] for k in index])


@dataclass
class Batch:
    x: np.ndarray
    lengths: np.ndarray
    targets: np.ndarray
    index: np.ndarray


def mosnet_loss(predictions: list[MosPrediction], ground_truth, alpha=1.0) -> float:
    """Objective over a list of per-utterance predictions."""
    ground_truth = np.asarray(ground_truth, dtype=np.float64).reshape(-1)
    if len(predictions) == 0:
        raise ValueError("empty batch")
    if len(predictions) != ground_truth.size:
        raise ValueError("predictions and ground truth differ in length")
    total = 0.0
    for pred, g in zip(predictions, ground_truth):
        q = np.asarray(pred.frame_scores, dtype=np.float64)[:pred.valid_len]
        total += (g - pred.utterance_score) ** 2 + alpha * np.mean((g - q) ** 2)
    return float(total / ground_truth.size)


def mosnet_objective(frame_scores, lengths, targets, alpha=1.0):
    """Objective and its gradient for padded ``(S, T)`` frame scores.

    Returns ``(O, dO/dframe_scores)``; padded frames get zero gradient.
    """
    q = np.asarray(frame_scores)
    S, T = q.shape
    if S == 0:
        raise ValueError("empty batch")
    lengths = np.asarray(lengths)
    g = np.asarray(targets, dtype=q.dtype)[:, None]
    mask = np.arange(T)[None, :] < lengths[:, None]
    L = lengths[:, None].astype(q.dtype)
    diff = np.where(mask, q - g, 0)
    pooled_err = diff.sum(axis=1, keepdims=True) / L
    frame_mse = (diff ** 2).sum(axis=1, keepdims=True) / L
    objective = float(np.mean(pooled_err ** 2 + alpha * frame_mse))
    grad = (2.0 / S) * (pooled_err + alpha * diff) / L * mask
    return objective, grad.astype(q.dtype, copy=False)


def make_batches(dataset: Dataset, batch_size: int, rng=None, shuffle=True) -> list[Batch]:
    """Shuffle once and cut into zero-padded batches."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    order = np.arange(len(dataset))
    if shuffle:
        rng = rng if rng is not None else np.random.default_rng(0)
        order = rng.permutation(order)
    batches = []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        x, lengths = pad_batch([dataset.specs[k] for k in idx])
        batches.append(Batch(x, lengths, dataset.targets[idx], idx))
    return batches


class EarlyStopping:
    """Stop after ``patience`` epochs with no strict improvement."""

    def __init__(self, patience=5):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.epoch = 0
        self.bad_epochs = 0

    def update(self, value: float) -> bool:
        """Record one epoch's score; True means stop now."""
        self.epoch += 1
        if value < self.best:
            self.best = value
            self.best_epoch = self.epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    @property
    def improved(self) -> bool:
        return self.bad_epochs == 0


@dataclass
class EpochRecord:
    epoch: int
    train_objective: float
    val_mse: float
    wall_time_s: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    @property
    def val_mse(self) -> np.ndarray:
        return np.array([r.val_mse for r in self.records])

    @property
    def train_objective(self) -> np.ndarray:
        return np.array([r.train_objective for r in self.records])

    def to_csv(self, path, include_time=False):
        cols = ["epoch", "train_objective", "val_mse"] + (["wall_time_s"] if include_time else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols + ["is_best"])
            for r in self.records:
                row = [r.epoch, repr(r.train_objective), repr(r.val_mse)]
                if include_time:
                    row.append(f"{r.wall_time_s:.3f}")
                w.writerow(row + [int(r.epoch == self.best_epoch)])


def utterance_mse(model: MOSNet, dataset: Dataset, batch_size=32) -> float:
    preds = predict_many(model, dataset.specs, batch_size)
    scores = np.array([p.utterance_score for p in preds])
    return float(np.mean((scores - dataset.targets) ** 2))


def evaluate_objective(model: MOSNet, dataset: Dataset, alpha=1.0, batch_size=32) -> float:
    """Eval-mode objective over the whole dataset."""
    preds = predict_many(model, dataset.specs, batch_size)
    return mosnet_loss(preds, dataset.targets, alpha)


def train_step(model: MOSNet, batch: Batch, cfg: TrainingConfig, optimizer, rng) -> float:
    lengths = batch.lengths if cfg.mask_padding else np.full_like(batch.lengths, batch.x.shape[1])
    frames, _ = model.forward(batch.x, lengths, mode="train", rng=rng)
    objective, grad = mosnet_objective(frames, lengths, batch.targets, cfg.alpha)
    if not np.isfinite(objective):
        raise TrainingDivergedError(
            f"non-finite objective {objective} on utterances {batch.index.tolist()}")
    model.backward(grad)
    optimizer.step()
    return objective


def train(model: MOSNet, train_set: Dataset, val_set: Dataset, cfg: TrainingConfig,
          callback=None) -> tuple[MOSNet, TrainingHistory]:
    """Fit with Adam and early stopping on validation utterance MSE.

    The returned model carries the weights of the best validation epoch.
    ``callback(record)`` is invoked after every epoch if given.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be nonempty")
    optimizer = Adam(model.parameters().values(), lr=cfg.learning_rate)
    optimizer.zero_grad()
    shuffle_rng = make_rng(cfg.seed, "shuffle")
    dropout_rng = make_rng(cfg.seed, "dropout")
    stopper = EarlyStopping(cfg.patience_epochs)
    history = TrainingHistory(stop_reason="max_epochs")
    best_state = model.state_dict()

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        total, count = 0.0, 0
        for batch in make_batches(train_set, cfg.batch_size, shuffle_rng):
            total += train_step(model, batch, cfg, optimizer, dropout_rng) * len(batch.index)
            count += len(batch.index)
        val = utterance_mse(model, val_set)
        if not np.isfinite(val):
            raise TrainingDivergedError(f"non-finite validation MSE at epoch {epoch}")
        record = EpochRecord(epoch, total / count, val, time.perf_counter() - t0)
        history.records.append(record)
        stop = stopper.update(val)
        if stopper.improved:
            best_state = model.state_dict()
        logger.info("epoch %d: objective %.4f, val mse %.4f", epoch, record.train_objective, val)
        if callback is not None:
            callback(record)
        if stop:
            history.stop_reason = "patience"
            break

    history.best_epoch = stopper.best_epoch
    model.load_state_dict(best_state)
    return model, history


def similarity_loss(output, labels, head="scalar"):
    """Loss and gradient for the pair model.

    The scalar head regresses the logistic output onto the 0/1 label with a
    squared error; the two-class head uses cross-entropy on the softmax.
    """
    labels = np.asarray(labels)
    B = labels.size
    if head == "scalar":
        diff = output - labels.astype(output.dtype)
        return float(np.mean(diff ** 2)), (2.0 / B) * diff
    p = np.clip(output[np.arange(B), labels], 1e-7, None)
    grad = np.zeros_like(output)
    grad[np.arange(B), labels] = -1.0 / (B * p)
    return float(-np.mean(np.log(p))), grad


def predict_similarity(model, specs_a, specs_b, batch_size=32) -> np.ndarray:
    """Probability of 'same speaker' per pair (eval mode)."""
    out = []
    for s in range(0, len(specs_a), batch_size):
        xa, la = pad_batch(specs_a[s:s + batch_size], model.dtype)
        xb, lb = pad_batch(specs_b[s:s + batch_size], model.dtype)
        y = model.forward(xa, la, xb, lb, mode="eval")
        out.append(y if model.head_kind == "scalar" else y[:, 1])
    return np.concatenate(out)


def train_similarity(model, specs_a, specs_b, labels, cfg: TrainingConfig,
                     val=None, callback=None):
    """Fit the pair model; early-stops on validation loss when ``val`` is given.

    ``val`` is ``(specs_a, specs_b, labels)``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if n == 0 or len(specs_a) != n or len(specs_b) != n:
        raise ValueError("pairs and labels must be nonempty and aligned")
    optimizer = Adam(model.parameters().values(), lr=cfg.learning_rate)
    optimizer.zero_grad()
    shuffle_rng = make_rng(cfg.seed, "shuffle")
    dropout_rng = make_rng(cfg.seed, "dropout")
    stopper = EarlyStopping(cfg.patience_epochs)
    history = TrainingHistory(stop_reason="max_epochs")
    best_state = model.state_dict()
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        total = 0.0
        order = shuffle_rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            xa, la = pad_batch([specs_a[k] for k in idx], model.dtype)
            xb, lb = pad_batch([specs_b[k] for k in idx], model.dtype)
            out = model.forward(xa, la, xb, lb, mode="train", rng=dropout_rng)
            loss, grad = similarity_loss(out, labels[idx], model.head_kind)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite similarity loss at epoch {epoch}")
            model.backward(grad.astype(model.dtype, copy=False))
            optimizer.step()
            total += loss * idx.size
        if val is not None:
            va, vb, vy = val
            p = predict_similarity(model, va, vb)
            vy = np.asarray(vy)
            val_loss = float(np.mean((p - vy) ** 2))
        else:
            val_loss = total / n
        record = EpochRecord(epoch, total / n, val_loss, time.perf_counter() - t0)
        history.records.append(record)
        stop = stopper.update(val_loss)
        if stopper.improved:
            best_state = model.state_dict()
        if callback is not None:
            callback(record)
        if stop and val is not None:
            history.stop_reason = "patience"
            break
    history.best_epoch = stopper.best_epoch
    if val is not None:
        model.load_state_dict(best_state)
    return model, history
