"""Day-batch training on the per-day MSE loss, with early stopping on valid IC."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .baselines import ModelVariant, make_variant
from .checkpoint import load_checkpoint
from .data import FactorPanel
from .errors import CheckpointError, ContractError, DivergenceError, EmptyInputError, SpecError
from .metrics import MetricsReport, aggregate, daily_ic, day_metrics
from .model import DEFAULT_HIDDEN, DayBatch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    model_kind: str = "gru-pfg"
    epochs: int = 100
    learning_rate: float = 2e-4
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_patience: int = 10
    seed: int = 0
    hidden_size: int = DEFAULT_HIDDEN
    grad_clip_norm: float | None = 3.0

    def __post_init__(self):
        if self.epochs < 1:
            raise SpecError("epochs must be >= 1")
        if not self.learning_rate >= 0:
            raise SpecError("learning_rate must be >= 0")
        if self.early_stop_patience < 1:
            raise SpecError("early_stop_patience must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise SpecError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.hidden_size < 1:
            raise SpecError("hidden_size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_ic: float
    seconds: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_ic: float = -math.inf
    stopping_reason: str = ""
    skipped_days: list = field(default_factory=list)

    def deterministic_view(self) -> tuple:
        """Everything except wall-clock timings."""
        rows = tuple((e.epoch, e.train_loss, e.valid_ic) for e in self.epochs)
        return rows, self.best_epoch, self.best_valid_ic, self.stopping_reason, tuple(self.skipped_days)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "valid_ic", "seconds"])
        for e in self.epochs:
            w.writerow([e.epoch, repr(e.train_loss), repr(e.valid_ic), f"{e.seconds:.3f}"])
        return buf.getvalue()


def day_loss(preds: Tensor, labels) -> Tensor:
    """Mean squared error over one day's stocks."""
    labels = labels if isinstance(labels, Tensor) else ad.constant(labels)
    if preds.shape != labels.shape or preds.values.ndim != 1 or preds.shape[0] < 1:
        raise ContractError(f"day_loss: preds {preds.shape} and labels {labels.shape} must be equal-length vectors")
    diff = ad.sub(preds, labels)
    return ad.mean_all(ad.mul(diff, diff))


def total_loss(variant: ModelVariant, batches: Sequence[DayBatch]) -> float:
    """Sum over days of the per-day mean squared error, at fixed parameters."""
    return float(sum(day_loss(variant.forward(b), b.labels).item() for b in batches))


# -- optimisers -----------------------------------------------------------------

class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, Tensor]) -> None:
        for p in params.values():
            if p.grad is not None:
                p.values -= self.lr * p.grad


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for key, p in params.items():
            if p.grad is None:
                continue
            m = self.m.get(key)
            if m is None:
                m = self.m[key] = np.zeros_like(p.values)
                self.v[key] = np.zeros_like(p.values)
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.values -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(params: dict[str, Tensor], max_norm: float | None) -> float:
    grads = [p.grad for p in params.values() if p.grad is not None]
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm is not None and norm > max_norm:
        factor = max_norm / norm
        for g in grads:
            g *= factor
    return norm


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return SGD(config.learning_rate)
    return Adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps)


# -- loops -------------------------------------------------------------------

def _usable(panel: FactorPanel) -> tuple[list[DayBatch], list]:
    keep, skipped = [], []
    for day in panel:
        if day.size >= 2:
            keep.append(day.to_batch())
        else:
            skipped.append(day.date)
    return keep, skipped


def mean_ic(variant: ModelVariant, batches: Sequence[DayBatch]) -> float:
    return float(np.mean([daily_ic(variant.predict(b), b.labels) for b in batches]))


def _rngs(seed: int):
    seq = np.random.SeedSequence(seed)
    init_seq, order_seq = seq.spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(order_seq)


def train(train_panel: FactorPanel, valid_panel: FactorPanel, config: TrainConfig,
          variant: ModelVariant | None = None) -> tuple[ModelVariant, TrainLog]:
    """Fit a model variant; returns it restored to its best-validation-IC epoch.

    One optimiser step per training day, days visited in a seed-shuffled
    order each epoch. Training stops after ``early_stop_patience`` epochs
    without a strict improvement of the mean validation IC.
    """
    train_batches, skipped = _usable(train_panel)
    valid_batches, _ = _usable(valid_panel)
    if not train_batches or not valid_batches:
        raise EmptyInputError("training needs non-empty train and valid splits with >= 2 stocks per day")
    init_rng, order_rng = _rngs(config.seed)
    if variant is None:
        variant = make_variant(config.model_kind, config.hidden_size, init_rng)
    for d in skipped:
        log.info("skipping %s: fewer than 2 stocks", d)

    trainable = variant.trainable()
    optimizer = make_optimizer(config)
    record = TrainLog(skipped_days=[str(d) for d in skipped])
    best_values = {k: p.values.copy() for k, p in variant.params.items()}
    stale = 0
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        losses = []
        for idx in order_rng.permutation(len(train_batches)):
            batch = train_batches[idx]
            ad.zero_grads(trainable.values())
            loss = day_loss(variant.forward(batch), batch.labels)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, day {batch.date}")
            losses.append(value)
            ad.backward(loss)
            clip_grad_norm(trainable, config.grad_clip_norm)
            optimizer.step(trainable)
        ad.zero_grads(trainable.values())
        valid_ic = mean_ic(variant, valid_batches)
        record.epochs.append(EpochRecord(epoch, float(np.mean(losses)), valid_ic, time.perf_counter() - started))
        log.info("epoch %d loss %.6f valid_ic %.4f", epoch, record.epochs[-1].train_loss, valid_ic)
        if valid_ic > record.best_valid_ic:
            record.best_valid_ic, record.best_epoch, stale = valid_ic, epoch, 0
            best_values = {k: p.values.copy() for k, p in variant.params.items()}
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                record.stopping_reason = f"no valid IC improvement for {stale} epochs"
                break
    else:
        record.stopping_reason = "max epochs reached"
    for key, values in best_values.items():
        variant.params[key].values[...] = values
    return variant, record


def evaluate(checkpoint, panel: FactorPanel, hidden_size: int | None = None) -> MetricsReport:
    """Frozen-parameter metrics over every day of ``panel`` with >= 2 stocks.

    ``checkpoint`` is a :class:`ModelVariant` or a checkpoint path.
    """
    if isinstance(checkpoint, (str, Path)):
        variant, _ = load_checkpoint(checkpoint, hidden_size)
    else:
        variant = checkpoint
        if hidden_size is not None and variant.hidden_size != hidden_size:
            raise CheckpointError(f"hidden size mismatch: model has {variant.hidden_size}, expected {hidden_size}")
    batches, _ = _usable(panel)
    if not batches:
        raise EmptyInputError("nothing to evaluate: split has no day with >= 2 stocks")
    days = [day_metrics(b.date, variant.predict(b), b.labels, b.stock_ids) for b in batches]
    return aggregate(days)
