"""Adam with bias correction, step-decay schedule and the epoch loop."""
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import model
from .data import batches, to_detection_labels
from .errors import ConfigError, DivergenceError
from .layers import softmax_xent_backward, softmax_xent_forward

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 200
    lr_init: float = 0.005
    lr_decay: float = 0.5
    decay_every: int = 10
    seed: int = 0
    precision: int = 32
    max_grad_norm: float = 0.0  # 0 disables clipping

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")
        if self.decay_every < 1 or self.epochs < 0:
            raise ConfigError("decay_every must be >= 1 and epochs >= 0")
        if self.precision not in (32, 64):
            raise ConfigError("precision must be 32 or 64")
        return self


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kwargs):
        return cls(model.zeros_like(params), model.zeros_like(params), **kwargs)


@dataclass
class EpochReport:
    epoch: int
    lr: float
    loss: float
    accuracy: float

    def csv(self):
        return f"{self.epoch},{self.lr:.10g},{self.loss:.10g},{self.accuracy:.10g}"


EPOCH_CSV_HEADER = "epoch,lr,loss,accuracy"


def lr_at_epoch(cfg, epoch):
    """Learning rate for zero-based ``epoch``: halves every ``decay_every`` epochs by default."""
    return cfg.lr_init * cfg.lr_decay ** (epoch // cfg.decay_every)


def adam_step(params, grads, state, lr, max_grad_norm=0.0):
    """Apply one bias-corrected Adam update to ``params`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in parameter {name}; step rejected")
    if max_grad_norm > 0:
        total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
        if total > max_grad_norm:
            scale = max_grad_norm / total
            grads = {name: g * g.dtype.type(scale) for name, g in grads.items()}
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params, state


def task_labels(labels, task):
    return to_detection_labels(labels) if task == "detect" else labels


def train_epoch(params, state, split, model_cfg, cfg, epoch, task="detect"):
    """One shuffled pass over ``split``; returns an :class:`EpochReport`.

    Loss and accuracy are averaged over every sample of the epoch, measured
    on each batch before its update.
    """
    if not split.series:
        raise ConfigError("cannot train on an empty split")
    lr = lr_at_epoch(cfg, epoch)
    dtype = params["head.w"].dtype
    loss_sum = 0.0
    correct = 0
    total = 0
    for index, (x, y) in enumerate(batches(split, cfg.batch_size, cfg.seed, epoch)):
        y = task_labels(y, task)
        logits, cache = model.forward(params, x.astype(dtype, copy=False), model_cfg)
        loss, probs = softmax_xent_forward(logits, y)
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {index}")
        grads = model.backward(params, cache, softmax_xent_backward(probs, y), model_cfg)
        try:
            adam_step(params, grads, state, lr, cfg.max_grad_norm)
        except DivergenceError as exc:
            raise DivergenceError(f"epoch {epoch}, batch {index}: {exc}") from None
        n = y.size
        loss_sum += loss * n
        correct += int(np.sum(np.argmax(logits, axis=1) == y))
        total += n
    return EpochReport(epoch, lr, loss_sum / total, correct / total)


def evaluate_loss(params, split, model_cfg, task="detect", batch_size=128):
    """Mean per-sample loss and accuracy over ``split`` in stored order."""
    dtype = params["head.w"].dtype
    loss_sum, correct, total = 0.0, 0, 0
    for start in range(0, len(split.series), batch_size):
        chunk = split.series[start : start + batch_size]
        x = np.stack([s.values.T for s in chunk]).astype(dtype)
        y = task_labels(np.stack([s.labels for s in chunk]), task)
        logits, _ = model.forward(params, x, model_cfg)
        loss, _ = softmax_xent_forward(logits, y)
        loss_sum += loss * y.size
        correct += int(np.sum(np.argmax(logits, axis=1) == y))
        total += y.size
    return loss_sum / total, correct / total


def fit(params, split, model_cfg, cfg, task="detect", on_epoch=None):
    """Train for ``cfg.epochs`` epochs; returns the list of epoch reports."""
    cfg.validate()
    state = AdamState.for_params(params)
    reports = []
    for epoch in range(cfg.epochs):
        report = train_epoch(params, state, split, model_cfg, cfg, epoch, task)
        log.info("%s", report.csv())
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report)
    return reports
