"""Weighted cross-entropy losses, optimizers and the seeded minibatch training loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape
from .errors import ContractError, NumericalError
from .layers import bind, group_of
from .metrics import task_aucs

log = logging.getLogger(__name__)

# positives per exposure in Ali-CCP: click about 1:24, conversion about 1:4584
ALICCP_POS_WEIGHTS = (24.0, 4584.0)


@dataclass(frozen=True)
class LossConfig:
    pos_weights: tuple[float, ...] = (1.0, 1.0)
    task_weights: tuple[float, ...] = (1.0, 1.0)

    def __post_init__(self):
        for name in ("pos_weights", "task_weights"):
            vals = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(vals)) or np.any(vals < 0):
                raise ValueError(f"{name} must be finite and non-negative, got {getattr(self, name)}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 1024
    learning_rate: float = 1e-4
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")


def weighted_bce(logit: Node, label, w: float = 1.0) -> Node:
    """Batch mean of ``-[w z log s(x) + (1 - z) log(1 - s(x))]``."""
    if np.any(np.asarray(w) < 0):
        raise ValueError(f"positive weight must be >= 0, got {w}")
    return ad.mean(ad.weighted_bce_with_logits(logit, label, w))


def multitask_loss(losses: Sequence[Node], weights: Sequence[float]) -> Node:
    if len(losses) != len(weights):
        raise ContractError(f"{len(losses)} task losses but {len(weights)} weights")
    total = ad.scale(losses[0], float(weights[0]))
    for loss, w in zip(losses[1:], weights[1:]):
        total = ad.add(total, ad.scale(loss, float(w)))
    return total


def batch_loss(logits: Node, labels: np.ndarray, loss_cfg: LossConfig) -> Node:
    n = logits.shape[-1]
    if len(loss_cfg.pos_weights) != n or len(loss_cfg.task_weights) != n:
        raise ContractError(f"loss config sized for {len(loss_cfg.pos_weights)} tasks, model has {n}")
    per_task = [weighted_bce(ad.slice_(logits, t, t + 1, axis=-1), labels[:, t:t + 1], loss_cfg.pos_weights[t])
                for t in range(n)]
    return multitask_loss(per_task, loss_cfg.task_weights)


class SGD:
    def __init__(self, params: dict, lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: dict) -> None:
        for name, g in grads.items():
            self.params[name] -= self.lr * g


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            self.params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(params: dict, cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.learning_rate)
    return Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


def loss_and_grads(model, ids, labels, loss_cfg: LossConfig) -> tuple[float, dict]:
    tape = Tape(check_finite=False)
    p = bind(tape, model.params)
    loss = batch_loss(model._forward(tape, p, ids), labels, loss_cfg)
    tape.backward(loss)
    grads = {k: (n.grad if n.grad is not None else np.zeros_like(n.value)) for k, n in p.items()}
    return float(loss.value), grads


def _diagnose(params: dict, grads: dict) -> str:
    """Name the parameter group most likely responsible for a non-finite step."""
    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            return f"non-finite values in parameter group {group_of(name)!r}"
    norms: dict[str, float] = {}
    for name, g in grads.items():
        finite = np.where(np.isfinite(g), g, 0.0)
        sq = np.inf if not np.all(np.isfinite(g)) else float(np.sum(finite * finite))
        norms[group_of(name)] = norms.get(group_of(name), 0.0) + sq
    group = max(norms, key=lambda k: norms[k])
    return f"largest gradient norm in parameter group {group!r}"


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    aucs: list[float]
    wall_seconds: float

    def line(self) -> str:
        cols = [str(self.epoch), f"{self.train_loss:.6f}"]
        cols += [f"{a:.6f}" for a in self.aucs]
        cols.append(f"{self.wall_seconds:.3f}")
        return "\t".join(cols)


@dataclass
class TrainResult:
    model: object
    history: list[EpochMetrics] = field(default_factory=list)
    steps: int = 0


def train(model, data, cfg: TrainConfig, loss_cfg: LossConfig, eval_data=None,
          log_file: TextIO | None = None, clock=time.perf_counter) -> TrainResult:
    """Minibatch training; every epoch appends one metrics line to ``log_file``.

    Shuffling is seeded from ``cfg.seed``.  The last, possibly short, batch of
    an epoch is kept.  AUCs are measured on ``eval_data`` (the training data
    when absent).
    """
    if len(data) == 0:
        raise ContractError("cannot train on an empty dataset")
    eval_data = data if eval_data is None else eval_data
    opt = make_optimizer(model.params, cfg)
    rng = np.random.default_rng([cfg.seed, 2])
    result = TrainResult(model)
    n = len(data)
    for epoch in range(1, cfg.epochs + 1):
        start = clock()
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):   # checked explicitly below
                loss, grads = loss_and_grads(model, data.ids[idx], data.labels[idx], loss_cfg)
            if not np.isfinite(loss):
                what = "loss"
            elif not all(np.all(np.isfinite(g)) for g in grads.values()):
                # a saturated loss can stay finite while its gradients overflow
                what = "gradient"
            else:
                what = None
            if what:
                raise NumericalError(f"non-finite {what} at epoch {epoch}, step {result.steps + 1}; "
                                     + _diagnose(model.params, grads))
            opt.step(grads)
            total += loss * len(idx)
            result.steps += 1
        aucs = task_aucs(model, eval_data.ids, eval_data.labels)
        metrics = EpochMetrics(epoch, total / n, aucs, clock() - start)
        result.history.append(metrics)
        log.info("epoch %d loss %.6f aucs %s", epoch, metrics.train_loss, ["%.4f" % a for a in aucs])
        if log_file is not None:
            log_file.write(metrics.line() + "\n")
            log_file.flush()
    return result
