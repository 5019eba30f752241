"""DCRNN and MMoE multi-task graphs mapping feature ids to per-task logits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape
from .layers import MLP, Dense, EmbeddingTable, RnnCell, SequenceRunner, bind, group_of
from .sequencing import AdaptiveBank, SharingPlan, build_sequence, degenerate_check, required_len, slice_windows


@dataclass(frozen=True)
class DcrnnConfig:
    vocab_sizes: tuple[int, ...]
    plan: SharingPlan = field(default_factory=lambda: SharingPlan(2, 3, 1))
    embedding_dim: int = 32
    cell: str = "lstm"
    bidirectional: bool = True
    hidden_dim: int = 32
    ada: bool = True
    tower_widths: tuple[int, ...] = (64, 32)

    @property
    def n_tasks(self) -> int:
        return self.plan.n_tasks

    @property
    def tower_in(self) -> int:
        return self.hidden_dim * (2 if self.bidirectional else 1)

    @property
    def name(self) -> str:
        rnn = ("Bi" if self.bidirectional else "") + self.cell.upper()
        return f"DCRNN+{rnn}" + ("+Ada" if self.ada else "")


@dataclass(frozen=True)
class MmoeConfig:
    vocab_sizes: tuple[int, ...]
    n_tasks: int = 2
    embedding_dim: int = 32
    expert_count: int = 8
    expert_widths: tuple[int, ...] = (128, 64)
    tower_widths: tuple[int, ...] = (64, 32)

    @property
    def name(self) -> str:
        return "MMoE"


@dataclass(frozen=True)
class Tower:
    in_dim: int
    widths: tuple[int, ...]
    prefix: str

    @property
    def mlp(self):
        return MLP(self.in_dim, self.widths, f"{self.prefix}/mlp")

    @property
    def head(self):
        return Dense(self.mlp.out_dim, 1, f"{self.prefix}/out")

    def init(self, rng):
        return {**self.mlp.init(rng), **self.head.init(rng)}

    def __call__(self, p, x):
        return self.head(p, self.mlp(p, x))


class Model:
    """A named-parameter graph.  Subclasses implement :meth:`forward`."""

    config: object
    params: dict

    @property
    def n_tasks(self) -> int:
        return self.config.n_tasks

    @property
    def vocab_sizes(self):
        return self.config.vocab_sizes

    def groups(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for name in self.params:
            out.setdefault(group_of(name), []).append(name)
        return out

    def forward(self, tape: Tape, ids) -> Node:
        raise NotImplementedError

    def predict(self, ids, batch_size: int = 4096) -> np.ndarray:
        """Logits for all rows of ``ids`` without keeping the tape."""
        ids = np.asarray(ids, dtype=np.int64)
        chunks = []
        for lo in range(0, len(ids), batch_size):
            tape = Tape(check_finite=False)
            p = {k: tape.constant(v, name=k) for k, v in self.params.items()}
            chunks.append(self._forward(tape, p, ids[lo:lo + batch_size]).value)
        if not chunks:
            return np.zeros((0, self.n_tasks))
        return np.concatenate(chunks, axis=0)

    def _forward(self, tape, p, ids) -> Node:
        raise NotImplementedError


@dataclass
class DcrnnTrace:
    x0: Node
    sequence: list
    windows: list
    representations: list
    logits: Node


class DCRNN(Model):
    def __init__(self, config: DcrnnConfig, seed: int = 0):
        self.config = config
        c = config
        self.table = EmbeddingTable(tuple(c.vocab_sizes), c.embedding_dim)
        self.bank = AdaptiveBank(required_len(c.plan), self.table.width, enabled=c.ada)
        self.runners = []
        self.towers = []
        for i in range(c.n_tasks):
            fwd = RnnCell(c.cell, self.table.width, c.hidden_dim, f"task{i}.rnn/fwd")
            bwd = RnnCell(c.cell, self.table.width, c.hidden_dim, f"task{i}.rnn/bwd") if c.bidirectional else None
            self.runners.append(SequenceRunner(fwd, bwd))
            self.towers.append(Tower(c.tower_in, tuple(c.tower_widths), f"task{i}.tower"))
        rng = np.random.default_rng(seed)
        self.params = {}
        self.params.update(self.table.init(rng))
        self.params.update(self.bank.init(rng))
        for runner, tower in zip(self.runners, self.towers):
            self.params.update(runner.init(rng))
            self.params.update(tower.init(rng))

    def sharing_report(self):
        return degenerate_check(self.config.plan)

    def trace(self, tape: Tape, ids, p: Mapping[str, Node] | None = None) -> DcrnnTrace:
        if p is None:
            p = bind(tape, self.params)
        x0 = self.table(p, ids)
        seq = build_sequence(x0, self.bank, p)
        windows = slice_windows(self.config.plan, seq)
        reps = [runner(p, window) for runner, window in zip(self.runners, windows)]
        logits = [tower(p, r) for tower, r in zip(self.towers, reps)]
        out = logits[0] if len(logits) == 1 else ad.concat(logits, axis=-1)
        return DcrnnTrace(x0, seq, windows, reps, out)

    def _forward(self, tape, p, ids):
        return self.trace(tape, ids, p).logits

    def forward(self, tape: Tape, ids) -> Node:
        return self.trace(tape, ids).logits


def dcrnn_forward(model: DCRNN, tape: Tape, ids) -> Node:
    return model.forward(tape, ids)


class MMoE(Model):
    def __init__(self, config: MmoeConfig, seed: int = 0):
        self.config = config
        c = config
        self.table = EmbeddingTable(tuple(c.vocab_sizes), c.embedding_dim)
        width = self.table.width
        self.experts = [MLP(width, tuple(c.expert_widths), f"experts/e{k}") for k in range(c.expert_count)]
        self.gates = [Dense(width, c.expert_count, f"gates/t{i}") for i in range(c.n_tasks)]
        expert_out = self.experts[0].out_dim
        self.towers = [Tower(expert_out, tuple(c.tower_widths), f"task{i}.tower") for i in range(c.n_tasks)]
        rng = np.random.default_rng(seed)
        self.params = {}
        for part in [self.table, *self.experts, *self.gates, *self.towers]:
            self.params.update(part.init(rng))

    def gate_weights(self, p, x0) -> list[Node]:
        return [ad.softmax(gate(p, x0), axis=-1) for gate in self.gates]

    def _forward(self, tape, p, ids):
        x0 = self.table(p, ids)
        lead = x0.shape[:-1]
        outs = [expert(p, x0) for expert in self.experts]
        h = outs[0].shape[-1]
        stacked = ad.concat([ad.reshape(o, lead + (1, h)) for o in outs], axis=-2)   # (..., E, h)
        logits = []
        for weights, tower in zip(self.gate_weights(p, x0), self.towers):
            w = ad.reshape(weights, lead + (len(outs), 1))
            mixed = ad.reduce_sum(ad.mul(stacked, w), axis=-2)
            logits.append(tower(p, mixed))
        return logits[0] if len(logits) == 1 else ad.concat(logits, axis=-1)

    def forward(self, tape: Tape, ids) -> Node:
        return self._forward(tape, bind(tape, self.params), ids)


def mmoe_forward(model: MMoE, tape: Tape, ids) -> Node:
    return model.forward(tape, ids)


def build_model(config, seed: int = 0) -> Model:
    if isinstance(config, DcrnnConfig):
        return DCRNN(config, seed)
    if isinstance(config, MmoeConfig):
        return MMoE(config, seed)
    raise TypeError(f"unsupported model config {type(config).__name__}")
