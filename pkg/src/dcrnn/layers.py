"""Parameterized layers: embedding lookup, dense, LSTM/GRU cells, sequence runners.

Layers are frozen descriptions (sizes plus a parameter-name prefix).  Their
parameters live in a flat ``{name: ndarray}`` mapping owned by the model;
``bind`` turns that mapping into tape leaves for one forward pass.  Names are
``"<group>/<param>"``; the group is what parameter reports and checkpoints
are keyed by.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape
from .errors import ContractError, DimensionError, IngestionError

Params = dict  # name -> np.ndarray, insertion-ordered


def group_of(name: str) -> str:
    return name.split("/", 1)[0]


def bind(tape: Tape, params: Mapping[str, np.ndarray]) -> dict[str, Node]:
    return {name: tape.leaf(value, name=name) for name, value in params.items()}


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _check_width(x: Node, width: int, what: str):
    if x.shape[-1] != width:
        raise DimensionError(f"{what}: expected input width {width}, got shape {x.shape}")


# ---------------------------------------------------------------------------
# embedding


@dataclass(frozen=True)
class EmbeddingTable:
    vocab_sizes: tuple[int, ...]
    dim: int
    prefix: str = "embedding"

    @property
    def field_count(self) -> int:
        return len(self.vocab_sizes)

    @property
    def width(self) -> int:
        return self.field_count * self.dim

    def key(self, field: int) -> str:
        return f"{self.prefix}/field{field}"

    def init(self, rng: np.random.Generator) -> Params:
        return {self.key(f): uniform_init(rng, (v, self.dim), self.dim)
                for f, v in enumerate(self.vocab_sizes)}

    def __call__(self, p: Mapping[str, Node], ids) -> Node:
        return embed(self, p, ids)


def check_ids(vocab_sizes: Sequence[int], ids: np.ndarray) -> None:
    if ids.ndim != 2 or ids.shape[1] != len(vocab_sizes):
        raise IngestionError(f"expected ids of shape (batch, {len(vocab_sizes)}), got {ids.shape}")
    for f, v in enumerate(vocab_sizes):
        col = ids[:, f]
        bad = np.flatnonzero((col < 0) | (col >= v))
        if bad.size:
            fid = int(col[bad[0]])
            raise IngestionError(f"feature id {fid} outside vocabulary of field {f} (size {v})",
                                 field=f, feature_id=fid)


def embed(table: EmbeddingTable, p: Mapping[str, Node], ids) -> Node:
    """X0 for a batch: per-field rows concatenated to width ``field_count * dim``."""
    ids = np.asarray(ids, dtype=np.int64)
    check_ids(table.vocab_sizes, ids)
    rows = [ad.take_rows(p[table.key(f)], ids[:, f]) for f in range(table.field_count)]
    return rows[0] if len(rows) == 1 else ad.concat(rows, axis=-1)


# ---------------------------------------------------------------------------
# dense


def dense(weight: Node, bias: Node, x: Node, activation: str = "identity") -> Node:
    _check_width(x, weight.shape[0], "dense")
    return ad.elementwise(ad.add(ad.matmul(x, weight), bias), activation)


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    prefix: str
    activation: str = "identity"

    def init(self, rng: np.random.Generator) -> Params:
        return {f"{self.prefix}/weight": uniform_init(rng, (self.in_dim, self.out_dim), self.in_dim),
                f"{self.prefix}/bias": uniform_init(rng, (self.out_dim,), self.in_dim)}

    def __call__(self, p: Mapping[str, Node], x: Node) -> Node:
        return dense(p[f"{self.prefix}/weight"], p[f"{self.prefix}/bias"], x, self.activation)


@dataclass(frozen=True)
class MLP:
    """Stack of dense layers; ``final_activation`` applies to the last one."""

    in_dim: int
    widths: tuple[int, ...]
    prefix: str
    activation: str = "relu"
    final_activation: str = "relu"

    @property
    def layers(self) -> list[Dense]:
        dims = (self.in_dim,) + tuple(self.widths)
        last = len(self.widths) - 1
        return [Dense(dims[i], dims[i + 1], f"{self.prefix}.l{i}",
                      self.final_activation if i == last else self.activation)
                for i in range(len(self.widths))]

    @property
    def out_dim(self) -> int:
        return self.widths[-1] if self.widths else self.in_dim

    def init(self, rng: np.random.Generator) -> Params:
        out = {}
        for layer in self.layers:
            out.update(layer.init(rng))
        return out

    def __call__(self, p, x):
        for layer in self.layers:
            x = layer(p, x)
        return x


# ---------------------------------------------------------------------------
# recurrent cells

GATES = {"lstm": 4, "gru": 3}


def lstm_step(W: Node, U: Node, b: Node, x: Node, h: Node, c: Node) -> tuple[Node, Node]:
    """Gate layout along the last axis: input, forget, candidate, output."""
    n = h.shape[-1]
    z = ad.add(ad.add(ad.matmul(x, W), ad.matmul(h, U)), b)
    i = ad.sigmoid(ad.slice_(z, 0, n, axis=-1))
    f = ad.sigmoid(ad.slice_(z, n, 2 * n, axis=-1))
    g = ad.tanh(ad.slice_(z, 2 * n, 3 * n, axis=-1))
    o = ad.sigmoid(ad.slice_(z, 3 * n, 4 * n, axis=-1))
    c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
    return ad.mul(o, ad.tanh(c_next)), c_next


def gru_step(W: Node, U: Node, b: Node, x: Node, h: Node) -> Node:
    """Gate layout: update, reset, candidate.  The reset gate acts before U."""
    n = h.shape[-1]
    xw = ad.add(ad.matmul(x, W), b)
    hu = ad.matmul(h, ad.slice_(U, 0, 2 * n, axis=-1))
    z = ad.sigmoid(ad.add(ad.slice_(xw, 0, n, axis=-1), ad.slice_(hu, 0, n, axis=-1)))
    r = ad.sigmoid(ad.add(ad.slice_(xw, n, 2 * n, axis=-1), ad.slice_(hu, n, 2 * n, axis=-1)))
    cand = ad.tanh(ad.add(ad.slice_(xw, 2 * n, 3 * n, axis=-1),
                          ad.matmul(ad.mul(r, h), ad.slice_(U, 2 * n, 3 * n, axis=-1))))
    # (1 - z) * cand + z * h
    return ad.add(cand, ad.mul(z, ad.sub(h, cand)))


@dataclass(frozen=True)
class RnnCell:
    kind: str
    input_dim: int
    hidden_dim: int
    prefix: str

    def __post_init__(self):
        if self.kind not in GATES:
            raise ValueError(f"cell kind must be one of {sorted(GATES)}, got {self.kind!r}")

    @property
    def gates(self) -> int:
        return GATES[self.kind]

    @property
    def param_count(self) -> int:
        h = self.hidden_dim
        return self.gates * (h * (self.input_dim + h) + h)

    def init(self, rng: np.random.Generator) -> Params:
        g, d, h = self.gates, self.input_dim, self.hidden_dim
        fan_in = d + h
        return {f"{self.prefix}/W": uniform_init(rng, (d, g * h), fan_in),
                f"{self.prefix}/U": uniform_init(rng, (h, g * h), fan_in),
                f"{self.prefix}/b": uniform_init(rng, (g * h,), fan_in)}

    def zero_state(self, tape: Tape, batch_shape) -> tuple[Node, ...]:
        h = tape.constant(np.zeros(tuple(batch_shape) + (self.hidden_dim,)))
        if self.kind == "lstm":
            return h, tape.constant(np.zeros(tuple(batch_shape) + (self.hidden_dim,)))
        return (h,)

    def step(self, p: Mapping[str, Node], x: Node, state: tuple[Node, ...]) -> tuple[Node, ...]:
        return rnn_step(self, p, x, state)


def rnn_step(cell: RnnCell, p: Mapping[str, Node], x: Node, state: tuple[Node, ...]) -> tuple[Node, ...]:
    """One recurrence step.  ``state`` is ``(h,)`` for GRU and ``(h, c)`` for LSTM."""
    _check_width(x, cell.input_dim, f"{cell.kind} step")
    for s in state:
        _check_width(s, cell.hidden_dim, f"{cell.kind} state")
    W, U, b = (p[f"{cell.prefix}/{k}"] for k in ("W", "U", "b"))
    if cell.kind == "lstm":
        return lstm_step(W, U, b, x, *state)
    return (gru_step(W, U, b, x, *state),)


@dataclass(frozen=True)
class SequenceRunner:
    cell: RnnCell
    backward_cell: RnnCell | None = None

    @property
    def bidirectional(self) -> bool:
        return self.backward_cell is not None

    @property
    def out_dim(self) -> int:
        return self.cell.hidden_dim * (2 if self.bidirectional else 1)

    @property
    def cells(self) -> list[RnnCell]:
        return [self.cell] + ([self.backward_cell] if self.backward_cell else [])

    def init(self, rng: np.random.Generator) -> Params:
        out = {}
        for cell in self.cells:
            out.update(cell.init(rng))
        return out

    def __call__(self, p, seq):
        return run_sequence(self, p, seq)


def _final_state(cell: RnnCell, p, seq: Sequence[Node]) -> Node:
    state = cell.zero_state(seq[0].tape, seq[0].shape[:-1])
    for x in seq:
        state = rnn_step(cell, p, x, state)
    return state[0]


def run_sequence(runner: SequenceRunner, p: Mapping[str, Node], seq: Sequence[Node]) -> Node:
    """Final hidden state; bidirectional runners concatenate forward and backward finals."""
    if len(seq) == 0:
        raise ContractError("run_sequence needs a non-empty sequence")
    width = seq[0].shape
    for x in seq:
        if x.shape != width:
            raise DimensionError(f"sequence items differ in shape: {x.shape} vs {width}")
    forward = _final_state(runner.cell, p, seq)
    if not runner.bidirectional:
        return forward
    backward = _final_state(runner.backward_cell, p, list(reversed(seq)))
    return ad.concat([forward, backward], axis=-1)


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"DCRNNCK1"


def save_checkpoint(path, params: Mapping[str, np.ndarray]) -> None:
    """Ordered records of (name, shape, little-endian float64 data)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name, value in params.items():
            raw = name.encode("utf-8")
            value = np.asarray(value, dtype="<f8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", value.ndim))
            fh.write(struct.pack(f"<{value.ndim}Q", *value.shape))
            fh.write(np.ascontiguousarray(value).tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    pos = 8
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).astype(np.float64).reshape(shape)
        pos += 8 * size
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return out
