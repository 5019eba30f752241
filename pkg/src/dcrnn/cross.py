"""Explicit cross layers (DCN, CIN) and their parameter-growth comparison with CRNN."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .layers import RnnCell, uniform_init
from .errors import DimensionError


def dcn_layer(x0: Node, h_prev: Node, w: Node, b: Node) -> Node:
    """``x0 * <h_prev, w> + b + h_prev``, batched over leading axes."""
    d = x0.shape[-1]
    for name, n in (("h_prev", h_prev), ("w", w), ("b", b)):
        if n.shape[-1] != d:
            raise DimensionError(f"dcn_layer: {name} width {n.shape[-1]} != x0 width {d}")
    if w.ndim != 1 or b.ndim != 1:
        raise DimensionError(f"dcn_layer: w and b must be vectors, got {w.shape}, {b.shape}")
    if h_prev.shape != x0.shape:
        raise DimensionError(f"dcn_layer: h_prev shape {h_prev.shape} != x0 shape {x0.shape}")
    s = ad.matmul(ad.reshape(h_prev, h_prev.shape[:-1] + (1, d)), ad.reshape(w, (d, 1)))
    s = ad.reshape(s, h_prev.shape[:-1] + (1,))
    return ad.add(ad.add(ad.mul(x0, s), b), h_prev)


def cin_layer(x0: Node, h_prev: Node, weights: Node) -> Node:
    """Vector-wise compressed interaction.

    ``x0`` is (..., m, D), ``h_prev`` is (..., r, D) and ``weights`` is
    (r_out, r, m).  Output row k is ``sum_ij weights[k, i, j] * (h_prev[i] * x0[j])``.
    """
    m, D = x0.shape[-2:]
    r, D2 = h_prev.shape[-2:]
    if D != D2:
        raise DimensionError(f"cin_layer: embedding width differs, x0 {x0.shape} vs h_prev {h_prev.shape}")
    if weights.ndim != 3 or weights.shape[1:] != (r, m):
        raise DimensionError(f"cin_layer: weights {weights.shape} do not match (r_out, {r}, {m})")
    if x0.shape[:-2] != h_prev.shape[:-2]:
        raise DimensionError(f"cin_layer: batch shapes differ, {x0.shape} vs {h_prev.shape}")
    lead = x0.shape[:-2]
    r_out = weights.shape[0]
    outer = ad.mul(ad.reshape(h_prev, lead + (r, 1, D)), ad.reshape(x0, lead + (1, m, D)))
    flat = ad.transpose(ad.reshape(outer, lead + (r * m, D)))          # (..., D, r*m)
    w2 = ad.transpose(ad.reshape(weights, (r_out, r * m)))             # (r*m, r_out)
    return ad.transpose(ad.matmul(flat, w2))                           # (..., r_out, D)


@dataclass(frozen=True)
class DcnStack:
    depth: int
    width: int
    prefix: str = "dcn"

    @property
    def param_count(self) -> int:
        return 2 * self.width * self.depth

    def init(self, rng):
        out = {}
        for t in range(self.depth):
            out[f"{self.prefix}/w{t}"] = uniform_init(rng, (self.width,), self.width)
            out[f"{self.prefix}/b{t}"] = np.zeros(self.width)
        return out

    def __call__(self, p, x0):
        h = x0
        for t in range(self.depth):
            h = dcn_layer(x0, h, p[f"{self.prefix}/w{t}"], p[f"{self.prefix}/b{t}"])
        return h


@dataclass(frozen=True)
class CinStack:
    fields: int
    rows: tuple[int, ...]
    prefix: str = "cin"

    def weight_shapes(self):
        prev = self.fields
        shapes = []
        for r in self.rows:
            shapes.append((r, prev, self.fields))
            prev = r
        return shapes

    @property
    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.weight_shapes())

    def init(self, rng):
        return {f"{self.prefix}/W{t}": uniform_init(rng, s, s[1] * s[2])
                for t, s in enumerate(self.weight_shapes())}

    def __call__(self, p, x0):
        h = x0
        for t in range(len(self.rows)):
            h = cin_layer(x0, h, p[f"{self.prefix}/W{t}"])
        return h


@dataclass(frozen=True)
class GrowthRow:
    kind: str
    depth_or_len: int
    width: int
    params: int


def param_growth(depths=(1, 2, 3, 4), widths=(8, 16, 32, 64), fields: int = 4,
                 embed_dim: int = 8) -> list[GrowthRow]:
    """Trainable-scalar counts for DCN, CIN and CRNN cross stacks.

    DCN ``width`` is the feature width; CIN ``width`` is the row count per
    layer over ``fields`` fields; CRNN ``width`` is the hidden size with input
    width ``fields * embed_dim`` and ``depth_or_len`` the sequence length.
    """
    if min(depths) < 1 or min(widths) < 1 or fields < 1 or embed_dim < 1:
        raise ValueError("param_growth ranges must be positive")
    d = fields * embed_dim
    rows = []
    for depth in depths:
        for width in widths:
            rows.append(GrowthRow("dcn", depth, width, DcnStack(depth, width).param_count))
    for depth in depths:
        for width in widths:
            rows.append(GrowthRow("cin", depth, width, CinStack(fields, (width,) * depth).param_count))
    for kind in ("gru", "lstm"):
        for length in depths:
            for width in widths:
                # one cell is reused at every step, so length does not add parameters
                count = RnnCell(kind, d, width, "crnn").param_count
                rows.append(GrowthRow(f"crnn_{kind}", length, width, count))
    return rows


def growth_table(rows: list[GrowthRow]) -> str:
    header = ("kind", "depth_or_len", "width", "params")
    body = [(r.kind, str(r.depth_or_len), str(r.width), str(r.params)) for r in rows]
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in [header] + body]
    return "\n".join(lines) + "\n"


def growth_csv(rows: list[GrowthRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "depth_or_len", "width", "params"])
    for r in rows:
        writer.writerow([r.kind, r.depth_or_len, r.width, r.params])
    return buf.getvalue()
