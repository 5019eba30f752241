"""Sparse categorical two-task datasets: TSV ingestion and a synthetic generator.

Wire format, one record per line::

    click<TAB>task2<TAB>field:id,field:id,...

Fields absent from a record get the reserved id 0.  A second-task positive
without a click breaks the funnel and is rejected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import expit, ndtr

from .errors import FunnelError, IngestionError

log = logging.getLogger(__name__)

UNKNOWN_ID = 0


@dataclass(frozen=True)
class FieldSchema:
    keys: tuple[int, ...]
    vocab_sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.keys) != len(self.vocab_sizes):
            raise ValueError(f"{len(self.keys)} field keys but {len(self.vocab_sizes)} vocab sizes")
        if len(set(self.keys)) != len(self.keys):
            raise ValueError(f"duplicate field keys in {self.keys}")
        if any(v < 1 for v in self.vocab_sizes):
            raise ValueError(f"vocab sizes must be positive, got {self.vocab_sizes}")

    @property
    def field_count(self) -> int:
        return len(self.keys)


@dataclass(frozen=True)
class Example:
    labels: tuple[int, int]
    features: dict[int, int]


@dataclass
class Dataset:
    ids: np.ndarray         # (N, fields) int64
    labels: np.ndarray      # (N, 2) int8
    schema: FieldSchema
    task_names: tuple[str, ...] = ("click", "conversion")
    rejected: int = 0
    meta: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, i) -> Example:
        return Example(tuple(int(x) for x in self.labels[i]),
                       dict(zip(self.schema.keys, (int(x) for x in self.ids[i]))))

    def subset(self, index) -> "Dataset":
        return Dataset(self.ids[index], self.labels[index], self.schema, self.task_names)

    def label_rates(self) -> np.ndarray:
        return self.labels.mean(axis=0) if len(self) else np.zeros(self.labels.shape[1])


def _parse_line(text: str, schema: FieldSchema, index: dict[int, int], lineno: int):
    parts = text.rstrip("\r\n").split("\t")
    if len(parts) != 3:
        raise IngestionError(f"line {lineno}: expected 3 tab-separated columns, got {len(parts)}", line=lineno)
    if parts[0] not in ("0", "1") or parts[1] not in ("0", "1"):
        raise IngestionError(f"line {lineno}: labels must be 0 or 1, got {parts[0]!r}, {parts[1]!r}", line=lineno)
    click, second = int(parts[0]), int(parts[1])
    if second and not click:
        raise FunnelError(f"line {lineno}: second-task positive without a click", line=lineno)
    row = [UNKNOWN_ID] * schema.field_count
    seen = set()
    if parts[2]:
        for item in parts[2].split(","):
            key, sep, value = item.partition(":")
            try:
                key, value = int(key), int(value)
            except ValueError:
                raise IngestionError(f"line {lineno}: bad feature item {item!r}", line=lineno) from None
            if not sep or key not in index:
                raise IngestionError(f"line {lineno}: field {key} not in schema", field=key, line=lineno)
            if key in seen:
                raise IngestionError(f"line {lineno}: field {key} repeated", field=key, line=lineno)
            seen.add(key)
            f = index[key]
            if not 0 <= value < schema.vocab_sizes[f]:
                raise IngestionError(
                    f"line {lineno}: feature id {value} outside vocabulary of field {key} "
                    f"(size {schema.vocab_sizes[f]})", field=key, feature_id=value, line=lineno)
            row[f] = value
    return (click, second), row


def load_tsv(path, schema: FieldSchema, max_bad_lines: int = 0,
             task_names=("click", "conversion")) -> Dataset:
    """Parse a TSV file.  Up to ``max_bad_lines`` bad records are skipped; one more raises."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    index = {k: i for i, k in enumerate(schema.keys)}
    labels, rows, bad = [], [], 0
    with path.open() as fh:
        for lineno, text in enumerate(fh, 1):
            if not text.strip():
                continue
            try:
                lab, row = _parse_line(text, schema, index, lineno)
            except IngestionError:
                bad += 1
                if bad > max_bad_lines:
                    raise
                continue
            labels.append(lab)
            rows.append(row)
    if bad:
        log.warning("%s: skipped %d malformed line(s)", path, bad)
    ids = np.array(rows, dtype=np.int64).reshape(len(rows), schema.field_count)
    labs = np.array(labels, dtype=np.int8).reshape(len(labels), 2)
    return Dataset(ids, labs, schema, tuple(task_names), rejected=bad)


def write_tsv(data: Dataset, path) -> None:
    keys = data.schema.keys
    with open(path, "w") as fh:
        for lab, row in zip(data.labels, data.ids):
            feats = ",".join(f"{k}:{int(v)}" for k, v in zip(keys, row))
            fh.write(f"{int(lab[0])}\t{int(lab[1])}\t{feats}\n")


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 7
    world_seed: int = 0
    n_examples: int = 10_000
    n_fields: int = 8
    vocab_size: int = 32
    latent_dim: int = 8
    click_noise: float = 1.0
    rho: float = 0.8
    signal: float = 2.5
    click_bias: float = -1.0
    conv_bias: float = -1.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.n_examples < 0 or self.n_fields < 1 or self.latent_dim < 1 or self.vocab_size < 2:
            raise ValueError("n_examples >= 0, n_fields >= 1, latent_dim >= 1 and vocab_size >= 2 required")
        if self.click_noise < 0:
            raise ValueError("click_noise must be non-negative")

    @property
    def schema(self) -> FieldSchema:
        return FieldSchema(tuple(range(1, self.n_fields + 1)), (self.vocab_size,) * self.n_fields)

    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        """Click and conversion directions, each of norm ``signal``.

        Drawn from ``world_seed`` so that datasets sampled with different
        ``seed`` values (train and test files) share one ground truth.
        """
        rng = np.random.default_rng([self.world_seed, 0])
        v = rng.standard_normal((2, self.latent_dim))
        v *= self.signal / np.linalg.norm(v, axis=1, keepdims=True)
        return v[0], v[1]


def quantize(u: np.ndarray, vocab_size: int) -> np.ndarray:
    """Map standard-normal coordinates to ids 1..vocab_size-1 by equal-probability bins."""
    bins = vocab_size - 1
    return np.clip((ndtr(u) * bins).astype(np.int64), 0, bins - 1) + 1


def gen_synthetic(spec: SynthSpec) -> Dataset:
    """Draw a correlated click/conversion dataset whose labels are learnable from ids.

    Each example has a standard-normal latent vector ``u``.  Field ``f``
    quantizes coordinate ``f mod latent_dim``.  Clicks follow
    ``sigmoid(u.v_click + click_bias + noise)``; conversions are only drawn for
    clicks, with logit ``rho * u.v_click + (1 - rho) * u.v_conv + conv_bias``.
    """
    v_click, v_conv = spec.directions()
    rng = np.random.default_rng([spec.seed, 1])
    n = spec.n_examples
    u = rng.standard_normal((n, spec.latent_dim))
    eps = rng.standard_normal(n)
    r_click = rng.random(n)
    r_conv = rng.random(n)
    click_score = u @ v_click
    conv_score = spec.rho * click_score + (1.0 - spec.rho) * (u @ v_conv)
    click = r_click < expit(click_score + spec.click_bias + spec.click_noise * eps)
    conv = click & (r_conv < expit(conv_score + spec.conv_bias))
    cols = np.arange(spec.n_fields) % spec.latent_dim
    ids = quantize(u[:, cols], spec.vocab_size)
    labels = np.stack([click, conv], axis=1).astype(np.int8)
    return Dataset(ids, labels, spec.schema,
                   meta={"click_score": click_score, "conv_score": conv_score})


def expected_rates(spec: SynthSpec, order: int = 48) -> tuple[float, float]:
    """Population click and conversion rates by Gauss-Hermite quadrature."""
    v_click, v_conv = spec.directions()
    s = np.linalg.norm(v_click)
    cov = float(v_click @ v_conv)
    a = cov / s if s > 0 else 0.0
    b = np.sqrt(max(float(v_conv @ v_conv) - a * a, 0.0))
    x, w = hermegauss(order)
    w = w / w.sum()
    z1, z2, z3 = np.meshgrid(x, x, x, indexing="ij")
    weight = w[:, None, None] * w[None, :, None] * w[None, None, :]
    c = s * z1
    g = a * z1 + b * z2
    p_click = expit(c + spec.click_bias + spec.click_noise * z3)
    p_conv = expit(spec.rho * c + (1.0 - spec.rho) * g + spec.conv_bias)
    return float((weight * p_click).sum()), float((weight * p_click * p_conv).sum())
