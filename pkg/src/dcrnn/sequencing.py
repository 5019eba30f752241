"""Adaptive feature sequences and their partial-sharing windows.

A sequence is a list of copies of X0, each offset by its own learned vector
(or plain X0 when adaptation is off).  A :class:`SharingPlan` then hands each
task a window of ``window_len`` consecutive items, consecutive tasks shifted by
``interval``.  Windows hold the same Node objects, so positions shared by two
tasks receive gradient from both.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import DimensionError, PlanError


@dataclass(frozen=True)
class SharingPlan:
    n_tasks: int
    window_len: int
    interval: int

    def __post_init__(self):
        if self.n_tasks < 1:
            raise PlanError(f"n_tasks must be >= 1, got {self.n_tasks}")
        if self.window_len < 1:
            raise PlanError(f"window_len must be >= 1, got {self.window_len}")
        if not 0 <= self.interval <= self.window_len:
            raise PlanError(f"interval must satisfy 0 <= I <= L (got I={self.interval}, L={self.window_len})")

    @property
    def required_len(self) -> int:
        return required_len(self)

    def window(self, task: int) -> range:
        start = task * self.interval
        return range(start, start + self.window_len)

    @property
    def overlap(self) -> int:
        return self.window_len - self.interval

    @property
    def sharing(self) -> str:
        if self.interval == 0:
            return "hard"
        if self.interval == self.window_len:
            return "soft"
        return "partial"


def required_len(plan: SharingPlan) -> int:
    return plan.window_len + (plan.n_tasks - 1) * plan.interval


def slice_windows(plan: SharingPlan, seq: Sequence) -> list[list]:
    """Per-task windows ``seq[i*I : i*I + L]``; items are shared, not copied."""
    need = required_len(plan)
    if len(seq) < need:
        raise PlanError(f"sequence too short for plan: required {need}, got {len(seq)}")
    return [list(seq[i * plan.interval: i * plan.interval + plan.window_len])
            for i in range(plan.n_tasks)]


@dataclass(frozen=True)
class AdaptiveBank:
    seq_len: int
    dim: int
    enabled: bool = True
    prefix: str = "ada"

    def key(self, i: int) -> str:
        return f"{self.prefix}/A{i}"

    def init(self, rng=None):
        # zero start makes the adapted model coincide with the plain one at step 0
        if not self.enabled:
            return {}
        return {self.key(i): np.zeros(self.dim) for i in range(self.seq_len)}

    @property
    def param_count(self) -> int:
        return self.seq_len * self.dim if self.enabled else 0


def build_sequence(x0: Node, bank: AdaptiveBank, p: Mapping[str, Node] | None = None) -> list[Node]:
    """``[x0 + A_0, ..., x0 + A_{n-1}]``, or ``seq_len`` references to ``x0`` when disabled."""
    if x0.shape[-1] != bank.dim:
        raise DimensionError(f"adaptive bank width {bank.dim} != x0 width {x0.shape[-1]}")
    if not bank.enabled:
        return [x0] * bank.seq_len
    return [ad.add(x0, p[bank.key(i)]) for i in range(bank.seq_len)]


@dataclass(frozen=True)
class SharingReport:
    kind: str
    window_len: int
    interval: int
    overlap: int
    required_len: int
    verified: bool


def degenerate_check(plan) -> SharingReport:
    """Classify the plan and confirm by enumeration that neighbouring windows overlap by L - I.

    Accepts a :class:`SharingPlan` or anything carrying one as ``.plan``, such as a model config.
    """
    plan = getattr(plan, "plan", plan)
    windows = slice_windows(plan, list(range(required_len(plan))))
    ok = all(len(w) == plan.window_len for w in windows)
    for a, b in zip(windows, windows[1:]):
        ok = ok and len(set(a) & set(b)) == plan.overlap
    return SharingReport(plan.sharing, plan.window_len, plan.interval, plan.overlap,
                         required_len(plan), ok)
