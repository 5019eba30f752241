"""Central finite-difference checks against tape gradients.

The numerical side only ever reads forward values, so it is independent of
every backward rule it checks.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .autodiff import Node, Tape

Builder = Callable[[Tape, Mapping[str, Node]], Node]


def _evaluate(build: Builder, arrays: Mapping[str, np.ndarray]) -> float:
    tape = Tape(check_finite=False)
    nodes = {k: tape.leaf(v, name=k) for k, v in arrays.items()}
    return float(build(tape, nodes).value.reshape(()))


def tape_gradients(build: Builder, arrays: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    tape = Tape()
    nodes = {k: tape.leaf(v, name=k) for k, v in arrays.items()}
    tape.backward(build(tape, nodes))
    return {k: (n.grad if n.grad is not None else np.zeros_like(n.value)) for k, n in nodes.items()}


def numerical_gradients(build: Builder, arrays: Mapping[str, np.ndarray], eps: float = 1e-5,
                        only=None) -> dict[str, np.ndarray]:
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in arrays.items()}
    out = {}
    for key in (only or work):
        x = work[key]
        grad = np.zeros_like(x)
        flat, gflat = x.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = _evaluate(build, work)
            flat[i] = orig - eps
            down = _evaluate(build, work)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        out[key] = grad
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``|a - n| / max(|a|, |n|)`` in the 2-norm; 0 when both vanish."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom < 1e-300:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def check_gradients(build: Builder, arrays: Mapping[str, np.ndarray], eps: float = 1e-5,
                    only=None) -> dict[str, float]:
    """Relative error of the tape gradient for each input in ``arrays``."""
    analytic = tape_gradients(build, arrays)
    numeric = numerical_gradients(build, arrays, eps=eps, only=only)
    return {k: relative_error(analytic[k], numeric[k]) for k in numeric}
