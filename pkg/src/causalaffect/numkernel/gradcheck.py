"""Central finite-difference check of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """``|a - n| / max(1, |a|, |n|)`` elementwise."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))


def numeric_grad(fn: Callable[[dict[str, Tensor]], Tensor], inputs: Mapping[str, np.ndarray], name: str, step: float = 1e-5) -> np.ndarray:
    base = {k: np.array(v, dtype=np.float64, copy=True) for k, v in inputs.items()}
    arr = base[name]
    out = np.zeros_like(arr)
    flat = arr.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + step
        fp = fn({k: Tensor(v, name=k) for k, v in base.items()}).item()
        flat[idx] = orig - step
        fm = fn({k: Tensor(v, name=k) for k, v in base.items()}).item()
        flat[idx] = orig
        out.reshape(-1)[idx] = (fp - fm) / (2.0 * step)
    return out


def grad_check(
    fn: Callable[[dict[str, Tensor]], Tensor],
    inputs: Mapping[str, np.ndarray],
    step: float = 1e-5,
    wrt: list[str] | None = None,
) -> float:
    """Compare backprop gradients of a scalar function with central differences.

    ``fn`` receives a dict of fresh leaf tensors built from ``inputs`` and must
    return a scalar :class:`Tensor`; it has to be deterministic (seed any
    dropout inside it).  Returns the maximum relative error over every
    element of the inputs named in ``wrt`` (all inputs by default).
    """
    leaves = {k: Tensor(np.array(v, dtype=np.float64), name=k) for k, v in inputs.items()}
    fn(leaves).backward()
    worst = 0.0
    for name in wrt or list(inputs):
        analytic = leaves[name].grad
        if analytic is None:
            analytic = np.zeros_like(leaves[name].data)
        numeric = numeric_grad(fn, inputs, name, step)
        if numeric.size:
            worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst
