"""Central finite-difference checks for the autograd engine."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, _node

REL_FLOOR = 1e-6


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar ``sum(x * weights)``; projects any output onto a 1x1 loss."""

    def back(g):
        x._accum(g[0, 0] * weights)

    return _node(np.array([[float(np.sum(x.data * weights))]]), (x,), back, "weighted_sum")


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def check_gradients(loss_fn, tensors: list[Tensor], eps: float = 1e-5) -> float:
    """Worst relative error between backprop and central differences.

    ``loss_fn()`` must rebuild the graph from the current ``tensors`` data and
    return a 1x1 tensor; it is called twice per perturbed entry.
    """
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    worst = 0.0
    for t, a in zip(tensors, analytic):
        num = np.zeros_like(t.data)
        it = np.nditer(t.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = t.data[idx]
            t.data[idx] = old + eps
            up = float(loss_fn().data[0, 0])
            t.data[idx] = old - eps
            down = float(loss_fn().data[0, 0])
            t.data[idx] = old
            num[idx] = (up - down) / (2 * eps)
        worst = max(worst, relative_error(a, num))
    return worst
