"""A small reverse-mode autodiff over 2-D float64 arrays.

Only what the detector needs: linear layers, ReLU, batch normalisation,
column concatenation, row gathers, segment/region means and softmax
cross-entropy, plus an Adam optimiser and a checkpoint format.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from collections import OrderedDict

import numpy as np
import scipy.sparse as sp

CHECKPOINT_FORMAT = "vgdet-checkpoint/1"


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {what}")
    return arr


class Tensor:
    """2-D array node in the tape. ``grad`` is filled by :meth:`backward`."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None, name: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got shape {arr.shape}")
        self.data = _finite(arr, name or "tensor construction")
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}{', grad' if self.requires_grad else ''})"

    def _accum(self, g: np.ndarray):
        if not self.requires_grad:
            return
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self):
        if self.shape != (1, 1):
            raise ShapeError("backward() needs a scalar (1x1) tensor")
        order, seen = [], set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            order.append(t)

        visit(self)
        for t in order:
            if t is not self and t._backward is not None:
                t.grad = None
        self.grad = np.ones((1, 1))
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        return sub(self, other)


def _node(data, parents, backward, name):
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, parents=parents if needs else (), backward=backward if needs else None, name=name)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")

    def back(g):
        a._accum(g)
        b._accum(g)

    return _node(a.data + b.data, (a, b), back, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}")

    def back(g):
        a._accum(g)
        b._accum(-g)

    return _node(a.data - b.data, (a, b), back, "sub")


def linear(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``x @ W + b`` with ``b`` of shape (1, d_out)."""
    if x.shape[1] != W.shape[0] or b.shape != (1, W.shape[1]):
        raise ShapeError(f"linear: x{x.shape} W{W.shape} b{b.shape}")

    def back(g):
        if x.requires_grad:
            x._accum(g @ W.data.T)
        if W.requires_grad:
            W._accum(x.data.T @ g)
        if b.requires_grad:
            b._accum(g.sum(axis=0, keepdims=True))

    return _node(x.data @ W.data + b.data, (x, W, b), back, "linear")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def back(g):
        x._accum(g * mask)

    return _node(x.data * mask, (x,), back, "relu")


class BatchNormState:
    """Running statistics of one batch-norm layer."""

    def __init__(self, dim: int, momentum: float = 0.9, eps: float = 1e-5):
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Per-column normalisation. Training mode uses batch statistics and
    updates ``state``; eval mode uses the running statistics."""
    n = x.shape[0]
    eps = state.eps
    if training:
        if n < 2:
            raise ValueError("batch norm in training mode needs at least 2 rows")
        mean = x.data.mean(axis=0, keepdims=True)
        xc = x.data - mean
        var = (xc * xc).mean(axis=0, keepdims=True)
        m = state.momentum
        state.running_mean = m * state.running_mean + (1 - m) * mean
        state.running_var = m * state.running_var + (1 - m) * var * n / (n - 1)
    else:
        mean, var = state.running_mean, state.running_var
        xc = x.data - mean
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def back(g):
        if gamma.requires_grad:
            gamma._accum((g * xhat).sum(axis=0, keepdims=True))
        if beta.requires_grad:
            beta._accum(g.sum(axis=0, keepdims=True))
        if x.requires_grad:
            gx = g * gamma.data
            if training:
                gx = inv * (gx - gx.mean(axis=0, keepdims=True) - xhat * (gx * xhat).mean(axis=0, keepdims=True))
            else:
                gx = gx * inv
            x._accum(gx)

    return _node(out, (x, gamma, beta), back, "batch_norm")


def concat(tensors: list[Tensor]) -> Tensor:
    """Concatenate along columns."""
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise ShapeError(f"concat: row counts differ {[t.shape for t in tensors]}")
    widths = [t.shape[1] for t in tensors]
    bounds = np.cumsum([0] + widths)

    def back(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            t._accum(g[:, lo:hi])

    return _node(np.hstack([t.data for t in tensors]), tuple(tensors), back, "concat")


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        if x.requires_grad:
            out = np.zeros_like(x.data)
            np.add.at(out, idx, g)
            x._accum(out)

    return _node(x.data[idx], (x,), back, "gather_rows")


def sparse_rows(A: sp.spmatrix, x: Tensor) -> Tensor:
    """``A @ x`` for a constant sparse matrix ``A``."""
    if A.shape[1] != x.shape[0]:
        raise ShapeError(f"sparse_rows: A{A.shape} x{x.shape}")
    A = sp.csr_matrix(A)
    At = A.T.tocsr()

    def back(g):
        x._accum(np.asarray(At @ g))

    return _node(np.asarray(A @ x.data), (x,), back, "sparse_rows")


def mean_matrix(groups: list[np.ndarray] | np.ndarray, num_rows: int, num_groups: int | None = None) -> sp.csr_matrix:
    """Row-normalised incidence matrix. ``groups`` is either a row→segment
    array or a list of row-index arrays (one per output row, may overlap)."""
    if isinstance(groups, np.ndarray) and groups.ndim == 1 and groups.dtype.kind in "iu":
        seg = groups.astype(np.int64)
        k = int(seg.max()) + 1 if num_groups is None and len(seg) else (num_groups or 0)
        counts = np.bincount(seg, minlength=k)
        if (counts == 0).any():
            raise ValueError(f"empty segment(s): {np.nonzero(counts == 0)[0].tolist()}")
        return sp.csr_matrix((1.0 / counts[seg], (seg, np.arange(len(seg)))), shape=(k, num_rows))
    lengths = np.array([len(g) for g in groups], dtype=np.int64)
    if (lengths == 0).any():
        raise ValueError("empty group")
    cols = np.concatenate(groups).astype(np.int64) if len(groups) else np.zeros(0, dtype=np.int64)
    rows = np.repeat(np.arange(len(groups)), lengths)
    vals = np.repeat(1.0 / np.maximum(lengths, 1), lengths)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(groups), num_rows))


def segment_mean(x: Tensor, segment_of, num_segments: int | None = None) -> Tensor:
    """Row ``s`` of the result is the mean of the rows of ``x`` in segment ``s``."""
    seg = np.asarray(segment_of, dtype=np.int64)
    if len(seg) != x.shape[0]:
        raise ShapeError(f"segment_mean: {len(seg)} labels for {x.shape[0]} rows")
    return sparse_rows(mean_matrix(seg, x.shape[0], num_segments), x)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over rows of ``-log softmax(logits)[label]`` (1x1 tensor)."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if n == 0:
        raise ValueError("softmax_cross_entropy needs at least one row")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k - 1}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), labels]))

    def back(g):
        p = softmax(logits.data)
        p[np.arange(n), labels] -= 1.0
        logits._accum(p * (g[0, 0] / n))

    return _node(np.array([[loss]]), (logits,), back, "softmax_cross_entropy")


class ParamSet:
    """Named trainable tensors, non-trainable buffers and Adam state."""

    def __init__(self):
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self.bn: OrderedDict[str, BatchNormState] = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(value, requires_grad=True, name=name)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def add_bn(self, name: str, dim: int) -> tuple[Tensor, Tensor, BatchNormState]:
        gamma = self.add(f"{name}.gamma", np.ones((1, dim)))
        beta = self.add(f"{name}.beta", np.zeros((1, dim)))
        state = self.bn[name] = BatchNormState(dim)
        return gamma, beta, state

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in self.params.items()}

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k, t in self.params.items():
            out[f"param/{k}"] = t.data
            out[f"adam_m/{k}"] = self.m[k]
            out[f"adam_v/{k}"] = self.v[k]
        for k, s in self.bn.items():
            out[f"bn_mean/{k}"] = s.running_mean
            out[f"bn_var/{k}"] = s.running_var
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray], step: int):
        for k, t in self.params.items():
            data = arrays[f"param/{k}"]
            if data.shape != t.data.shape:
                raise ShapeError(f"checkpoint shape mismatch for {k}: {data.shape} vs {t.data.shape}")
            t.data = np.array(data, dtype=np.float64)
            self.m[k] = np.array(arrays[f"adam_m/{k}"], dtype=np.float64)
            self.v[k] = np.array(arrays[f"adam_v/{k}"], dtype=np.float64)
        for k, s in self.bn.items():
            s.running_mean = np.array(arrays[f"bn_mean/{k}"], dtype=np.float64)
            s.running_var = np.array(arrays[f"bn_var/{k}"], dtype=np.float64)
        self.step = int(step)


def adam_step(params: ParamSet, grads: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ShapeError(f"gradient shape mismatch for {k}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for {k}")
    params.step += 1
    t = params.step
    for k, g in grads.items():
        m = params.m[k] = beta1 * params.m[k] + (1 - beta1) * g
        v = params.v[k] = beta2 * params.v[k] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p = params[k]
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def glorot_uniform(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-bound, bound, size=(d_in, d_out))


def atomic_write_bytes(path, payload: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_checkpoint(path, params: ParamSet, config: dict, extra: dict | None = None) -> None:
    """Write params, Adam moments, BN statistics and config to one ``.npz``."""
    meta = {"format": CHECKPOINT_FORMAT, "step": params.step, "config": config, "extra": extra or {}}
    arrays = dict(params.state_arrays())
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write_bytes(path, buf.getvalue())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
    return meta, arrays
