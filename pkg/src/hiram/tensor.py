"""Dense float64 tensors with reverse-mode differentiation.

Every op records its parents and a local backward rule on the output tensor.
``backward`` replays the recorded nodes in reverse creation order, so gradient
accumulation order is fixed by the order in which ops were executed.
"""
from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, NumericError

LAYER_NORM_EPS = 1e-6

_ids = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "parents", "backward_fn", "node_id", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.base is not None or arr is data:
            arr = arr.view()
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.node_id = next(_ids)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar; all dispatch to the module-level ops below
    def __add__(self, other):
        return add(self, _lift(other, self.shape))

    def __radd__(self, other):
        return add(_lift(other, self.shape), self)

    def __sub__(self, other):
        return sub(self, _lift(other, self.shape))

    def __rsub__(self, other):
        return sub(_lift(other, self.shape), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return hadamard(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _raise_item(t: Tensor):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def _lift(x, shape) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full(shape, float(x)))


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by {op}")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.backward_fn = backward_fn
    return out


# ---------------------------------------------------------------------------
# linear algebra and elementwise ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a 2-D ``a`` with a 2-D or 1-D ``b``."""
    if a.data.ndim != 2 or b.data.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        if B.ndim == 1:
            return np.outer(g, B), A.T @ g
        return g @ B.T, A.T @ g

    return _make(A @ B, (a, b), backward, "matmul")


def _check_same(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ContractError(f"{op}: operand shapes differ: {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same("add", a, b)
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same("sub", a, b)
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same("hadamard", a, b)
    A, B = a.data, b.data
    return _make(A * B, (a, b), lambda g: (g * B, g * A), "hadamard")


def scale(a: Tensor, factor: float) -> Tensor:
    return _make(a.data * factor, (a,), lambda g: (g * factor,), "scale")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


_ELEMENTWISE = {
    "hadamard": (hadamard, 2),
    "add": (add, 2),
    "sub": (sub, 2),
    "sigmoid": (sigmoid, 1),
    "tanh": (tanh, 1),
    "scale": (scale, 1),
}


def elementwise(op_name: str, *inputs, factor: float | None = None) -> Tensor:
    """Named pointwise op: hadamard, add, sub, sigmoid, tanh or scale."""
    if op_name not in _ELEMENTWISE:
        raise ContractError(f"unknown elementwise op {op_name!r}")
    fn, arity = _ELEMENTWISE[op_name]
    if len(inputs) != arity:
        raise ContractError(f"{op_name} takes {arity} tensor operand(s), got {len(inputs)}")
    if op_name == "scale":
        if factor is None:
            raise ContractError("scale needs a factor")
        return fn(inputs[0], factor)
    return fn(*inputs)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a length-d vector to a d-vector or to every column of a d x n matrix."""
    if bias.data.ndim != 1 or x.shape[0] != bias.shape[0] or x.data.ndim > 2:
        raise ContractError(f"add_bias shape mismatch: {x.shape} + {bias.shape}")
    if x.data.ndim == 1:
        return _make(x.data + bias.data, (x, bias), lambda g: (g, g), "add_bias")
    return _make(x.data + bias.data[:, None], (x, bias), lambda g: (g, g.sum(axis=1)), "add_bias")


def affine(weight: Tensor, x: Tensor, bias: Tensor) -> Tensor:
    return add_bias(matmul(weight, x), bias)


# ---------------------------------------------------------------------------
# shape manipulation


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ContractError(f"transpose needs a matrix, got shape {a.shape}")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("concat of nothing")
    arrays = [t.data for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError as exc:
        raise ContractError(f"concat shape mismatch: {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tuple(tensors), backward, "concat")


def take(a: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather slices along ``axis``; repeated indices accumulate gradient."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[axis]):
        raise ContractError(f"take: index out of range for axis {axis} of shape {a.shape}")
    src_shape = a.shape

    def backward(g):
        full = np.zeros(src_shape)
        if axis == 0:
            np.add.at(full, idx, g)
        else:
            np.add.at(full, (slice(None), idx), g)
        return (full,)

    return _make(np.take(a.data, idx, axis=axis), (a,), backward, "take")


def repeat_columns(v: Tensor, n: int) -> Tensor:
    """Broadcast a d-vector to a d x n matrix."""
    if v.data.ndim != 1:
        raise ContractError(f"repeat_columns needs a vector, got shape {v.shape}")
    out = np.repeat(v.data[:, None], n, axis=1)
    return _make(out, (v,), lambda g: (g.sum(axis=1),), "repeat_columns")


# ---------------------------------------------------------------------------
# reductions, normalization, losses


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _make(np.array(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),), "sum")


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.shape
    if axis is None:
        n = a.size
        return _make(np.array(a.data.mean()), (a,), lambda g: (np.full(shape, float(g) / n),), "mean")
    n = shape[axis]
    return _make(a.data.mean(axis=axis), (a,),
                 lambda g: (np.repeat(np.expand_dims(g, axis), n, axis=axis) / n,), "mean")


def softmax(x: Tensor) -> Tensor:
    if x.data.ndim != 1 or x.size == 0:
        raise ContractError(f"softmax needs a nonempty vector, got shape {x.shape}")
    e = np.exp(x.data - x.data.max())
    y = e / e.sum()

    def backward(g):
        return (y * (g - np.dot(g, y)),)

    return _make(y, (x,), backward, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    if x.data.ndim != 1 or x.size == 0:
        raise ContractError(f"log_softmax needs a nonempty vector, got shape {x.shape}")
    shifted = x.data - x.data.max()
    lse = np.log(np.exp(shifted).sum())
    y = shifted - lse
    p = np.exp(y)
    return _make(y, (x,), lambda g: (g - p * g.sum(),), "log_softmax")


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] as a scalar tensor."""
    if logits.data.ndim != 1:
        raise ContractError(f"cross_entropy needs a logit vector, got shape {logits.shape}")
    if not 0 <= target < logits.size:
        raise ContractError(f"label index {target} out of range for {logits.size} classes")
    shifted = logits.data - logits.data.max()
    e = np.exp(shifted)
    z = e.sum()
    p = e / z
    loss = np.log(z) - shifted[target]

    def backward(g):
        d = p.copy()
        d[target] -= 1.0
        return (d * float(g),)

    return _make(np.array(loss), (logits,), backward, "cross_entropy")


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    if x.data.ndim != 1 or x.size == 0:
        raise ContractError(f"layer_norm needs a nonempty vector, got shape {x.shape}")
    if gain.shape != x.shape or shift.shape != x.shape:
        raise ContractError(f"layer_norm affine shape mismatch: {x.shape}, {gain.shape}, {shift.shape}")
    v = x.data
    mu = v.mean()
    centered = v - mu
    inv = 1.0 / np.sqrt((centered * centered).mean() + eps)
    xhat = centered * inv
    G = gain.data

    def backward(g):
        dxhat = g * G
        dx = inv * (dxhat - dxhat.mean() - xhat * (dxhat * xhat).mean())
        return dx, g * xhat, g

    return _make(xhat * G + shift.data, (x, gain, shift), backward, "layer_norm")


# ---------------------------------------------------------------------------
# convolution and pooling


def conv1d(seq: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """'Same' 1-D convolution: (d x n) * (f x d x w) + (f) -> (f x n), zero padded."""
    if seq.data.ndim != 2 or kernels.data.ndim != 3:
        raise ContractError(f"conv1d expects seq d x n and kernels f x d x w, got {seq.shape}, {kernels.shape}")
    f, d, w = kernels.shape
    if seq.shape[0] != d:
        raise ContractError(f"conv1d channel mismatch: seq {seq.shape} vs kernels {kernels.shape}")
    if w % 2 == 0:
        raise ContractError(f"conv1d window must be odd, got {w}")
    if bias.shape != (f,):
        raise ContractError(f"conv1d bias shape {bias.shape} does not match {f} filters")
    n = seq.shape[1]
    half = w // 2
    padded = np.pad(seq.data, ((0, 0), (half, half)))
    # patches[d, j, n] = padded[d, t + j]
    patches = np.stack([padded[:, j:j + n] for j in range(w)], axis=1)
    cols = patches.reshape(d * w, n)
    K = kernels.data.reshape(f, d * w)
    out = K @ cols + bias.data[:, None]

    def backward(g):
        dK = (g @ cols.T).reshape(f, d, w)
        dcols = (K.T @ g).reshape(d, w, n)
        dpad = np.zeros((d, n + 2 * half))
        for j in range(w):
            dpad[:, j:j + n] += dcols[:, j, :]
        return dpad[:, half:half + n], dK, g.sum(axis=1)

    return _make(out, (seq, kernels, bias), backward, "conv1d")


def pool(x: Tensor, mode: str, start: int, stop: int) -> Tensor:
    """Row-wise max or mean over columns [start, stop); an empty range gives zeros."""
    if x.data.ndim != 2:
        raise ContractError(f"pool needs a matrix, got shape {x.shape}")
    d, n = x.shape
    if not 0 <= start <= stop <= n:
        raise ContractError(f"pool range [{start}, {stop}) out of bounds for {n} columns")
    if mode not in ("max", "mean"):
        raise ContractError(f"unknown pool mode {mode!r}")
    if start == stop:
        return _make(np.zeros(d), (x,), lambda g: (np.zeros((d, n)),), "pool")
    block = x.data[:, start:stop]
    if mode == "mean":
        width = stop - start

        def backward(g):
            full = np.zeros((d, n))
            full[:, start:stop] = g[:, None] / width
            return (full,)

        return _make(block.mean(axis=1), (x,), backward, "pool")

    arg = block.argmax(axis=1)  # first maximum wins on ties

    def backward(g):
        full = np.zeros((d, n))
        full[np.arange(d), start + arg] = g
        return (full,)

    return _make(block[np.arange(d), arg], (x,), backward, "pool")


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor, wrt: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Gradients of a scalar ``loss``.

    With ``wrt`` given, returns exactly those tensors (zeros for any the loss
    does not depend on). Otherwise returns every reachable leaf that requires
    a gradient.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t.node_id in nodes or not t.requires_grad:
            continue
        nodes[t.node_id] = t
        stack.extend(t.parents)

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones(loss.shape)}
    for nid in sorted(nodes, reverse=True):
        t = nodes[nid]
        g = grads.get(nid)
        if g is None or t.backward_fn is None:
            continue
        for parent, pg in zip(t.parents, t.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(parent.node_id)
            grads[parent.node_id] = pg if prev is None else prev + pg

    if wrt is None:
        return {t: grads[t.node_id] for t in (nodes[i] for i in sorted(nodes))
                if t.backward_fn is None and t.node_id in grads}
    return {t: grads.get(t.node_id, np.zeros(t.shape)) for t in wrt}
