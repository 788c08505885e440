"""Dense float64 tensors with reverse-mode autodiff and the Adagrad rule.

All model math is assembled from the primitives here. A ``Tensor`` wraps a
numpy float64 array; every op records a backward closure, and ``backward``
walks the resulting DAG in reverse topological order. The primitive set is
deliberately small: matrix multiply, broadcasted add/multiply, concat, basic
slicing, reshape/transpose, tanh/sigmoid/relu, exp/log, sum/mean, masked
softmax, embedding lookup, plus three fused helpers used by attention
(``weighted_sum``, ``scatter_sum``, ``gather_index``).

Graphs are DAGs by construction (an op can only reference tensors that
already exist), so cycles are impossible; anything outside the primitive set
simply does not exist and fails at graph-construction time.

Thread-safety: a tensor and the graph hanging off it are single-writer while
a forward/backward pass runs; read-only sharing afterwards is fine. Callers
serialize parameter updates.
"""

from __future__ import annotations

import contextlib
import struct
from dataclasses import dataclass

import numpy as np

_GRAD_ENABLED = True
_CHECK_FINITE = False


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference fast path)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def set_check_finite(flag):
    """When on, every op output is checked for NaN/Inf (slow; test use)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


class Tensor:
    """A float64 array plus an optional gradient of identical shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        """Reverse-mode pass from a scalar; accumulates into ``.grad``."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        if not self.requires_grad:
            raise ValueError("backward() on a tensor with no gradient path")
        topo = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return tmean(self, axis=axis)

    def item(self):
        return float(self.data)


def _as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _toposort(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def _make(data, parents, backward):
    rg = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = rg
    out._parents = tuple(parents) if rg else ()
    out._backward = backward if rg else None
    if _CHECK_FINITE and not np.isfinite(data).all():
        raise FloatingPointError("non-finite values produced in forward pass")
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic primitives ------------------------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), bwd)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), bwd)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2-D operands only; reshape first")
    data = a.data @ b.data

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(data, (a, b), bwd)


def transpose(t):
    t = _as_tensor(t)
    if t.data.ndim != 2:
        raise ValueError("transpose supports 2-D tensors only")

    def bwd(g):
        _accum(t, g.T)

    return _make(t.data.T, (t,), bwd)


def reshape(t, shape):
    t = _as_tensor(t)
    old = t.data.shape

    def bwd(g):
        _accum(t, g.reshape(old))

    return _make(t.data.reshape(shape), (t,), bwd)


def concat(tensors, axis=0):
    ts = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]

    def bwd(g):
        offset = 0
        for t, n in zip(ts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + n)
            _accum(t, g[tuple(sl)])
            offset += n

    return _make(data, tuple(ts), bwd)


def getitem(t, idx):
    """Basic indexing (ints and slices) with scatter-back gradient."""
    t = _as_tensor(t)
    data = t.data[idx]

    def bwd(g):
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad[idx] += g

    return _make(data, (t,), bwd)


def tanh(t):
    t = _as_tensor(t)
    data = np.tanh(t.data)

    def bwd(g):
        _accum(t, g * (1.0 - data * data))

    return _make(data, (t,), bwd)


def sigmoid(t):
    t = _as_tensor(t)
    # stable piecewise form; exp only sees non-positive arguments
    x = t.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(g):
        _accum(t, g * data * (1.0 - data))

    return _make(data, (t,), bwd)


def relu(t):
    t = _as_tensor(t)
    data = np.maximum(t.data, 0.0)

    def bwd(g):
        _accum(t, g * (t.data > 0))

    return _make(data, (t,), bwd)


def exp(t):
    t = _as_tensor(t)
    data = np.exp(t.data)

    def bwd(g):
        _accum(t, g * data)

    return _make(data, (t,), bwd)


def log(t, floor=None):
    """Natural log; with ``floor`` set, inputs are clamped from below.

    The clamp makes -log(p) safe on probabilities that underflow to 0; the
    gradient is zero wherever the clamp is active.
    """
    t = _as_tensor(t)
    if floor is None:
        clipped = t.data
        active = np.ones_like(t.data, dtype=bool)
    else:
        clipped = np.maximum(t.data, floor)
        active = t.data > floor
    data = np.log(clipped)

    def bwd(g):
        _accum(t, np.where(active, g / clipped, 0.0))

    return _make(data, (t,), bwd)


def tsum(t, axis=None, keepdims=False):
    t = _as_tensor(t)
    data = t.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(t, np.broadcast_to(g, t.data.shape).copy())
        else:
            gg = g
            if not keepdims:
                gg = np.expand_dims(g, axis)
            _accum(t, np.broadcast_to(gg, t.data.shape).copy())

    return _make(data, (t,), bwd)


def tmean(t, axis=None):
    t = _as_tensor(t)
    data = t.data.mean(axis=axis)
    count = t.data.size if axis is None else t.data.shape[axis]

    def bwd(g):
        if axis is None:
            _accum(t, np.broadcast_to(g / count, t.data.shape).copy())
        else:
            _accum(t, np.broadcast_to(np.expand_dims(g, axis) / count, t.data.shape).copy())

    return _make(data, (t,), bwd)


# -- model-specific primitives ---------------------------------------------


def softmax_masked(logits, mask, axis=-1):
    """Probability vector over the unmasked positions of ``logits``.

    Computed with max-subtraction; masked positions come out exactly 0.
    ``mask`` is a boolean array (broadcastable to ``logits``), not a tensor:
    attention support is data, not something gradients flow through.

    Raises:
        ValueError: if any row along ``axis`` has no unmasked position.
    """
    t = _as_tensor(logits)
    m = np.asarray(mask, dtype=bool)
    if m.shape != t.data.shape:
        m = np.broadcast_to(m, t.data.shape)
    if not m.any(axis=axis).all():
        raise ValueError("empty attention support")
    neg = np.where(m, t.data, -np.inf)
    mx = neg.max(axis=axis, keepdims=True)
    e = np.exp(neg - mx)
    p = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        _accum(t, p * (g - dot))

    return _make(p, (t,), bwd)


def embedding_lookup(table, ids):
    """Gather rows of ``table`` (V, E) by an integer id array of any shape."""
    table = _as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError("embedding id out of range")
    data = table.data[idx]
    width = table.data.shape[1]

    def bwd(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx.ravel(), g.reshape(-1, width))

    return _make(data, (table,), bwd)


def weighted_sum(weights, values):
    """Contract attention weights (B, L) with states (B, L, H) -> (B, H)."""
    w, v = _as_tensor(weights), _as_tensor(values)
    data = np.einsum("bl,blh->bh", w.data, v.data)

    def bwd(g):
        _accum(w, np.einsum("bh,blh->bl", g, v.data))
        _accum(v, w.data[:, :, None] * g[:, None, :])

    return _make(data, (w, v), bwd)


def scatter_sum(weights, ids, size):
    """Scatter-add weights (B, L) into (B, size) buckets given by ``ids``."""
    w = _as_tensor(weights)
    idx = np.asarray(ids, dtype=np.int64)
    if idx.shape != w.data.shape:
        raise ValueError("weights and ids must share a shape")
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise IndexError("scatter id out of range")
    nb, nl = w.data.shape
    rows = np.repeat(np.arange(nb), nl)
    data = np.zeros((nb, size))
    np.add.at(data, (rows, idx.ravel()), w.data.ravel())

    def bwd(g):
        _accum(w, g[rows, idx.ravel()].reshape(nb, nl))

    return _make(data, (w,), bwd)


def gather_index(t, ids):
    """Pick one entry per row: (B, K) gathered at ids (B,) -> (B,)."""
    t = _as_tensor(t)
    idx = np.asarray(ids, dtype=np.int64)
    rows = np.arange(t.data.shape[0])
    data = t.data[rows, idx]

    def bwd(g):
        z = np.zeros_like(t.data)
        z[rows, idx] = g
        _accum(t, z)

    return _make(data, (t,), bwd)


def zeros(shape):
    return Tensor(np.zeros(shape))


def constant(arr):
    """Wrap an array as a non-trainable tensor (masks, feeds, etc.)."""
    return Tensor(np.asarray(arr, dtype=np.float64))


# -- gradients and verification ---------------------------------------------


def gradients(loss, params):
    """Backprop from ``loss`` and return {name: gradient} over ``params``.

    Parameters the loss does not reach get zero gradients.
    """
    loss.backward()
    out = {}
    for name, p in params.items():
        out[name] = p.grad if p.grad is not None else np.zeros_like(p.data)
    return out


def zero_grads(params):
    for p in params.values():
        p.grad = None


def fd_gradient(f, param, eps=1e-5):
    """Central-difference gradient of scalar ``f()`` w.r.t. ``param``.

    ``f`` must rebuild its forward pass from the current ``param.data``.
    Used as the independent oracle for every analytic gradient in the tests.
    """
    g = np.zeros_like(param.data)
    flat = param.data.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def max_rel_error(analytic, numeric, floor=1e-3):
    """max |a-f| / max(|a|, |f|, floor); the floor keeps tiny-gradient
    comparisons from amplifying finite-difference roundoff."""
    a = np.asarray(analytic, dtype=np.float64)
    f = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
    return float(np.max(np.abs(a - f) / denom))


# -- Adagrad -----------------------------------------------------------------


@dataclass
class AdagradState:
    """Per-parameter squared-gradient accumulator.

    No epsilon in the update denominator: the initial accumulator value
    (0.1 by default) already bounds it away from zero, and entries only
    grow from there.
    """

    accumulator: np.ndarray
    learning_rate: float = 0.15
    initial_accumulator: float = 0.1


def adagrad_init(param, learning_rate=0.15, initial_accumulator=0.1):
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    acc = np.full_like(param.data, float(initial_accumulator))
    return AdagradState(acc, float(learning_rate), float(initial_accumulator))


def adagrad_step(param, grad, state):
    """acc += grad**2; param -= lr * grad / sqrt(acc). In-place on both."""
    g = grad if isinstance(grad, np.ndarray) else np.asarray(grad, dtype=np.float64)
    if g.shape != param.data.shape:
        raise ValueError("gradient shape does not match parameter")
    state.accumulator += g * g
    param.data -= state.learning_rate * g / np.sqrt(state.accumulator)
    return param, state


class Adagrad:
    """Adagrad over a named parameter dict, with optional global-norm clip."""

    def __init__(self, params, learning_rate=0.15, initial_accumulator=0.1, clip_norm=None):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.params = params
        self.states = {
            name: adagrad_init(p, learning_rate, initial_accumulator) for name, p in params.items()
        }
        self.clip_norm = clip_norm

    def step(self):
        """Apply one update from the gradients stored on the parameters."""
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        if self.clip_norm is not None:
            clip_global_norm(grads, self.clip_norm)
        for name, g in grads.items():
            adagrad_step(self.params[name], g, self.states[name])


def clip_global_norm(grads, max_norm):
    """Scale the gradient dict in place so its global L2 norm <= max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if not np.isfinite(norm):
        raise FloatingPointError("non-finite gradient norm")
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
