"""Minimal reverse-mode automatic differentiation over numpy arrays.

Tensors carry their parents and a backward closure; backward() runs a
topological sweep from a scalar loss.  There is no global tape: each graph is
owned by the tensors that built it, so independent forward passes can run
concurrently.
"""
from __future__ import annotations

import numpy as np

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """float64 for oracle-tight tests (default), float32 for speed."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError("dtype must be float32 or float64")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


class GradientFlowError(RuntimeError):
    """A parameter expected a gradient but the graph never reached it."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()
        self.name = name

    # -- introspection -----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}{tag})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = _unbroadcast(np.asarray(g), self.data.shape)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- autodiff core -----------------------------------------------------
    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __pow__(self, k):
        return power(self, float(k))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    # -- shaping / reductions ------------------------------------------------
    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def unsqueeze(self, axis):
        return unsqueeze(self, axis)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x, requires_grad=False)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Elementwise and linear-algebra primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a.accumulate_grad(g)
        b.accumulate_grad(g)
    return _make(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a.accumulate_grad(g)
        b.accumulate_grad(-g)
    return _make(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a.accumulate_grad(g * b.data)
        b.accumulate_grad(g * a.data)
    return _make(a.data * b.data, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data / b.data

    def bw(g):
        a.accumulate_grad(g / b.data)
        b.accumulate_grad(-g * out_data / b.data)
    return _make(out_data, (a, b), bw)


def power(a: Tensor, k: float) -> Tensor:
    def bw(g):
        a.accumulate_grad(g * k * a.data ** (k - 1.0))
    return _make(a.data ** k, (a,), bw)


def matmul(a: Tensor, w: Tensor) -> Tensor:
    """Batched a[..., m] @ 2-D weight w[m, n]."""
    if w.data.ndim != 2:
        raise ValueError("matmul expects a 2-D right operand")
    out_data = a.data @ w.data

    def bw(g):
        a.accumulate_grad(g @ w.data.T)
        m = w.data.shape[0]
        n = w.data.shape[1]
        w.accumulate_grad(a.data.reshape(-1, m).T @ g.reshape(-1, n))
    return _make(out_data, (a, w), bw)


def texp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def bw(g):
        a.accumulate_grad(g * out_data)
    return _make(out_data, (a,), bw)


def tlog(a: Tensor) -> Tensor:
    def bw(g):
        a.accumulate_grad(g / a.data)
    return _make(np.log(a.data), (a,), bw)


def tsqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def bw(g):
        a.accumulate_grad(g * 0.5 / out_data)
    return _make(out_data, (a,), bw)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    out_data = _sigmoid_np(a.data)

    def bw(g):
        a.accumulate_grad(g * out_data * (1.0 - out_data))
    return _make(out_data, (a,), bw)


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x); derivative s * (1 + x * (1 - s))."""
    s = _sigmoid_np(a.data)
    out_data = a.data * s

    def bw(g):
        a.accumulate_grad(g * s * (1.0 + a.data * (1.0 - s)))
    return _make(out_data, (a,), bw)


def softplus(a: Tensor) -> Tensor:
    out_data = np.log1p(np.exp(-np.abs(a.data))) + np.maximum(a.data, 0.0)

    def bw(g):
        a.accumulate_grad(g * _sigmoid_np(a.data))
    return _make(out_data, (a,), bw)


# ---------------------------------------------------------------------------
# Shaping and reductions
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape

    def bw(g):
        a.accumulate_grad(g.reshape(old))
    return _make(a.data.reshape(shape), (a,), bw)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    def bw(g):
        a.accumulate_grad(np.swapaxes(g, ax1, ax2))
    return _make(np.swapaxes(a.data, ax1, ax2), (a,), bw)


def unsqueeze(a: Tensor, axis: int) -> Tensor:
    def bw(g):
        a.accumulate_grad(np.squeeze(g, axis=axis))
    return _make(np.expand_dims(a.data, axis), (a,), bw)


def getitem(a: Tensor, key) -> Tensor:
    """Basic (slice/int) indexing only; fancy indexing would need scatter-add."""
    def bw(g):
        full = np.zeros_like(a.data)
        full[key] += g
        a.accumulate_grad(full)
    return _make(a.data[key], (a,), bw)


def concatenate(tensors: list[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t.accumulate_grad(piece)
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def pad_axis(a: Tensor, axis: int, before: int, after: int) -> Tensor:
    widths = [(0, 0)] * a.data.ndim
    widths[axis] = (before, after)
    sel = [slice(None)] * a.data.ndim
    sel[axis] = slice(before, before + a.data.shape[axis])
    sel = tuple(sel)

    def bw(g):
        a.accumulate_grad(g[sel])
    return _make(np.pad(a.data, widths), (a,), bw)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bw(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(gg, a.data.shape))
    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))

    def bw(g):
        gg = g / count
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        a.accumulate_grad(np.broadcast_to(gg, a.data.shape))
    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), bw)


# ---------------------------------------------------------------------------
# Composite neural primitives
# ---------------------------------------------------------------------------

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Shift by a detached max (shift invariance makes the gradient exact)."""
    shift = constant(a.data.max(axis=axis, keepdims=True))
    e = texp(sub(a, shift))
    return div(e, e.sum(axis=axis, keepdims=True))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shift = constant(a.data.max(axis=axis, keepdims=True))
    centered = sub(a, shift)
    lse = tlog(texp(centered).sum(axis=axis, keepdims=True))
    return sub(centered, lse)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    normed = div(centered, tsqrt(add(var, Tensor(eps))))
    return add(mul(normed, gain), bias)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = constant((rng.random(x.data.shape) < keep) / keep)
    return mul(x, mask)
