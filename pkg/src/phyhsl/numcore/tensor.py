"""Dense float64 tensors with a reverse-mode gradient tape.

Every differentiable op builds an output ``Tensor`` that remembers its
parents and a backward rule returning one gradient per parent.
``Tensor.backward`` walks the resulting DAG in reverse topological order.

Storage is a numpy ``float64`` array; gradients are plain arrays too.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import NonFiniteError, ShapeError

_DEBUG = False
_GRAD_ENABLED = True


def set_debug(flag: bool) -> None:
    """Check every op output for NaN/Inf when ``flag`` is true."""
    global _DEBUG
    _DEBUG = bool(flag)


def is_debug() -> bool:
    return _DEBUG


@contextlib.contextmanager
def no_grad():
    """Evaluate ops without recording them on the tape."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "_owned_grad")
    # make ndarray <op> Tensor dispatch to the Tensor reflected operators
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("Tensor data contains NaN or Inf")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op = "leaf"
        self._owned_grad = False

    @classmethod
    def _param_leaf(cls, value: np.ndarray, grad: np.ndarray) -> "Tensor":
        # shares `value` and `grad` buffers with a ParamStore entry
        t = cls.__new__(cls)
        t.data = value
        t.grad = grad
        t.requires_grad = True
        t._parents = ()
        t._backward = None
        t.op = "param"
        t._owned_grad = True
        return t

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return swap_last(self)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.data.shape[0]

    # -- gradient accumulation / backward -------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g
        elif self._owned_grad:
            self.grad += g
        else:
            self.grad = self.grad + g

    def backward(self, grad=None) -> None:
        """Back-propagate from this tensor into every reachable leaf."""
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise ShapeError(f"seed gradient shape {grad.shape} does not match {self.shape}")
        order = _toposort(self)
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is not None and parent.requires_grad:
                    parent._accumulate(g)
            if not node._owned_grad:
                # intermediate gradients are not needed after propagation
                node.grad = None

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # method forms
    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def relu(self):
        return relu(self)


def _toposort(root: Tensor) -> list:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
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


def _result(data: np.ndarray, parents: tuple, backward: Callable, op: str) -> Tensor:
    if _DEBUG and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"op '{op}' produced NaN or Inf")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out._owned_grad = False
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = track
    out._parents = parents if track else ()
    out._backward = backward if track else None
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return _result(out, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _result(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),), "pow")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _result(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.data)
    return _result(y, (a,), lambda g: (0.5 * g / y,), "sqrt")


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _result(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


# -- linear algebra ------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _result(ad @ bd, (a, b), backward, "matmul")


def const_matmul(m, x) -> Tensor:
    """``m @ x`` for a constant (dense or scipy-sparse) matrix ``m`` and 2-D ``x``."""
    x = as_tensor(x)
    if x.ndim != 2 or m.shape[1] != x.shape[0]:
        raise ShapeError(f"const_matmul shape mismatch: {m.shape} @ {x.shape}")
    mt = m.T
    out = np.asarray(m @ x.data)
    return _result(out, (x,), lambda g: (np.asarray(mt @ g),), "const_matmul")


# -- reductions and shape ops --------------------------------------------------

def _expand_reduced(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,),
                   lambda g: (_expand_reduced(g, shape, axis, keepdims),), "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.data.size // max(np.size(out), 1)
    return _result(out, (a,),
                   lambda g: (_expand_reduced(g / count, shape, axis, keepdims),), "mean")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def swap_last(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),), "swap_last")


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        z = np.zeros(shape)
        np.add.at(z, idx, g)
        return (z,)

    return _result(np.array(a.data[idx]), (a,), backward, "getitem")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), backward, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    n = len(ts)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return _result(np.stack([t.data for t in ts], axis=axis), tuple(ts), backward, "stack")


# -- composite primitives ----------------------------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _result(y, (a,), backward, "softmax")


def cosine_rows(a, b, eps: float = 1e-12) -> Tensor:
    """Cosine similarity along the last axis.

    Rows where either vector has norm below ``eps`` get similarity 0 and
    zero gradient.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_rows shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    na = np.linalg.norm(ad, axis=-1)
    nb = np.linalg.norm(bd, axis=-1)
    ok = (na >= eps) & (nb >= eps)
    na_s = np.where(ok, na, 1.0)
    nb_s = np.where(ok, nb, 1.0)
    dot = np.sum(ad * bd, axis=-1)
    cos = np.where(ok, dot / (na_s * nb_s), 0.0)

    def backward(g):
        w = np.where(ok, g, 0.0)[..., None]
        inv = (1.0 / (na_s * nb_s))[..., None]
        c = cos[..., None]
        ga = w * (bd * inv - c * ad / (na_s ** 2)[..., None])
        gb = w * (ad * inv - c * bd / (nb_s ** 2)[..., None])
        return ga, gb

    return _result(cos, (a, b), backward, "cosine_rows")


def _selector(index: np.ndarray, n_rows: int) -> sp.csr_matrix:
    m = len(index)
    return sp.csr_matrix((np.ones(m), (index, np.arange(m))), shape=(n_rows, m))


def take_rows(a, index) -> Tensor:
    """Gather rows ``a[index]`` of a 2-D tensor."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    n = a.shape[0]

    def backward(g):
        return (np.asarray(_selector(index, n) @ g),)

    return _result(a.data[index], (a,), backward, "take_rows")


def segment_sum(a, segment, n_segments: int) -> Tensor:
    """Sum rows of a 2-D tensor into ``n_segments`` buckets given by ``segment``."""
    a = as_tensor(a)
    segment = np.asarray(segment, dtype=np.int64)
    if len(segment) != a.shape[0]:
        raise ShapeError(f"segment_sum: {len(segment)} segment ids for {a.shape[0]} rows")
    sel = _selector(segment, n_segments)
    out = np.asarray(sel @ a.data)
    return _result(out, (a,), lambda g: (g[segment],), "segment_sum")
