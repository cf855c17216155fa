"""Array-valued reverse-mode autodiff, just big enough for the networks here.

A Tensor wraps a numpy array and remembers how it was made; backward()
walks the graph in reverse topological order and accumulates gradients
into every reachable node's .grad. There is no dtype policy: whatever
float type flows in is what forward and backward compute in, which lets
the gradient-check harness rerun the same graphs in float64.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch

# When set, every op asserts its output is finite. Cheap insurance for
# tests; off by default to keep training loops lean.
CHECK_FINITE = False


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=()):
        self.data = np.asarray(data)
        if CHECK_FINITE and not np.all(np.isfinite(self.data)):
            raise FloatingPointError("non-finite values in forward pass")
        self.grad = None
        self._parents = parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def backward(self):
        """Accumulate d(self)/d(node) into .grad for every graph node.

        self must be a scalar (size-1) tensor.
        """
        if self.data.size != 1:
            raise ShapeMismatch("backward() starts from a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data, (a, b))

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    out._backward = backward
    return out


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data - b.data, (a, b))

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data * b.data, (a, b))

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = backward
    return out


def matmul(a, w) -> Tensor:
    """a: (..., n, k) @ w: (k, j). Weights are always plain 2-D."""
    a, w = _wrap(a), _wrap(w)
    if w.data.ndim != 2 or a.data.shape[-1] != w.data.shape[0]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {w.data.shape}")
    out = Tensor(a.data @ w.data, (a, w))
    k, j = w.data.shape

    def backward(g):
        _accum(a, g @ w.data.T)
        _accum(w, a.data.reshape(-1, k).T @ g.reshape(-1, j))

    out._backward = backward
    return out


def relu(x) -> Tensor:
    x = _wrap(x)
    out = Tensor(np.maximum(x.data, 0), (x,))

    def backward(g):
        _accum(x, g * (x.data > 0))

    out._backward = backward
    return out


def abs_(x) -> Tensor:
    x = _wrap(x)
    out = Tensor(np.abs(x.data), (x,))

    def backward(g):
        _accum(x, g * np.sign(x.data))

    out._backward = backward
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis), tuple(ts))
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(ts, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    out._backward = backward
    return out


def gather(x, indices) -> Tensor:
    """Row gather: x (n, c) indexed by an integer array of any shape."""
    x = _wrap(x)
    if x.data.ndim != 2:
        raise ShapeMismatch(f"gather expects a 2-D source, got {x.data.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    out = Tensor(x.data[idx], (x,))
    c = x.data.shape[1]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx.reshape(-1), g.reshape(-1, c))
        _accum(x, gx)

    out._backward = backward
    return out


def max_axis(x, axis: int) -> Tensor:
    """Max reduction; gradient flows to the first argmax along the axis."""
    x = _wrap(x)
    out = Tensor(x.data.max(axis=axis), (x,))
    am = np.expand_dims(np.argmax(x.data, axis=axis), axis)

    def backward(g):
        contrib = np.zeros_like(x.data)
        np.put_along_axis(contrib, am, np.expand_dims(g, axis), axis)
        _accum(x, contrib)

    out._backward = backward
    return out


def sum_axis(x, axis: int) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.data.sum(axis=axis), (x,))

    def backward(g):
        _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy())

    out._backward = backward
    return out


def mean_axis(x, axis: int) -> Tensor:
    x = _wrap(x)
    n = x.data.shape[axis]
    out = Tensor(x.data.mean(axis=axis), (x,))

    def backward(g):
        _accum(x, np.broadcast_to(np.expand_dims(g / n, axis), x.data.shape).copy())

    out._backward = backward
    return out


def mean_all(x) -> Tensor:
    x = _wrap(x)
    out = Tensor(np.asarray(x.data.mean()), (x,))

    def backward(g):
        _accum(x, np.full_like(x.data, g / x.data.size))

    out._backward = backward
    return out


def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.data.reshape(shape), (x,))

    def backward(g):
        _accum(x, g.reshape(x.data.shape))

    out._backward = backward
    return out
