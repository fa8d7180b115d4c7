"""Minimal reverse-mode tensor engine on numpy float64.

Every operation records its inputs on a per-forward-pass tape; ``backward``
walks the tape once in reverse topological order and then frees it.  Only
first-order gradients are supported.  All values are float64 throughout so
finite-difference checks stay meaningful.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np


class _GradState(threading.local):
    def __init__(self):
        self.enabled = True


_state = _GradState()


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference paths).

    The flag is thread-local so parallel evaluation cannot disturb a
    training pass in another thread.
    """
    prev = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """A numpy float64 array plus the bookkeeping for reverse-mode autodiff.

    ``_parents`` is the tape edge list; it is set to None once ``backward``
    has consumed the graph, so a second backward through the same tape fails
    loudly instead of silently producing zeros.
    """

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
    def ndim(self):
        return self.data.ndim

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate gradients of this scalar root into every leaf.

        The tape reachable from the root is freed afterwards.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward requires a scalar root, got shape {self.data.shape}"
            )
        if self._parents is None:
            raise RuntimeError("tape already freed; re-run the forward pass")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            if node._parents:
                for p in node._parents:
                    if id(p) not in seen:
                        stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            fn = node._backward
            if fn is not None and node.grad is not None:
                fn(node.grad)
            if node._parents:
                # free the tape; only leaf gradients survive
                node._parents = None
                node._backward = None
                node.grad = None

    # -- operator sugar ----------------------------------------------------

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _state.enabled and any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray):
    # grads are never mutated in place, so sharing buffers with the tape is safe
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad or a._parents:
            _accum(a, _reduce_to(g, a.data.shape))
        if b.requires_grad or b._parents:
            _accum(b, _reduce_to(g, b.data.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad or a._parents:
            _accum(a, _reduce_to(g, a.data.shape))
        if b.requires_grad or b._parents:
            _accum(b, _reduce_to(-g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad or a._parents:
            _accum(a, _reduce_to(g * b.data, a.data.shape))
        if b.requires_grad or b._parents:
            _accum(b, _reduce_to(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad or a._parents:
            _accum(a, _reduce_to(g / b.data, a.data.shape))
        if b.requires_grad or b._parents:
            _accum(b, _reduce_to(-g * data / b.data, b.data.shape))

    return _make(data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, -g)

    return _make(-a.data, (a,), backward)


def texp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        _accum(a, g * data)

    return _make(data, (a,), backward)


def tlog(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ValueError("log requires strictly positive inputs")
    data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _make(data, (a,), backward)


def tsqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0.0):
        raise ValueError("sqrt requires non-negative inputs")
    data = np.sqrt(a.data)

    def backward(g):
        _accum(a, g / (2.0 * data))

    return _make(data, (a,), backward)


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0.0
    # expm1 only sees the negative side; large positives would overflow it
    data = np.where(pos, a.data, alpha * np.expm1(np.minimum(a.data, 0.0)))

    def backward(g):
        _accum(a, g * np.where(pos, 1.0, data + alpha))

    return _make(data, (a,), backward)


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0.0
    data = np.where(pos, a.data, slope * a.data)

    def backward(g):
        _accum(a, g * np.where(pos, 1.0, slope))

    return _make(data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``; rows sum to one exactly."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        _accum(a, data * (g - inner))

    return _make(data, (a,), backward)


# -- reductions ------------------------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accum(a, np.broadcast_to(gg, a.data.shape))

    return _make(np.asarray(data), (a,), backward)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[i] for i in np.atleast_1d(axis)]
    )

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accum(a, np.broadcast_to(gg, a.data.shape) / count)

    return _make(np.asarray(data), (a,), backward)


# -- shape manipulation ----------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(data, (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    data = a.data.transpose(axes)
    inv = None if axes is None else tuple(np.argsort(axes))

    def backward(g):
        _accum(a, g.transpose(inv))

    return _make(data, (a,), backward)


def take(a, key) -> Tensor:
    """Basic slicing/indexing; the gradient scatters back into place."""
    a = as_tensor(a)
    data = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] += g
        _accum(a, full)

    return _make(np.asarray(data), (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat requires at least one input")
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._parents:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accum(t, g[tuple(idx)])

    return _make(data, tuple(ts), backward)


# -- linear algebra --------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    try:
        data = np.matmul(ad, bd)
    except ValueError as err:
        raise ValueError(
            f"matmul shape mismatch: {ad.shape} @ {bd.shape}"
        ) from err

    if ad.ndim == 1 and bd.ndim == 1:

        def backward(g):
            if a.requires_grad or a._parents:
                _accum(a, g * bd)
            if b.requires_grad or b._parents:
                _accum(b, g * ad)

    elif ad.ndim == 1:

        def backward(g):
            if a.requires_grad or a._parents:
                _accum(a, np.matmul(bd, g))
            if b.requires_grad or b._parents:
                _accum(b, np.outer(ad, g))

    elif bd.ndim == 1:

        def backward(g):
            if a.requires_grad or a._parents:
                _accum(a, np.outer(g, bd))
            if b.requires_grad or b._parents:
                _accum(b, np.matmul(ad.swapaxes(-1, -2), g))

    else:

        def backward(g):
            if a.requires_grad or a._parents:
                _accum(a, _reduce_to(np.matmul(g, bd.swapaxes(-1, -2)), ad.shape))
            if b.requires_grad or b._parents:
                _accum(b, _reduce_to(np.matmul(ad.swapaxes(-1, -2), g), bd.shape))

    return _make(data, (a, b), backward)


def outer(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ValueError(
            f"outer requires 1-D operands, got {a.data.shape} and {b.data.shape}"
        )
    data = np.outer(a.data, b.data)

    def backward(g):
        if a.requires_grad or a._parents:
            _accum(a, np.matmul(g, b.data))
        if b.requires_grad or b._parents:
            _accum(b, np.matmul(a.data, g))

    return _make(data, (a, b), backward)


def conv_transpose1d(x, w, stride: int = 2, padding: int = 0) -> Tensor:
    """1-D transposed convolution.

    ``x`` is [C_in, L], ``w`` is [C_in, C_out, k]; output is
    [C_out, (L-1)*stride + k - 2*padding].  Adjoint of the strided
    convolution with the same weights.
    """
    x, w = as_tensor(x), as_tensor(w)
    xd, wd = x.data, w.data
    if xd.ndim != 2 or wd.ndim != 3 or xd.shape[0] != wd.shape[0]:
        raise ValueError(
            f"conv_transpose1d shape mismatch: input {xd.shape}, weight {wd.shape}"
        )
    if stride < 1 or padding < 0:
        raise ValueError(f"bad stride/padding: {stride}/{padding}")
    cin, L = xd.shape
    _, cout, k = wd.shape
    lfull = (L - 1) * stride + k
    lout = lfull - 2 * padding
    if lout < 1:
        raise ValueError(f"output length {lout} < 1 for input {xd.shape}")
    full = np.zeros((cout, lfull))
    for m in range(k):
        full[:, m : m + stride * L : stride] += np.matmul(wd[:, :, m].T, xd)
    data = full[:, padding : lfull - padding] if padding else full

    def backward(g):
        gf = g
        if padding:
            gf = np.zeros((cout, lfull))
            gf[:, padding : lfull - padding] = g
        if x.requires_grad or x._parents:
            gx = np.zeros_like(xd)
            for m in range(k):
                gx += np.matmul(wd[:, :, m], gf[:, m : m + stride * L : stride])
            _accum(x, gx)
        if w.requires_grad or w._parents:
            gw = np.empty_like(wd)
            for m in range(k):
                gw[:, :, m] = np.matmul(xd, gf[:, m : m + stride * L : stride].T)
            _accum(w, gw)

    return _make(data, (x, w), backward)


# -- generic dispatch ------------------------------------------------------

OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "matmul": matmul,
    "outer": outer,
    "concat": concat,
    "slice": take,
    "reshape": reshape,
    "transpose": transpose,
    "exp": texp,
    "log": tlog,
    "sqrt": tsqrt,
    "mean": tmean,
    "sum": tsum,
    "elu": elu,
    "leaky_relu": leaky_relu,
    "softmax": softmax,
    "conv_transpose1d": conv_transpose1d,
}


def op_forward(kind: str, inputs, attrs: dict | None = None) -> Tensor:
    """Apply the named op to ``inputs`` with keyword ``attrs``."""
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    attrs = attrs or {}
    if kind in ("concat",):
        return fn(inputs, **attrs)
    return fn(*inputs, **attrs)
