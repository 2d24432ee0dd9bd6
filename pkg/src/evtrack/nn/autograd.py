"""Reverse-mode autodiff over numpy arrays.

Tensors record their producing op while grad mode is on; backward() walks
the recorded graph in reverse topological order. Ops preserve the input
dtype, so running the same graph in float64 supports finite-difference
checking.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ParameterError, StateError

_grad_enabled = True


class no_grad:
    """Context manager that suspends graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self, grad=None):
        """Accumulate gradients into every requires_grad tensor in the graph."""
        if not self.requires_grad:
            raise StateError("backward() on a tensor with no recorded graph")
        if grad is None:
            if self.data.size != 1:
                raise StateError("backward() without a gradient needs a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)

        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))

        pending = {id(self): grad}
        for node in reversed(topo):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._bwd is None:
                continue
            for p, pg in zip(node._parents, node._bwd(g)):
                if pg is None or not p.requires_grad:
                    continue
                pg = pg.astype(p.data.dtype, copy=False)
                key = id(p)
                pending[key] = pg if key not in pending else pending[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=dtype)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float64)
    return Tensor(arr)


def _binary(a, b):
    """Pair two operands; bare python scalars adopt the tensor's dtype so
    float32 graphs are not silently promoted."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor) and np.ndim(b) == 0:
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor) and np.ndim(a) == 0:
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    return as_tensor(a), as_tensor(b)


def _node(data, parents, bwd):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


def _unbroadcast(g, shape):
    """Sum a broadcasted gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = _binary(a, b)
    out = a.data + b.data
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b):
    a, b = _binary(a, b)
    out = a.data - b.data
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)),
    )


def mul(a, b):
    a, b = _binary(a, b)
    out = a.data * b.data
    return _node(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b):
    a, b = _binary(a, b)
    out = a.data / b.data
    return _node(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def matmul(a, b):
    """a @ b with a possibly batched (..., n, m) and b a 2-d weight (m, p)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.data.ndim != 2:
        raise ParameterError("matmul expects a 2-d right operand")
    out = a.data @ b.data

    def bwd(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.data.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _node(out, (a, b), bwd)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _node(x.data * mask, (x,), lambda g: (g * mask,))


def reshape(x, shape):
    x = as_tensor(x)
    old = x.data.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes):
    x = as_tensor(x)
    inverse = np.argsort(axes)
    return _node(
        np.ascontiguousarray(x.data.transpose(axes)),
        (x,),
        lambda g: (g.transpose(inverse),),
    )


def concat(parts, axis):
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([p.data for p in parts], axis=axis)
    return _node(out, tuple(parts), lambda g: tuple(np.split(g, splits, axis=axis)))


def slice_axis(x, axis, start, stop):
    x = as_tensor(x)
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def bwd(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _node(x.data[index], (x,), bwd)


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False),)

    return _node(out, (x,), bwd)


def tmean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= x.data.shape[ax]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def _pair(v):
    return v if isinstance(v, tuple) else (v, v)


def _conv_geometry(h, w, kh, kw, stride, padding):
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    out_h = (h + 2 * ph - kh) // sh + 1
    out_w = (w + 2 * pw - kw) // sw + 1
    if out_h < 1 or out_w < 1:
        raise ParameterError(f"conv output would be empty for input {h}x{w}")
    return sh, sw, ph, pw, out_h, out_w


def conv2d(x, w, b=None, stride=1, padding=0):
    """Cross-correlation of NCHW input with OIHW weights."""
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(b) if b is not None else None
    n, c, h, wd = x.data.shape
    o, ci, kh, kw = w.data.shape
    if ci != c:
        raise ParameterError(f"conv2d channel mismatch: input {c}, weight {ci}")
    sh, sw, ph, pw, out_h, out_w = _conv_geometry(h, wd, kh, kw, stride, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = kernels.im2col(xp, kh, kw, sh, sw, out_h, out_w).reshape(
        n, c * kh * kw, out_h * out_w
    )
    w2 = w.data.reshape(o, c * kh * kw)
    out = np.matmul(w2, cols)
    if b is not None:
        out = out + b.data[:, None]
    out = out.reshape(n, o, out_h, out_w)

    def bwd(g):
        g2 = g.reshape(n, o, out_h * out_w)
        gw = np.einsum("nop,nkp->ok", g2, cols).reshape(w.data.shape)
        gcols = np.matmul(w2.T, g2).reshape(n, c, kh * kw, out_h * out_w)
        gxp = np.zeros_like(xp)
        kernels.col2im_add(gcols, gxp, kh, kw, sh, sw, out_h, out_w)
        gx = gxp[:, :, ph : ph + h, pw : pw + wd]
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=(0, 2))

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, bwd)


def depthwise_conv2d(x, w, b=None, stride=1, padding=0):
    """Per-channel convolution; weights shaped (C, 1, kh, kw) or (C, kh, kw)."""
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(b) if b is not None else None
    n, c, h, wd = x.data.shape
    wdata = w.data.reshape(c, -1)
    kh, kw = w.data.shape[-2], w.data.shape[-1]
    sh, sw, ph, pw, out_h, out_w = _conv_geometry(h, wd, kh, kw, stride, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = kernels.im2col(xp, kh, kw, sh, sw, out_h, out_w)
    out = np.einsum("nckp,ck->ncp", cols, wdata)
    if b is not None:
        out = out + b.data[:, None]
    out = out.reshape(n, c, out_h, out_w)

    def bwd(g):
        g2 = g.reshape(n, c, out_h * out_w)
        gw = np.einsum("ncp,nckp->ck", g2, cols).reshape(w.data.shape)
        gcols = np.einsum("ncp,ck->nckp", g2, wdata)
        gxp = np.zeros_like(xp)
        kernels.col2im_add(np.ascontiguousarray(gcols), gxp, kh, kw, sh, sw, out_h, out_w)
        gx = gxp[:, :, ph : ph + h, pw : pw + wd]
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=(0, 2))

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, bwd)


def global_avg_pool(x):
    """NCHW -> NC mean over the spatial grid."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ParameterError("global_avg_pool expects NCHW input")
    return tmean(x, axis=(2, 3))


def linear(x, w, b=None):
    """x @ w (+ b); w is (in, out)."""
    out = matmul(x, w)
    return out if b is None else add(out, b)


def taylor_softmax(x, axis=-1, order=2):
    """Softmax with exp replaced by its truncated Taylor polynomial.

    Even order >= 2 is required: even truncations of exp are strictly
    positive on the real line, which keeps the normalization safe.
    """
    if order < 2 or order % 2 != 0:
        raise ParameterError(
            f"taylor softmax order must be even and >= 2, got {order}"
        )
    x = as_tensor(x)
    poly = as_tensor(np.ones_like(x.data))
    for k in range(order, 0, -1):
        poly = add(mul(mul(x, poly), 1.0 / k), 1.0)
    return div(poly, tsum(poly, axis=axis, keepdims=True))
