"""A small reverse-mode autodiff engine over float64 numpy arrays.

Only the operators the hedging networks need are provided. Every operator
accepts an optional leading batch axis, so a whole minibatch flows through
one graph instead of one graph per sample.

    W = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    loss = mean(square(activation(affine(x, W, b), "tanh")))
    backward(loss)   # W.grad, b.grad now hold d(loss)/d(.)

Gradients accumulate across ``backward`` calls until ``zero_grad`` is used.
"""
import numpy as np
from scipy.special import ndtr

from . import kernels

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn, op):
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward_fn, op)
    return Tensor(data, op=op)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---- elementwise ---------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _node(out, (a, b), back, "add")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _node(out, (a, b), back, "mul")


def neg(a):
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def square(a):
    a = as_tensor(a)
    return _node(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def activation(x, kind):
    """Elementwise ``gelu`` (exact x*N(x)), ``sigmoid`` or ``tanh``."""
    x = as_tensor(x)
    z = x.data
    if kind == "sigmoid":
        y = 0.5 * (1.0 + np.tanh(0.5 * z))  # stable for large |z|
        dy = y * (1.0 - y)
    elif kind == "tanh":
        y = np.tanh(z)
        dy = 1.0 - y * y
    elif kind == "gelu":
        cdf = ndtr(z)
        y = z * cdf
        dy = cdf + z * np.exp(-0.5 * z * z) * _INV_SQRT_2PI
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return _node(y, (x,), lambda g: (g * dy,), kind)


def sigmoid(x):
    return activation(x, "sigmoid")


def tanh(x):
    return activation(x, "tanh")


def gelu(x):
    return activation(x, "gelu")


# ---- reductions and reshapes ---------------------------------------------

def sum(x):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    return _node(np.sum(x.data), (x,), lambda g: (np.full_like(x.data, g),), "sum")


def mean(x):
    x = as_tensor(x)
    n = x.size
    return _node(np.mean(x.data), (x,), lambda g: (np.full_like(x.data, g / n),), "mean")


def reshape(x, shape):
    x = as_tensor(x)
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


# ---- layers --------------------------------------------------------------

def affine(x, W, b):
    """``x @ W.T + b`` for ``x`` of shape (n_in,) or (batch, n_in)."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if W.data.ndim != 2 or x.data.ndim not in (1, 2) or x.shape[-1] != W.shape[1] \
            or b.shape != (W.shape[0],):
        raise ShapeError(f"affine: x{x.shape} W{W.shape} b{b.shape} do not agree")
    out = x.data @ W.data.T + b.data

    def back(g):
        if x.data.ndim == 1:
            gW = np.outer(g, x.data)
            gb = g
        else:
            gW = g.T @ x.data
            gb = g.sum(axis=0)
        return g @ W.data, gW, gb
    return _node(out, (x, W, b), back, "affine")


def softmax(x):
    """Softmax over the last axis, max-shifted."""
    x = as_tensor(x)
    if x.data.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError(f"softmax needs at least one element, got shape {x.shape}")
    e = np.exp(x.data - np.max(x.data, axis=-1, keepdims=True))
    y = e / np.sum(e, axis=-1, keepdims=True)

    def back(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)
    return _node(y, (x,), back, "softmax")


def dilated_conv1d(x, h, dilation=1):
    """Causal dilated convolution, ``out[s] = sum_i h[i] * x[s - dilation*i]``.

    Positions before the start of the sequence read zero, so the output has
    the input's length.
    """
    x, h = as_tensor(x), as_tensor(h)
    if h.data.ndim != 1 or h.size < 1 or x.data.ndim not in (1, 2):
        raise ShapeError(f"dilated_conv1d: x{x.shape} h{h.shape}")
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    x2 = np.ascontiguousarray(np.atleast_2d(x.data))
    hk = np.ascontiguousarray(h.data)
    y = kernels.dilated_conv1d_forward(x2, hk, dilation)

    def back(g):
        gx, gh = kernels.dilated_conv1d_backward(
            x2, hk, dilation, np.ascontiguousarray(np.atleast_2d(g)))
        return gx.reshape(x.shape), gh
    return _node(y.reshape(x.shape), (x, h), back, "dilated_conv1d")


def recurrent_cell(x_t, h_prev, W_xh, W_hh, b_h):
    """One vanilla RNN step, ``tanh(W_xh x_t + W_hh h_prev + b_h)``."""
    x_t, h_prev = as_tensor(x_t), as_tensor(h_prev)
    W_xh, W_hh, b_h = as_tensor(W_xh), as_tensor(W_hh), as_tensor(b_h)
    H = W_hh.shape[0]
    if (W_hh.shape != (H, H) or W_xh.data.ndim != 2 or W_xh.shape[0] != H
            or x_t.shape[-1] != W_xh.shape[1] or h_prev.shape[-1] != H
            or b_h.shape != (H,) or x_t.data.ndim != h_prev.data.ndim):
        raise ShapeError(f"recurrent_cell: x{x_t.shape} h{h_prev.shape} W_xh{W_xh.shape} "
                         f"W_hh{W_hh.shape} b_h{b_h.shape} do not agree")
    y = np.tanh(x_t.data @ W_xh.data.T + h_prev.data @ W_hh.data.T + b_h.data)

    def back(g):
        gpre = g * (1.0 - y * y)
        if x_t.data.ndim == 1:
            gWx, gWh, gb = np.outer(gpre, x_t.data), np.outer(gpre, h_prev.data), gpre
        else:
            gWx, gWh, gb = gpre.T @ x_t.data, gpre.T @ h_prev.data, gpre.sum(axis=0)
        return gpre @ W_xh.data, gpre @ W_hh.data, gWx, gWh, gb
    return _node(y, (x_t, h_prev, W_xh, W_hh, b_h), back, "recurrent_cell")


# ---- backward ------------------------------------------------------------

class Tape:
    """Topologically ordered record of the graph feeding one output."""

    def __init__(self, output):
        self.output = output
        self.nodes = []
        seen = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))

    def backward(self):
        grads = {id(self.output): np.ones_like(self.output.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad = node.grad + g
            if node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if parent.requires_grad and pg is not None:
                    key = id(parent)
                    grads[key] = grads[key] + pg if key in grads else pg


def backward(loss):
    if not isinstance(loss, Tensor) or loss.data.ndim != 0:
        shape = loss.shape if isinstance(loss, Tensor) else type(loss).__name__
        raise ValueError(f"backward needs a scalar Tensor loss, got {shape}")
    if not loss.requires_grad:
        return
    Tape(loss).backward()


def zero_grad(tensors):
    for t in tensors:
        t.zero_grad()


# ---- finite-difference checking ------------------------------------------

def numerical_grad(f, tensors, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. each tensor's data."""
    out = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat, gflat = t.data.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        out.append(g)
    return out


def gradcheck(f, tensors, h=1e-5, rtol=1e-4, atol=1e-7):
    """Return the worst (abs error, allowed) pair and whether all entries pass.

    An entry passes when ``|analytic - numeric| <= max(rtol * max(|a|, |n|), atol)``.
    """
    zero_grad(tensors)
    backward(f())
    analytic = [t.grad.copy() for t in tensors]
    numeric = numerical_grad(f, tensors, h)
    ok, worst = True, 0.0
    for a, n in zip(analytic, numeric):
        allowed = np.maximum(rtol * np.maximum(np.abs(a), np.abs(n)), atol)
        err = np.abs(a - n)
        ok &= bool(np.all(err <= allowed))
        worst = max(worst, float(np.max(err / allowed)) if err.size else 0.0)
    return ok, worst
