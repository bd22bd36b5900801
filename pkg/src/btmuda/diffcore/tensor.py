"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ndarray and remembers how it was produced; calling
:func:`backward` on a scalar result walks the recorded graph in reverse
topological order and accumulates vector-Jacobian products into ``.grad``
slots.  The graph is rebuilt on every forward pass (define-by-run), so the
same functions serve training, inference, and finite-difference checking.

All primitives keep the dtype of their inputs (float32 for training,
float64 for gradient checking) and raise :class:`NumericError` as soon as a
non-finite value appears, naming the offending operation.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from ..errors import ContractViolation, NumericError

_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))

_grad_enabled = True


@contextmanager
def no_grad():
    """Skip graph recording inside the block (inference-only forward passes)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """An ndarray plus an optional gradient slot and graph bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "name")

    def __init__(self, data, requires_grad=False, parents=(), name="leaf"):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if not np.isfinite(arr).all():
            raise NumericError(f"non-finite values produced by '{name}'")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        # parents: tuple of (Tensor, vjp) where vjp maps the output gradient
        # to this parent's gradient contribution.
        self._parents = tuple(parents)
        self.name = name

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
        return float(self.data)

    def detach(self):
        """A new leaf sharing this tensor's values; gradients stop here."""
        return Tensor(self.data, requires_grad=False, name="detach")

    def zero_grad(self):
        self.grad = None

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if len(axes) > 1 else axes[0])

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, op={self.name})"


def tensor(data, dtype=np.float32, requires_grad=False):
    """Build a leaf tensor with an explicit dtype."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def _coerce(value, dtype):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype), name="const")


def _check_dtypes(name, *tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ContractViolation(f"{name}: mixed dtypes {sorted(d.name for d in dtypes)}")


def _result(name, data, parent_specs):
    """Assemble an op result, keeping only parents that need gradients."""
    if _grad_enabled:
        live = tuple((p, fn) for p, fn in parent_specs if p.requires_grad)
    else:
        live = ()
    return Tensor(data, requires_grad=bool(live), parents=live, name=name)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(root):
    """Accumulate d(root)/d(leaf) into every reachable ``.grad`` slot.

    ``root`` must be a scalar (size-1) tensor that requires gradients.
    """
    if not isinstance(root, Tensor):
        raise ContractViolation("backward: root is not a Tensor")
    if root.data.size != 1:
        raise ContractViolation(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        raise ContractViolation("backward: root does not require gradients")

    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node._parents:
            contrib = vjp(g)
            if parent.grad is None:
                parent.grad = contrib.astype(parent.dtype, copy=True)
            else:
                parent.grad = parent.grad + contrib


# -- elementwise primitives -----------------------------------------------


def add(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b.dtype)
    b = _coerce(b, a.dtype)
    _check_dtypes("add", a, b)
    return _result("add", a.data + b.data, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(g, b.shape)),
    ])


def sub(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b.dtype)
    b = _coerce(b, a.dtype)
    _check_dtypes("sub", a, b)
    return _result("sub", a.data - b.data, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(-g, b.shape)),
    ])


def mul(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b.dtype)
    b = _coerce(b, a.dtype)
    _check_dtypes("mul", a, b)
    return _result("mul", a.data * b.data, [
        (a, lambda g: _unbroadcast(g * b.data, a.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.shape)),
    ])


def neg(a):
    return _result("neg", -a.data, [(a, lambda g: -g)])


def exp(a):
    out = np.exp(a.data)
    return _result("exp", out, [(a, lambda g: g * out)])


def log(a):
    return _result("log", np.log(a.data), [(a, lambda g: g / a.data)])


def absolute(a):
    return _result("abs", np.abs(a.data), [(a, lambda g: g * np.sign(a.data))])


def relu(a):
    mask = a.data > 0
    return _result("relu", np.where(mask, a.data, 0), [(a, lambda g: g * mask)])


def gelu(a):
    """Exact Gaussian-error-linear unit, 0.5*x*(1+erf(x/sqrt(2)))."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = (x * cdf).astype(a.dtype)

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return g * (cdf + x * pdf)

    return _result("gelu", out, [(a, vjp)])


def maximum_scalar(a, floor):
    """Elementwise max(a, floor); gradient flows only where a > floor."""
    mask = a.data > floor
    out = np.where(mask, a.data, np.asarray(floor, dtype=a.dtype))
    return _result("maximum_scalar", out, [(a, lambda g: g * mask)])


# -- shape primitives ------------------------------------------------------


def reshape(a, shape):
    return _result("reshape", a.data.reshape(shape), [(a, lambda g: g.reshape(a.shape))])


def transpose(a, axes):
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result("transpose", a.data.transpose(axes),
                   [(a, lambda g: g.transpose(inverse))])


def take(a, idx):
    """Indexing with gradient scatter-add (repeated indices accumulate)."""

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return full

    return _result("take", a.data[idx], [(a, vjp)])


def concat(tensors, axis):
    tensors = list(tensors)
    _check_dtypes("concat", *tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        sl = [slice(None)] * tensors[i].ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return _result("concat", data, [(t, make_vjp(i)) for i, t in enumerate(tensors)])


# -- reductions ------------------------------------------------------------


def _restore_axes(grad, axis, shape, keepdims):
    if keepdims or axis is None:
        return np.broadcast_to(grad, shape) if axis is None and not keepdims else grad
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax % len(shape) for ax in axes)
    for ax in sorted(axes):
        grad = np.expand_dims(grad, ax)
    return grad


def reduce_sum(a, axis=None, keepdims=False):
    def vjp(g):
        g = _restore_axes(g, axis, a.shape, keepdims)
        return np.broadcast_to(g, a.shape).astype(a.dtype)

    return _result("sum", a.data.sum(axis=axis, keepdims=keepdims), [(a, vjp)])


def reduce_mean(a, axis=None, keepdims=False):
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))

    def vjp(g):
        g = _restore_axes(g, axis, a.shape, keepdims)
        return (np.broadcast_to(g, a.shape) / count).astype(a.dtype)

    return _result("mean", a.data.mean(axis=axis, keepdims=keepdims), [(a, vjp)])


# -- linear algebra --------------------------------------------------------


def matmul(a, b):
    _check_dtypes("matmul", a, b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ContractViolation(f"matmul: inner dims {a.shape} @ {b.shape}")

    def vjp_a(g):
        return _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)

    def vjp_b(g):
        return _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)

    return _result("matmul", np.matmul(a.data, b.data), [(a, vjp_a), (b, vjp_b)])


# -- normalization and attention helpers -----------------------------------


def softmax(a, axis=-1):
    """Numerically stable softmax along `axis` (max-subtracted)."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return out * (g - inner)

    return _result("softmax", out, [(a, vjp)])


def log_softmax(a, axis=-1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def vjp(g):
        return g - probs * g.sum(axis=axis, keepdims=True)

    return _result("log_softmax", out, [(a, vjp)])


def layernorm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis to zero mean / unit variance, then affine.

    `gain` and `bias` broadcast against the normalized input (typically 1-D of
    the last-axis extent).  Uses the population variance.
    """
    if eps <= 0:
        raise ContractViolation("layernorm: eps must be positive")
    _check_dtypes("layernorm", x, gain, bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def vjp_x(g):
        gh = g * gain.data
        term = gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
        return (inv * term).astype(x.dtype)

    return _result("layernorm", out.astype(x.dtype), [
        (x, vjp_x),
        (gain, lambda g: _unbroadcast(g * xhat, gain.shape)),
        (bias, lambda g: _unbroadcast(g, bias.shape)),
    ])


# -- convolution -----------------------------------------------------------


def conv2d(x, w, stride=1, padding=0):
    """2-D convolution, channels-last: x (B,H,W,Cin), w (kh,kw,Cin,Cout)."""
    _check_dtypes("conv2d", x, w)
    if x.ndim != 4 or w.ndim != 4:
        raise ContractViolation(f"conv2d: need 4-D x and w, got {x.shape}, {w.shape}")
    if x.shape[3] != w.shape[2]:
        raise ContractViolation(f"conv2d: channel mismatch {x.shape} vs {w.shape}")
    batch, height, width, _ = x.shape
    kh, kw, cin, cout = w.shape
    out_h = (height + 2 * padding - kh) // stride + 1
    out_w = (width + 2 * padding - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ContractViolation("conv2d: output would be empty")

    if padding:
        xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    else:
        xp = x.data
    out = np.zeros((batch, out_h, out_w, cout), dtype=x.dtype)
    for di in range(kh):
        for dj in range(kw):
            xs = xp[:, di:di + stride * out_h:stride, dj:dj + stride * out_w:stride, :]
            out += np.matmul(xs.reshape(-1, cin), w.data[di, dj]).reshape(batch, out_h, out_w, cout)

    def vjp_x(g):
        gxp = np.zeros_like(xp)
        for di in range(kh):
            for dj in range(kw):
                patch = np.matmul(g.reshape(-1, cout), w.data[di, dj].T)
                gxp[:, di:di + stride * out_h:stride, dj:dj + stride * out_w:stride, :] += \
                    patch.reshape(batch, out_h, out_w, cin)
        if padding:
            gxp = gxp[:, padding:padding + height, padding:padding + width, :]
        return gxp

    def vjp_w(g):
        gw = np.zeros_like(w.data)
        gflat = g.reshape(-1, cout)
        for di in range(kh):
            for dj in range(kw):
                xs = xp[:, di:di + stride * out_h:stride, dj:dj + stride * out_w:stride, :]
                gw[di, dj] = np.matmul(xs.reshape(-1, cin).T, gflat)
        return gw

    return _result("conv2d", out, [(x, vjp_x), (w, vjp_w)])


# -- losses as primitives --------------------------------------------------


def cross_entropy(logits, onehot):
    """Per-sample cross-entropy between logits and constant one-hot targets.

    Returns a vector of length batch; targets are plain arrays and receive no
    gradient.  Natural logarithm, fused with a stable log-softmax.
    """
    y = np.asarray(onehot, dtype=logits.dtype)
    if y.shape != logits.shape:
        raise ContractViolation(f"cross_entropy: targets {y.shape} vs logits {logits.shape}")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    out = -(y * logp).sum(axis=-1)
    probs = np.exp(logp)

    def vjp(g):
        return g[..., None] * (probs - y)

    return _result("cross_entropy", out, [(logits, vjp)])
