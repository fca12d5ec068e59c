"""Reverse-mode automatic differentiation on dense numpy arrays.

A Tensor wraps a float array; every primitive op records its parents and a
vector-Jacobian closure on the tensor it creates, so the recorded graph is the
tape. ``backward()`` on a scalar walks the tape once in reverse topological
order and accumulates gradients into ``.grad`` (plain numpy arrays).

Arrays are float32 by default; float64 Tensors are supported so test oracles
can run finite differences at full precision. Ops never mutate their inputs.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import kernels

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation / sampling paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class DomainError(ValueError):
    """Raised when an op is applied outside its mathematical domain."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._vjp = None

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

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}{tag})"

    # -- operators ----------------------------------------------------------
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
        return negate(self)

    def __pow__(self, e):
        return pow_(self, e)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    # -- backward -----------------------------------------------------------
    def backward(self):
        """Accumulate d(self)/d(leaf) into .grad for every reachable leaf."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g


def as_tensor(x, dtype=None):
    """Wrap x in a constant Tensor (no-op when already a Tensor)."""
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(DEFAULT_DTYPE)
    return Tensor(arr)


def _result(data, parents, vjp):
    """Create the output tensor, recording the tape node when grads are live."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._vjp is not None for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(g, shape):
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _coerce(a, b):
    """Tensor-wrap both operands; scalars adopt the tensor operand's dtype,
    mixed float32/float64 tensors promote to float64 (test-oracle mode)."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = as_tensor(b, dtype=a.dtype)
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = as_tensor(a, dtype=b.dtype)
    else:
        a, b = as_tensor(a), as_tensor(b)
    if a.dtype != b.dtype:
        if a.dtype == np.float64:
            b = cast(b, np.float64)
        else:
            a = cast(a, np.float64)
    return a, b


# -- elementwise primitives ---------------------------------------------------

def add(a, b):
    a, b = _coerce(a, b)
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _coerce(a, b)
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _coerce(a, b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = _coerce(a, b)
    if np.any(b.data == 0):
        raise DomainError("div: zero divisor")
    return _result(a.data / b.data, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def negate(a):
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,))


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return _result(out_data, (a,), lambda g: (g * out_data,))


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log: non-positive argument")
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def pow_(a, b):
    """a ** b with gradients to both; fractional b requires a > 0."""
    a, b = _coerce(a, b)
    frac = np.any(b.data != np.round(b.data))
    if frac and np.any(a.data < 0):
        raise DomainError("pow: negative base with fractional exponent")
    if np.any(b.data < 0) and np.any(a.data == 0):
        raise DomainError("pow: zero base with negative exponent")
    out_data = np.power(a.data, b.data)

    def vjp(g):
        ga = _unbroadcast(g * b.data * np.power(a.data, b.data - 1), a.shape)
        if b.requires_grad or b._vjp is not None:
            # d/db a^b = a^b log a; only reachable for positive bases
            gb = _unbroadcast(g * out_data * np.log(a.data), b.shape)
        else:
            gb = None
        return ga, gb

    return _result(out_data, (a, b), vjp)


def tanh(a):
    a = as_tensor(a)
    out_data = np.tanh(a.data)
    return _result(out_data, (a,), lambda g: (g * (1 - out_data * out_data),))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0), (a,), lambda g: (g * mask,))


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt: negative argument")
    out_data = np.sqrt(a.data)
    return _result(out_data, (a,), lambda g: (g * (0.5 / out_data),))


def softplus(a):
    """log(1 + exp(a)), computed stably; gradient is sigmoid(a)."""
    a = as_tensor(a)
    out_data = np.log1p(np.exp(-np.abs(a.data))) + np.maximum(a.data, 0)
    sig = 1 / (1 + np.exp(-a.data))
    return _result(out_data, (a,), lambda g: (g * sig,))


def cast(a, dtype):
    a = as_tensor(a)
    src = a.dtype
    return _result(a.data.astype(dtype), (a,), lambda g: (g.astype(src),))


# -- shape / reduction primitives ---------------------------------------------

def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape),)

    return _result(np.asarray(out_data, dtype=a.dtype), (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes):
    a = as_tensor(a)
    inv = np.argsort(axes)
    return _result(np.transpose(a.data, axes), (a,),
                   lambda g: (np.transpose(g, inv),))


def take(a, idx):
    """Slicing/indexing; gradient scatters back into a zero tensor."""
    a = as_tensor(a)
    out_data = a.data[idx]
    basic = not isinstance(idx, np.ndarray) and not (
        isinstance(idx, tuple) and any(isinstance(i, np.ndarray) for i in idx))

    def vjp(g):
        ga = np.zeros_like(a.data)
        if basic:  # basic slices never alias, plain assignment suffices
            ga[idx] = g
        else:
            np.add.at(ga, idx, g)
        return (ga,)

    return _result(out_data, (a,), vjp)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.array_split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), vjp)


def matmul(a, b):
    a, b = _coerce(a, b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-D tensors")
    return _result(a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


# -- network primitives ---------------------------------------------------------

def dense(x, w, b=None):
    """y = w . x + b for x [n] or [B,n], w [m,n], b [m]."""
    x = as_tensor(x)
    squeeze = x.ndim == 1
    xm = reshape(x, (1, -1)) if squeeze else x
    if xm.shape[1] != as_tensor(w).shape[1]:
        raise ValueError(f"dense: got {xm.shape[1]} features, weight expects "
                         f"{as_tensor(w).shape[1]}")
    y = matmul(xm, transpose(as_tensor(w), (1, 0)))
    if b is not None:
        y = add(y, b)
    return reshape(y, (-1,)) if squeeze else y


def conv2d(x, w, b=None):
    """Same-padded conv of x [B,Cin,H,W] (or [Cin,H,W]) with w [Cout,Cin,kh,kw]."""
    x, w = _coerce(x, w)
    squeeze = x.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError("conv2d expects NCHW input and OIHW weights")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"conv2d: input has {x.shape[1]} channels, "
                         f"weight expects {w.shape[1]}")
    if w.shape[2] % 2 == 0 or w.shape[3] % 2 == 0:
        raise ValueError("conv2d: kernel sizes must be odd for same padding")
    kh, kw = w.shape[2], w.shape[3]
    out_data, _ = kernels.conv2d_forward(x.data, w.data)

    # The im2col context is deliberately not kept for backward: holding one
    # per conv node pins O(B*H*W*Cin*k*k) floats for the graph's lifetime.
    def vjp(g):
        gx = kernels.conv2d_grad_input(g, w.data)
        gw = kernels.conv2d_grad_weight(x.data, g, kh, kw, None)
        return gx, gw

    y = _result(out_data, (x, w), vjp)
    if b is not None:
        y = add(y, reshape(as_tensor(b), (1, -1, 1, 1)))
    return reshape(y, y.shape[1:]) if squeeze else y


def channel_mix(x, w):
    """Apply w [C,C] to every pixel's channel vector of x [B,C,H,W]."""
    x, w = _coerce(x, w)
    out_data = np.einsum("oc,bchw->bohw", w.data, x.data, optimize=True)

    def vjp(g):
        gx = np.einsum("oc,bohw->bchw", w.data, g, optimize=True)
        gw = np.einsum("bohw,bchw->oc", g, x.data, optimize=True)
        return gx, gw

    return _result(out_data, (x, w), vjp)


def logabsdet(w):
    """log|det w| for a square 2-D tensor; gradient is inv(w)^T."""
    w = as_tensor(w)
    sign, ld = np.linalg.slogdet(w.data.astype(np.float64))
    if sign == 0:
        raise DomainError("logabsdet: singular matrix")
    winv_t = np.linalg.inv(w.data.astype(np.float64)).T

    def vjp(g):
        return (np.asarray(g * winv_t, dtype=w.dtype),)

    return _result(np.asarray(ld, dtype=w.dtype), (w,), vjp)


def softmax(x, axis=-1):
    """Softmax along axis, composed from primitives (shift-invariant form)."""
    x = as_tensor(x)
    shifted = sub(x, x.data.max(axis=axis, keepdims=True))
    e = exp(shifted)
    return div(e, sum_(e, axis=axis, keepdims=True))


def assert_finite(t, what):
    """Raise DomainError naming `what` if t contains NaN/Inf."""
    if not np.all(np.isfinite(t.data if isinstance(t, Tensor) else t)):
        raise DomainError(f"non-finite values in {what}")
    return t
