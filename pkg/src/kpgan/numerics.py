"""Dense tensors with tape-based reverse-mode differentiation.

Every op returns a fresh :class:`Tensor`; nothing is mutated in place.  When
any input requires a gradient the op records its parents and a backward
closure, which :func:`gradients` replays in reverse topological order.
"""

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import kernels

DTYPE = np.float64


class DimensionError(ValueError):
    pass


class InvalidMaskError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable recording inside the block (decoding, scoring)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    __slots__ = ("data", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.parents = ()
        self.backward_fn = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return index_select(self, index)

    @property
    def T(self):
        return transpose(self)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(data, parents, backward_fn):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.backward_fn = backward_fn
    return out


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def matmul(a, b):
    """Matrix product for 1-D/2-D operands (vectors promoted as in numpy)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(f"matmul expects 1-D or 2-D operands, got {a.shape} and {b.shape}")
    inner_a = a.shape[-1]
    inner_b = b.shape[0]
    if inner_a != inner_b:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        a2 = a.data.reshape(1, -1) if a.ndim == 1 else a.data
        b2 = b.data.reshape(-1, 1) if b.ndim == 1 else b.data
        g2 = np.asarray(g).reshape(a2.shape[0], b2.shape[1])
        return (np.dot(g2, b2.T).reshape(a.shape), np.dot(a2.T, g2).reshape(b.shape))

    return _record(np.dot(a.data, b.data), (a, b), backward)


def transpose(a):
    return _record(a.data.T, (a,), lambda g: (g.T,))


def reshape(a, shape):
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def sum(a, axis=None):  # noqa: A001 - mirrors numpy
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _record(a.data.sum(axis=axis), (a,), backward)


def mean(a):
    n = a.data.size
    return _record(a.data.mean(), (a,), lambda g: (np.full(a.shape, g / n),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def stack_rows(vectors):
    """Stack 1-D tensors into a 2-D matrix."""
    return concat([reshape(v, (1, -1)) for v in vectors], axis=0)


def index_select(a, index):
    def backward(g):
        grad = np.zeros(a.shape)
        np.add.at(grad, index, g)
        return (grad,)

    return _record(a.data[index], (a,), backward)


def embedding(table, ids):
    """Rows of ``table`` for the integer ``ids``."""
    ids = np.asarray(ids, dtype=np.int64)
    return index_select(table, ids)


def pick(a, rows, cols):
    """Elements ``a[rows[i], cols[i]]`` as a vector."""
    return index_select(a, (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)))


# --------------------------------------------------------------- nonlinearity

def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    a = as_tensor(a)
    y = _sigmoid(np.atleast_1d(a.data)).reshape(a.shape)
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a):
    y = np.tanh(a.data)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a):
    y = np.exp(a.data)
    return _record(y, (a,), lambda g: (g * y,))


def log(a, floor=1e-300):
    """Natural log; inputs below ``floor`` are clamped (zero gradient there)."""
    x = a.data
    safe = np.maximum(x, floor)
    live = x >= floor
    return _record(np.log(safe), (a,), lambda g: (np.where(live, g / safe, 0.0),))


def softplus(a):
    x = a.data
    y = np.logaddexp(0.0, x)
    return _record(y, (a,), lambda g: (g * _sigmoid(np.atleast_1d(x)).reshape(x.shape),))


def softmax(a, mask=None):
    """Softmax over the last axis; ``mask`` marks entries that may be non-zero."""
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=-1).all():
            raise InvalidMaskError("softmax mask excludes every entry of a row")
        x = np.where(mask, x, -np.inf)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record(y, (a,), backward)


# ------------------------------------------------------------------------ GRU

@dataclass(frozen=True)
class GRUParams:
    """Input weights ``wx`` (d_in x 3H), recurrent ``wh`` (H x 3H), bias (3H)."""

    wx: Tensor
    wh: Tensor
    b: Tensor

    @property
    def hidden(self):
        return self.wh.shape[0]

    @property
    def input_dim(self):
        return self.wx.shape[0]


def gru_sequence(xs, h0, params, reverse=False):
    """Run a GRU over the rows of ``xs``; returns the (T x H) state matrix.

    With ``reverse=True`` the sequence is consumed last-to-first and row ``t``
    of the result is the state after reading ``xs[t]``.
    """
    xs, h0 = as_tensor(xs), as_tensor(h0)
    hid = params.hidden
    if xs.ndim != 2 or xs.shape[1] != params.input_dim:
        raise DimensionError(f"gru input {xs.shape} does not match input size {params.input_dim}")
    if h0.shape != (hid,):
        raise DimensionError(f"gru state {h0.shape} does not match hidden size {hid}")
    x = xs.data[::-1] if reverse else xs.data
    wh = params.wh.data
    wh_zr = np.ascontiguousarray(wh[:, :2 * hid])
    wh_n = np.ascontiguousarray(wh[:, 2 * hid:])
    xp = np.ascontiguousarray(np.dot(x, params.wx.data) + params.b.data)
    h0d = np.ascontiguousarray(h0.data)
    out, zs, rs, ns = kernels.gru_forward(xp, h0d, wh_zr, wh_n)

    def backward(g):
        g = g[::-1] if reverse else g
        d_xp, d_wh_zr, d_wh_n, d_h0 = kernels.gru_backward(
            np.ascontiguousarray(g), h0d, out, zs, rs, ns, wh_zr, wh_n)
        d_x = np.dot(d_xp, params.wx.data.T)
        if reverse:
            d_x = d_x[::-1]
        d_wx = np.dot(x.T, d_xp)
        d_wh = np.concatenate([d_wh_zr, d_wh_n], axis=1)
        return (d_x, d_h0, d_wx, d_wh, d_xp.sum(axis=0))

    result = out[::-1].copy() if reverse else out
    return _record(result, (xs, h0, params.wx, params.wh, params.b), backward)


def gru_cell(x, h_prev, params):
    """Single GRU step; see :mod:`kpgan.kernels` for the gate equations."""
    x = as_tensor(x)
    if x.shape != (params.input_dim,):
        raise DimensionError(f"gru input {x.shape} does not match input size {params.input_dim}")
    return index_select(gru_sequence(reshape(x, (1, -1)), h_prev, params), 0)


# ----------------------------------------------------------------- gradients

def _topological(loss):
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def gradients(loss, params):
    """d(loss)/d(param) for every entry of the ``{name: Tensor}`` mapping.

    Parameters the loss does not reach get exact zeros.
    """
    if loss.data.size != 1:
        raise DimensionError(f"loss must be scalar, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericError(f"loss is not finite: {float(loss.data)}")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.get(id(node))
        if g is None or node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.array(pg, dtype=DTYPE)
    out = {}
    for name, p in params.items():
        g = grads.get(id(p))
        out[name] = np.zeros(p.shape) if g is None else g.reshape(p.shape)
    return out


def finite_difference(fn, values, eps=1e-5):
    """Central differences of scalar ``fn(values)`` w.r.t. each array in ``values``.

    ``values`` maps names to float64 arrays that are perturbed in place and
    restored.
    """
    out = {}
    for name, arr in values.items():
        grad = np.zeros(arr.shape)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = fn()
            flat[i] = orig - eps
            down = fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        out[name] = grad
    return out


def relative_error(analytic, numeric, floor=1e-8):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


# ------------------------------------------------------------ initialisation

def uniform_init(rng, shape, scale=0.1, name=None):
    return parameter(rng.uniform(-scale, scale, size=shape), name=name)


def zeros_init(shape, name=None):
    return parameter(np.zeros(shape), name=name)


def init_gru(rng, d_in, hidden, prefix):
    """Uniform(-0.1, 0.1) weights and zero biases, registered under ``prefix``."""
    wx = uniform_init(rng, (d_in, 3 * hidden), name=f"{prefix}.wx")
    wh = uniform_init(rng, (hidden, 3 * hidden), name=f"{prefix}.wh")
    b = zeros_init((3 * hidden,), name=f"{prefix}.b")
    return {wx.name: wx, wh.name: wh, b.name: b}


def gru_from(tensors, prefix):
    return GRUParams(tensors[f"{prefix}.wx"], tensors[f"{prefix}.wh"], tensors[f"{prefix}.b"])
