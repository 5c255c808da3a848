"""Differentiable numeric core: float64 tensors over a recorded op graph.

Every public operation builds the output value eagerly with numpy and records
a vector-Jacobian product per input, so that ``backward`` can walk the graph
in reverse and produce exact analytic gradients for the parameters that
participated in the loss. Tensors are always 2-D (scalars are 1x1, vectors a
single row or column) and always float64; any operation that would produce a
NaN or Inf raises ``NumericalError`` at the point of creation.

Internal BLAS threading inside ``matmul`` is the only parallelism; it does not
change results beyond the usual sub-1e-9 reduction-order noise, and all other
ops are plain sequential numpy.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import NumericalError

ACTIVATION_KINDS = (
    "sigmoid",
    "tanh",
    "relu",
    "leaky_relu",
    "elu",
    "softmax_rowwise",
    "linear",
)


class Tensor:
    """A 2-D float64 value, optionally carrying its creating ops for backward."""

    __slots__ = ("data", "name", "_parents", "_vjps")

    def __init__(self, data, _parents=(), _vjps=(), name=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got array of shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NumericalError(
                f"non-finite values in tensor{' ' + name if name else ''}"
            )
        self.data = arr
        self.name = name
        self._parents = _parents
        self._vjps = _vjps

    @property
    def shape(self):
        return self.data.shape

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __neg__(self):
        return mul(self, -1.0)

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

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value) -> Tensor:
    """Wrap an array/scalar as a constant Tensor; pass Tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original 2-D shape."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _binary_shapes(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(
            f"{op}: shapes {a.shape} and {b.shape} do not broadcast"
        ) from None


def matmul(a, b) -> Tensor:
    """Matrix product; differentiable w.r.t. both operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ValueError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return Tensor(
        ad @ bd,
        (a, b),
        (lambda g: g @ bd.T, lambda g: ad.T @ g),
    )


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "add")
    return Tensor(
        a.data + b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "sub")
    return Tensor(
        a.data - b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    return Tensor(
        ad * bd,
        (a, b),
        (
            lambda g: _unbroadcast(g * bd, a.shape),
            lambda g: _unbroadcast(g * ad, b.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "div")
    ad, bd = a.data, b.data
    return Tensor(
        ad / bd,
        (a, b),
        (
            lambda g: _unbroadcast(g / bd, a.shape),
            lambda g: _unbroadcast(-g * ad / (bd * bd), b.shape),
        ),
    )


def maximum(a, b) -> Tensor:
    """Elementwise max; on ties the gradient is routed to the first operand."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"maximum: shapes differ, {a.shape} vs {b.shape}")
    take_a = a.data >= b.data
    return Tensor(
        np.where(take_a, a.data, b.data),
        (a, b),
        (lambda g: g * take_a, lambda g: g * ~take_a),
    )


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data.T.copy(), (a,), (lambda g: g.T,))


def concat_cols(a, b) -> Tensor:
    """Column-wise concatenation [a ‖ b]; rows must match."""
    a, b = as_tensor(a), as_tensor(b)
    if a.rows != b.rows:
        raise ValueError(f"concat_cols: row counts differ, {a.shape} vs {b.shape}")
    ca = a.cols
    return Tensor(
        np.hstack([a.data, b.data]),
        (a, b),
        (lambda g: g[:, :ca], lambda g: g[:, ca:]),
    )


def gather_rows(x, index) -> Tensor:
    """Select rows by an integer index array (duplicates allowed)."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.intp).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= x.rows):
        raise ValueError(
            f"gather_rows: index range [{idx.min()}, {idx.max()}] out of"
            f" bounds for {x.rows} rows"
        )
    xshape = x.shape

    def vjp(g):
        out = np.zeros(xshape)
        np.add.at(out, idx, g)
        return out

    return Tensor(x.data[idx], (x,), (vjp,))


def segment_sum(x, indptr) -> Tensor:
    """Sum contiguous row blocks: out[k] = sum of rows indptr[k]:indptr[k+1]."""
    x = as_tensor(x)
    ptr = np.asarray(indptr, dtype=np.intp)
    if ptr[0] != 0 or ptr[-1] != x.rows or np.any(np.diff(ptr) < 0):
        raise ValueError(f"segment_sum: bad indptr for {x.rows} rows")
    counts = np.diff(ptr)
    if x.rows == 0:
        out = np.zeros((len(counts), x.cols))
    else:
        starts = np.minimum(ptr[:-1], x.rows - 1)  # reduceat rejects index == len
        out = np.add.reduceat(x.data, starts, axis=0)
        out[counts == 0] = 0.0
    return Tensor(out, (x,), (lambda g: np.repeat(g, counts, axis=0),))


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    xshape = x.shape
    return Tensor(
        x.data.sum().reshape(1, 1),
        (x,),
        (lambda g: np.full(xshape, g[0, 0]),),
    )


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    xshape = x.shape
    return Tensor(
        x.data.mean().reshape(1, 1),
        (x,),
        (lambda g: np.full(xshape, g[0, 0] / n),),
    )


def mean_rows(x) -> Tensor:
    """Column-wise mean over all rows, giving a 1 x cols tensor."""
    x = as_tensor(x)
    n = x.rows
    return Tensor(
        x.data.mean(axis=0, keepdims=True),
        (x,),
        (lambda g: np.repeat(g / n, n, axis=0),),
    )


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return Tensor(out, (x,), (lambda g: g * out,))


def log(x) -> Tensor:
    """Natural log; callers clamp arguments first (see ``clamp``)."""
    x = as_tensor(x)
    xd = x.data
    return Tensor(np.log(xd), (x,), (lambda g: g / xd,))


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clip into [lo, hi]; gradient passes through only inside the interval."""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return Tensor(np.clip(x.data, lo, hi), (x,), (lambda g: g * inside,))


def activation(x, kind: str, slope: float = 0.2, alpha: float = 1.0) -> Tensor:
    """Elementwise nonlinearity; softmax_rowwise is per-row and max-stabilized.

    ``slope`` applies to leaky_relu (default 0.2), ``alpha`` to elu.
    """
    x = as_tensor(x)
    xd = x.data
    if kind == "sigmoid":
        y = expit(xd)
        vjp = lambda g: g * y * (1.0 - y)
    elif kind == "tanh":
        y = np.tanh(xd)
        vjp = lambda g: g * (1.0 - y * y)
    elif kind == "relu":
        y = np.maximum(xd, 0.0)
        vjp = lambda g: g * (xd > 0)
    elif kind == "leaky_relu":
        y = np.where(xd > 0, xd, slope * xd)
        vjp = lambda g: g * np.where(xd > 0, 1.0, slope)
    elif kind == "elu":
        y = np.where(xd > 0, xd, alpha * np.expm1(np.minimum(xd, 0.0)))
        vjp = lambda g: g * np.where(xd > 0, 1.0, y + alpha)
    elif kind == "softmax_rowwise":
        z = xd - xd.max(axis=1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=1, keepdims=True)
        vjp = lambda g: y * (g - (g * y).sum(axis=1, keepdims=True))
    elif kind == "linear":
        y = xd
        vjp = lambda g: g
    else:
        raise ValueError(f"unknown activation kind {kind!r}; one of {ACTIVATION_KINDS}")
    return Tensor(y, (x,), (vjp,))


def sigmoid(x) -> Tensor:
    return activation(x, "sigmoid")


def relu(x) -> Tensor:
    return activation(x, "relu")


def aggregate_neighbors(adj, h, mode: str = "sum") -> Tensor:
    """Aggregate neighbor rows per node: row v = sum (or mean) over N(v).

    The mean over an empty neighborhood is a zero row. ``adj`` is a
    ``SparseAdjacency``; h must have one row per node.
    """
    h = as_tensor(h)
    if h.rows != adj.num_nodes:
        raise ValueError(
            f"aggregate_neighbors: features have {h.rows} rows for"
            f" {adj.num_nodes} nodes"
        )
    if mode not in ("sum", "mean"):
        raise ValueError(f"aggregate_neighbors: unknown mode {mode!r}")
    mat = adj.matrix()
    if mode == "sum":
        out = mat @ h.data
        vjp = lambda g: mat.T @ g
    else:
        inv = adj.inverse_degrees()[:, None]  # zero rows for isolated nodes
        out = (mat @ h.data) * inv
        vjp = lambda g: mat.T @ (g * inv)
    return Tensor(out, (h,), (vjp,))


def _toposort(root: Tensor):
    """Parents-first ordering of the graph below ``root`` (iterative DFS)."""
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params) -> dict:
    """Gradients of a recorded scalar w.r.t. every participating parameter.

    ``params`` is a ``ParameterStore`` (anything with ``.items()`` yielding
    (name, Tensor) pairs works). Returns a gradient record: a dict mapping
    parameter name to a float64 array of the parameter's shape. Parameters the
    loss does not depend on are absent from the record.
    """
    if not isinstance(loss, Tensor):
        raise ValueError("backward: loss must be a Tensor")
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss._parents:
        raise ValueError("backward: loss does not result from recorded operations")

    grads = {id(loss): np.ones((1, 1))}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            pg = vjp(g)
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
        if node._parents:
            continue
        grads[id(node)] = g  # keep leaf gradients for the final sweep
    record = {}
    for name, tensor in params.items():
        g = grads.get(id(tensor))
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        record[name] = g
    return record
