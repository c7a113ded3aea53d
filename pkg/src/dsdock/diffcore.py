"""Dense float64 tensors with reverse-mode differentiation.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure propagating the upstream gradient to them. :func:`backward` walks
the recorded graph in reverse topological order.

Only the handful of ops needed by the message-passing layers are provided.
Broadcasting is limited to exact shapes and 0-d scalars; bias rows use
:func:`add_bias`.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeMismatch(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class EmptySegment(ValueError):
    pass


class NonScalarLoss(ValueError):
    pass


class Tensor:
    """A float64 array plus the bookkeeping for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = _op
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (inference, finite differences)."""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


def _result(data: np.ndarray, parents: Sequence[Tensor], op: str, fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data if type(data) is np.ndarray and data.dtype == np.float64 \
        else np.asarray(data, dtype=np.float64)
    out.grad = None
    out.op = op
    for p in (parents if _grad_enabled else ()):
        if p.requires_grad:
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = fn
            return out
    out.requires_grad = False
    out._parents = ()
    out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray, owned: bool = False) -> None:
    """Add ``g`` into ``t.grad``; ``owned`` buffers are adopted without a copy."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g if owned and g.dtype == np.float64 and g.flags.writeable \
            else np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    # scalar operand broadcast over the other operand
    return np.asarray(g.sum()).reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise ShapeMismatch(f"cannot combine shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)

    def fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), "add", fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)

    def fn(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape), owned=True)
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape), owned=True)

    return _result(a.data * b.data, (a, b), "mul", fn)


def scale(a: Tensor, c: float) -> Tensor:
    def fn(g):
        _accum(a, g * c)

    return _result(a.data * c, (a,), "scale", fn)


def relu(a: Tensor) -> Tensor:
    def fn(g):
        _accum(a, g * (a.data > 0), owned=True)  # subgradient 0 at the kink

    return _result(np.maximum(a.data, 0.0), (a,), "relu", fn)


def scale_rows(x: Tensor, factors: np.ndarray) -> Tensor:
    """Row i of ``x`` times the constant ``factors[i]``."""
    factors = np.asarray(factors, dtype=np.float64).reshape(-1, 1)
    if x.data.ndim != 2 or factors.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"{factors.shape[0]} row factors for input {x.shape}")

    def fn(g):
        _accum(x, g * factors, owned=True)

    return _result(x.data * factors, (x,), "scale_rows", fn)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0
    factor = np.where(mask, 1.0, slope)

    def fn(g):
        _accum(a, g * factor, owned=True)

    return _result(a.data * factor, (a,), "leaky_relu", fn)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def fn(g):
        _accum(a, g * (1.0 - out * out), owned=True)

    return _result(out, (a,), "tanh", fn)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def fn(g):
        _accum(a, g * out, owned=True)

    return _result(out, (a,), "exp", fn)


_ELEMENTWISE = {
    "add": add,
    "mul": mul,
    "relu": relu,
    "tanh": tanh,
    "exp": exp,
    "scale": scale,
}


def elementwise_map(kind: str, *operands) -> Tensor:
    """Dispatch to one of ``add, mul, relu, tanh, exp, scale`` by name."""
    try:
        op = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {kind!r}") from None
    if kind in ("add", "mul"):
        return op(*operands)
    if kind == "scale":
        x, c = operands
        return scale(as_tensor(x), float(c))
    (x,) = operands
    return op(as_tensor(x))


# ---------------------------------------------------------------- reductions

def total(a: Tensor) -> Tensor:
    """Sum of all entries as a 0-d tensor."""

    def fn(g):
        _accum(a, np.broadcast_to(g, a.shape))

    return _result(np.asarray(a.data.sum()), (a,), "sum", fn)


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def fn(g):
        _accum(a, np.broadcast_to(g / n, a.shape))

    return _result(np.asarray(a.data.mean()), (a,), "mean", fn)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul of {a.shape} and {b.shape}")

    def fn(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T, owned=True)
        if b.requires_grad:
            _accum(b, a.data.T @ g, owned=True)

    return _result(a.data @ b.data, (a, b), "matmul", fn)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x[i, :] + b`` for every row i."""
    if x.data.ndim != 2 or b.shape != (x.shape[1],):
        raise ShapeMismatch(f"bias {b.shape} for input {x.shape}")

    def fn(g):
        _accum(x, g)
        if b.requires_grad:
            _accum(b, g.sum(axis=0))

    return _result(x.data + b.data, (x, b), "add_bias", fn)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    original = x.shape

    def fn(g):
        _accum(x, g.reshape(original))

    return _result(x.data.reshape(shape), (x,), "reshape", fn)


def columns(x: Tensor, start: int, stop: int) -> Tensor:
    """Column slice ``x[:, start:stop]``."""

    def fn(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, start:stop] = g
            _accum(x, full)

    return _result(x.data[:, start:stop], (x,), "columns", fn)


class RelationalIndex:
    """Rows of a relational product: row i is ``h[node[i]] @ W[relation[i]]``.

    Rows are grouped by relation internally; callers that already list them
    relation-major avoid a permutation on every pass.
    """

    def __init__(self, node: np.ndarray, relation: np.ndarray, num_relations: int):
        node = np.asarray(node, dtype=np.int64)
        relation = np.asarray(relation, dtype=np.int64)
        if node.shape != relation.shape:
            raise ShapeMismatch("node and relation arrays differ in length")
        if relation.size and (relation.min() < 0 or relation.max() >= num_relations):
            raise IndexOutOfRange(f"relation id outside [0, {num_relations})")
        self.node, self.relation, self.num_relations = node, relation, num_relations
        order = np.argsort(relation, kind="stable")
        self.order = None if np.array_equal(order, np.arange(order.size)) else order
        self.sorted_node = node if self.order is None else node[order]
        bounds = np.searchsorted(relation[order], np.arange(num_relations + 1))
        self.slices = [(r, slice(bounds[r], bounds[r + 1]))
                       for r in range(num_relations) if bounds[r + 1] > bounds[r]]
        self._scatter: sp.csr_matrix | None = None

    def __len__(self) -> int:
        return self.node.size

    def scatter(self, num_nodes: int) -> sp.csr_matrix:
        if self._scatter is None or self._scatter.shape[0] != num_nodes:
            self._scatter = _scatter_matrix(self.sorted_node, num_nodes)
        return self._scatter


def relational_matmul(h: Tensor, w: Tensor, index: RelationalIndex) -> Tensor:
    """Per-row relation-specific linear map ``h[node] @ w[relation]``.

    ``w`` has shape (num_relations, d_in, d_out).
    """
    if w.data.ndim != 3 or w.shape[0] != index.num_relations or w.shape[1] != h.shape[1]:
        raise ShapeMismatch(f"relational weights {w.shape} for input {h.shape}")
    rows = h.data[index.sorted_node]
    out = np.empty((len(index), w.shape[2]))
    for r, sl in index.slices:
        np.matmul(rows[sl], w.data[r], out=out[sl])
    if index.order is not None:
        out_sorted, out = out, np.empty_like(out)
        out[index.order] = out_sorted

    def fn(g):
        if index.order is not None:
            g = g[index.order]
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            for r, sl in index.slices:
                np.matmul(rows[sl].T, g[sl], out=gw[r])
            _accum(w, gw, owned=True)
        if h.requires_grad:
            g_rows = np.empty_like(rows)
            for r, sl in index.slices:
                np.matmul(g[sl], w.data[r].T, out=g_rows[sl])
            _accum(h, index.scatter(h.shape[0]) @ g_rows, owned=True)

    return _result(out, (h, w), "relational_matmul", fn)


# below this many entries a dense product beats the sparse dispatch overhead
DENSE_OPERATOR_LIMIT = 4096


def _compact(matrix: sp.csr_matrix):
    rows, cols = matrix.shape
    return matrix.toarray() if rows * cols <= DENSE_OPERATOR_LIMIT else matrix


class SparseOperator:
    """A constant sparse matrix kept alongside its transpose."""

    def __init__(self, matrix):
        self.matrix = sp.csr_matrix(matrix)
        self.transposed = self.matrix.T.tocsr()
        self._forward = _compact(self.matrix)
        self._backward = _compact(self.transposed)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def sparse_matmul(op: SparseOperator | sp.spmatrix, x: Tensor) -> Tensor:
    """Product of a constant sparse matrix with ``x``; only ``x`` gets gradients."""
    if not isinstance(op, SparseOperator):
        op = SparseOperator(op)
    if x.data.ndim != 2 or op.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"sparse {op.shape} times {x.shape}")

    def fn(g):
        _accum(x, np.asarray(op._backward @ g), owned=True)

    return _result(np.asarray(op._forward @ x.data), (x,), "sparse_matmul", fn)


# ---------------------------------------------------------------- segment ops

def _scatter_matrix(index: np.ndarray, num_segments: int) -> sp.csr_matrix:
    e = index.size
    return sp.csr_matrix(
        (np.ones(e), (index, np.arange(e))), shape=(num_segments, e)
    )


class SegmentIndex:
    """A validated row-to-segment map with its scatter matrix built once.

    Pass one of these instead of a raw index array when the same map is
    reused across many forward passes.
    """

    def __init__(self, index, num_segments: int):
        self.index = _validated(index, num_segments)
        self.num_segments = num_segments
        self.matrix = _scatter_matrix(self.index, num_segments)
        self.counts = np.bincount(self.index, minlength=num_segments).astype(np.float64)
        self.has_empty = bool(np.any(self.counts == 0))
        self._operator = _compact(self.matrix)


def _validated(index, n: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= n):
        raise IndexOutOfRange(f"segment index outside [0, {n})")
    return index


def _segments(index, n: int) -> SegmentIndex:
    if isinstance(index, SegmentIndex):
        if index.num_segments != n:
            raise ShapeMismatch(f"segment map over {index.num_segments} segments, expected {n}")
        return index
    return SegmentIndex(index, n)


def gather(x: Tensor, index) -> Tensor:
    """Rows ``x[index]``; the backward pass scatter-adds."""
    seg = _segments(index, x.shape[0])

    def fn(g):
        if x.requires_grad:
            _accum(x, np.asarray(seg._operator @ g), owned=True)

    return _result(x.data[seg.index], (x,), "gather", fn)


def segment_sum(values: Tensor, index, num_segments: int) -> Tensor:
    """Sum rows of ``values`` sharing a target index; empty segments are zero."""
    seg = _segments(index, num_segments)
    if values.data.ndim != 2 or values.shape[0] != seg.index.size:
        raise ShapeMismatch(f"{seg.index.size} indices for values {values.shape}")
    out = seg._operator @ values.data

    def fn(g):
        _accum(values, g[seg.index], owned=True)

    return _result(np.asarray(out), (values,), "segment_sum", fn)


def segment_mean(values: Tensor, index, num_segments: int) -> Tensor:
    seg = _segments(index, num_segments)
    if seg.has_empty:
        raise EmptySegment("segment_mean over a segment with no rows")
    summed = segment_sum(values, seg, num_segments)
    inv = 1.0 / seg.counts[:, None]

    def fn(g):
        _accum(summed, g * inv)

    return _result(summed.data * inv, (summed,), "segment_mean", fn)


def segment_softmax(scores: Tensor, index, num_segments: int) -> Tensor:
    """Softmax of a score column within each segment.

    ``scores`` has shape (E, 1); the result sums to one per non-empty segment.
    """
    index = _segments(index, num_segments).index
    s = scores.data[:, 0]
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, index, s)
    e = np.exp(s - seg_max[index])
    denom = np.bincount(index, weights=e, minlength=num_segments)
    p = e / denom[index]

    def fn(g):
        g = g[:, 0]
        dot = np.bincount(index, weights=g * p, minlength=num_segments)
        _accum(scores, (p * (g - dot[index]))[:, None])

    return _result(p[:, None], (scores,), "segment_softmax", fn)


# ---------------------------------------------------------------- normalization

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row standardization with population variance, then affine."""
    if x.data.ndim != 2 or gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeMismatch(f"layer_norm on {x.shape} with gain {gain.shape}")
    d = x.shape[1]
    xc = x.data - x.data.sum(axis=1, keepdims=True) / d
    inv = 1.0 / np.sqrt((xc * xc).sum(axis=1, keepdims=True) / d + eps)
    xhat = xc * inv

    def fn(g):
        if gain.requires_grad:
            _accum(gain, (g * xhat).sum(axis=0))
        if bias.requires_grad:
            _accum(bias, g.sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            _accum(
                x,
                inv / d * (d * gx - gx.sum(axis=1, keepdims=True)
                           - xhat * (gx * xhat).sum(axis=1, keepdims=True)),
            )

    return _result(xhat * gain.data + bias.data, (x, gain, bias), "layer_norm", fn)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity outside training or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def fn(g):
        _accum(x, g * keep, owned=True)

    return _result(x.data * keep, (x,), "dropout", fn)


# ---------------------------------------------------------------- backprop

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> list[np.ndarray] | None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    With ``params`` given, their gradients are reset first and returned in
    order; parameters the loss does not depend on get zeros.
    """
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
    params = list(params) if params is not None else None
    if params is not None:
        for p in params:
            p.grad = None
    order = _topological(loss)
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    # free interior buffers
    for node in order:
        if node._backward is not None and node is not loss:
            node.grad = None
    if params is None:
        return None
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


@dataclass
class GradientReport:
    max_rel_error: float
    checked: int
    skipped_kinks: int
    worst_coordinate: tuple[int, int] | None  # (parameter position, flat index)


def gradient_report(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    kink_tol: float | None = None,
) -> GradientReport:
    """Compare autodiff gradients with central differences coordinate by coordinate.

    Relative error is ``|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)``. With
    ``kink_tol`` set, a coordinate whose forward and backward one-sided
    slopes differ by more than ``kink_tol * (|d+| + |d-|) + 1e-8`` is
    re-probed at twice the step. Smooth curvature doubles that gap; when it
    does not, a relu kink sits inside the stencil and the coordinate is
    skipped.
    """
    params = list(params)
    analytic = backward(f(params), params)
    with no_grad():
        return _compare(f, params, analytic, step, kink_tol)


def _compare(f, params, analytic, step, kink_tol) -> GradientReport:
    base = f(params).item() if kink_tol is not None else 0.0
    worst, where, checked, skipped = 0.0, None, 0, 0
    for k, (p, g_ad) in enumerate(zip(params, analytic)):
        flat = p.data.reshape(-1)
        g_ad = g_ad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f(params).item()
            flat[i] = orig - step
            down = f(params).item()
            flat[i] = orig
            if kink_tol is not None and _straddles_kink(f, params, flat, i, step, base, up, down, kink_tol):
                skipped += 1
                continue
            g_fd = (up - down) / (2.0 * step)
            err = abs(g_ad[i] - g_fd) / max(1e-8, abs(g_ad[i]) + abs(g_fd))
            checked += 1
            if err > worst or where is None:
                worst, where = max(worst, err), (k, i)
    return GradientReport(worst, checked, skipped, where)


def _straddles_kink(f, params, flat, i, step, base, up, down, tol) -> bool:
    gap = (up - base) / step - (base - down) / step
    if abs(gap) <= tol * (abs(up - base) + abs(base - down)) / step + 1e-8:
        return False
    orig = flat[i]
    flat[i] = orig + 2 * step
    up2 = f(params).item()
    flat[i] = orig - 2 * step
    down2 = f(params).item()
    flat[i] = orig
    gap2 = (up2 - base) / (2 * step) - (base - down2) / (2 * step)
    return abs(gap2 - 2 * gap) > 0.1 * abs(gap)


def check_gradients(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    kink_tol: float | None = None,
) -> float:
    """Largest relative error between autodiff and central differences.

    ``f`` maps the parameter list to a scalar tensor and must be
    deterministic. See :func:`gradient_report` for the error definition.
    """
    return gradient_report(f, params, step, kink_tol).max_rel_error
