"""Minimal reverse-mode differentiable tensor over float64 numpy arrays.

Supplies exactly the operations the motion VAEs, body model, and fitting
optimizer need: elementwise arithmetic, tanh/square/sqrt, 2D matmul,
same-length conv1d (stride 1 or 2, dilated), reductions, shape plumbing,
and a straight-through (custom-gradient) node for quantizer rounding.

Graph construction and backward are single-threaded per graph; tensors are
immutable after forward construction except their ``grad`` slot. Gradients
accumulate by summation; callers zero them between optimizer steps.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import DimensionError, UsageError

Array = np.ndarray


def _as_array(values) -> Array:
    return np.asarray(values, dtype=np.float64)


class Tensor:
    """N-dimensional float64 array participating in a gradient graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward=None):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; all ops are defined as module functions below
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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(values) -> Tensor:
    return values if isinstance(values, Tensor) else Tensor(values)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _node(data: Array, parents: Sequence[Tensor],
          backward_fn: Callable[[Array], None] | None) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=tuple(parents),
                  _backward=backward_fn)


def _accumulate(flows: dict, tensor: Tensor, grad: Array) -> None:
    key = id(tensor)
    if key in flows:
        flows[key] = flows[key] + grad
    else:
        flows[key] = grad


# ---------------------------------------------------------------------------
# elementwise / unary


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}") from exc

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(flows, b, _unbroadcast(g, b.shape))

    return _node(data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise DimensionError(f"sub: incompatible shapes {a.shape} and {b.shape}") from exc

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(flows, b, _unbroadcast(-g, b.shape))

    return _node(data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}") from exc

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(flows, b, _unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), backward_fn)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data / b.data
    except ValueError as exc:
        raise DimensionError(f"div: incompatible shapes {a.shape} and {b.shape}") from exc

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accumulate(flows, b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(data, (a, b), backward_fn)


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)
    data = a.data * factor

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, g * factor)

    return _node(data, (a,), backward_fn)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, g * (1.0 - data * data))

    return _node(data, (a,), backward_fn)


def square(a) -> Tensor:
    a = as_tensor(a)
    data = a.data * a.data

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, g * 2.0 * a.data)

    return _node(data, (a,), backward_fn)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, g * 0.5 / data)

    return _node(data, (a,), backward_fn)


def softplus(a) -> Tensor:
    """log(1 + exp(x)), numerically stable; smooth everywhere."""
    a = as_tensor(a)
    data = np.logaddexp(0.0, a.data)

    def backward_fn(g, flows):
        if a.requires_grad:
            sig = 1.0 / (1.0 + np.exp(-a.data))
            _accumulate(flows, a, g * sig)

    return _node(data, (a,), backward_fn)


_ELEMENTWISE_BINARY = {"add": add, "sub": sub, "mul": mul}
_ELEMENTWISE_UNARY = {"tanh": tanh, "square": square}


def elementwise(op_kind: str, a, b=None) -> Tensor:
    """Dispatch an elementwise op by name: add/sub/mul/scale/tanh/square."""
    if op_kind in _ELEMENTWISE_BINARY:
        if b is None:
            raise UsageError(f"elementwise '{op_kind}' needs two operands")
        return _ELEMENTWISE_BINARY[op_kind](a, b)
    if op_kind in _ELEMENTWISE_UNARY:
        if b is not None:
            raise UsageError(f"elementwise '{op_kind}' is unary")
        return _ELEMENTWISE_UNARY[op_kind](a)
    if op_kind == "scale":
        if b is None:
            raise UsageError("elementwise 'scale' needs a scalar factor")
        return scale(a, b)
    raise UsageError(f"unknown elementwise op '{op_kind}'")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(flows, b, a.data.T @ g)

    return _node(data, (a, b), backward_fn)


def transpose(a, axes: tuple[int, ...] | None = None) -> Tensor:
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    inverse = None if axes is None else tuple(np.argsort(axes))

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, np.transpose(g, inverse))

    return _node(data, (a,), backward_fn)


# ---------------------------------------------------------------------------
# reductions and shape plumbing


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g, flows):
        if not a.requires_grad:
            return
        if axis is None:
            _accumulate(flows, a, np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(flows, a, np.broadcast_to(g, a.shape).copy())

    return _node(data, (a,), backward_fn)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}") from exc
    old_shape = a.shape

    def backward_fn(g, flows):
        if a.requires_grad:
            _accumulate(flows, a, g.reshape(old_shape))

    return _node(data, (a,), backward_fn)


def getitem(a, key) -> Tensor:
    a = as_tensor(a)
    data = a.data[key]
    if np.isscalar(data):
        data = np.asarray(data)

    def backward_fn(g, flows):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            np.add.at(buf, key, g)
            _accumulate(flows, a, buf)

    return _node(data, (a,), backward_fn)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g, flows):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if part.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                _accumulate(flows, part, g[tuple(index)])

    return _node(data, tuple(parts), backward_fn)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    data = np.stack([p.data for p in parts], axis=axis)

    def backward_fn(g, flows):
        slices = np.moveaxis(g, axis, 0)
        for part, piece in zip(parts, slices):
            if part.requires_grad:
                _accumulate(flows, part, piece)

    return _node(data, tuple(parts), backward_fn)


# ---------------------------------------------------------------------------
# convolution and resampling


def conv1d(x, kernel, stride: int = 1, dilation: int = 1) -> Tensor:
    """Same-length 1D cross-correlation.

    ``x`` is (C_in, T) or batched (B, C_in, T); ``kernel`` is
    (C_out, C_in, K) with K odd. Output time length is ceil(T / stride).
    Zero padding is split left/right as evenly as possible.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 3:
        raise DimensionError(f"conv1d kernel must be 3D, got {kernel.shape}")
    c_out, c_in, k = kernel.shape
    if k % 2 != 1:
        raise UsageError(f"conv1d kernel width must be odd, got {k}")
    if stride not in (1, 2):
        raise UsageError(f"conv1d stride must be 1 or 2, got {stride}")
    if dilation < 1:
        raise UsageError(f"conv1d dilation must be >= 1, got {dilation}")

    batched = x.ndim == 3
    if not batched and x.ndim != 2:
        raise DimensionError(f"conv1d input must be 2D or 3D, got {x.shape}")
    if x.shape[-2] != c_in:
        raise DimensionError(
            f"conv1d channel mismatch: input has {x.shape[-2]}, kernel expects {c_in}")

    xd = x.data if batched else x.data[None]
    b, _, t = xd.shape
    t_out = -(-t // stride)
    extent = (k - 1) * dilation + 1
    pad_total = max(0, (t_out - 1) * stride + extent - t)
    pad_left = pad_total // 2
    pad_right = pad_total - pad_left
    xp = np.pad(xd, ((0, 0), (0, 0), (pad_left, pad_right)))

    # gather taps: idx[t_out, k] -> position in padded input
    idx = (np.arange(t_out)[:, None] * stride + np.arange(k)[None, :] * dilation)
    patches = xp[:, :, idx]                      # (B, C_in, T_out, K)
    patches = patches.transpose(0, 1, 3, 2).reshape(b, c_in * k, t_out)
    k2 = kernel.data.reshape(c_out, c_in * k)
    out = np.einsum("oc,bct->bot", k2, patches, optimize=True)

    def backward_fn(g, flows):
        gb = g if batched else g[None]
        if kernel.requires_grad:
            gk = np.einsum("bot,bct->oc", gb, patches, optimize=True)
            _accumulate(flows, kernel, gk.reshape(c_out, c_in, k))
        if x.requires_grad:
            gp = np.einsum("oc,bot->bct", k2, gb, optimize=True)
            gp = gp.reshape(b, c_in, k, t_out)
            gxp = np.zeros_like(xp)
            for tap in range(k):
                gxp[:, :, idx[:, tap]] += gp[:, :, tap, :]
            gx = gxp[:, :, pad_left:pad_left + t]
            _accumulate(flows, x, gx if batched else gx[0])

    data = out if batched else out[0]
    return _node(data, (x, kernel), backward_fn)


def upsample_nearest(x, factor: int) -> Tensor:
    """Repeat each time step ``factor`` times along the last axis."""
    x = as_tensor(x)
    if factor < 1:
        raise UsageError(f"upsample factor must be >= 1, got {factor}")
    data = np.repeat(x.data, factor, axis=-1)

    def backward_fn(g, flows):
        if x.requires_grad:
            split = g.reshape(*g.shape[:-1], x.shape[-1], factor)
            _accumulate(flows, x, split.sum(axis=-1))

    return _node(data, (x,), backward_fn)


# ---------------------------------------------------------------------------
# gradient control


def straight_through(x, forward_fn: Callable[[Array], Array]) -> Tensor:
    """Custom-gradient node: forward ``forward_fn``, backward identity.

    The output must keep the input's shape; used by the quantizers to
    declare forward=round, backward=identity.
    """
    x = as_tensor(x)
    data = _as_array(forward_fn(x.data))
    if data.shape != x.shape:
        raise DimensionError(
            f"straight_through forward changed shape {x.shape} -> {data.shape}")

    def backward_fn(g, flows):
        if x.requires_grad:
            _accumulate(flows, x, g)

    return _node(data, (x,), backward_fn)


def stop_gradient(x) -> Tensor:
    """Block gradient flow; forward is the identity."""
    return Tensor(as_tensor(x).data.copy())


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Every requires_grad ancestor accumulates its gradient into ``.grad``
    (summing across repeated calls). Reductions run in a fixed serial
    order, so repeated sweeps are bitwise reproducible.
    """
    if not isinstance(loss, Tensor):
        raise UsageError("backward expects a Tensor")
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    flows: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = flows.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._backward is not None:
            node._backward(g, flows)


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None
