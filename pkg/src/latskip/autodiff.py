"""Dense float64 tensors with reverse-mode automatic differentiation.

Every learnable computation in this package runs through the ops in this
module. Each op records its parents and a vector-Jacobian closure on a
dynamically built graph; ``gradients`` walks that graph once, in reverse
topological order, and returns per-parameter gradient arrays.

The graph (and the tensors hanging off it) belongs to a single thread of
execution. Independent graphs in separate threads or processes share
nothing.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray

# When > 0, ops compute values but record no graph (used for target
# networks, momentum encoders and action selection).
_no_grad_depth = 0


class no_grad:
    """Context manager that suppresses graph recording."""

    def __enter__(self):
        global _no_grad_depth
        _no_grad_depth += 1
        return self

    def __exit__(self, *exc):
        global _no_grad_depth
        _no_grad_depth -= 1
        return False


class Tensor:
    """A float64 array plus an optional link into the recorded graph.

    ``requires_grad=True`` marks a leaf parameter. Tensors produced by ops
    carry ``_parents`` and ``_vjp`` so ``gradients`` can propagate through
    them; constants carry neither.
    """

    __slots__ = ("data", "requires_grad", "name", "_parents", "_vjp")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _vjp: Callable[[Array], tuple] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Stop-gradient marker: same values, no link into the graph."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; scalars and ndarrays are wrapped as constants.
    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; multiply by a reciprocal")
        return mul(self, as_tensor(1.0 / float(other)))

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(data: Array, parents: tuple[Tensor, ...], vjp) -> Tensor:
    """Wrap an op result, recording the edge only when a parent needs it."""
    if _no_grad_depth == 0 and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _vjp=vjp)
    return Tensor(data)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape``, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Element-wise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _record(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    ad, bd = a.data, b.data
    return _record(
        out, (a, b), lambda g: (_unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape))
    )


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return _record(a.data * mask, (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _record(np.log(ad), (a,), lambda g: (g / ad,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)
    return _record(out, (a,), lambda g: (g * mask,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise min; ties route the gradient to ``a``."""
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)),
    )


# ---------------------------------------------------------------------------
# Linear algebra and convolution


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data
    return _record(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 1) -> Tensor:
    """2-D convolution, NCHW layout, 3x3 kernels, zero padding.

    ``x``: (B, C, H, W); ``w``: (F, C, 3, 3); ``b``: (F,). Supports the
    stride-1 and stride-2 cases the pixel encoder needs.
    """
    if stride not in (1, 2):
        raise ValueError(f"conv2d stride must be 1 or 2, got {stride}")
    if w.shape[2:] != (3, 3):
        raise ValueError(f"conv2d expects 3x3 kernels, got {w.shape}")
    if x.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv2d input {x.shape} incompatible with weight {w.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    # (B, C, H', W', 3, 3) view of every 3x3 patch, then stride subsampling.
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    out = np.einsum("bcijkl,fckl->bfij", win, w.data, optimize=True)
    out += b.data[None, :, None, None]

    wd = w.data
    x_shape = x.shape
    oh, ow = out.shape[2], out.shape[3]

    def vjp(g: Array):
        dw = np.einsum("bcijkl,bfij->fckl", win, g, optimize=True)
        db = g.sum(axis=(0, 2, 3))
        dxp = np.zeros_like(xp)
        for ky in range(3):
            for kx in range(3):
                dxp[:, :, ky : ky + stride * oh : stride, kx : kx + stride * ow : stride] += (
                    np.einsum("bfij,fc->bcij", g, wd[:, :, ky, kx], optimize=True)
                )
        dx = dxp[:, :, pad : pad + x_shape[2], pad : pad + x_shape[3]]
        return dx, dw, db

    return _record(out, (x, w, b), vjp)


# ---------------------------------------------------------------------------
# Shape ops


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    split_at = np.cumsum(sizes)[:-1]
    return _record(out, tensors, lambda g: tuple(np.split(g, split_at, axis=axis)))


# ---------------------------------------------------------------------------
# Reductions and normalization


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        return _record(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))
    out = a.data.sum(axis=axis)

    def vjp(g: Array):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _record(out, (a,), vjp)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        scale = 1.0 / a.size
        return _record(
            a.data.mean(), (a,), lambda g: (np.broadcast_to(g * scale, a.shape).copy(),)
        )
    scale = 1.0 / a.shape[axis]
    out = a.data.mean(axis=axis)

    def vjp(g: Array):
        return (np.broadcast_to(np.expand_dims(g * scale, axis), a.shape).copy(),)

    return _record(out, (a,), vjp)


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply per-feature gain and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + shift.data
    gd = gain.data
    dim = x.shape[-1]

    def vjp(g: Array):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dshift = g.sum(axis=lead)
        dxhat = g * gd
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / dim
        )
        return dx, dgain, dshift

    return _record(out, (x, gain, shift), vjp)


def l2_normalize(a: Tensor, eps: float = 0.0) -> Tensor:
    """Scale rows (last axis) to unit norm; zero rows map to zero with zero grad."""
    norm = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    safe = np.where(norm > 0.0, norm, 1.0)
    out = np.where(norm > 0.0, a.data / safe, 0.0)

    def vjp(g: Array):
        dot = (g * out).sum(axis=-1, keepdims=True)
        dx = np.where(norm > 0.0, (g - out * dot) / safe, 0.0)
        return (dx,)

    return _record(out, (a,), vjp)


def squared_distance(a: Tensor, b: Tensor) -> Tensor:
    """Squared l2 distance along the last axis."""
    d = sub(a, b)
    return sum_(mul(d, d), axis=-1)


# ---------------------------------------------------------------------------
# Backward pass


def _toposort(root: Tensor) -> list[Tensor]:
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def gradients(loss: Tensor, wrt: Sequence[Tensor]) -> list[Array]:
    """Gradients of a scalar ``loss`` with respect to each tensor in ``wrt``.

    Visits every reachable graph node exactly once. Tensors in ``wrt`` that
    the loss does not depend on get zero gradients.
    """
    if loss.shape != ():
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, Array] = {}
    if loss.requires_grad:
        grads[id(loss)] = np.ones(())
        for node in reversed(_toposort(loss)):
            g = grads.get(id(node))
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
    return [grads.get(id(p), np.zeros(p.shape)) for p in wrt]


def finite_diff_check(
    f: Callable[[Tensor], Tensor], point: Tensor, epsilon: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be scalar-valued and deterministic. The relative error per
    coordinate is |analytic - fd| / max(1e-8, |fd|).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    leaf = Tensor(point.data.copy(), requires_grad=True)
    analytic = gradients(f(leaf), [leaf])[0]
    flat = leaf.data.reshape(-1)
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = f(Tensor(leaf.data)).item()
        flat[i] = orig - epsilon
        lo = f(Tensor(leaf.data)).item()
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError("function returned a non-finite value during probing")
        fd[i] = (hi - lo) / (2.0 * epsilon)
    fd = fd.reshape(leaf.shape)
    denom = np.maximum(1e-8, np.abs(fd))
    return float(np.max(np.abs(analytic - fd) / denom))
