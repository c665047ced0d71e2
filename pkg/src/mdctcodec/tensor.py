"""Dense n-dimensional arrays with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array plus an optional record of the
operation that produced it (a dynamic tape, rebuilt on every forward pass).
Calling :meth:`Tensor.backward` on a scalar walks the tape once in reverse
topological order and accumulates gradients into every tensor that was
created with ``requires_grad=True``.  Gradients keep accumulating across
backward calls until they are cleared, which is what the alternating
generator/discriminator updates in the trainer rely on.

Thread safety: a graph and the tensors on it belong to one thread for the
duration of a forward/backward pass; independent graphs may run on
different threads.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (forward values only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy trailing-dim broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A numpy array in (optionally) a reverse-mode differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: Optional[tuple[Tensor, ...]] = None
        self._backward: Optional[Callable] = None

    # -- introspection ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flags = []
        if self.requires_grad:
            flags.append("requires_grad")
        if self._parents is not None:
            flags.append("graph")
        tag = ", ".join(flags)
        return f"Tensor(shape={self.shape}{', ' + tag if tag else ''})"

    def _in_graph(self) -> bool:
        return self.requires_grad or self._parents is not None

    # -- graph construction ------------------------------------------------

    def detach(self) -> "Tensor":
        """A view of the same values with no graph history."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return _binary(self, other, np.add,
                       lambda g, a, b: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract,
                       lambda g, a, b: (g, -g))

    def __rsub__(self, other):
        return _binary(self, other, lambda a, b: b - a,
                       lambda g, a, b: (-g, g))

    def __mul__(self, other):
        return _binary(self, other, np.multiply,
                       lambda g, a, b: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, np.divide,
                       lambda g, a, b: (g / b, -g * a / (b * b)))

    def __rtruediv__(self, other):
        return _binary(self, other, lambda a, b: b / a,
                       lambda g, a, b: (-g * b / (a * a), g / a))

    def __neg__(self):
        return apply_op(-self.data, (self,), lambda g: (-g,))

    def __matmul__(self, other):
        return matmul(self, other)

    def abs(self) -> "Tensor":
        x = self.data
        return apply_op(np.abs(x), (self,), lambda g: (g * np.sign(x),))

    def square(self) -> "Tensor":
        x = self.data
        return apply_op(x * x, (self,), lambda g: (2.0 * g * x,))

    def sqrt(self) -> "Tensor":
        y = np.sqrt(self.data)
        # subgradient 0 at the origin so zero-norm columns stay finite
        safe = np.where(y > 0.0, y, 1.0)
        return apply_op(y, (self,),
                        lambda g: (g * np.where(y > 0.0, 0.5 / safe, 0.0),))

    def exp(self) -> "Tensor":
        y = np.exp(self.data)
        return apply_op(y, (self,), lambda g: (g * y,))

    def log(self) -> "Tensor":
        x = self.data
        return apply_op(np.log(x), (self,), lambda g: (g / x,))

    def maximum(self, value: float) -> "Tensor":
        """Elementwise max with a scalar; subgradient 0 exactly at the kink."""
        x = self.data
        mask = x > value
        return apply_op(np.maximum(x, value), (self,),
                        lambda g: (g * mask,))

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.data.shape
        value = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            return (_spread(g, shape, axis, keepdims),)

        return apply_op(value, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.data.shape
        value = self.data.mean(axis=axis, keepdims=keepdims)
        count = self.data.size if axis is None else _axis_count(shape, axis)

        def backward(g):
            return (_spread(g, shape, axis, keepdims) / count,)

        return apply_op(value, (self,), backward)

    # -- shape manipulation ----------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return apply_op(self.data.reshape(shape), (self,),
                        lambda g: (g.reshape(old),))

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        axes = tuple(axes)
        inverse = tuple(np.argsort(axes))
        return apply_op(np.ascontiguousarray(self.data.transpose(axes)), (self,),
                        lambda g: (g.transpose(inverse),))

    def __getitem__(self, key) -> "Tensor":
        shape = self.data.shape

        def backward(g):
            buf = np.zeros(shape, dtype=g.dtype)
            buf[key] += g
            return (buf,)

        return apply_op(self.data[key].copy(), (self,), backward)

    def pad(self, pad_width) -> "Tensor":
        """Constant zero padding; `pad_width` follows numpy conventions."""
        widths = np.asarray(pad_width if np.ndim(pad_width) > 1
                            else [pad_width] * self.data.ndim, dtype=int)
        key = tuple(slice(w[0], w[0] + n) for w, n in zip(widths, self.data.shape))
        return apply_op(np.pad(self.data, widths), (self,),
                        lambda g: (g[key],))

    # -- differentiation -----------------------------------------------------------

    def backward(self) -> None:
        """Populate `.grad` on every requires_grad tensor reachable from here.

        Gradients accumulate across calls until cleared with `zero_grad`.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() needs a scalar loss, got shape {self.shape}")
        if self._parents is None:
            raise ContractError("backward() on a tensor with no recorded graph")

        order = _toposort(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent._in_graph():
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._parents is not None:
            for parent in node._parents:
                if id(parent) not in visited and parent._parents is not None:
                    stack.append((parent, False))
    return order


def apply_op(value: np.ndarray,
             parents: tuple[Tensor, ...],
             backward: Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]],
             ) -> Tensor:
    """Create the result tensor of a primitive op, recording the tape entry.

    `backward` maps the output gradient to one gradient (or None) per parent.
    Recording is skipped when gradients are globally disabled or no parent
    participates in a graph, so inference costs nothing extra.
    """
    out = Tensor(value)
    if _grad_enabled and any(p._in_graph() for p in parents):
        out._parents = parents
        out._backward = backward
    return out


def _binary(a: Tensor, other, fwd, bwd) -> Tensor:
    if isinstance(other, Tensor):
        av, bv = a.data, other.data
        value = fwd(av, bv)

        def backward(g):
            ga, gb = bwd(g, av, bv)
            return (unbroadcast(ga, av.shape), unbroadcast(gb, bv.shape))

        return apply_op(value, (a, other), backward)

    const = other if np.isscalar(other) else _as_float_array(other)
    av = a.data
    value = fwd(av, const)

    def backward_const(g):
        ga, _ = bwd(g, av, const)
        return (unbroadcast(ga, av.shape),)

    return apply_op(value, (a,), backward_const)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with trailing-dim broadcasting on batch axes."""
    if not isinstance(b, Tensor):
        b = Tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    av, bv = a.data, b.data
    value = av @ bv

    def backward(g):
        ga = unbroadcast(g @ _swap(bv), av.shape)
        gb = unbroadcast(_swap(av) @ g, bv.shape)
        return (ga, gb)

    return apply_op(value, (a, b), backward)


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def _spread(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % len(shape) for a in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape).copy()


def _axis_count(shape, axis) -> int:
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    n = 1
    for a in axes:
        n *= shape[a % len(shape)]
    return n


def stack_params(tensors: Iterable[Tensor]) -> list[np.ndarray]:
    return [t.data for t in tensors]
