"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ndarray together with an optional accumulated
gradient.  Operations build a computation graph of closures; calling
:meth:`Tensor.backward` on a recorded scalar walks the graph in reverse
topological order and accumulates gradients into every tracked leaf
(``requires_grad=True``).

Conventions:
  * image activations are channels-last ``(batch, height, width, channels)``;
    a single fixed layout is used everywhere to avoid transposition bugs,
  * float32 is the training precision, float64 is used by the
    finite-difference oracle in :mod:`latentrl.nn.gradcheck`,
  * gradients accumulate: ``backward`` twice doubles leaf gradients,
    ``zero_grad`` resets them.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "as_tensor",
    "no_grad",
    "is_grad_enabled",
    "concat",
    "cosine_similarity",
    "GraphError",
    "ShapeError",
]

_ALLOWED_DTYPES = (np.float32, np.float64)

# Guard inside sqrt so vector-norm gradients stay finite at zero distance.
NORM_EPS = 1e-12


class GraphError(RuntimeError):
    """Raised when backward is called on a tensor without a recorded graph."""


class ShapeError(ValueError):
    """Raised when an operation receives incompatibly shaped operands."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


def _check_dtype(data: np.ndarray) -> np.ndarray:
    if data.dtype.type not in _ALLOWED_DTYPES:
        data = data.astype(np.float32)
    return data


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
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
    """An ndarray with optional gradient tracking.

    Attributes:
        data: the underlying numpy array (float32 or float64).
        grad: accumulated gradient for tracked leaves, ``None`` until the
            first backward pass reaches this tensor.
        requires_grad: whether gradients should flow to / through this node.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype.type not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple["Tensor", ...], vjp) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        track = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        if track:
            out._parents = parents
            out._vjp = vjp
        else:
            out._parents = ()
            out._vjp = None
        return out

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

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._item_err()

    def _item_err(self):
        raise ShapeError(f"item() requires a single-element tensor, got shape {self.shape}")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """A view of the same data cut off from the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    # -- autodiff ------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every tracked leaf's ``grad``.

        ``self`` must be a scalar produced by a recorded computation.
        Repeated calls accumulate (two passes give exactly twice the
        single-pass gradients).
        """
        if self._vjp is None:
            raise GraphError(
                "backward() called on a tensor that is not the result of a "
                "recorded computation"
            )
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar loss, got shape {self.shape}")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        flowing: dict[int, np.ndarray] = {
            id(self): np.ones_like(self.data)
        }
        for node in reversed(topo):
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                # Tracked leaf: accumulate into persistent grad.
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = flowing.get(id(parent))
                flowing[id(parent)] = pg if acc is None else acc + pg

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other, like=self)
        data = self.data + other.data
        sa, sb = self.data.shape, other.data.shape
        return Tensor._from_op(
            data, (self, other),
            lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = as_tensor(other, like=self)
        data = self.data - other.data
        sa, sb = self.data.shape, other.data.shape
        return Tensor._from_op(
            data, (self, other),
            lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
        )

    def __rsub__(self, other):
        return as_tensor(other, like=self) - self

    def __mul__(self, other):
        other = as_tensor(other, like=self)
        data = self.data * other.data
        a, b = self, other
        return Tensor._from_op(
            data, (a, b),
            lambda g: (
                _unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other, like=self)
        data = self.data / other.data
        a, b = self, other
        return Tensor._from_op(
            data, (a, b),
            lambda g: (
                _unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
            ),
        )

    def __rtruediv__(self, other):
        return as_tensor(other, like=self) / self

    def __pow__(self, exponent: float):
        if not np.isscalar(exponent):
            raise ShapeError("only scalar exponents are supported")
        data = self.data ** exponent
        x = self
        return Tensor._from_op(
            data, (x,),
            lambda g: (g * exponent * x.data ** (exponent - 1),),
        )

    def __matmul__(self, other):
        other = as_tensor(other, like=self)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError(
                f"matmul expects 2-D operands, got {self.shape} @ {other.shape}"
            )
        data = self.data @ other.data
        a, b = self, other
        return Tensor._from_op(
            data, (a, b),
            lambda g: (g @ b.data.T, a.data.T @ g),
        )

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        orig = self.data.shape
        data = self.data.reshape(shape)
        return Tensor._from_op(data, (self,), lambda g: (g.reshape(orig),))

    def __getitem__(self, key) -> "Tensor":
        data = self.data[key]
        src = self
        def vjp(g):
            full = np.zeros_like(src.data)
            full[key] = g
            return (full,)
        return Tensor._from_op(data, (src,), vjp)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)
        src = self
        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, src.data.shape).astype(src.data.dtype, copy=True),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, src.data.shape).astype(src.data.dtype, copy=True),)
        return Tensor._from_op(np.asarray(data), (src,), vjp)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def max(self, axis: int) -> "Tensor":
        """Maximum along one axis; ties route gradient to the lowest index."""
        idx = np.argmax(self.data, axis=axis)
        data = np.take_along_axis(self.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
        src = self
        def vjp(g):
            full = np.zeros_like(src.data)
            np.put_along_axis(
                full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis
            )
            return (full,)
        return Tensor._from_op(data, (src,), vjp)

    # -- elementwise nonlinearities -------------------------------------------

    def exp(self) -> "Tensor":
        data = np.exp(self.data)
        return Tensor._from_op(data, (self,), lambda g: (g * data,))

    def sqrt(self) -> "Tensor":
        data = np.sqrt(self.data)
        return Tensor._from_op(data, (self,), lambda g: (g * (0.5 / data),))

    def tanh(self) -> "Tensor":
        data = np.tanh(self.data)
        return Tensor._from_op(data, (self,), lambda g: (g * (1.0 - data * data),))

    def sigmoid(self) -> "Tensor":
        data = 1.0 / (1.0 + np.exp(-self.data))
        return Tensor._from_op(data, (self,), lambda g: (g * data * (1.0 - data),))

    def clamp_min(self, floor: float) -> "Tensor":
        """max(self, floor) elementwise; gradient is zero where clamped."""
        data = np.maximum(self.data, floor)
        mask = self.data > floor
        return Tensor._from_op(
            data, (self,), lambda g: (g * mask,)
        )


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    """Wrap `value` as an untracked Tensor, matching `like`'s dtype."""
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else np.float32
    return Tensor(np.asarray(value, dtype=dtype))


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along `axis`; gradient splits back to the operands."""
    ts = list(tensors)
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    bounds = np.cumsum(sizes)[:-1]
    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))
    return Tensor._from_op(data, tuple(ts), vjp)


def gather_rows(values: Tensor, indices: np.ndarray) -> Tensor:
    """Pick ``values[i, indices[i]]`` for each row i of a 2-D tensor."""
    if values.ndim != 2:
        raise ShapeError(f"gather_rows expects a 2-D tensor, got {values.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    rows = np.arange(values.data.shape[0])
    data = values.data[rows, idx]
    src = values
    def vjp(g):
        full = np.zeros_like(src.data)
        full[rows, idx] = g
        return (full,)
    return Tensor._from_op(data, (src,), vjp)


def _norms(v: Tensor, axis: int) -> Tensor:
    return ((v * v).sum(axis=axis) + NORM_EPS).sqrt()


def l2_norm(v: Tensor, axis: int = -1) -> Tensor:
    """Euclidean norm along `axis`, with an epsilon keeping the gradient
    finite at the origin."""
    return _norms(v, axis)


def cosine_similarity(a: Tensor, b: Tensor, eps: float = 1e-8) -> Tensor:
    """Cosine similarity ``a.b / (|a||b| + eps)`` along the last axis.

    The epsilon guards against division by zero when either vector is null,
    in which case the similarity is 0 rather than an error.
    """
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    dot = (a * b).sum(axis=-1)
    denom = _norms(a, -1) * _norms(b, -1) + eps
    return dot / denom
