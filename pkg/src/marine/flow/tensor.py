"""Reverse-mode automatic differentiation over float64 numpy arrays.

Operations record onto the innermost active :class:`Tape` of the calling
thread. Outside a tape they only compute values, which keeps inference free
of graph bookkeeping and safe to run from several worker threads.
"""
import logging
import threading
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import ShapeMismatch

_LOGGER = logging.getLogger(__name__)

_STATE = threading.local()

MASK_VALUE = -1e9

Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def _tapes() -> List["Tape"]:
    stack = getattr(_STATE, "tapes", None)
    if stack is None:
        stack = _STATE.tapes = []
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _tapes()
    return stack[-1] if stack else None


class Tape:
    """Records operations for a single backward pass."""

    def __init__(self) -> None:
        self._records: List[Tuple["Tensor", Tuple["Tensor", ...], Backward]] = []

    def __enter__(self) -> "Tape":
        _tapes().append(self)
        return self

    def __exit__(self, exc_type, exc_value, traceback) -> None:
        _tapes().remove(self)

    def __len__(self) -> int:
        return len(self._records)

    def record(self, output: "Tensor", parents: Tuple["Tensor", ...], backward: Backward) -> None:
        self._records.append((output, parents, backward))

    def backward(self, loss: "Tensor", grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            grad = np.ones_like(loss.value)
        elif np.shape(grad) != loss.shape:
            raise ShapeMismatch("backward", np.shape(grad), loss.shape)
        loss._accumulate(np.asarray(grad, dtype=np.float64))

        for output, parents, backward in reversed(self._records):
            if output.grad is None:
                continue
            for parent, g in zip(parents, backward(output.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent._accumulate(_unbroadcast(g, parent.shape))
        self._records.clear()


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None) -> None:
        self.value = np.array(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = np.zeros_like(self.value) if requires_grad else None

    def __repr__(self) -> str:
        label = " {}".format(self.name) if self.name else ""
        return "<Tensor{} shape={}>".format(label, self.shape)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def item(self) -> float:
        return float(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(value: np.ndarray, parents: Tuple[Tensor, ...], backward: Backward) -> Tensor:
    out = Tensor(value)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, backward)
    return out


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(op, a.shape, b.shape) from None


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _result(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _result(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _result(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    return _result(
        a.value / b.value,
        (a, b),
        lambda g: (g / b.value, -g * a.value / (b.value * b.value)),
    )


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _result(x.value * factor, (x,), lambda g: (g * factor,))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    try:
        value = a.value @ b.value
    except ValueError:
        raise ShapeMismatch("matmul", a.shape, b.shape) from None

    def backward(g):
        return (g @ np.swapaxes(b.value, -1, -2), np.swapaxes(a.value, -1, -2) @ g)

    return _result(value, (a, b), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch("concat", *(t.shape for t in tensors)) from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(value, tensors, backward)


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.value)
        np.add.at(full, index, g)
        return (full,)

    return _result(x.value[index], (x,), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        value = x.value.reshape(shape)
    except ValueError:
        raise ShapeMismatch("reshape", x.shape, tuple(shape)) from None
    return _result(value, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    axes = tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeMismatch("transpose", x.shape, axes)
    inverse = np.argsort([a % x.ndim for a in axes])
    return _result(np.transpose(x.value, axes), (x,), lambda g: (np.transpose(g, inverse),))


def tanh(x: Tensor) -> Tensor:
    value = np.tanh(x.value)
    return _result(value, (x,), lambda g: (g * (1.0 - value * value),))


def relu(x: Tensor) -> Tensor:
    positive = x.value > 0
    return _result(np.where(positive, x.value, 0.0), (x,), lambda g: (g * positive,))


def exp(x: Tensor) -> Tensor:
    value = np.exp(x.value)
    return _result(value, (x,), lambda g: (g * value,))


def minimum(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("minimum", a, b)
    pick_a = a.value <= b.value
    return _result(
        np.minimum(a.value, b.value), (a, b), lambda g: (g * pick_a, g * ~pick_a)
    )


def clip(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.value >= low) & (x.value <= high)
    return _result(np.clip(x.value, low, high), (x,), lambda g: (g * inside,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (value * (g - (g * value).sum(axis=axis, keepdims=True)),)

    return _result(value, (x,), backward)


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis; affine terms are applied by the caller."""
    mu = x.value.mean(axis=-1, keepdims=True)
    centered = x.value - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    value = centered * inv_std

    def backward(g):
        return (
            inv_std
            * (
                g
                - g.mean(axis=-1, keepdims=True)
                - value * (g * value).mean(axis=-1, keepdims=True)
            ),
        )

    return _result(value, (x,), backward)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Stride-1 valid convolution of (B, C, H, W) input with (O, C, kh, kw) kernels."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch("conv2d", x.shape, weight.shape)
    out_channels, _, kh, kw = weight.shape
    if kh > x.shape[2] or kw > x.shape[3]:
        raise ShapeMismatch("conv2d", x.shape, weight.shape)
    if bias is not None and bias.shape != (out_channels,):
        raise ShapeMismatch("conv2d", weight.shape, bias.shape)

    windows = sliding_window_view(x.value, (kh, kw), axis=(2, 3))
    value = np.einsum("bchwij,ocij->bohw", windows, weight.value, optimize=True)
    if bias is not None:
        value = value + bias.value[None, :, None, None]
    out_h, out_w = value.shape[2:]

    def backward(g):
        grad_x = np.zeros_like(x.value)
        for i in range(kh):
            for j in range(kw):
                grad_x[:, :, i : i + out_h, j : j + out_w] += np.einsum(
                    "bohw,oc->bchw", g, weight.value[:, :, i, j], optimize=True
                )
        grad_w = np.einsum("bchwij,bohw->ocij", windows, g, optimize=True)
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(value, parents, backward)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    value = x.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _result(value, (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def masked_fill(x: Tensor, mask, value: float = MASK_VALUE) -> Tensor:
    """Replace entries where ``mask`` is true; those entries get no gradient."""
    mask = np.asarray(mask, dtype=bool)
    try:
        mask = np.broadcast_to(mask, x.shape)
    except ValueError:
        raise ShapeMismatch("masked_fill", x.shape, mask.shape) from None
    return _result(np.where(mask, value, x.value), (x,), lambda g: (np.where(mask, 0.0, g),))


class ParameterStore:
    """Named trainable tensors with a stable flattening order."""

    def __init__(self) -> None:
        self._params: Dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError("Duplicate parameter {}".format(name))
        tensor = Tensor(value, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> Iterable[Tuple[str, Tensor]]:
        return self._params.items()

    @property
    def names(self) -> List[str]:
        return list(self._params)

    @property
    def shapes(self) -> List[Tuple[int, ...]]:
        return [t.shape for t in self._params.values()]

    @property
    def size(self) -> int:
        return int(np.sum([t.size for t in self._params.values()], dtype=np.int64))

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def flatten(self) -> np.ndarray:
        if not self._params:
            return np.zeros(0)
        return np.concatenate([t.value.reshape(-1) for t in self._params.values()])

    def flat_grad(self) -> np.ndarray:
        if not self._params:
            return np.zeros(0)
        return np.concatenate([t.grad.reshape(-1) for t in self._params.values()])

    def load_flat(self, buffer: np.ndarray) -> None:
        buffer = np.asarray(buffer, dtype=np.float64).reshape(-1)
        if buffer.size != self.size:
            raise ShapeMismatch("load_flat", (self.size,), buffer.shape)
        offset = 0
        for tensor in self._params.values():
            tensor.value = buffer[offset : offset + tensor.size].reshape(tensor.shape).copy()
            offset += tensor.size


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Largest relative error between tape gradients and central differences.

    ``samples`` limits the number of checked coordinates per parameter.
    """
    if eps <= 0:
        raise ValueError("eps must be positive, got {}".format(eps))
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
        if loss.size != 1:
            raise ShapeMismatch("grad_check", loss.shape, ())
        tape.backward(loss)
    analytic = [p.grad.reshape(-1).copy() for p in params]

    worst = 0.0
    for p, grads in zip(params, analytic):
        flat = p.value.reshape(-1)
        indices = np.arange(flat.size)
        if samples is not None and samples < flat.size:
            indices = rng.choice(flat.size, size=samples, replace=False)
        for index in indices:
            original = flat[index]
            flat[index] = original + eps
            upper = float(f().value)
            flat[index] = original - eps
            lower = float(f().value)
            flat[index] = original
            numeric = (upper - lower) / (2.0 * eps)
            error = abs(grads[index] - numeric) / max(1e-8, abs(grads[index]) + abs(numeric))
            worst = max(worst, error)
    _LOGGER.debug("Gradient check over %d tensors: max relative error %.3e", len(params), worst)
    return worst
