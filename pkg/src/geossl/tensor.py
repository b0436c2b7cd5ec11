"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation that touches a tensor with ``requires_grad=True`` records its
inputs and a backward rule on the output node.  :func:`backward` linearises the
resulting graph into a :class:`Tape` (topological order) and replays it once in
reverse.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Incompatible tensor shapes."""


class DomainError(ValueError):
    """Input outside the domain of a function (log of 0, division by zero, ...)."""


class NonDeterminismError(RuntimeError):
    pass


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, finite differences)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def _raise_not_scalar(t: Tensor):
    raise ShapeError(f"expected a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out.op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, opname: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} are not broadcastable") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")
    out = a.data / b.data

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), backward, "div")


def elementwise(a, b, kind: str) -> Tensor:
    ops = {"add": add, "sub": sub, "mul": mul, "div": div}
    if kind not in ops:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return ops[kind](a, b)


def power(a: Tensor, exponent: float) -> Tensor:
    x = a.data
    if exponent < 1 and np.any(x <= 0) and not float(exponent).is_integer():
        raise DomainError("power: non-integer exponent below 1 needs a positive base")
    out = x ** exponent
    return _make(out, (a,), lambda g: (g * exponent * x ** (exponent - 1),), "pow")


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(a.data)

    def backward(g):
        # subgradient 0 at the kink
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g * 0.5 / safe, 0.0),)

    return _make(out, (a,), backward, "sqrt")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log of a non-positive value")
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,), "log")


def relu(a: Tensor) -> Tensor:
    x = a.data
    return _make(np.maximum(x, 0.0), (a,), lambda g: (g * (x > 0),), "relu")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        d = 1.0 - t * t
        d *= x
        d *= _GELU_C * 0.5
        d *= 1.0 + 3 * 0.044715 * x2
        d += 0.5
        d += 0.5 * t
        d *= g
        return (d,)

    return _make(out, (a,), backward, "gelu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out ** 2),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    ex = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a: Tensor) -> Tensor:
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    ex = np.exp(-np.abs(x))
    sig = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return _make(out, (a,), lambda g: (g * sig,), "softplus")


_ACTIVATIONS = {"relu": relu, "gelu": gelu, "tanh": tanh, "sigmoid": sigmoid,
                "exp": exp, "log": log, "softplus": softplus}


def activation(x: Tensor, kind: str) -> Tensor:
    if kind not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}")
    return _ACTIVATIONS[kind](x)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} differ") from None
    A, B = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(B, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(A, -1, -2) @ g if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return _make(A @ B, (a, b), backward, "matmul")


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim: int):
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for a {ndim}-d tensor")
        out.append(ax % ndim)
    return tuple(out)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    out = np.sum(a.data, axis=axes, keepdims=keepdims)

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    n = a.size if axes is None else int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def reduce(x: Tensor, kind: str, axis=None) -> Tensor:
    if kind == "sum":
        return tsum(x, axis)
    if kind == "mean":
        return mean(x, axis)
    raise ValueError(f"unknown reduction {kind!r}")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _norm_axis(axis, x.ndim)[0]
    out = x.data - x.data.max(axis=ax, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=ax, keepdims=True)

    def backward(g):
        gx = g * out
        gx -= out * gx.sum(axis=ax, keepdims=True)
        return (gx,)

    return _make(out, (x,), backward, "softmax")


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    ax = _norm_axis(axis, x.ndim)[0]
    m = x.data.max(axis=ax, keepdims=True)
    s = np.exp(x.data - m).sum(axis=ax, keepdims=True)
    out_k = m + np.log(s)
    soft = np.exp(x.data - out_k)
    out = out_k if keepdims else np.squeeze(out_k, axis=ax)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (g * soft,)

    return _make(out, (x,), backward, "logsumexp")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply ``gain * x_hat + bias``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gain, bias = as_tensor(gain), as_tensor(bias)
    out = xhat * gain.data + bias.data

    def backward(g):
        gxhat = g * gain.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return (gx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape))

    return _make(out, (x, gain, bias), backward, "layer_norm")


# ---------------------------------------------------------------- shape plumbing

def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    out = np.transpose(a.data, axes)
    inv = None if axes is None else tuple(np.argsort(axes))
    return _make(out, (a,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in parts)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g  # basic indexing never repeats an element
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(np.array(out, copy=True), (a,), backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ax = _norm_axis(axis, tensors[0].ndim)[0]
    try:
        out = np.concatenate([t.data for t in tensors], axis=ax)
    except ValueError as exc:
        raise ShapeError(f"concat: {[t.shape for t in tensors]}: {exc}") from None
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(out, tuple(tensors), backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis=axis)


def broadcast_to(a: Tensor, shape) -> Tensor:
    out = np.broadcast_to(a.data, shape).copy()
    return _make(out, (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation. x: [B, C, H, W], w: [O, C, k, k], b: [O]."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: incompatible input {x.shape} and kernel {w.shape}")
    B, C, H, W = x.shape
    O, _, k, k2 = w.shape
    if k != k2:
        raise ShapeError("conv2d: only square kernels are supported")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :Ho, :Wo]  # [B, C, Ho, Wo, k, k]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * k * k)
    wm = w.data.reshape(O, C * k * k)
    out = (cols @ wm.T).reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)
    parents: tuple[Tensor, ...] = (x, w)
    if b is not None:
        out = out + b.data.reshape(1, O, 1, 1)
        parents = (x, w, b)

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        gw = (gm.T @ cols).reshape(w.shape)
        gx = None
        if x.requires_grad:
            gcols = (gm @ wm).reshape(B, Ho, Wo, C, k, k)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + H, padding:padding + W]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _make(out, parents, backward, "conv2d")


# ---------------------------------------------------------------- backward

@dataclass
class TapeEntry:
    output: Tensor
    inputs: tuple[Tensor, ...]
    rule: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Recorded operations in topological order (inputs always precede outputs)."""

    entries: list[TapeEntry] = field(default_factory=list)
    leaves: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_graph(cls, root: Tensor) -> "Tape":
        tape = cls()
        seen: set[int] = set()
        # iterative post-order DFS; parent order is fixed so the linearisation is deterministic
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                if node._backward is not None:
                    tape.entries.append(TapeEntry(node, node._parents, node._backward))
                else:
                    tape.leaves.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in reversed(node._parents):
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return tape

    def __len__(self) -> int:
        return len(self.entries)


def backward(loss: Tensor) -> Tape:
    """Populate ``.grad`` of every requires_grad leaf reachable from ``loss``.

    Leaf gradients are reset at the start of each call; nothing accumulates
    across calls.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor that requires grad")
    tape = Tape.from_graph(loss)
    for leaf in tape.leaves:
        leaf.grad = np.zeros_like(leaf.data)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        g = grads.pop(id(entry.output), None)
        if g is None:
            continue
        for inp, gi in zip(entry.inputs, entry.rule(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp._backward is None:
                inp.grad += gi
            elif id(inp) in grads:
                grads[id(inp)] = grads[id(inp)] + gi
            else:
                grads[id(inp)] = gi
    if loss._backward is None:
        loss.grad = np.ones_like(loss.data)
    return tape


def grad_check(f: Callable[[], Tensor] | Callable[[Tensor], Tensor], x: Tensor | Iterable[Tensor],
               step: float = 1e-5, max_coords: int | None = None, seed: int = 0) -> float:
    """Max relative error between autodiff and central differences.

    ``x`` is one tensor (``f`` takes it as argument) or a list of tensors
    (``f`` takes no arguments and closes over them).  With ``max_coords`` only
    that many randomly chosen coordinates per tensor are differenced.
    """
    if not 1e-6 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-6, 1e-3]")
    if isinstance(x, Tensor):
        params = [x]
        fn = lambda: f(x)  # noqa: E731
    else:
        params = list(x)
        fn = f
    for p in params:
        p.requires_grad = True
    with no_grad():
        first, second = fn().data.copy(), fn().data.copy()
    if not np.array_equal(first, second):
        raise NonDeterminismError("f returned different values for identical inputs")
    loss = fn()
    backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for i in idx:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + step
                fp = float(fn().data)
                flat[i] = orig - step
                fm = float(fn().data)
            flat[i] = orig
            num = (fp - fm) / (2 * step)
            err = abs(ga.reshape(-1)[i] - num) / max(abs(num), 1e-8)
            worst = max(worst, err)
    return worst
