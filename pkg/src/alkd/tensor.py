"""Minimal reverse-mode autodiff on numpy arrays.

Covers exactly the primitives the student model and its losses need:
matmul, broadcast add/mul, gelu, layer norm, (log-)softmax, gathers,
reductions, integer powers, logaddexp against a constant, and dropout.
Forward values live in numpy arrays; every primitive that runs under an
active :class:`Tape` records a closure that propagates the output gradient
back to its inputs. Gradients accumulate with ``+=`` until explicitly
zeroed.

Training runs in float32 by default; gradient-check tests switch the whole
stack to float64 through :func:`default_dtype`. With ``set_debug_checks``
enabled, every primitive validates that its output is finite and raises
``DivergenceError`` at the op that produced the bad value.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DivergenceError

_DTYPE = np.float32
_DEBUG_CHECKS = False
_DETERMINISTIC = True
_ACTIVE_TAPE: Optional["Tape"] = None


def set_default_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DTYPE = dtype.type


def get_default_dtype():
    return _DTYPE


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily switch the global float width (used by gradient checks)."""
    prev = _DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


def set_debug_checks(flag: bool) -> None:
    """Toggle per-primitive NaN/Inf validation (off by default: it costs a pass per op)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(flag)


def set_deterministic(flag: bool) -> None:
    """Pin reduction/matmul summation order.

    All primitives are plain numpy calls, which are order-stable for a fixed
    BLAS thread count; the flag is consulted by callers (training loop, CLI)
    that additionally suppress wall-clock fields in logs.
    """
    global _DETERMINISTIC
    _DETERMINISTIC = bool(flag)


def is_deterministic() -> bool:
    return _DETERMINISTIC


class Tensor:
    """Shape-carrying numeric array with gradient accumulation."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
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

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        grad = ", grad" if self.grad is not None else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{grad})"

    # operator sugar; the functional forms below do the work
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of executed primitives, replayed in reverse by backward()."""

    __slots__ = ("_nodes",)

    def __init__(self):
        # each node: (out, inputs, vjp) with vjp(g) -> per-input grad arrays
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> None:
        self._nodes.append((out, inputs, vjp))

    def __len__(self) -> int:
        return len(self._nodes)


@contextlib.contextmanager
def record():
    """Open a fresh tape; primitives executed inside are recorded on it."""
    global _ACTIVE_TAPE
    prev = _ACTIVE_TAPE
    tape = Tape()
    _ACTIVE_TAPE = tape
    try:
        yield tape
    finally:
        _ACTIVE_TAPE = prev


@contextlib.contextmanager
def no_grad():
    global _ACTIVE_TAPE
    prev = _ACTIVE_TAPE
    _ACTIVE_TAPE = None
    try:
        yield
    finally:
        _ACTIVE_TAPE = prev


def backward(root: Tensor, tape: Tape) -> None:
    """Populate .grad for every requires_grad tensor reachable from root.

    Visits tape nodes in reverse execution order exactly once. Repeated
    calls accumulate into existing gradients.
    """
    if root.shape != ():
        raise DimensionError(f"backward root must be scalar, got shape {root.shape}")
    seed = np.ones((), dtype=root.data.dtype)
    root.accumulate_grad(seed)
    # per-pass flow, kept apart from .grad so repeated calls add one seed each
    flow: dict[int, np.ndarray] = {id(root): seed}
    for out, inputs, vjp in reversed(tape._nodes):
        g = flow.get(id(out))
        if g is None:
            continue
        for t, gt in zip(inputs, vjp(g)):
            if gt is None or not t.requires_grad:
                continue
            key = id(t)
            flow[key] = flow[key] + gt if key in flow else gt
            t.accumulate_grad(gt)


def _finish(out_data: np.ndarray, inputs: tuple[Tensor, ...], vjp: Callable, op: str) -> Tensor:
    if _DEBUG_CHECKS and not np.all(np.isfinite(out_data)):
        raise DivergenceError(f"non-finite value produced by {op}")
    out = Tensor(out_data)
    # asarray above may cast; keep the computed dtype
    out.data = out_data
    if _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _ACTIVE_TAPE.record(out, inputs, vjp)
    return out


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_DTYPE))


def constant(data, name: str = "") -> Tensor:
    """Non-differentiable tensor (teacher vectors, masks, position biases)."""
    return Tensor(np.asarray(data, dtype=_DTYPE), requires_grad=False, name=name)


def parameter(data, name: str = "") -> Tensor:
    return Tensor(np.asarray(data, dtype=_DTYPE), requires_grad=True, name=name)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batch broadcasting over leading axes.

    Gradient contract: d(a) = g @ b^T, d(b) = a^T @ g (batch axes reduced
    back to each operand's shape).
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out = ad @ bd

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, b.shape)
        return ga, gb

    return _finish(out, (a, b), vjp, "matmul")


def add(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return _finish(out, (a, b), vjp, "add")


def sub(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return _finish(out, (a, b), vjp, "sub")


def mul(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    out = ad * bd

    def vjp(g):
        return (
            _unbroadcast(g * bd, a.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, b.shape) if b.requires_grad else None,
        )

    return _finish(out, (a, b), vjp, "mul")


_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715  # cubic coefficient of the tanh approximation


def gelu(x: Tensor) -> Tensor:
    """Elementwise GELU, tanh approximation: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    x = _as_tensor(x)
    xd = x.data
    u = _GELU_C * (xd + _GELU_A * xd ** 3)
    t = np.tanh(u)
    out = 0.5 * xd * (1.0 + t)

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * xd ** 2)
        dx = 0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t ** 2) * du
        return (g * dx,)

    return _finish(out, (x,), vjp, "gelu")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row (last axis) zero-mean/unit-variance normalization, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise DimensionError("layer_norm over an empty last axis")
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    var = ((xd - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    out = xhat * gain.data + bias.data

    def vjp(g):
        gx = gg = gb = None
        if gain.requires_grad:
            gg = (g * xhat).reshape(-1, d).sum(axis=0)
        if bias.requires_grad:
            gb = g.reshape(-1, d).sum(axis=0)
        if x.requires_grad:
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            gx = inv * (dxhat - m1 - xhat * m2)
        return gx, gg, gb

    return _finish(out, (x, gain, bias), vjp, "layer_norm")


def log_softmax(x: Tensor) -> Tensor:
    """Numerically stable log-softmax over the last axis."""
    x = _as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _finish(out, (x,), vjp, "log_softmax")


def softmax(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _finish(out, (x,), vjp, "softmax")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    in_shape = x.shape
    out = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(in_shape),) if x.requires_grad else (None,)

    return _finish(out, (x,), vjp, "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def vjp(g):
        return (g.transpose(inv),) if x.requires_grad else (None,)

    return _finish(out, (x,), vjp, "transpose")


def gather_rows(table: Tensor, idx: np.ndarray) -> Tensor:
    """table[idx] along axis 0 (embedding lookup); scatter-add on backward."""
    table = _as_tensor(table)
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise DimensionError(
            f"gather index out of range [0, {table.shape[0]}): {int(idx.min())}..{int(idx.max())}"
        )
    out = table.data[idx]

    def vjp(g):
        if not table.requires_grad:
            return (None,)
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _finish(out, (table,), vjp, "gather_rows")


def gather_last(x: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one entry along the last axis per leading position."""
    x = _as_tensor(x)
    idx = np.asarray(idx)
    if idx.shape != x.shape[:-1]:
        raise DimensionError(f"gather_last index shape {idx.shape} != {x.shape[:-1]}")
    out = np.take_along_axis(x.data, idx[..., None], axis=-1)[..., 0]
    last = x.shape[-1]

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        gx = np.zeros_like(x.data).reshape(-1, last)
        rows = np.arange(gx.shape[0])
        np.add.at(gx, (rows, idx.reshape(-1)), g.reshape(-1))
        return (gx.reshape(x.shape),)

    return _finish(out, (x,), vjp, "gather_last")


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=False),)

    return _finish(np.asarray(out), (x,), vjp, "reduce_sum")


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.size if axis is None else np.prod(
        [x.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((np.broadcast_to(g, x.shape) / count).astype(x.dtype, copy=False),)

    return _finish(np.asarray(out), (x,), vjp, "reduce_mean")


def pow_const(x: Tensor, p) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    out = xd ** p

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        return (g * p * xd ** (p - 1),)

    return _finish(out, (x,), vjp, "pow_const")


def _sigmoid(t: np.ndarray) -> np.ndarray:
    pos = t >= 0
    out = np.empty_like(t)
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logaddexp_const(x: Tensor, log_c: float) -> Tensor:
    """log(exp(x) + C) with C given as log C; stable for |x| up to ~1e3."""
    x = _as_tensor(x)
    out = np.logaddexp(x.data, np.asarray(log_c, dtype=x.dtype))

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        return (g * _sigmoid(x.data - log_c),)

    return _finish(out, (x,), vjp, "logaddexp_const")


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    if rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_tensor(x)
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    out = x.data * mask

    def vjp(g):
        return (g * mask,) if x.requires_grad else (None,)

    return _finish(out, (x,), vjp, "dropout")


def check_finite(t: Tensor, what: str = "tensor") -> None:
    if not np.all(np.isfinite(t.data)):
        raise DivergenceError(f"non-finite value in {what}")
