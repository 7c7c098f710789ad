"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the operations the model needs are provided.  Every operation takes and
returns :class:`Tensor` objects; when a :class:`Tape` is active and any input
requires a gradient, the operation appends its gradient rule to the tape.
:func:`backward` replays the tape in exact reverse recording order.

Example::

    w = Tensor(np.ones((3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = tg.sum(tg.matmul(x, w))
    backward(tape, loss)
    w.grad
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

_state = threading.local()

NORM_EPS = 1e-12


class Tensor:
    __slots__ = ("value", "requires_grad", "grad", "tape_id")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scalar_mul(self, -1.0)


class _Record:
    __slots__ = ("inputs", "output", "rule")

    def __init__(self, inputs, output, rule):
        self.inputs = inputs
        self.output = output
        self.rule = rule


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; nested tapes are not supported.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        if getattr(_state, "tape", None) is not None:
            raise RuntimeError("a tape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _state.tape = None

    def __len__(self) -> int:
        return len(self.records)

    def clear(self) -> None:
        for rec in self.records:
            rec.output.tape_id = None
        self.records = []


def active_tape() -> Tape | None:
    return getattr(_state, "tape", None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(value: np.ndarray, op: str) -> None:
    if not np.isfinite(value).all():
        raise FloatingPointError(f"{op} produced non-finite values")


def _make(value: np.ndarray, inputs: Sequence[Tensor], rule: Callable, op: str) -> Tensor:
    """Wrap an op result and record ``rule`` on the active tape if needed.

    ``rule(grad_out)`` returns one gradient (or None) per input.
    """
    _check_finite(value, op)
    out = Tensor(value)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.tape_id = len(tape.records)
        tape.records.append(_Record(tuple(inputs), out, rule))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- linear ops


def matmul(a, b) -> Tensor:
    """``a @ b`` for 2-D ``b``; leading dimensions of ``a`` are batched."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 2 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.value @ b.value

    def rule(g):
        ga = g @ b.value.T
        a2 = a.value.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _make(out, (a, b), rule, "matmul")


def bmm_nt(a, b) -> Tensor:
    """Batched ``a[i] @ b[i].T`` for 3-D inputs of shape (n, m, d)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 3 or a.shape != b.shape:
        raise ValueError(f"bmm_nt shape mismatch: {a.shape}, {b.shape}")
    out = np.einsum("nid,njd->nij", a.value, b.value)

    def rule(g):
        return (np.einsum("nij,njd->nid", g, b.value),
                np.einsum("nij,nid->njd", g, a.value))

    return _make(out, (a, b), rule, "bmm_nt")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _broadcast_op(np.add, a, b, "add")

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), rule, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _broadcast_op(np.subtract, a, b, "sub")

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), rule, "sub")


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    out = _broadcast_op(np.multiply, a, b, "mul")

    def rule(g):
        return (_unbroadcast(g * b.value, a.shape),
                _unbroadcast(g * a.value, b.shape))

    return _make(out, (a, b), rule, "mul")


def _broadcast_op(fn, a: Tensor, b: Tensor, op: str) -> np.ndarray:
    try:
        return fn(a.value, b.value)
    except ValueError as exc:
        raise ValueError(f"{op} shape mismatch: {a.shape} vs {b.shape}") from exc


def scalar_mul(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return _make(x.value * c, (x,), lambda g: (g * c,), "scalar_mul")


def sparse_matmul(op: sp.spmatrix, x) -> Tensor:
    """Constant sparse operator applied to a 2-D tensor: ``op @ x``."""
    x = as_tensor(x)
    op = sp.csr_matrix(op)
    if x.ndim != 2 or op.shape[1] != x.shape[0]:
        raise ValueError(f"sparse_matmul shape mismatch: {op.shape} @ {x.shape}")
    out = np.asarray(op @ x.value)
    op_t = op.T.tocsr()
    return _make(out, (x,), lambda g: (np.asarray(op_t @ g),), "sparse_matmul")


# ------------------------------------------------------------ shape plumbing


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _make(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def take(x, index) -> Tensor:
    """Rows of ``x`` selected along axis 0 (repeats allowed)."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]

    def rule(g):
        scatter = sp.csr_matrix((np.ones(len(index)), (index, np.arange(len(index)))), shape=(n, len(index)))
        width = int(np.prod(g.shape[1:], dtype=np.int64))
        return (np.asarray(scatter @ g.reshape(len(index), width)).reshape((n,) + g.shape[1:]),)

    return _make(x.value[index], (x,), rule, "take")


def segment_sum(x, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``num_segments`` buckets given by ``segment_ids``."""
    x = as_tensor(x)
    ids = np.asarray(segment_ids, dtype=np.int64)
    rows = x.shape[0]
    flat = x.value.reshape(rows, int(np.prod(x.shape[1:], dtype=np.int64)))
    gather = sp.csr_matrix((np.ones(rows), (ids, np.arange(rows))), shape=(num_segments, rows))
    out = np.asarray(gather @ flat).reshape((num_segments,) + x.shape[1:])
    return _make(out, (x,), lambda g: (g[ids],), "segment_sum")


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = np.sum(x.value, axis=axis, keepdims=keepdims)
    shape = x.shape

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.asarray(out), (x,), rule, "sum")


# ---------------------------------------------------------------- nonlinear


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.value > 0
    return _make(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), "relu")


def l2_normalize_rows(x, eps: float = NORM_EPS) -> Tensor:
    """Scale each vector along the last axis to unit length.

    Vectors with norm <= eps become zero and pass no gradient.
    """
    x = as_tensor(x)
    norm = np.sqrt(np.sum(x.value * x.value, axis=-1, keepdims=True))
    live = norm > eps
    safe = np.where(live, norm, 1.0)
    y = np.where(live, x.value / safe, 0.0)

    def rule(g):
        dot = np.sum(g * y, axis=-1, keepdims=True)
        return (np.where(live, (g - y * dot) / safe, 0.0),)

    return _make(y, (x,), rule, "l2_normalize_rows")


def _softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def softmax_rows(x) -> Tensor:
    """Softmax along the last axis, stabilized by max subtraction."""
    x = as_tensor(x)
    y = _softmax(x.value)

    def rule(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return _make(y, (x,), rule, "softmax_rows")


def log_softmax_rows(x) -> Tensor:
    x = as_tensor(x)
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    soft = np.exp(y)

    def rule(g):
        return (g - soft * np.sum(g, axis=-1, keepdims=True),)

    return _make(y, (x,), rule, "log_softmax_rows")


def clamp_min(x, floor: float) -> Tensor:
    """``max(x, floor)``; gradient is zero where the floor is active."""
    x = as_tensor(x)
    keep = x.value >= floor
    return _make(np.where(keep, x.value, floor), (x,), lambda g: (g * keep,), "clamp_min")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ex = np.exp(v[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.value)
    return _make(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def log_sigmoid(x) -> Tensor:
    """``ln(sigmoid(x))`` computed without overflow."""
    x = as_tensor(x)
    v = x.value
    out = np.minimum(v, 0.0) - np.log1p(np.exp(-np.abs(v)))
    return _make(out, (x,), lambda g: (g * _sigmoid(-v),), "log_sigmoid")


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity in eval mode or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        rng = np.random.default_rng()
    scale = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _make(x.value * scale, (x,), lambda g: (g * scale,), "dropout")


# ----------------------------------------------------------------- backward


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Propagate d(loss)/d(.) through ``tape`` and store it on ``.grad``.

    Every tensor that requires a gradient and feeds the loss receives it.
    Returns the gradient buffers keyed by ``id(tensor)``; the tape is cleared.
    """
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.tape_id is None or loss.tape_id >= len(tape.records) or tape.records[loss.tape_id].output is not loss:
        raise ValueError("loss was not recorded on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    owners: dict[int, Tensor] = {id(loss): loss}
    for rec in reversed(tape.records):
        g = grads.get(id(rec.output))
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.rule(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.asarray(gi, dtype=np.float64).reshape(inp.shape)
                owners[key] = inp
    for key, t in owners.items():
        t.grad = grads[key]
    tape.clear()
    return grads
