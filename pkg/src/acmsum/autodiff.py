"""Tape-based reverse-mode autodiff over dense float64 arrays.

Ops are registered by name in ``_OPS``; ``_apply`` runs the forward pass
and, when a :class:`Tape` is active, records an entry so ``Tape.backward``
can replay the chain rule in reverse.  Everything is float64 and
single-threaded, so a fixed seed gives bit-identical training runs.

Any op producing a NaN or Inf raises :class:`NumericError` immediately;
badly weighted logit fusion should fail loudly, not poison a training run.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from . import kernels


class NumericError(RuntimeError):
    """A non-finite value appeared in an op output."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the op."""


class Tensor:
    """Dense float64 array plus an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in tensor {name or '<anon>'}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != data shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, name={self.name!r})"


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def constant(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=False, name=name)


# ---------------------------------------------------------------------------
# op registry and tape
# ---------------------------------------------------------------------------

Forward = Callable[..., tuple[np.ndarray, Any]]
Backward = Callable[[Any, np.ndarray], tuple]


@dataclass(frozen=True)
class Op:
    name: str
    forward: Forward
    backward: Backward


_OPS: dict[str, Op] = {}


def register_op(name: str, forward: Forward, backward: Backward) -> None:
    if name in _OPS:
        raise ValueError(f"op {name!r} already registered")
    _OPS[name] = Op(name, forward, backward)


@dataclass
class TapeEntry:
    op: Op
    inputs: tuple[Tensor, ...]
    out: Tensor
    ctx: Any


class Tape:
    """Records ops while active; ``backward`` replays them in reverse."""

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []
        self._recorded_ids: set[int] = set()

    def __enter__(self) -> "Tape":
        _STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _STACK.pop()
        assert popped is self

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(param) into ``.grad`` of every reachable parameter."""
        if loss.data.size != 1:
            raise ShapeError(f"backward root must be scalar, got shape {loss.shape}")
        if id(loss) not in self._recorded_ids:
            raise ValueError("loss was not produced on this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            gout = grads.pop(id(entry.out), None)
            if gout is None:
                continue
            in_grads = entry.op.backward(entry.ctx, gout)
            for tensor, g in zip(entry.inputs, in_grads):
                if g is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                prev = grads.get(key)
                # out-of-place accumulation: backward rules may hand back
                # aliased arrays (e.g. add passes gout through to both inputs)
                grads[key] = g if prev is None else prev + g
            del gout
        # whatever is left belongs to leaf tensors (parameters)
        for entry in self.entries:
            for tensor in entry.inputs:
                g = grads.pop(id(tensor), None)
                if g is not None:
                    tensor.accumulate_grad(g)
        grads.pop(id(loss), None)


_STACK: list[Tape | None] = []


def active_tape() -> Tape | None:
    return _STACK[-1] if _STACK else None


@contextmanager
def paused() -> Iterator[None]:
    """Run ops without recording (frozen-model inference inside a training tape)."""
    _STACK.append(None)
    try:
        yield
    finally:
        _STACK.pop()


def backward(loss: Tensor) -> None:
    tape = active_tape()
    if tape is None:
        raise ValueError("backward() requires an active Tape")
    tape.backward(loss)


def _apply(name: str, inputs: Sequence[Tensor], *args, **kwargs) -> Tensor:
    op = _OPS[name]
    for t in inputs:
        if not isinstance(t, Tensor):
            raise TypeError(f"{name} expects Tensor inputs, got {type(t).__name__}")
    out_data, ctx = op.forward(*[t.data for t in inputs], *args, **kwargs)
    if not np.all(np.isfinite(out_data)):
        raise NumericError(f"op {name!r} produced non-finite values")
    requires = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.requires_grad = requires
    out.name = None
    tape = active_tape()
    if tape is not None and requires:
        tape.entries.append(TapeEntry(op, tuple(inputs), out, ctx))
        tape._recorded_ids.add(id(out))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# op definitions
# ---------------------------------------------------------------------------


def _fwd_add(a, b):
    return a + b, (a.shape, b.shape)


def _bwd_add(ctx, gout):
    sa, sb = ctx
    return _unbroadcast(gout, sa), _unbroadcast(gout, sb)


register_op("add", _fwd_add, _bwd_add)


def _fwd_mul(a, b):
    return a * b, (a, b)


def _bwd_mul(ctx, gout):
    a, b = ctx
    return _unbroadcast(gout * b, a.shape), _unbroadcast(gout * a, b.shape)


register_op("mul", _fwd_mul, _bwd_mul)


def _fwd_scale(a, c):
    return a * c, c


def _bwd_scale(ctx, gout):
    return (gout * ctx,)


register_op("scale", _fwd_scale, _bwd_scale)


def _fwd_add_const(a, const):
    out = a + const
    if out.shape != a.shape:
        raise ShapeError(f"constant of shape {np.shape(const)} broadcasts {a.shape} up")
    return out, None


def _bwd_add_const(ctx, gout):
    return (gout,)


register_op("add_const", _fwd_add_const, _bwd_add_const)


def _fwd_mul_const(a, const):
    out = a * const
    if out.shape != a.shape:
        raise ShapeError(f"constant of shape {np.shape(const)} broadcasts {a.shape} up")
    return out, const


def _bwd_mul_const(ctx, gout):
    return (gout * ctx,)


register_op("mul_const", _fwd_mul_const, _bwd_mul_const)


def _fwd_matmul(a, b):
    if a.ndim not in (2, 3) or b.ndim != a.ndim:
        raise ShapeError(f"matmul supports 2D or 3D pairs, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2] or (a.ndim == 3 and a.shape[0] != b.shape[0]):
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b, (a, b)


def _bwd_matmul(ctx, gout):
    a, b = ctx
    ga = gout @ np.swapaxes(b, -1, -2)
    gb = np.swapaxes(a, -1, -2) @ gout
    return ga, gb


register_op("matmul", _fwd_matmul, _bwd_matmul)


def _to_rows(x: np.ndarray, axis: int) -> tuple[np.ndarray, int]:
    axis = axis % x.ndim
    moved = np.moveaxis(x, axis, -1)
    return np.ascontiguousarray(moved.reshape(-1, moved.shape[-1])), axis


def _from_rows(rows: np.ndarray, like: np.ndarray, axis: int) -> np.ndarray:
    moved_shape = np.moveaxis(like, axis, -1).shape
    return np.moveaxis(rows.reshape(moved_shape), -1, axis)


def _fwd_softmax(x, axis):
    if x.ndim == 0 or x.shape[axis % x.ndim] == 0:
        raise ShapeError(f"softmax over empty axis {axis} of shape {x.shape}")
    rows, axis = _to_rows(x, axis)
    p = kernels.softmax_rows(rows)
    return _from_rows(p, x, axis), (p, x.shape, axis)


def _bwd_softmax(ctx, gout):
    p, shape, axis = ctx
    grows, _ = _to_rows(gout, axis)
    gin = kernels.softmax_rows_grad(p, grows)
    return (_from_rows(gin, np.empty(shape), axis),)


register_op("softmax", _fwd_softmax, _bwd_softmax)


def _fwd_log_softmax(x, axis):
    if x.ndim == 0 or x.shape[axis % x.ndim] == 0:
        raise ShapeError(f"log_softmax over empty axis {axis} of shape {x.shape}")
    rows, axis = _to_rows(x, axis)
    shifted = rows - rows.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out_rows = shifted - logz
    return _from_rows(out_rows, x, axis), (np.exp(out_rows), x.shape, axis)


def _bwd_log_softmax(ctx, gout):
    p, shape, axis = ctx
    grows, _ = _to_rows(gout, axis)
    gin = grows - p * grows.sum(axis=1, keepdims=True)
    return (_from_rows(gin, np.empty(shape), axis),)


register_op("log_softmax", _fwd_log_softmax, _bwd_log_softmax)


def _fwd_cross_entropy(logits, targets, reduction):
    orig_shape = logits.shape
    if logits.ndim == 1:
        logits = logits[None, :]
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects 1D or 2D logits, got {orig_shape}")
    n, c = logits.shape
    idx = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if idx.shape != (n,):
        raise ShapeError(f"targets shape {idx.shape} != batch ({n},)")
    if np.any(idx < 0) or np.any(idx >= c):
        raise IndexError(f"target class out of range [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    losses = -logp[np.arange(n), idx]
    loss = losses.mean() if reduction == "mean" else losses.sum()
    return np.asarray(loss), (np.exp(logp), idx, reduction, orig_shape)


def _bwd_cross_entropy(ctx, gout):
    p, idx, reduction, orig_shape = ctx
    g = p.copy()
    g[np.arange(len(idx)), idx] -= 1.0
    if reduction == "mean":
        g /= len(idx)
    g *= gout.reshape(())
    return (g.reshape(orig_shape),)


register_op("cross_entropy", _fwd_cross_entropy, _bwd_cross_entropy)


def _fwd_layer_norm(x, eps):
    if x.ndim < 1 or x.shape[-1] == 0:
        raise ShapeError(f"layer_norm needs a non-empty last axis, got {x.shape}")
    rows = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
    y, inv_std = kernels.layer_norm_rows(rows, eps)
    return y.reshape(x.shape), (y, inv_std, x.shape)


def _bwd_layer_norm(ctx, gout):
    y, inv_std, shape = ctx
    grows = np.ascontiguousarray(gout.reshape(-1, shape[-1]))
    gin = kernels.layer_norm_rows_grad(y, inv_std, grows)
    return (gin.reshape(shape),)


register_op("layer_norm", _fwd_layer_norm, _bwd_layer_norm)


def _fwd_gelu(x):
    return kernels.gelu(x), x


def _bwd_gelu(ctx, gout):
    return (kernels.gelu_grad(ctx, gout),)


register_op("gelu", _fwd_gelu, _bwd_gelu)


def _fwd_embedding(table, ids):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"embedding ids must be 1D, got {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range [0, {table.shape[0]})")
    return table[ids], (ids, table.shape)


def _bwd_embedding(ctx, gout):
    ids, shape = ctx
    g = np.zeros(shape)
    kernels.scatter_add_rows(g, ids, np.ascontiguousarray(gout))
    return (g,)


register_op("embedding", _fwd_embedding, _bwd_embedding)


def _fwd_reshape(x, shape):
    return x.reshape(shape), x.shape


def _bwd_reshape(ctx, gout):
    return (gout.reshape(ctx),)


register_op("reshape", _fwd_reshape, _bwd_reshape)


def _fwd_transpose(x, axes):
    return np.transpose(x, axes).copy(), axes


def _bwd_transpose(ctx, gout):
    inv = np.argsort(np.asarray(ctx))
    return (np.transpose(gout, inv),)


register_op("transpose", _fwd_transpose, _bwd_transpose)


def _fwd_concat(*arrays, axis):
    sizes = [a.shape[axis] for a in arrays]
    return np.concatenate(arrays, axis=axis), (sizes, axis)


def _bwd_concat(ctx, gout):
    sizes, axis = ctx
    return tuple(np.split(gout, np.cumsum(sizes)[:-1], axis=axis))


register_op("concat", _fwd_concat, _bwd_concat)


def _fwd_reduce_sum(x, axis, keepdims):
    return np.asarray(x.sum(axis=axis, keepdims=keepdims)), (x.shape, axis, keepdims)


def _bwd_reduce_sum(ctx, gout):
    shape, axis, keepdims = ctx
    if axis is not None and not keepdims:
        gout = np.expand_dims(gout, axis)
    return (np.broadcast_to(gout, shape).copy(),)


register_op("reduce_sum", _fwd_reduce_sum, _bwd_reduce_sum)


def _fwd_reduce_mean(x, axis, keepdims):
    count = x.size if axis is None else x.shape[axis]
    return np.asarray(x.mean(axis=axis, keepdims=keepdims)), (x.shape, axis, keepdims, count)


def _bwd_reduce_mean(ctx, gout):
    shape, axis, keepdims, count = ctx
    if axis is not None and not keepdims:
        gout = np.expand_dims(gout, axis)
    return (np.broadcast_to(gout, shape).copy() / count,)


register_op("reduce_mean", _fwd_reduce_mean, _bwd_reduce_mean)


# ---------------------------------------------------------------------------
# public op wrappers
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return _apply("add", (a, b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _apply("mul", (a, b))


def scale(a: Tensor, c: float) -> Tensor:
    return _apply("scale", (a,), float(c))


def add_const(a: Tensor, const) -> Tensor:
    return _apply("add_const", (a,), np.asarray(const, dtype=np.float64))


def mul_const(a: Tensor, const) -> Tensor:
    return _apply("mul_const", (a,), np.asarray(const, dtype=np.float64))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return _apply("matmul", (a, b))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return _apply("softmax", (x,), axis)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return _apply("log_softmax", (x,), axis)


def cross_entropy(logits: Tensor, targets, reduction: str = "mean") -> Tensor:
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    return _apply("cross_entropy", (logits,), targets, reduction)


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    return _apply("layer_norm", (x,), float(eps))


def gelu(x: Tensor) -> Tensor:
    return _apply("gelu", (x,))


def embedding(table: Tensor, ids) -> Tensor:
    return _apply("embedding", (table,), ids)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _apply("reshape", (x,), shape)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    return _apply("transpose", (x,), axes)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return _apply("concat", tuple(tensors), axis=axis)


def reduce_sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return _apply("reduce_sum", (x,), axis, keepdims)


def reduce_mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return _apply("reduce_mean", (x,), axis, keepdims)
