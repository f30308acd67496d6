"""Dense tensors with reverse-mode automatic differentiation.

Values are stored and accumulated in float64 (checkpoints are written as
float32 by the VLCF layer), which keeps finite-difference gradient checks
tight. Each op records a backward closure; ``backward()`` runs a single
reverse topological pass with additive gradient accumulation.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import DataError, NumericError, ShapeError, VocabularyError

_DEBUG = False

MASK_FILL = -1e9


class DegenerateBatchError(DataError):
    """Loss requested over a fully-masked sequence."""


def set_debug(flag: bool) -> None:
    """When on, every op output is checked for NaN/Inf (hard error)."""
    global _DEBUG
    _DEBUG = bool(flag)


def _check(data: np.ndarray) -> np.ndarray:
    if _DEBUG and not np.isfinite(data).all():
        raise NumericError("non-finite value produced by tensor op")
    return data


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without grad needs a scalar, got {self.shape}")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        _accum(self, np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._parents):
        return
    t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _track(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    needs = any(p.requires_grad or p._parents for p in parents)
    return Tensor(
        _check(data),
        _parents=parents if needs else (),
        _backward=backward if needs else None,
    )


# primitives ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g: np.ndarray) -> None:
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _track(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g: np.ndarray) -> None:
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _track(out_data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 1 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g: np.ndarray) -> None:
        _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if a.data.ndim == 1:
            _accum(b, _unbroadcast(np.outer(a.data, g), b.shape))
        else:
            _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _track(out_data, (a, b), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.maximum(x.data, 0.0)

    def backward(g: np.ndarray) -> None:
        _accum(x, g * (x.data > 0))

    return _track(out_data, (x,), backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g: np.ndarray) -> None:
        _accum(x, g * out_data * (1.0 - out_data))

    return _track(out_data, (x,), backward)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.tanh(x.data)

    def backward(g: np.ndarray) -> None:
        _accum(x, g * (1.0 - out_data * out_data))

    return _track(out_data, (x,), backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out_data = exp / exp.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> None:
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accum(x, out_data * (g - dot))

    return _track(out_data, (x,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5, axis: int = -1) -> Tensor:
    """Normalize over ``axis`` with population (n-denominator) variance."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if axis not in (-1, x.data.ndim - 1):
        perm = list(range(x.data.ndim))
        perm[axis], perm[-1] = perm[-1], perm[axis]
        moved = layer_norm(transpose(x, tuple(perm)), gamma, beta, eps=eps)
        return transpose(moved, tuple(perm))
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(
            f"layer_norm params {gamma.shape}/{beta.shape} do not match feature dim {x.shape[-1:]}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = gamma.data * xhat + beta.data

    def backward(g: np.ndarray) -> None:
        reduce_axes = tuple(range(g.ndim - 1))
        _accum(gamma, (g * xhat).sum(axis=reduce_axes))
        _accum(beta, g.sum(axis=reduce_axes))
        dxhat = g * gamma.data
        term = dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(
            axis=-1, keepdims=True
        )
        _accum(x, inv_std * term)

    return _track(out_data, (x, gamma, beta), backward)


def dropout(x, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout: scaling 1/(1-rate) at train time, identity otherwise."""
    x = as_tensor(x)
    if not train or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out_data = x.data * keep

    def backward(g: np.ndarray) -> None:
        _accum(x, g * keep)

    return _track(out_data, (x,), backward)


def embedding_lookup(matrix: Tensor, indices: np.ndarray) -> Tensor:
    """Rows of ``matrix`` at ``indices`` (any integer shape)."""
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= matrix.shape[0]):
        raise VocabularyError(
            f"token index out of range [0, {matrix.shape[0]}): "
            f"min={idx.min()}, max={idx.max()}"
        )
    out_data = matrix.data[idx]

    def backward(g: np.ndarray) -> None:
        gm = np.zeros_like(matrix.data)
        np.add.at(gm, idx, g)
        _accum(matrix, gm)

    return _track(out_data, (matrix,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis if axis >= 0 else g.ndim + axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _track(out_data, tuple(tensors), backward)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.reshape(shape)

    def backward(g: np.ndarray) -> None:
        _accum(x, g.reshape(x.shape))

    return _track(out_data, (x,), backward)


def transpose(x, axes: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.transpose(axes)
    inverse = np.argsort(axes)

    def backward(g: np.ndarray) -> None:
        _accum(x, g.transpose(inverse))

    return _track(out_data, (x,), backward)


def mean(x, axis: int, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.mean(axis=axis, keepdims=keepdims)
    n = x.shape[axis]

    def backward(g: np.ndarray) -> None:
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g / n, x.shape).copy())

    return _track(out_data, (x,), backward)


def gather_time(x: Tensor, positions: np.ndarray) -> Tensor:
    """Select x[b, positions[b], :] for each batch row b: (B,T,H) -> (B,H)."""
    pos = np.asarray(positions)
    if x.data.ndim != 3 or pos.shape != (x.shape[0],):
        raise ShapeError(f"gather_time expects (B,T,H) and (B,), got {x.shape} and {pos.shape}")
    batch = np.arange(x.shape[0])
    out_data = x.data[batch, pos]

    def backward(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        gx[batch, pos] = g
        _accum(x, gx)

    return _track(out_data, (x,), backward)


def masked_cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean NLL over unmasked positions; last axis of ``logits`` is classes."""
    tgt = np.asarray(targets)
    msk = np.asarray(mask, dtype=np.float64)
    if logits.shape[:-1] != tgt.shape or tgt.shape != msk.shape:
        raise ShapeError(
            f"cross-entropy shapes: logits {logits.shape}, targets {tgt.shape}, mask {msk.shape}"
        )
    if tgt.size and (tgt.min() < 0 or tgt.max() >= logits.shape[-1]):
        raise VocabularyError("target index out of vocabulary range")
    total = msk.sum()
    if total <= 0:
        raise DegenerateBatchError("all positions masked out of the loss")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=-1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(log_probs, tgt[..., None], axis=-1)[..., 0]
    out_data = np.array(-(picked * msk).sum() / total)

    def backward(g: np.ndarray) -> None:
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, tgt[..., None], 1.0, axis=-1)
        dlogits = (probs - onehot) * (msk[..., None] / total) * g
        _accum(logits, dlogits)

    return _track(out_data, (logits,), backward)
