"""Small layer library on top of the tensor engine.

Layers own named parameters; ``Module.parameters()`` yields
(path, Tensor) pairs used for optimization, gradient checks and VLCF
checkpointing (ids are the parameter paths).
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import (
    MASK_FILL,
    Tensor,
    _accum,
    _track,
    add,
    concat,
    dropout,
    embedding_lookup,
    layer_norm,
    matmul,
    mul,
    reshape,
    sigmoid,
    softmax,
    tanh,
    transpose,
)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def slice_time(x: Tensor, t: int) -> Tensor:
    """x[:, t, :] with gradient routing."""
    out_data = x.data[:, t, :]

    def backward(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        gx[:, t, :] = g
        _accum(x, gx)

    return _track(out_data, (x,), backward)


def slice_last(x: Tensor, lo: int, hi: int) -> Tensor:
    """x[..., lo:hi] with gradient routing."""
    out_data = x.data[..., lo:hi]

    def backward(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        gx[..., lo:hi] = g
        _accum(x, gx)

    return _track(out_data, (x,), backward)


class Module:
    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                for sub, tensor in value.parameters():
                    yield f"{name}.{sub}", tensor
            elif isinstance(value, list) and value and all(isinstance(v, Module) for v in value):
                for i, item in enumerate(value):
                    for sub, tensor in item.parameters():
                        yield f"{name}.{i}.{sub}", tensor

    def zero_grad(self) -> None:
        for _, p in self.parameters():
            p.zero_grad()


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.weight = Tensor(glorot_uniform(rng, in_dim, out_dim), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, eps=self.eps)


class Dropout(Module):
    """Rate is fixed at construction; the rng is supplied by the owning
    model so a training run's randomness is fully seeded."""

    def __init__(self, rate: float):
        self.rate = rate
        self.rng: np.random.Generator | None = None

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return dropout(x, self.rate, self.rng, train)


class Embedding(Module):
    """Token-index lookup over a (|V|+1) x d matrix with pad row 0.

    When trainable, the pad row is excluded from updates: its gradient is
    cleared by ``scrub_pad_grad`` before every optimizer step.
    """

    def __init__(self, matrix: np.ndarray, frozen: bool):
        self.weight = Tensor(np.array(matrix, dtype=np.float64), requires_grad=not frozen)
        self.frozen = frozen

    def __call__(self, indices: np.ndarray) -> Tensor:
        return embedding_lookup(self.weight, indices)

    def scrub_pad_grad(self) -> None:
        if self.weight.grad is not None:
            self.weight.grad[0] = 0.0


class MultiHeadAttention(Module):
    """Scaled dot-product attention with per-head splits.

    ``mask`` is an additive array broadcastable to (T_q, T_k) holding 0
    for visible and MASK_FILL for blocked positions. The most recent
    attention distribution is kept on ``last_weights`` for inspection.
    """

    def __init__(self, d_model: int, num_heads: int, rng: np.random.Generator):
        if d_model % num_heads != 0:
            raise ConfigError(f"d_model={d_model} not divisible by num_heads={num_heads}")
        self.num_heads = num_heads
        self.d_model = d_model
        self.d_head = d_model // num_heads
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor, batch: int, seq: int) -> Tensor:
        x = reshape(x, (batch, seq, self.num_heads, self.d_head))
        return transpose(x, (0, 2, 1, 3))  # (B, h, T, d_head)

    def __call__(self, q_in: Tensor, kv_in: Tensor, mask: np.ndarray | None = None) -> Tensor:
        if q_in.shape[-1] != self.d_model or kv_in.shape[-1] != self.d_model:
            raise ShapeError(
                f"attention inputs {q_in.shape} / {kv_in.shape} do not match d_model={self.d_model}"
            )
        batch, t_q = q_in.shape[0], q_in.shape[1]
        t_k = kv_in.shape[1]
        q = self._split(self.wq(q_in), batch, t_q)
        k = self._split(self.wk(kv_in), batch, t_k)
        v = self._split(self.wv(kv_in), batch, t_k)
        scores = matmul(q, transpose(k, (0, 1, 3, 2)))
        scores = mul(scores, 1.0 / np.sqrt(self.d_head))
        if mask is not None:
            scores = add(scores, np.broadcast_to(mask, scores.shape))
        weights = softmax(scores, axis=-1)
        self.last_weights = weights.data
        mixed = matmul(weights, v)  # (B, h, T_q, d_head)
        merged = reshape(transpose(mixed, (0, 2, 1, 3)), (batch, t_q, self.d_model))
        return self.wo(merged)


def causal_mask(seq_len: int) -> np.ndarray:
    """Additive mask blocking attention to future positions."""
    mask = np.zeros((seq_len, seq_len))
    mask[np.triu_indices(seq_len, k=1)] = MASK_FILL
    return mask


class LSTM(Module):
    """Single-layer LSTM; gate order in the packed weights is i, f, g, o.

    The forget-gate bias starts at 1.0 (standard trainability default);
    other biases are zero and weights Glorot-uniform.
    """

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        if hidden <= 0:
            raise ConfigError(f"hidden_units must be positive, got {hidden}")
        self.hidden = hidden
        self.w_x = Tensor(glorot_uniform(rng, in_dim, 4 * hidden), requires_grad=True)
        self.w_h = Tensor(glorot_uniform(rng, hidden, 4 * hidden), requires_grad=True)
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        self.bias = Tensor(bias, requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        """(B, T, d) -> stacked hidden states (B, T, hidden)."""
        batch, seq = x.shape[0], x.shape[1]
        h = Tensor(np.zeros((batch, self.hidden)))
        c = Tensor(np.zeros((batch, self.hidden)))
        outputs = []
        for t in range(seq):
            step = slice_time(x, t)
            gates = add(add(matmul(step, self.w_x), matmul(h, self.w_h)), self.bias)
            i_g = sigmoid(slice_last(gates, 0, self.hidden))
            f_g = sigmoid(slice_last(gates, self.hidden, 2 * self.hidden))
            g_g = tanh(slice_last(gates, 2 * self.hidden, 3 * self.hidden))
            o_g = sigmoid(slice_last(gates, 3 * self.hidden, 4 * self.hidden))
            c = add(mul(f_g, c), mul(i_g, g_g))
            h = mul(o_g, tanh(c))
            outputs.append(reshape(h, (batch, 1, self.hidden)))
        return concat(outputs, axis=1)
