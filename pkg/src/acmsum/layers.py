"""Transformer building blocks on top of the autodiff tape.

Sequences are carried as flat ``(batch * length, d)`` tensors; attention
reshapes to ``(batch * heads, length, length)`` internally.  Additive
attention biases (padding masks, causal masks, graph conditioning) enter
as constants, so no gradient flows into them.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .rng import RngState

NEG_INF = -1e30  # additive mask value; large but finite so the NaN guard stays quiet


def init_matrix(rng: RngState, shape: tuple[int, ...], std: float = 0.02) -> np.ndarray:
    return rng.normal(shape, std)


class Affine:
    def __init__(self, rng: RngState, d_in: int, d_out: int, name: str):
        self.w = ad.parameter(init_matrix(rng, (d_in, d_out)), f"{name}.w")
        self.b = ad.parameter(np.zeros(d_out), f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)

    def parameters(self) -> list[Tensor]:
        return [self.w, self.b]


class MultiHeadAttention:
    """Scaled dot-product attention over flat sequence tensors."""

    def __init__(self, rng: RngState, d: int, heads: int, name: str):
        if d % heads:
            raise ValueError(f"model dim {d} not divisible by {heads} heads")
        self.d = d
        self.heads = heads
        self.d_head = d // heads
        self.w_q = ad.parameter(init_matrix(rng, (d, d)), f"{name}.w_q")
        self.w_k = ad.parameter(init_matrix(rng, (d, d)), f"{name}.w_k")
        self.w_v = ad.parameter(init_matrix(rng, (d, d)), f"{name}.w_v")
        self.w_o = ad.parameter(init_matrix(rng, (d, d)), f"{name}.w_o")

    def parameters(self) -> list[Tensor]:
        return [self.w_q, self.w_k, self.w_v, self.w_o]

    def _split(self, x: Tensor, batch: int, length: int) -> Tensor:
        h = ad.reshape(x, (batch, length, self.heads, self.d_head))
        h = ad.transpose(h, (0, 2, 1, 3))
        return ad.reshape(h, (batch * self.heads, length, self.d_head))

    def __call__(
        self,
        x_q: Tensor,
        x_kv: Tensor,
        batch: int,
        n_q: int,
        n_kv: int,
        bias: np.ndarray | None = None,
        attn_out: list[np.ndarray] | None = None,
    ) -> Tensor:
        """``x_q``: (batch*n_q, d); ``x_kv``: (batch*n_kv, d); bias broadcasts
        against (batch*heads, n_q, n_kv) scores before the softmax."""
        q = self._split(ad.matmul(x_q, self.w_q), batch, n_q)
        k = self._split(ad.matmul(x_kv, self.w_k), batch, n_kv)
        v = self._split(ad.matmul(x_kv, self.w_v), batch, n_kv)
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(self.d_head))
        if bias is not None:
            scores = ad.add_const(scores, bias)
        attn = ad.softmax(scores, axis=-1)
        if attn_out is not None:
            attn_out.append(attn.data.reshape(batch, self.heads, n_q, n_kv))
        ctx = ad.matmul(attn, v)
        ctx = ad.reshape(ctx, (batch, self.heads, n_q, self.d_head))
        ctx = ad.transpose(ctx, (0, 2, 1, 3))
        ctx = ad.reshape(ctx, (batch * n_q, self.d))
        return ad.matmul(ctx, self.w_o)


class FeedForward:
    def __init__(self, rng: RngState, d: int, d_ff: int, name: str):
        self.lift = Affine(rng, d, d_ff, f"{name}.lift")
        self.drop = Affine(rng, d_ff, d, f"{name}.drop")

    def __call__(self, x: Tensor) -> Tensor:
        return self.drop(ad.gelu(self.lift(x)))

    def parameters(self) -> list[Tensor]:
        return self.lift.parameters() + self.drop.parameters()


class EncoderBlock:
    """Pre-norm: x + attn(ln(x)), then x + ff(ln(x))."""

    def __init__(self, rng: RngState, d: int, heads: int, d_ff: int, name: str):
        self.attn = MultiHeadAttention(rng, d, heads, f"{name}.attn")
        self.ff = FeedForward(rng, d, d_ff, f"{name}.ff")

    def __call__(
        self,
        x: Tensor,
        batch: int,
        length: int,
        bias: np.ndarray | None = None,
        attn_out: list[np.ndarray] | None = None,
    ) -> Tensor:
        normed = ad.layer_norm(x)
        x = ad.add(x, self.attn(normed, normed, batch, length, length, bias, attn_out))
        return ad.add(x, self.ff(ad.layer_norm(x)))

    def parameters(self) -> list[Tensor]:
        return self.attn.parameters() + self.ff.parameters()


class DecoderBlock:
    """Causal self-attention, cross-attention over memory, feed-forward."""

    def __init__(self, rng: RngState, d: int, heads: int, d_ff: int, name: str):
        self.self_attn = MultiHeadAttention(rng, d, heads, f"{name}.self")
        self.cross_attn = MultiHeadAttention(rng, d, heads, f"{name}.cross")
        self.ff = FeedForward(rng, d, d_ff, f"{name}.ff")

    def __call__(
        self,
        x: Tensor,
        memory: Tensor,
        batch: int,
        n_q: int,
        n_mem: int,
        causal_bias: np.ndarray,
    ) -> Tensor:
        normed = ad.layer_norm(x)
        x = ad.add(x, self.self_attn(normed, normed, batch, n_q, n_q, causal_bias))
        x = ad.add(x, self.cross_attn(ad.layer_norm(x), memory, batch, n_q, n_mem))
        return ad.add(x, self.ff(ad.layer_norm(x)))

    def parameters(self) -> list[Tensor]:
        return self.self_attn.parameters() + self.cross_attn.parameters() + self.ff.parameters()


def causal_bias(n: int) -> np.ndarray:
    """Upper-triangular NEG_INF mask blocking attention to future positions."""
    return np.triu(np.full((n, n), NEG_INF), k=1)


def padding_bias(lengths: np.ndarray, n: int, heads: int) -> np.ndarray:
    """(batch*heads, 1, n) mask hiding key positions beyond each length."""
    batch = len(lengths)
    mask = np.zeros((batch, 1, 1, n))
    for i, ln in enumerate(lengths):
        mask[i, :, :, ln:] = NEG_INF
    return np.repeat(mask, heads, axis=1).reshape(batch * heads, 1, n)
