"""Hierarchical cross-modal transformer caption decoder.

A single backbone feature vector is expanded into a 17-row visual memory
(1 global + 4 regional + 12 local projections, layer-normalized). The
decoder embeds tokens with a (typically frozen) pretrained matrix plus
sinusoidal positions, then runs L layers of causal self-attention,
cross-attention over the memory, and an FFN with residual + LayerNorm.
Logits come from projecting [h_t ; mean(memory)] through LayerNorm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..embeddings import EmbeddingMatrix
from ..errors import ConfigError, ShapeError
from ..numerics import (
    Dropout,
    Embedding,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    Tensor,
    add,
    causal_mask,
    concat,
    masked_cross_entropy,
    mean,
    relu,
    reshape,
)


@dataclass
class TransformerConfig:
    d_model: int = 300
    d_emb: int = 300
    layers: int = 2
    heads: int = 6
    ffn_dim: int | None = None  # defaults to 4 * d_model
    dropout: float = 0.1
    regional_patches: int = 4
    local_patches: int = 12
    max_seq_len: int = 192
    d_img: int = 768

    def __post_init__(self) -> None:
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.d_model
        if self.d_model != self.d_emb:
            raise ConfigError(f"d_model={self.d_model} must equal d_emb={self.d_emb}")
        for name, patches in (
            ("regional_patches", self.regional_patches),
            ("local_patches", self.local_patches),
            ("heads", self.heads),
        ):
            if self.d_model % patches != 0:
                raise ConfigError(f"d_model={self.d_model} not divisible by {name}={patches}")

    @property
    def memory_rows(self) -> int:
        return 1 + self.regional_patches + self.local_patches

    def to_dict(self) -> dict:
        return {
            "d_model": self.d_model,
            "d_emb": self.d_emb,
            "layers": self.layers,
            "heads": self.heads,
            "ffn_dim": self.ffn_dim,
            "dropout": self.dropout,
            "regional_patches": self.regional_patches,
            "local_patches": self.local_patches,
            "max_seq_len": self.max_seq_len,
            "d_img": self.d_img,
        }


@dataclass
class VisualMemory:
    """Hierarchical visual tokens, (batch, 1 + regional + local, d_model)."""

    tokens: Tensor

    @property
    def rows(self) -> int:
        return self.tokens.shape[1]


def sinusoidal_positions(max_len: int, d_model: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None].astype(np.float64)
    i = np.arange(d_model // 2)[None, :].astype(np.float64)
    angles = pos / np.power(10000.0, 2.0 * i / d_model)
    pe = np.zeros((max_len, d_model))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


class VisualEncoder(Module):
    """Image feature -> layer-normalized hierarchical memory."""

    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        d, r, l = cfg.d_model, cfg.regional_patches, cfg.local_patches
        self.cfg = cfg
        self.global_proj = Linear(cfg.d_img, d, rng)
        self.regional_proj = Linear(cfg.d_img, d, rng)
        self.regional_out = Linear(d // r, d, rng)
        self.local_proj = Linear(cfg.d_img, d, rng)
        self.local_out = Linear(d // l, d, rng)
        self.norm = LayerNorm(d)

    def __call__(self, image_feature: Tensor) -> VisualMemory:
        cfg = self.cfg
        if image_feature.shape[-1] != cfg.d_img:
            raise ShapeError(
                f"image feature dim {image_feature.shape} does not match d_img={cfg.d_img}"
            )
        batch = image_feature.shape[0]
        d = cfg.d_model
        f_global = relu(self.global_proj(image_feature))  # (B, d)
        f_global = reshape(f_global, (batch, 1, d))
        regional = relu(self.regional_proj(image_feature))
        regional = reshape(regional, (batch, cfg.regional_patches, d // cfg.regional_patches))
        f_regional = self.regional_out(regional)  # (B, R, d)
        local = relu(self.local_proj(image_feature))
        local = reshape(local, (batch, cfg.local_patches, d // cfg.local_patches))
        f_local = self.local_out(local)  # (B, L, d)
        stacked = concat([f_global, f_regional, f_local], axis=1)
        return VisualMemory(tokens=self.norm(stacked))


class DecoderLayer(Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        d = cfg.d_model
        self.self_attn = MultiHeadAttention(d, cfg.heads, rng)
        self.cross_attn = MultiHeadAttention(d, cfg.heads, rng)
        self.ffn_in = Linear(d, cfg.ffn_dim, rng)
        self.ffn_out = Linear(cfg.ffn_dim, d, rng)
        self.ffn_drop = Dropout(cfg.dropout)
        self.norm = LayerNorm(d)

    def __call__(self, h: Tensor, memory: Tensor, mask: np.ndarray, train: bool) -> Tensor:
        # Residual paths around both attention sublayers: without them the
        # textual state is replaced by visual value mixtures and training
        # stalls in an image-blind basin (verified at d_model=300).
        attended = add(h, self.self_attn(h, h, mask))
        crossed = add(attended, self.cross_attn(attended, memory))
        hidden = self.ffn_drop(relu(self.ffn_in(crossed)), train)
        return self.norm(add(crossed, self.ffn_out(hidden)))


class TransformerCaptioner(Module):
    kind = "transformer"

    def __init__(self, cfg: TransformerConfig, embedding: EmbeddingMatrix, seed: int = 0):
        if embedding.dim != cfg.d_emb:
            raise ConfigError(
                f"embedding dim {embedding.dim} does not match d_emb={cfg.d_emb}"
            )
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.init_seed = seed
        self.vocab_rows = embedding.matrix.shape[0]  # |V| + 1 (pad row)
        self.embedding = Embedding(embedding.matrix, frozen=embedding.frozen)
        self.positions = sinusoidal_positions(cfg.max_seq_len, cfg.d_model)
        self.embed_drop = Dropout(cfg.dropout)
        self.encoder = VisualEncoder(cfg, rng)
        self.decoder_layers = [DecoderLayer(cfg, rng) for _ in range(cfg.layers)]
        self.head_norm = LayerNorm(2 * cfg.d_model)
        self.head = Linear(2 * cfg.d_model, self.vocab_rows, rng)
        # Small head init keeps initial predictions near-uniform (loss ~ ln|V|).
        self.head.weight.data *= 0.1

    def set_dropout_rng(self, rng: np.random.Generator) -> None:
        self.embed_drop.rng = rng
        for layer in self.decoder_layers:
            layer.ffn_drop.rng = rng

    def encode_visual(self, image_features: np.ndarray) -> VisualMemory:
        feats = np.atleast_2d(np.asarray(image_features, dtype=np.float64))
        return self.encoder(Tensor(feats))

    def __call__(self, tokens: np.ndarray, memory: VisualMemory, train: bool = False) -> Tensor:
        """Token indices (B, T) -> logits (B, T, |V|+1)."""
        tokens = np.atleast_2d(tokens)
        batch, seq = tokens.shape
        if seq > self.cfg.max_seq_len:
            raise ShapeError(f"sequence length {seq} exceeds max_seq_len={self.cfg.max_seq_len}")
        h = add(self.embedding(tokens), self.positions[:seq])
        h = self.embed_drop(h, train)
        mask = causal_mask(seq)
        for layer in self.decoder_layers:
            h = layer(h, memory.tokens, mask, train)
        c_visual = mean(memory.tokens, axis=1)  # (B, d)
        c_visual = reshape(c_visual, (batch, 1, self.cfg.d_model))
        tiled = add(c_visual, np.zeros((1, seq, 1)))  # broadcast to (B, T, d)
        fused = concat([h, tiled], axis=-1)
        return self.head(self.head_norm(fused))

    def loss(self, batch, train: bool = True) -> Tensor:
        memory = self.encode_visual(batch.image_features)
        logits = self(batch.inputs, memory, train=train)
        return masked_cross_entropy(logits, batch.targets, batch.mask)

    def pre_step(self) -> None:
        self.embedding.scrub_pad_grad()
