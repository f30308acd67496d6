"""Additive-fusion LSTM caption decoder.

The image branch projects a (typically 2048-d) backbone feature to the
LSTM width through dropout; the text branch embeds the running prefix,
applies dropout, and takes the LSTM state after the last real token. The
branches are fused by addition and projected to a next-word distribution
(single-step prediction head).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..embeddings import EmbeddingMatrix
from ..errors import ConfigError, ShapeError
from ..numerics import (
    LSTM,
    Dropout,
    Embedding,
    Linear,
    Module,
    Tensor,
    add,
    gather_time,
    masked_cross_entropy,
    softmax,
)


@dataclass
class LstmConfig:
    d_img: int = 2048
    d_emb: int = 300
    hidden: int = 256
    fusion_dense: int = 256
    dropout: float = 0.5
    batch_size: int = 32
    embedding_frozen: bool = True
    max_seq_len: int = 192

    def __post_init__(self) -> None:
        if self.hidden <= 0 or self.fusion_dense <= 0:
            raise ConfigError("hidden and fusion_dense must be positive")

    def to_dict(self) -> dict:
        return {
            "d_img": self.d_img,
            "d_emb": self.d_emb,
            "hidden": self.hidden,
            "fusion_dense": self.fusion_dense,
            "dropout": self.dropout,
            "batch_size": self.batch_size,
            "embedding_frozen": self.embedding_frozen,
            "max_seq_len": self.max_seq_len,
        }


class LstmCaptioner(Module):
    kind = "lstm"

    def __init__(self, cfg: LstmConfig, embedding: EmbeddingMatrix, seed: int = 0):
        if embedding.dim != cfg.d_emb:
            raise ConfigError(f"embedding dim {embedding.dim} does not match d_emb={cfg.d_emb}")
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.init_seed = seed
        self.vocab_rows = embedding.matrix.shape[0]
        self.embedding = Embedding(embedding.matrix, frozen=cfg.embedding_frozen)
        self.image_drop = Dropout(cfg.dropout)
        self.image_proj = Linear(cfg.d_img, cfg.hidden, rng)
        self.text_drop = Dropout(cfg.dropout)
        self.lstm = LSTM(cfg.d_emb, cfg.hidden, rng)
        self.fusion = Linear(cfg.hidden, cfg.fusion_dense, rng)
        self.head = Linear(cfg.fusion_dense, self.vocab_rows, rng)
        # Small head init keeps initial predictions near-uniform (loss ~ ln|V|).
        self.head.weight.data *= 0.1

    def set_dropout_rng(self, rng: np.random.Generator) -> None:
        self.image_drop.rng = rng
        self.text_drop.rng = rng

    def logits(
        self,
        image_features: np.ndarray,
        tokens: np.ndarray,
        lengths: np.ndarray,
        train: bool = False,
    ) -> Tensor:
        """(B, d_img) x padded prefixes (B, T) -> next-word logits (B, |V|+1)."""
        feats = np.atleast_2d(np.asarray(image_features, dtype=np.float64))
        tokens = np.atleast_2d(tokens)
        lengths = np.atleast_1d(lengths)
        if feats.shape[-1] != self.cfg.d_img:
            raise ShapeError(f"image feature {feats.shape} does not match d_img={self.cfg.d_img}")
        f_image = self.image_proj(self.image_drop(Tensor(feats), train))
        embedded = self.text_drop(self.embedding(tokens), train)
        states = self.lstm(embedded)  # (B, T, hidden)
        h_text = gather_time(states, lengths - 1)
        fused = add(f_image, h_text)
        return self.head(self.fusion(fused))

    def __call__(
        self,
        image_features: np.ndarray,
        tokens: np.ndarray,
        lengths: np.ndarray,
        train: bool = False,
    ) -> Tensor:
        """Next-word probabilities (rows sum to 1)."""
        return softmax(self.logits(image_features, tokens, lengths, train), axis=-1)

    def loss(self, batch, train: bool = True) -> Tensor:
        logits = self.logits(batch.image_features, batch.inputs, batch.lengths, train=train)
        return masked_cross_entropy(logits, batch.targets, np.ones(len(batch.targets)))

    def pre_step(self) -> None:
        self.embedding.scrub_pad_grad()
