"""Greedy caption generation for both decoders.

Decoding starts from startseq and appends the argmax token until endseq
or the length cap. The pad index is never a candidate (its logit is
masked), and ties resolve to the lowest token index via argmax-first
semantics. The returned caption contains content tokens only.
"""

from __future__ import annotations

import numpy as np

from ..corpus import END_TOKEN, START_TOKEN, Vocabulary


def _strip_boundaries(tokens: list[str]) -> list[str]:
    return [t for t in tokens if t not in (START_TOKEN, END_TOKEN)]


def _transformer_decode(model, image_feature, vocab: Vocabulary, max_len: int) -> list[int]:
    memory = model.encode_visual(np.asarray(image_feature, dtype=np.float64))
    seq = [vocab.start_idx]
    steps = min(max_len, vocab.max_seq_len - 1)
    for _ in range(steps):
        logits = model(np.array([seq]), memory, train=False).data[0, len(seq) - 1].copy()
        logits[vocab.pad_idx] = -np.inf
        nxt = int(np.argmax(logits))
        if nxt == vocab.end_idx:
            break
        seq.append(nxt)
    return seq[1:]


def _lstm_decode(model, image_feature, vocab: Vocabulary, max_len: int) -> list[int]:
    seq = [vocab.start_idx]
    steps = min(max_len, vocab.max_seq_len - 1)
    padded = np.zeros((1, vocab.max_seq_len), dtype=np.int64)
    for _ in range(steps):
        padded[0, : len(seq)] = seq
        probs = model(
            np.asarray(image_feature, dtype=np.float64),
            padded,
            np.array([len(seq)]),
            train=False,
        ).data[0].copy()
        probs[vocab.pad_idx] = -np.inf
        nxt = int(np.argmax(probs))
        if nxt == vocab.end_idx:
            break
        seq.append(nxt)
    return seq[1:]


def generate_caption(model, image_feature, vocab: Vocabulary, max_len: int = 192) -> list[str]:
    if model.kind == "transformer":
        indices = _transformer_decode(model, image_feature, vocab, max_len)
    else:
        indices = _lstm_decode(model, image_feature, vocab, max_len)
    return _strip_boundaries(vocab.decode(indices))
