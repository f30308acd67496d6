"""Teacher-forcing batch construction for both decoders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import CaptionRecord, Vocabulary
from ..errors import DataError
from ..vlcf import FeatureStore


@dataclass
class SequenceBatch:
    """Full-sequence pairs for the transformer.

    inputs  = [startseq, w1 .. wn] right-padded with 0
    targets = [w1 .. wn, endseq]   right-padded with 0
    mask    = 1 over the n+1 real positions
    """

    image_features: np.ndarray  # (B, d_img)
    inputs: np.ndarray  # (B, L) int
    targets: np.ndarray  # (B, L) int
    mask: np.ndarray  # (B, L) float
    ids: list[str]


@dataclass
class PrefixBatch:
    """Expanded (prefix -> next word) samples for the LSTM."""

    image_features: np.ndarray  # (B, d_img)
    inputs: np.ndarray  # (B, L) padded prefixes
    lengths: np.ndarray  # (B,) real prefix lengths
    targets: np.ndarray  # (B,) next-word indices
    ids: list[str]


def usable_records(records: list[CaptionRecord], features: FeatureStore) -> list[CaptionRecord]:
    """Featurized, non-flagged records with at least one clean token."""
    return [
        r for r in records if not r.flagged and r.clean_tokens and r.image_id in features
    ]


def encode_capped(record: CaptionRecord, vocab: Vocabulary) -> list[int]:
    """Indices of the clean tokens, truncated from the right so that the
    bracketed sequence fits max_seq_len (endseq is always forced)."""
    tokens = record.clean_tokens[: vocab.max_seq_len - 2]
    return vocab.encode(tokens)


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def make_batches(
    records: list[CaptionRecord],
    features: FeatureStore,
    vocab: Vocabulary,
    batch_size: int = 32,
    seed: int | np.random.Generator = 0,
) -> list[SequenceBatch]:
    """One epoch of shuffled full-sequence batches (no batch is dropped)."""
    rng = _as_rng(seed)
    usable = usable_records(records, features)
    if not usable:
        raise DataError("no featurized records to batch")
    order = rng.permutation(len(usable))
    max_len = vocab.max_seq_len
    batches: list[SequenceBatch] = []
    for lo in range(0, len(usable), batch_size):
        chunk = [usable[i] for i in order[lo : lo + batch_size]]
        n = len(chunk)
        feats = np.stack([features.get(r.image_id) for r in chunk]).astype(np.float64)
        inputs = np.zeros((n, max_len), dtype=np.int64)
        targets = np.zeros((n, max_len), dtype=np.int64)
        mask = np.zeros((n, max_len), dtype=np.float64)
        for row, rec in enumerate(chunk):
            body = encode_capped(rec, vocab)
            inputs[row, 0] = vocab.start_idx
            inputs[row, 1 : 1 + len(body)] = body
            targets[row, : len(body)] = body
            targets[row, len(body)] = vocab.end_idx
            mask[row, : len(body) + 1] = 1.0
        batches.append(
            SequenceBatch(
                image_features=feats,
                inputs=inputs,
                targets=targets,
                mask=mask,
                ids=[r.image_id for r in chunk],
            )
        )
    return batches


def make_prefix_batches(
    records: list[CaptionRecord],
    features: FeatureStore,
    vocab: Vocabulary,
    batch_size: int = 32,
    seed: int | np.random.Generator = 0,
) -> list[PrefixBatch]:
    """One epoch of shuffled (prefix -> next word) batches."""
    rng = _as_rng(seed)
    usable = usable_records(records, features)
    if not usable:
        raise DataError("no featurized records to batch")
    samples: list[tuple[str, list[int], int]] = []
    for rec in usable:
        full = [vocab.start_idx] + encode_capped(rec, vocab) + [vocab.end_idx]
        for t in range(1, len(full)):
            samples.append((rec.image_id, full[:t], full[t]))
    order = rng.permutation(len(samples))
    max_len = vocab.max_seq_len
    batches: list[PrefixBatch] = []
    for lo in range(0, len(samples), batch_size):
        chunk = [samples[i] for i in order[lo : lo + batch_size]]
        n = len(chunk)
        feats = np.stack([features.get(img) for img, _, _ in chunk]).astype(np.float64)
        inputs = np.zeros((n, max_len), dtype=np.int64)
        lengths = np.zeros(n, dtype=np.int64)
        targets = np.zeros(n, dtype=np.int64)
        for row, (_, prefix, nxt) in enumerate(chunk):
            inputs[row, : len(prefix)] = prefix
            lengths[row] = len(prefix)
            targets[row] = nxt
        batches.append(
            PrefixBatch(
                image_features=feats,
                inputs=inputs,
                lengths=lengths,
                targets=targets,
                ids=[img for img, _, _ in chunk],
            )
        )
    return batches
