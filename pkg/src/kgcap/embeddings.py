"""Embedding-matrix assembly from pretrained word-vector tables.

The matrix has one row per vocabulary token plus the all-zero pad row 0.
Rows are filled by exact table lookup, then longest-prefix match (minimum
key length 3), then a seeded uniform random fallback; boundary tokens are
always random. Per-row provenance is kept for coverage reporting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import END_TOKEN, START_TOKEN, Vocabulary
from .errors import ConfigError, DataError, FormatError, ZeroNormError
from .vlcf import FeatureStore, write_feature_store

DEFAULT_EPSILON = 0.05
MIN_PREFIX_LEN = 3


@dataclass
class VectorTable:
    dim: int
    entries: dict[str, np.ndarray]
    source_name: str = ""

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def _strip_key_prefix(key: str) -> str:
    # Numberbatch-style keys look like /c/en/flood; keep the last segment.
    if key.startswith("/c/en/"):
        return key[len("/c/en/") :]
    return key


def load_vector_table(path: str | Path, source_name: str | None = None) -> VectorTable:
    """Parse a text table of lines ``key v1 ... vd``.

    An optional first line ``count dim`` (two integers) is accepted and
    skipped; ragged rows raise a format error naming the line.
    """
    path = Path(path)
    entries: dict[str, np.ndarray] = {}
    dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if line_no == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header line
                except ValueError:
                    pass
            key = _strip_key_prefix(parts[0])
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"{path}: line {line_no}: non-numeric component") from exc
            if vec.size == 0:
                raise FormatError(f"{path}: line {line_no}: key without vector")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise FormatError(
                    f"{path}: line {line_no}: row has {vec.size} components, expected {dim}"
                )
            if not np.isfinite(vec).all():
                raise DataError(f"{path}: line {line_no}: non-finite component")
            entries[key] = vec
    if dim is None:
        raise FormatError(f"{path}: no vector rows found")
    return VectorTable(dim=dim, entries=entries, source_name=source_name or path.name)


@dataclass
class EmbeddingMatrix:
    """(|V|+1) x dim matrix; row 0 is the pad row and stays all-zero."""

    matrix: np.ndarray
    provenance: list[str]  # per token row (1..|V|): exact | prefix:<key> | random
    seed: int
    epsilon: float
    frozen: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def row(self, idx: int) -> np.ndarray:
        return self.matrix[idx]


def _random_row(rng: np.random.Generator, dim: int, epsilon: float) -> np.ndarray:
    row = rng.uniform(-epsilon, epsilon, size=dim)
    # uniform() is half-open at the low end; keep the interval strictly open.
    while (np.abs(row) >= epsilon).any():
        bad = np.abs(row) >= epsilon
        row[bad] = rng.uniform(-epsilon, epsilon, size=int(bad.sum()))
    return row


def _prefix_key(token: str, table: VectorTable) -> str | None:
    for length in range(len(token) - 1, MIN_PREFIX_LEN - 1, -1):
        candidate = token[:length]
        if candidate in table.entries:
            return candidate
    return None


def build_matrix(
    vocab: Vocabulary,
    table: VectorTable,
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
    frozen: bool = True,
) -> EmbeddingMatrix:
    """Fill one row per token: exact hit, else longest prefix, else random.

    Boundary tokens are always random regardless of table contents. Exact
    and prefix rows copy the table vector bit-for-bit, so changing only
    the seed changes only the random rows.
    """
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    rng = np.random.default_rng(seed)
    matrix = np.zeros((len(vocab) + 1, table.dim), dtype=np.float64)
    provenance: list[str] = []
    for i, token in enumerate(vocab.tokens, start=1):
        if token in (START_TOKEN, END_TOKEN):
            matrix[i] = _random_row(rng, table.dim, epsilon)
            provenance.append("random")
            continue
        if token in table.entries:
            matrix[i] = table.entries[token]
            provenance.append("exact")
            continue
        key = _prefix_key(token, table)
        if key is not None:
            matrix[i] = table.entries[key]
            provenance.append(f"prefix:{key}")
        else:
            matrix[i] = _random_row(rng, table.dim, epsilon)
            provenance.append("random")
    return EmbeddingMatrix(
        matrix=matrix, provenance=provenance, seed=seed, epsilon=epsilon, frozen=frozen
    )


def coverage_report(matrix: EmbeddingMatrix) -> dict[str, int]:
    """Provenance histogram over token rows (pad row excluded)."""
    counts = {"exact": 0, "prefix": 0, "random": 0}
    for tag in matrix.provenance:
        counts[tag.split(":", 1)[0]] += 1
    return counts


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"cosine_similarity dims differ: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroNormError("cosine similarity undefined for zero-norm vector")
    return float(np.dot(a, b) / (norm_a * norm_b))


class EmbeddingProvider:
    """Fixed-dimension word/text embedder; implementations are deterministic."""

    dim: int

    def embed_word(self, word: str) -> np.ndarray | None:
        raise NotImplementedError

    def embed_text(self, tokens: list[str]) -> np.ndarray:
        raise NotImplementedError


class MeanWordVectorProvider(EmbeddingProvider):
    """Self-contained default provider: averages table vectors.

    ``embed_word`` uses the same exact-then-prefix lookup as the matrix
    builder and returns None for misses; ``embed_text`` averages the hits
    and returns a zero vector when nothing is covered (callers treat the
    zero norm per their own contracts).
    """

    def __init__(self, table: VectorTable):
        self.table = table
        self.dim = table.dim

    def embed_word(self, word: str) -> np.ndarray | None:
        if word in self.table.entries:
            return self.table.entries[word]
        key = _prefix_key(word, self.table)
        if key is not None:
            return self.table.entries[key]
        return None

    def embed_text(self, tokens: list[str]) -> np.ndarray:
        hits = [v for v in (self.embed_word(t) for t in tokens) if v is not None]
        if not hits:
            return np.zeros(self.dim, dtype=np.float64)
        return np.mean(np.stack(hits), axis=0)


def build_matrix_from_provider(
    vocab: Vocabulary,
    provider: EmbeddingProvider,
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
    frozen: bool = True,
) -> EmbeddingMatrix:
    """Contextual-provider path: one provider vector per token, random fallback."""
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    rng = np.random.default_rng(seed)
    matrix = np.zeros((len(vocab) + 1, provider.dim), dtype=np.float64)
    provenance: list[str] = []
    for i, token in enumerate(vocab.tokens, start=1):
        vec = None if token in (START_TOKEN, END_TOKEN) else provider.embed_word(token)
        if vec is None:
            matrix[i] = _random_row(rng, provider.dim, epsilon)
            provenance.append("random")
        else:
            matrix[i] = vec
            provenance.append("exact")
    return EmbeddingMatrix(
        matrix=matrix, provenance=provenance, seed=seed, epsilon=epsilon, frozen=frozen
    )


def save_matrix(emb: EmbeddingMatrix, vocab: Vocabulary, path: str | Path) -> None:
    """Checkpoint: VLCF keyed by token plus a JSON sidecar."""
    path = Path(path)
    store = FeatureStore(dim=emb.dim)
    for i, token in enumerate(vocab.tokens, start=1):
        store.add(token, emb.matrix[i].astype(np.float32))
    write_feature_store(store, path)
    sidecar = {
        "seed": emb.seed,
        "epsilon": emb.epsilon,
        "frozen": emb.frozen,
        "dim": emb.dim,
        "provenance_histogram": coverage_report(emb),
        "provenance_rows": emb.provenance,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def load_matrix(path: str | Path, vocab: Vocabulary) -> EmbeddingMatrix:
    from .vlcf import load_feature_store

    path = Path(path)
    store = load_feature_store(path)
    sidecar = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    matrix = np.zeros((len(vocab) + 1, store.dim), dtype=np.float64)
    for i, token in enumerate(vocab.tokens, start=1):
        vec = store.get(token)
        if vec is None:
            raise DataError(f"{path}: checkpoint lacks vector for token {token!r}")
        matrix[i] = vec.astype(np.float64)
    return EmbeddingMatrix(
        matrix=matrix,
        provenance=list(sidecar["provenance_rows"]),
        seed=int(sidecar["seed"]),
        epsilon=float(sidecar["epsilon"]),
        frozen=bool(sidecar["frozen"]),
    )
