"""Caption ingestion, normalization, vocabulary and train/test splits."""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ConflictError, SchemaError
from .vlcf import FeatureStore, load_feature_store, write_feature_store  # noqa: F401

START_TOKEN = "startseq"
END_TOKEN = "endseq"
MAX_SEQ_LEN = 192
# Clean tokens are capped so that startseq + tokens + endseq fits MAX_SEQ_LEN.
MAX_CLEAN_TOKENS = MAX_SEQ_LEN - 2

ID_COLUMN = "image"
OBJECTS_COLUMN = "objects"


@dataclass
class CaptionRecord:
    """One image id with its raw and cleaned caption.

    ``detector_labels`` is inert metadata (optional object-detector class
    names); ``flagged`` marks records whose id has no feature-store entry.
    Flagged records are reported but excluded from training/evaluation.
    """

    image_id: str
    raw_caption: str
    clean_tokens: list[str]
    detector_labels: list[str] | None = None
    flagged: bool = False


def preprocess_caption(raw: str) -> list[str]:
    """Normalize a caption into lowercase alphabetic tokens of length >= 2.

    Every non-alphabetic character acts as a token separator (so
    "flooded-area" yields two tokens); order is preserved and the result
    may be empty.
    """
    tokens: list[str] = []
    word: list[str] = []
    for ch in raw.lower():
        if ch.isalpha():
            word.append(ch)
        elif word:
            tokens.append("".join(word))
            word = []
    if word:
        tokens.append("".join(word))
    return [t for t in tokens if len(t) >= 2]


def stem_image_id(name: str) -> str:
    """Image-id key: filename stem, extension stripped."""
    name = name.strip()
    stem = name.rsplit("/", 1)[-1]
    if "." in stem:
        stem = stem.rsplit(".", 1)[0]
    return stem


def load_caption_csv(
    path: str | Path,
    caption_column: str,
    features: FeatureStore | None = None,
) -> list[CaptionRecord]:
    """Load one CaptionRecord per CSV row.

    The header must contain ``image`` and ``caption_column``; an optional
    ``objects`` column carries semicolon-separated detector labels. When a
    feature store is given, rows whose id it lacks are flagged (never
    dropped). Duplicate image ids are an error.
    """
    path = Path(path)
    records: list[CaptionRecord] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, no header row")
        missing = {ID_COLUMN, caption_column} - set(reader.fieldnames)
        if missing:
            raise SchemaError(
                f"{path}: missing required column(s) {sorted(missing)}; "
                f"header has {reader.fieldnames}"
            )
        has_objects = OBJECTS_COLUMN in reader.fieldnames
        rows = _iter_rows(reader, path)
        for row in rows:
            line_no = reader.line_num
            if row.get(ID_COLUMN) is None or row.get(caption_column) is None:
                raise SchemaError(f"{path}: malformed row at line {line_no}")
            image_id = stem_image_id(row[ID_COLUMN])
            if not image_id:
                raise SchemaError(f"{path}: empty image id at line {line_no}")
            if image_id in seen:
                raise ConflictError(f"{path}: duplicate image id {image_id!r} at line {line_no}")
            seen.add(image_id)
            raw = row[caption_column]
            tokens = preprocess_caption(raw)[:MAX_CLEAN_TOKENS]
            labels = None
            if has_objects and row.get(OBJECTS_COLUMN):
                labels = [s.strip() for s in row[OBJECTS_COLUMN].split(";") if s.strip()]
            flagged = bool(features is not None and image_id not in features) or not tokens
            records.append(
                CaptionRecord(
                    image_id=image_id,
                    raw_caption=raw,
                    clean_tokens=tokens,
                    detector_labels=labels,
                    flagged=flagged,
                )
            )
    return records


def _iter_rows(reader: csv.DictReader, path: Path):
    """Surface csv-module parse failures as schema errors with a line."""
    while True:
        try:
            yield next(reader)
        except StopIteration:
            return
        except csv.Error as exc:
            raise SchemaError(f"{path}: malformed CSV at line {reader.line_num}: {exc}") from exc


def flag_missing_features(records: list[CaptionRecord], features: FeatureStore) -> int:
    """Flag records without a feature entry; returns how many are flagged."""
    n = 0
    for rec in records:
        if rec.image_id not in features:
            rec.flagged = True
        if rec.flagged:
            n += 1
    return n


@dataclass
class Vocabulary:
    """Ordered token set with bidirectional index maps.

    Index 0 is reserved for padding; tokens occupy 1..len(tokens). The
    boundary tokens are always present, appended after the sorted content
    tokens so ordering is deterministic.
    """

    tokens: list[str]
    word_to_idx: dict[str, int] = field(init=False)
    idx_to_word: dict[int, str] = field(init=False)
    pad_idx: int = 0
    max_seq_len: int = MAX_SEQ_LEN

    def __post_init__(self) -> None:
        self.word_to_idx = {tok: i + 1 for i, tok in enumerate(self.tokens)}
        self.idx_to_word = {i: tok for tok, i in self.word_to_idx.items()}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def start_idx(self) -> int:
        return self.word_to_idx[START_TOKEN]

    @property
    def end_idx(self) -> int:
        return self.word_to_idx[END_TOKEN]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.word_to_idx[t] for t in tokens]

    def decode(self, indices: list[int]) -> list[str]:
        return [self.idx_to_word[i] for i in indices if i != self.pad_idx]

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"tokens": self.tokens, "max_seq_len": self.max_seq_len}, indent=0)
            + "\n",
            encoding="utf-8",
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "Vocabulary":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(tokens=obj["tokens"], max_seq_len=obj.get("max_seq_len", MAX_SEQ_LEN))


def build_vocabulary(
    records: list[CaptionRecord],
    extra_terms: list[str] | None = None,
    max_seq_len: int = MAX_SEQ_LEN,
) -> Vocabulary:
    """Sorted unique union of clean tokens and extra terms, boundaries last.

    Duplicates of the boundary tokens in the inputs are dropped; indices
    are assigned 1..|V| in token order.
    """
    terms = {t for rec in records for t in rec.clean_tokens}
    terms.update(extra_terms or [])
    terms.discard(START_TOKEN)
    terms.discard(END_TOKEN)
    tokens = sorted(terms) + [START_TOKEN, END_TOKEN]
    return Vocabulary(tokens=tokens, max_seq_len=max_seq_len)


@dataclass
class SplitSpec:
    """Deterministic train/test partition of image ids."""

    train_ids: list[str]
    test_ids: list[str]
    ratio: float
    seed: int

    def to_json(self, path: str | Path) -> None:
        payload = {
            "seed": self.seed,
            "ratio": self.ratio,
            "train": self.train_ids,
            "test": self.test_ids,
        }
        Path(path).write_text(json.dumps(payload, indent=0) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "SplitSpec":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            train_ids=obj["train"], test_ids=obj["test"], ratio=obj["ratio"], seed=obj["seed"]
        )


def split_dataset(ids: list[str], ratio: float = 0.80, seed: int = 0) -> SplitSpec:
    """Partition ids into train/test with |train| = round(ratio * N).

    Ids are sorted before shuffling so the split depends only on the id
    set, the ratio and the seed.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    if len(set(ids)) != len(ids):
        raise ConflictError("split_dataset requires unique ids")
    ordered = sorted(ids)
    rng = random.Random(seed)
    rng.shuffle(ordered)
    n_train = round(ratio * len(ordered))
    return SplitSpec(
        train_ids=sorted(ordered[:n_train]),
        test_ids=sorted(ordered[n_train:]),
        ratio=ratio,
        seed=seed,
    )
