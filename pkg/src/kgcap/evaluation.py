"""Reference-free caption scoring and comparison statistics.

Relevance is the raw cosine between an image vector and a caption vector
(optionally the classic rescaled variant behind a flag). Informativeness
is the natural-log corpus surprisal sum with add-one smoothing for
unknown words. The product of the two is the normative combined score; a
weighted sum is available but its precision term is a documented
stand-in for the relevance value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CaptionRecord
from .embeddings import EmbeddingProvider, cosine_similarity
from .errors import ConfigError, FormatError, ZeroNormError
from .knowledge import LexicalSource
from .vlcf import FeatureStore

METRICS = ("clip_score", "informativeness", "infometic")


@dataclass
class FrequencyTable:
    counts: dict[str, int]
    total: int = field(init=False)
    vocab_size: int = field(init=False)

    def __post_init__(self) -> None:
        if any(c < 1 for c in self.counts.values()):
            raise ConfigError("frequency counts must be >= 1")
        self.total = sum(self.counts.values())
        self.vocab_size = len(self.counts)

    @classmethod
    def from_tsv(cls, path: str | Path) -> "FrequencyTable":
        counts: dict[str, int] = {}
        for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}: line {i}: expected word<TAB>count")
            try:
                counts[parts[0]] = int(parts[1])
            except ValueError as exc:
                raise FormatError(f"{path}: line {i}: bad count {parts[1]!r}") from exc
        return cls(counts=counts)

    def probability(self, word: str) -> float:
        count = self.counts.get(word)
        if count is None:
            return 1.0 / (self.total + self.vocab_size)  # add-one smoothing
        return count / self.total


@dataclass
class EvalConfig:
    mode: str = "product"  # product (normative) | weighted
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    rescale_clip: bool = False  # classic 2.5 * max(cos, 0) variant, off by default

    def __post_init__(self) -> None:
        if self.mode not in ("product", "weighted"):
            raise ConfigError(f"unknown evaluation mode {self.mode!r}")
        if self.mode == "weighted" and None in (self.alpha, self.beta, self.gamma):
            raise ConfigError("weighted mode requires alpha, beta and gamma")


@dataclass
class EvalRecord:
    image_id: str
    clip_score: float = math.nan
    informativeness: float = math.nan
    infometic: float = math.nan
    better: int | None = None
    ok: bool = True
    error: str | None = None

    def metric(self, name: str) -> float:
        return getattr(self, name)


def clip_score(image_vec: np.ndarray, text_vec: np.ndarray, rescale: bool = False) -> float:
    value = cosine_similarity(image_vec, text_vec)
    if rescale:
        return 2.5 * max(value, 0.0)
    return value


def informativeness(tokens: list[str], freq: FrequencyTable) -> float:
    """Sum of -ln P(w); repeated words count each occurrence."""
    return float(sum(-math.log(freq.probability(tok)) for tok in tokens))


def combined_score(relevance: float, informative: float, cfg: EvalConfig) -> float:
    if cfg.mode == "product":
        return relevance * informative
    # weighted mode: the precision component defaults to the relevance
    # value until a better-defined computation exists.
    return cfg.alpha * informative + cfg.beta * relevance + cfg.gamma * relevance


def score_caption_set(
    records: list[CaptionRecord],
    image_feats: FeatureStore,
    text_provider: EmbeddingProvider,
    freq: FrequencyTable,
    cfg: EvalConfig | None = None,
    text_feats: FeatureStore | None = None,
) -> list[EvalRecord]:
    """One EvalRecord per caption record.

    The caption vector comes from ``text_feats`` (exported file) when
    given, else from the provider. Records without a usable image/text
    vector are marked not-ok and excluded from comparison percentages.
    """
    cfg = cfg or EvalConfig()
    out: list[EvalRecord] = []
    for rec in records:
        row = EvalRecord(image_id=rec.image_id)
        image_vec = image_feats.get(rec.image_id)
        if image_vec is None:
            row.ok = False
            row.error = "no image feature"
            out.append(row)
            continue
        if text_feats is not None:
            text_vec = text_feats.get(rec.image_id)
            if text_vec is None:
                row.ok = False
                row.error = "no text feature"
                out.append(row)
                continue
        else:
            text_vec = text_provider.embed_text(rec.clean_tokens)
        try:
            relevance = clip_score(image_vec, text_vec, rescale=cfg.rescale_clip)
        except ZeroNormError as exc:
            row.ok = False
            row.error = str(exc)
            out.append(row)
            continue
        row.clip_score = relevance
        row.informativeness = informativeness(rec.clean_tokens, freq)
        row.infometic = combined_score(relevance, row.informativeness, cfg)
        out.append(row)
    return out


@dataclass
class ComparisonResult:
    metric: str
    n_better: int
    n_total: int
    percentage: float
    orphans_custom: list[str]
    orphans_baseline: list[str]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "n_better": self.n_better,
            "n_total": self.n_total,
            "percentage": self.percentage,
            "orphans_custom": self.orphans_custom,
            "orphans_baseline": self.orphans_baseline,
        }


def compare_sets(
    custom: list[EvalRecord],
    baseline: list[EvalRecord],
    metric: str = "infometic",
) -> ComparisonResult:
    """Strict-inequality win count over jointly-scored ids.

    Ties yield no win; ids present on only one side are reported as
    orphans and excluded.
    """
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}")
    custom_by_id = {r.image_id: r for r in custom if r.ok}
    baseline_by_id = {r.image_id: r for r in baseline if r.ok}
    joint = sorted(custom_by_id.keys() & baseline_by_id.keys())
    n_better = 0
    for image_id in joint:
        c = custom_by_id[image_id]
        better = int(c.metric(metric) > baseline_by_id[image_id].metric(metric))
        if metric == "infometic":
            c.better = better
        n_better += better
    percentage = 100.0 * n_better / len(joint) if joint else 0.0
    return ComparisonResult(
        metric=metric,
        n_better=n_better,
        n_total=len(joint),
        percentage=percentage,
        orphans_custom=sorted(custom_by_id.keys() - baseline_by_id.keys()),
        orphans_baseline=sorted(baseline_by_id.keys() - custom_by_id.keys()),
    )


def noun_coverage(
    records: list[CaptionRecord],
    lexical: LexicalSource,
    stopwords: set[str] | None = None,
) -> dict:
    """Unique object nouns across a caption set.

    A token counts iff the lexical source lists a noun POS for it and it
    is not a stopword.
    """
    stopwords = stopwords or set()
    nouns = {
        tok
        for rec in records
        for tok in rec.clean_tokens
        if tok not in stopwords and lexical.is_noun(tok)
    }
    return {"unique_nouns": len(nouns), "noun_set": sorted(nouns)}
