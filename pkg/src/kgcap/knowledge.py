"""Vocabulary enrichment via lexical synonyms and conceptual relations.

Two source kinds, each with an offline file-backed implementation
(normative for tests) and, for concepts, a live HTTP client with disk
caching. Expansion output is merged into an EnrichedVocabulary with
strict-substring overlap removal.
"""

from __future__ import annotations

import json
import re
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import END_TOKEN, START_TOKEN
from .errors import FormatError
from .keywords import KeywordPhrase

# Relations that may contribute conceptual neighbours. Synonym is excluded
# unconditionally, whatever the caller configures.
DEFAULT_ALLOWED_RELATIONS = frozenset(
    {
        "RelatedTo",
        "IsA",
        "PartOf",
        "HasA",
        "UsedFor",
        "CapableOf",
        "AtLocation",
        "Causes",
        "HasSubevent",
    }
)

_TERM_RE = re.compile(r"^[a-z]+(_[a-z]+)*$")


@dataclass
class LexicalEntry:
    synonyms: set[str] = field(default_factory=set)
    pos_tags: set[str] = field(default_factory=set)


class LexicalSource:
    """Word -> {synonyms, pos tags}, loaded from a JSON file.

    File schema: {"word": {"synonyms": [...], "pos": ["noun", ...]}, ...}
    """

    def __init__(self, lookup: dict[str, LexicalEntry]):
        self.lookup = lookup

    @classmethod
    def from_json(cls, path: str | Path) -> "LexicalSource":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid lexical JSON: {exc}") from exc
        lookup = {}
        for word, entry in obj.items():
            lookup[word] = LexicalEntry(
                synonyms={s for s in entry.get("synonyms", []) if s.isalpha()},
                pos_tags=set(entry.get("pos", [])),
            )
        return cls(lookup)

    def synonyms(self, word: str) -> set[str]:
        entry = self.lookup.get(word)
        return set(entry.synonyms) if entry else set()

    def is_noun(self, word: str) -> bool:
        entry = self.lookup.get(word)
        return bool(entry and "noun" in entry.pos_tags)


@dataclass(frozen=True)
class ConceptEdge:
    relation: str
    start: str
    end: str
    weight: float = 1.0


class FileConceptSource:
    """Concept edges from a TSV file: relation<TAB>start<TAB>end<TAB>weight."""

    def __init__(self, edges: dict[str, list[ConceptEdge]]):
        self._edges = edges

    @classmethod
    def from_tsv(cls, path: str | Path) -> "FileConceptSource":
        edges: dict[str, list[ConceptEdge]] = defaultdict(list)
        for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise FormatError(f"{path}: line {i}: expected 3 or 4 tab-separated fields")
            relation, start, end = parts[0], parts[1], parts[2]
            try:
                weight = float(parts[3]) if len(parts) == 4 else 1.0
            except ValueError as exc:
                raise FormatError(f"{path}: line {i}: bad weight {parts[3]!r}") from exc
            edge = ConceptEdge(relation=relation, start=start, end=end, weight=weight)
            edges[start].append(edge)
            edges[end].append(edge)
        return cls(dict(edges))

    def edges(self, term: str) -> list[ConceptEdge]:
        return list(self._edges.get(term, []))


class HttpConceptSource:
    """Live client for a public concept-graph API, cached to disk.

    Never used by the test suite. At most one request is in flight and a
    minimum interval between requests is enforced; on timeout a term is
    retried once, then skipped with a warning. The cache directory
    defaults to ``$KGCAP_CACHE_DIR`` (else ``~/.cache/kgcap/concepts``).
    """

    def __init__(
        self,
        cache_dir: str | Path | None = None,
        base_url: str = "https://api.conceptnet.io",
        min_interval_s: float = 1.0,
        timeout_s: float = 10.0,
    ):
        import os

        if cache_dir is None:
            cache_dir = os.environ.get(
                "KGCAP_CACHE_DIR", str(Path.home() / ".cache" / "kgcap" / "concepts")
            )
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.base_url = base_url.rstrip("/")
        self.min_interval_s = min_interval_s
        self.timeout_s = timeout_s
        self._last_request = 0.0

    def _cache_path(self, term: str) -> Path:
        safe = re.sub(r"[^a-z0-9_]+", "-", term.lower())
        return self.cache_dir / f"{safe}.json"

    def _fetch(self, term: str) -> dict | None:
        import requests

        url = f"{self.base_url}/c/en/{term}?limit=200"
        for attempt in (1, 2):
            wait = self.min_interval_s - (time.monotonic() - self._last_request)
            if wait > 0:
                time.sleep(wait)
            try:
                self._last_request = time.monotonic()
                resp = requests.get(url, timeout=self.timeout_s)
                resp.raise_for_status()
                return resp.json()
            except requests.RequestException:
                if attempt == 2:
                    import warnings

                    warnings.warn(f"concept lookup failed for {term!r}, skipping")
                    return None
        return None

    def edges(self, term: str) -> list[ConceptEdge]:
        cache = self._cache_path(term)
        if cache.exists():
            payload = json.loads(cache.read_text(encoding="utf-8"))
        else:
            payload = self._fetch(term)
            if payload is None:
                return []
            cache.write_text(json.dumps(payload), encoding="utf-8")
        out = []
        for edge in payload.get("edges", []):
            rel = edge.get("rel", {}).get("label", "")
            start = edge.get("start", {}).get("label", "")
            end = edge.get("end", {}).get("label", "")
            if rel and start and end:
                out.append(
                    ConceptEdge(
                        relation=rel, start=start.lower(), end=end.lower(),
                        weight=float(edge.get("weight", 1.0)),
                    )
                )
        return out


def expand_synonyms(
    phrases: dict[str, list[KeywordPhrase]] | list[KeywordPhrase],
    source: LexicalSource,
    per_caption: int = 10,
) -> set[str]:
    """Synonyms of the first word of each caption's top phrases.

    Unknown words contribute nothing; non-alphabetic synonyms are dropped.
    """
    if isinstance(phrases, dict):
        grouped = phrases
    else:
        grouped = defaultdict(list)
        for kp in phrases:
            grouped[kp.source_image_id].append(kp)
    terms: set[str] = set()
    for image_phrases in grouped.values():
        for kp in image_phrases[:per_caption]:
            if kp.words:
                terms.update(source.synonyms(kp.words[0]))
    return {t for t in terms if t.isalpha()}


def normalize_concept_term(raw: str) -> str | None:
    """Lowercase, underscore-join multi-word endpoints; None if not clean."""
    term = "_".join(raw.lower().split())
    return term if _TERM_RE.match(term) else None


def expand_concepts(
    terms: set[str],
    source,
    allowed_relations: frozenset[str] | set[str] = DEFAULT_ALLOWED_RELATIONS,
) -> set[str]:
    """Opposite endpoints of each term's allowed-relation edges.

    Synonym edges never contribute, whatever the allowlist says; self-loop
    edges are ignored.
    """
    allowed = set(allowed_relations) - {"Synonym"}
    found: set[str] = set()
    for term in sorted(terms):
        for edge in source.edges(term):
            if edge.relation not in allowed or edge.relation == "Synonym":
                continue
            if edge.start == edge.end:
                continue
            other = edge.end if edge.start == term else edge.start
            if other == term:
                continue
            normalized = normalize_concept_term(other)
            if normalized is not None:
                found.add(normalized)
    return found


def remove_overlaps(terms: set[str]) -> list[str]:
    """Drop any term that is a strict substring of another; sort survivors."""
    items = sorted(set(terms))
    survivors = [
        t
        for t in items
        if not any(t != other and t in other for other in items)
    ]
    return survivors


@dataclass
class EnrichedVocabulary:
    base_terms: set[str]
    wordnet_terms: set[str]
    conceptnet_terms: set[str]
    merged: list[str] = field(init=False)

    def __post_init__(self) -> None:
        combined = self.base_terms | self.wordnet_terms | self.conceptnet_terms
        combined -= {START_TOKEN, END_TOKEN}
        self.merged = remove_overlaps(combined)

    def provenance(self, term: str) -> list[str]:
        tags = []
        if term in self.base_terms:
            tags.append("base")
        if term in self.wordnet_terms:
            tags.append("lexical")
        if term in self.conceptnet_terms:
            tags.append("concept")
        return tags

    def counts(self) -> dict[str, int]:
        return {
            "base": len(self.base_terms),
            "lexical": len(self.wordnet_terms),
            "concept": len(self.conceptnet_terms),
            "merged": len(self.merged),
        }

    def to_text(self, path: str | Path) -> None:
        """One term per line with its provenance tags."""
        lines = [f"{term}\t{','.join(self.provenance(term))}" for term in self.merged]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @staticmethod
    def merged_terms_from_text(path: str | Path) -> list[str]:
        return [
            line.split("\t")[0]
            for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]


def merge_enriched(base: set[str], wn: set[str], cn: set[str]) -> EnrichedVocabulary:
    return EnrichedVocabulary(base_terms=set(base), wordnet_terms=set(wn), conceptnet_terms=set(cn))
