"""RAKE keyword extraction over cleaned captions.

Candidate phrases are maximal stopword-free token runs. Word scores are
degree/frequency computed per caption (not over the whole corpus), which
keeps extraction order-independent and stable as the corpus grows:
    freq(w)   = number of occurrences of w across the caption's phrases
    degree(w) = sum of phrase length over the caption's phrases containing w
    score(phrase) = sum of its words' scores
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .corpus import CaptionRecord


@dataclass
class KeywordPhrase:
    words: list[str]
    score: float
    source_image_id: str

    @property
    def text(self) -> str:
        return " ".join(self.words)


def load_stopwords(path: str | Path) -> set[str]:
    """Read a stopword file: UTF-8, one token per line, '#' comments allowed."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            words.add(line)
    return words


def default_stopwords() -> set[str]:
    """The English stopword list shipped with the package."""
    return load_stopwords(Path(__file__).parent / "data" / "stopwords_en.txt")


def _candidate_phrases(tokens: list[str], stopwords: set[str]) -> list[list[str]]:
    phrases: list[list[str]] = []
    run: list[str] = []
    for tok in tokens:
        if tok in stopwords:
            if run:
                phrases.append(run)
                run = []
        else:
            run.append(tok)
    if run:
        phrases.append(run)
    # Tokens from preprocess_caption already satisfy this, but the filter
    # also protects direct callers with unclean input.
    return [p for p in phrases if all(t.isalpha() and len(t) >= 2 for t in p)]


def rank_phrases(tokens: list[str], stopwords: set[str], top_k: int) -> list[tuple[list[str], float]]:
    """RAKE ranking for one caption; ties broken by the joined phrase string."""
    phrases = _candidate_phrases(tokens, stopwords)
    freq: dict[str, int] = defaultdict(int)
    degree: dict[str, int] = defaultdict(int)
    for phrase in phrases:
        for word in phrase:
            freq[word] += 1
        for word in set(phrase):
            degree[word] += len(phrase)
    word_score = {w: degree[w] / freq[w] for w in freq}

    scored: dict[str, tuple[list[str], float]] = {}
    for phrase in phrases:
        text = " ".join(phrase)
        if text not in scored:
            scored[text] = (phrase, sum(word_score[w] for w in phrase))
    ranked = sorted(scored.items(), key=lambda kv: (-kv[1][1], kv[0]))
    return [val for _, val in ranked[:top_k]]


def extract_keywords(
    records: list[CaptionRecord],
    stopwords: set[str],
    top_k: int = 10,
) -> dict[str, list[KeywordPhrase]]:
    """Per-image ranked keyword phrases (score desc, lexicographic asc)."""
    if not stopwords:
        raise ValueError("stopword set must be non-empty")
    out: dict[str, list[KeywordPhrase]] = {}
    for rec in records:
        ranked = rank_phrases(rec.clean_tokens, stopwords, top_k)
        out[rec.image_id] = [
            KeywordPhrase(words=words, score=score, source_image_id=rec.image_id)
            for words, score in ranked
        ]
    return out


def dump_keywords_csv(keywords: dict[str, list[KeywordPhrase]], path: str | Path) -> None:
    """Write the keyword map as CSV (image, phrase, score), ids sorted."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "phrase", "score"])
        for image_id in sorted(keywords):
            for kp in keywords[image_id]:
                writer.writerow([image_id, kp.text, repr(kp.score)])


def load_keywords_csv(path: str | Path) -> dict[str, list[KeywordPhrase]]:
    out: dict[str, list[KeywordPhrase]] = defaultdict(list)
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["image"]].append(
                KeywordPhrase(
                    words=row["phrase"].split(),
                    score=float(row["score"]),
                    source_image_id=row["image"],
                )
            )
    return dict(out)
