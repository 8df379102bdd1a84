"""Normalize raw article text and turn monthly token pools into topic-attention shares.

Preprocessing applies, in order: whitespace collapse, HTML unescape, URL/email
removal, removal of numeric values and ``$ . / %`` symbols, tokenization,
stopword/digit/punctuation removal, lemmatization, boilerplate n-gram removal,
and a final cleanup. Dictionary matching happens on the lemmatized tokens and
prefers the longest n-gram (trigram > bigram > unigram).
"""
from __future__ import annotations

import html
import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError
from .ingest import Document, MetatopicMap, TopicDictionary

log = logging.getLogger(__name__)

BOILERPLATE_PHRASES = (
    "wall street journal",
    "new york times",
    "new york",
    "dow jones newswires",
    "year year",
    "month month",
    "week week",
    "day day",
)

_WS_RE = re.compile(r"\s+")
_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_EMAIL_RE = re.compile(r"\S+@\S+")
_DIGIT_CHUNK_RE = re.compile(r"\S*\d\S*")
_TOKEN_RE = re.compile(r"[a-z]+")
_SYMBOLS = str.maketrans({c: " " for c in "$./%"})

_VOWELS = set("aeiouy")

# Irregular forms the suffix rules would mangle or miss.
_LEMMA_EXCEPTIONS = {
    "men": "man",
    "women": "woman",
    "children": "child",
    "feet": "foot",
    "teeth": "tooth",
    "geese": "goose",
    "mice": "mouse",
    "people": "people",
    "news": "news",
    "series": "series",
    "species": "species",
    "crises": "crisis",
    "crisis": "crisis",
    "indices": "index",
    "analyses": "analysis",
    "analysis": "analysis",
    "basis": "basis",
    "media": "media",
    "data": "data",
}

_DOUBLED = ("bb", "dd", "ff", "gg", "mm", "nn", "pp", "rr", "tt")


def _has_vowel(word: str) -> bool:
    return any(ch in _VOWELS for ch in word)


def lemmatize(token: str) -> str:
    """Deterministic suffix-stripping lemmatizer (Porter-style, reduced).

    Handles plural -s/-es/-ies and verbal -ed/-ing with consonant
    un-doubling; irregulars come from a small exception table. Suffix rules
    repeat until the word stops changing, so the map is a projection
    (idempotent). Favors determinism over linguistic fidelity.
    """
    word = token
    while True:
        stripped = _lemmatize_once(word)
        if stripped == word:
            return word
        word = stripped


def _lemmatize_once(word: str) -> str:
    if word in _LEMMA_EXCEPTIONS:
        return _LEMMA_EXCEPTIONS[word]
    if len(word) <= 3:
        return word

    # plurals
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies") and len(word) > 4:
        word = word[:-3] + "y"
    elif word.endswith("es") and word[-3] in "sxzho" and len(word) > 4:
        word = word[:-2]
    elif word.endswith("s") and not word.endswith("ss") and not word.endswith("us"):
        word = word[:-1]

    # verbal suffixes
    for suffix in ("ing", "ed"):
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            stem = word[: -len(suffix)]
            if not _has_vowel(stem):
                continue
            if stem.endswith(_DOUBLED):
                stem = stem[:-1]
            word = stem
            break
    return word


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Read the stopword fixture (one lowercase token per line)."""
    if path is None:
        text = resources.files("textspread.data").joinpath("stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(tok for tok in text.split() if tok)


_DEFAULT_STOPWORDS = load_stopwords()


def _lemmatize_phrase(phrase: str) -> tuple[str, ...]:
    return tuple(lemmatize(tok) for tok in phrase.lower().split())


_BOILERPLATE_LEMMAS = sorted(
    (_lemmatize_phrase(p) for p in BOILERPLATE_PHRASES), key=len, reverse=True
)


def _remove_phrases(tokens: list[str], phrases: Sequence[tuple[str, ...]]) -> list[str]:
    out: list[str] = []
    i = 0
    n = len(tokens)
    while i < n:
        matched = False
        for phrase in phrases:
            k = len(phrase)
            if i + k <= n and tuple(tokens[i : i + k]) == phrase:
                i += k
                matched = True
                break
        if not matched:
            out.append(tokens[i])
            i += 1
    return out


def preprocess(raw: str, stopwords: frozenset[str] | None = None) -> list[str]:
    """Normalize raw article text into a clean token list.

    The output is a fixed point: running the result back through preprocess
    returns the same tokens. That requires filtering stopwords again after
    lemmatization (a lemma can land on a stopword) and removing boilerplate
    phrases until none remain.
    """
    if stopwords is None:
        stopwords = _DEFAULT_STOPWORDS
    text = _WS_RE.sub(" ", raw)
    text = html.unescape(text)
    text = _URL_RE.sub(" ", text)
    text = _EMAIL_RE.sub(" ", text)
    text = text.translate(_SYMBOLS)
    text = _DIGIT_CHUNK_RE.sub(" ", text)
    text = _WS_RE.sub(" ", text).strip()
    tokens = _TOKEN_RE.findall(text.lower())
    tokens = [t for t in tokens if t not in stopwords]
    tokens = [lemmatize(t) for t in tokens]
    tokens = [t for t in tokens if t and t not in stopwords]
    while True:
        cleaned = _remove_phrases(tokens, _BOILERPLATE_LEMMAS)
        if len(cleaned) == len(tokens):
            return cleaned
        tokens = cleaned


@dataclass(frozen=True)
class TokenizedMonth:
    """All of one month's article tokens pooled together."""

    month: pd.Period
    tokens: tuple[str, ...]

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)


def tokenize_by_month(
    docs: Iterable[Document], stopwords: frozenset[str] | None = None
) -> list[TokenizedMonth]:
    """Preprocess every document and pool tokens by calendar month."""
    pools: dict[pd.Period, list[str]] = {}
    for doc in docs:
        pools.setdefault(doc.month, []).extend(preprocess(doc.body, stopwords))
    return [TokenizedMonth(m, tuple(pools[m])) for m in sorted(pools)]


class TermMatcher:
    """Greedy longest-first n-gram matcher over a topic dictionary.

    Dictionary terms are lemmatized with the same lemmatizer as the token
    stream so raw dictionaries behave predictably.
    """

    def __init__(self, dictionary: TopicDictionary):
        self.dictionary = dictionary
        self._tables: dict[int, dict[tuple[str, ...], tuple[tuple[int, float], ...]]] = {}
        for term, entries in dictionary.terms.items():
            key = _lemmatize_phrase(term)
            if not 1 <= len(key) <= 3:
                raise ValidationError(f"term {term!r}: only unigrams to trigrams are supported")
            self._tables.setdefault(len(key), {})[key] = entries
        self._sizes = sorted(self._tables, reverse=True)

    def accumulate(self, tokens: Sequence[str]) -> np.ndarray:
        """Sum matched term weights per topic across a token sequence."""
        counts = np.zeros(self.dictionary.n_topics, dtype=float)
        i = 0
        n = len(tokens)
        while i < n:
            advanced = False
            for size in self._sizes:
                if i + size > n:
                    continue
                entries = self._tables[size].get(tuple(tokens[i : i + size]))
                if entries is not None:
                    for topic_idx, weight in entries:
                        counts[topic_idx] += weight
                    i += size
                    advanced = True
                    break
            if not advanced:
                i += 1
        return counts


def attention_shares(counts: np.ndarray) -> np.ndarray | None:
    """Normalize matched-term weights to shares; ``None`` when nothing matched."""
    total = counts.sum()
    if total <= 0:
        return None
    return counts / total


def compute_attention(
    months: Sequence[TokenizedMonth], dictionary: TopicDictionary
) -> pd.DataFrame:
    """Monthly topic-attention matrix (rows sum to one).

    Months where no token matches any dictionary term are dropped with a
    warning rather than emitting an all-zero row.
    """
    matcher = TermMatcher(dictionary)
    rows: list[np.ndarray] = []
    index: list[pd.Period] = []
    for month in months:
        shares = attention_shares(matcher.accumulate(month.tokens))
        if shares is None:
            log.warning("month %s: no dictionary matches, dropped", month.month)
            continue
        rows.append(shares)
        index.append(month.month)
    if not rows:
        raise ValidationError("no month produced any dictionary match")
    return pd.DataFrame(
        np.vstack(rows), index=pd.PeriodIndex(index, freq="M"), columns=list(dictionary.topics)
    )


def article_attention(
    tokens: Sequence[str], dictionary: TopicDictionary, matcher: TermMatcher | None = None
) -> np.ndarray | None:
    """Per-article attention shares; ``None`` when no token matches."""
    if matcher is None:
        matcher = TermMatcher(dictionary)
    return attention_shares(matcher.accumulate(tokens))


def rank_articles_by_metatopic(
    docs: Sequence[Document],
    dictionary: TopicDictionary,
    metatopics: MetatopicMap,
    month: pd.Period,
    top: int = 3,
    stopwords: frozenset[str] | None = None,
) -> dict[str, list[tuple[str, float]]]:
    """Top articles per metatopic in one month, ranked by summed attention share."""
    matcher = TermMatcher(dictionary)
    topic_idx: dict[str, list[int]] = {m: [] for m in metatopics.metatopics}
    for k, topic in enumerate(dictionary.topics):
        topic_idx[metatopics.assignments[topic]].append(k)

    scored: dict[str, list[tuple[str, float]]] = {m: [] for m in metatopics.metatopics}
    for doc in docs:
        if doc.month != month:
            continue
        shares = article_attention(preprocess(doc.body, stopwords), dictionary, matcher)
        if shares is None:
            continue
        for metatopic, idx in topic_idx.items():
            scored[metatopic].append((doc.title, float(shares[idx].sum())))
    return {
        m: sorted(items, key=lambda pair: (-pair[1], pair[0]))[:top]
        for m, items in scored.items()
    }
