"""Dictionary-polarity sentiment: monthly score, topic-weighted score, and the
stale-weight aggregate used alongside the attention projection."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError
from .ingest import TopicDictionary
from .text_pipeline import TermMatcher, attention_shares, lemmatize

if TYPE_CHECKING:
    from .projector import ProjectionResult

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SentimentLexicon:
    """Disjoint positive/negative token sets (stored lemmatized)."""

    positive: frozenset[str]
    negative: frozenset[str]

    def __post_init__(self):
        overlap = self.positive & self.negative
        if overlap:
            raise ValidationError(f"lexicon sets overlap: {sorted(overlap)[:5]}")


def load_lexicon(positive_path: str | Path, negative_path: str | Path) -> SentimentLexicon:
    """Read the two one-token-per-line lexicon files, lemmatizing entries."""

    def read(path: str | Path) -> frozenset[str]:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(path)
        return frozenset(lemmatize(tok.lower()) for tok in path.read_text("utf-8").split() if tok)

    return SentimentLexicon(positive=read(positive_path), negative=read(negative_path))


def polarity_counts(tokens: Sequence[str], lexicon: SentimentLexicon) -> tuple[int, int]:
    pos = sum(1 for t in tokens if t in lexicon.positive)
    neg = sum(1 for t in tokens if t in lexicon.negative)
    return pos, neg


def polarity(tokens: Sequence[str], lexicon: SentimentLexicon) -> float:
    """Polar score (pos - neg) / (pos + neg); 0 when no sentiment word appears."""
    pos, neg = polarity_counts(tokens, lexicon)
    if pos + neg == 0:
        return 0.0
    return (pos - neg) / (pos + neg)


@dataclass(frozen=True)
class SentimentSeries:
    """Monthly sentiment with the months that had no sentiment words flagged."""

    values: pd.Series
    zero_months: tuple[pd.Period, ...] = ()


def sentiment_lm(
    monthly_tokens: Iterable[tuple[pd.Period, Sequence[str]]], lexicon: SentimentLexicon
) -> SentimentSeries:
    """Monthly polar sentiment from pooled tokens.

    A month with no positive or negative words scores 0 and is flagged.
    """
    months: list[pd.Period] = []
    values: list[float] = []
    zeros: list[pd.Period] = []
    for month, tokens in monthly_tokens:
        pos, neg = polarity_counts(tokens, lexicon)
        if pos + neg == 0:
            zeros.append(month)
            values.append(0.0)
        else:
            values.append((pos - neg) / (pos + neg))
        months.append(month)
    series = pd.Series(values, index=pd.PeriodIndex(months, freq="M"), dtype=float).sort_index()
    return SentimentSeries(values=series, zero_months=tuple(zeros))


def topic_sentiment(
    article_tokens: Iterable[tuple[pd.Period, Sequence[str]]],
    lexicon: SentimentLexicon,
    dictionary: TopicDictionary,
) -> pd.DataFrame:
    """Attention-weighted topic sentiment by month.

    Each article contributes its polar score times its attention share on
    every topic; articles that match no dictionary term carry no attention
    and are excluded from the aggregation.
    """
    matcher = TermMatcher(dictionary)
    acc: dict[pd.Period, np.ndarray] = {}
    for month, tokens in article_tokens:
        shares = attention_shares(matcher.accumulate(tokens))
        if shares is None:
            continue
        score = polarity(tokens, lexicon)
        acc.setdefault(month, np.zeros(dictionary.n_topics))
        acc[month] += score * shares
    if not acc:
        raise ValidationError("no article matched the topic dictionary")
    months = sorted(acc)
    return pd.DataFrame(
        np.vstack([acc[m] for m in months]),
        index=pd.PeriodIndex(months, freq="M"),
        columns=list(dictionary.topics),
    )


def sentiment_weighted(topic_sent: pd.DataFrame, projection: "ProjectionResult") -> pd.Series:
    """Stale-weight aggregate of topic sentiment.

    For each month with an out-of-sample stale model, the value is the dot
    product of the prior-window lasso weights with that month's topic
    sentiment. Months without stale weights (or topic sentiment) are omitted.
    """
    months: list[pd.Period] = []
    values: list[float] = []
    for month in projection.values.index:
        if month not in topic_sent.index:
            log.warning("month %s: no topic sentiment, omitted", month)
            continue
        fit = projection.fits[projection.provenance[month]]
        values.append(float(topic_sent.loc[month].to_numpy() @ fit.weights))
        months.append(month)
    if not months:
        raise ValidationError("no month has both topic sentiment and stale weights")
    return pd.Series(values, index=pd.PeriodIndex(months, freq="M"), dtype=float)
