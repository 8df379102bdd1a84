"""Load and validate the document corpus, macro series, topic dictionary, and metatopic map.

All loaders are pure functions of file content. File formats:

* corpus: JSONL, UTF-8, one document per line with keys ``id, date, title, body``,
  dates as ``YYYY-MM-DD``
* macro series: CSV with header ``date,value`` (RFC 4180), dates ``YYYY-MM-DD``
* topic dictionary: JSON ``{"topics": [...], "terms": {"<term>": [[k, weight], ...]}}``
* metatopic map: JSON ``{"<metatopic>": ["topic", ...]}``
"""
from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import pandas as pd

from .errors import ValidationError

MONTHLY = "monthly"
QUARTERLY = "quarterly"

LOG_DIFF = "log-difference"
ARITH_DIFF = "arithmetic-difference"
LEVEL = "level"

_TRANSFORMS = (LOG_DIFF, ARITH_DIFF, LEVEL)
_QUARTER_START_MONTHS = (1, 4, 7, 10)


@dataclass(frozen=True)
class Document:
    """One news article."""

    id: str
    date: dt.date
    title: str
    body: str

    @property
    def month(self) -> pd.Period:
        return pd.Period(year=self.date.year, month=self.date.month, freq="M")


@dataclass(frozen=True)
class IngestReport:
    """Counts and gaps reported by :func:`load_corpus`."""

    loaded: int
    dropped_empty: int
    dropped_out_of_range: int
    gap_months: tuple[pd.Period, ...]


@dataclass(frozen=True)
class MacroSeries:
    """A validated macro time series on a monthly or quarterly calendar.

    ``values`` is indexed by a PeriodIndex (freq M or Q) with one float per period.
    ``transform_kind`` tells the growth transform how to difference the series.
    """

    name: str
    frequency: str
    values: pd.Series
    transform_kind: str = LEVEL

    def __post_init__(self):
        if self.frequency not in (MONTHLY, QUARTERLY):
            raise ValidationError(f"{self.name}: unknown frequency {self.frequency!r}")
        if self.transform_kind not in _TRANSFORMS:
            raise ValidationError(f"{self.name}: unknown transform {self.transform_kind!r}")
        idx = self.values.index
        if not isinstance(idx, pd.PeriodIndex):
            raise ValidationError(f"{self.name}: values must be indexed by periods")
        if idx.has_duplicates:
            dup = idx[idx.duplicated()][0]
            raise ValidationError(f"{self.name}: duplicate period {dup}")
        if not idx.is_monotonic_increasing:
            raise ValidationError(f"{self.name}: dates must be strictly increasing")


@dataclass(frozen=True)
class TopicDictionary:
    """Term-to-topic map with nonnegative weights.

    ``terms`` maps a term (single token or space-joined n-gram) to one or more
    ``(topic_index, weight)`` assignments.
    """

    topics: tuple[str, ...]
    terms: Mapping[str, tuple[tuple[int, float], ...]]

    @property
    def n_topics(self) -> int:
        return len(self.topics)


@dataclass(frozen=True)
class MetatopicMap:
    """Total partition of the topic set into named metatopics."""

    metatopics: tuple[str, ...]
    assignments: Mapping[str, str]  # topic name -> metatopic name

    def topics_of(self, metatopic: str) -> tuple[str, ...]:
        return tuple(t for t, m in self.assignments.items() if m == metatopic)


def _parse_date(raw: str, context: str) -> dt.date:
    try:
        return dt.date.fromisoformat(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"unparseable date {raw!r} in {context}") from None


def load_corpus(
    path: str | Path,
    date_range: tuple[dt.date, dt.date] | None = None,
) -> tuple[list[Document], IngestReport]:
    """Read a JSONL corpus, dropping empty-body records and sorting by date.

    Returns the documents plus a report with drop counts and the list of
    calendar months inside the covered range that have zero documents.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)

    docs: list[Document] = []
    dropped_empty = 0
    dropped_range = 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path.name}:{lineno}: malformed record: {exc.msg}") from None
            missing = [k for k in ("id", "date", "title", "body") if k not in rec]
            if missing:
                raise ValidationError(
                    f"{path.name}:{lineno}: record missing fields {missing}"
                )
            date = _parse_date(rec["date"], f"record {rec['id']!r}")
            if not str(rec["body"]).strip():
                dropped_empty += 1
                continue
            if date_range is not None and not (date_range[0] <= date <= date_range[1]):
                dropped_range += 1
                continue
            docs.append(Document(str(rec["id"]), date, str(rec["title"]), str(rec["body"])))

    docs.sort(key=lambda d: (d.date, d.id))

    gap_months: tuple[pd.Period, ...] = ()
    if docs:
        if date_range is not None:
            lo = pd.Period(year=date_range[0].year, month=date_range[0].month, freq="M")
            hi = pd.Period(year=date_range[1].year, month=date_range[1].month, freq="M")
        else:
            lo, hi = docs[0].month, docs[-1].month
        have = {d.month for d in docs}
        gap_months = tuple(m for m in pd.period_range(lo, hi, freq="M") if m not in have)

    report = IngestReport(
        loaded=len(docs),
        dropped_empty=dropped_empty,
        dropped_out_of_range=dropped_range,
        gap_months=gap_months,
    )
    return docs, report


def _period_for(date: dt.date, frequency: str, name: str) -> pd.Period:
    if date.day != 1:
        raise ValidationError(f"{name}: date {date} is not first-of-period")
    if frequency == MONTHLY:
        return pd.Period(year=date.year, month=date.month, freq="M")
    if date.month not in _QUARTER_START_MONTHS:
        raise ValidationError(
            f"{name}: frequency mismatch, {date} is not a quarter start"
        )
    return pd.Period(year=date.year, month=date.month, freq="Q")


def load_macro(
    path: str | Path,
    name: str,
    frequency: str = MONTHLY,
    transform_kind: str = LEVEL,
) -> MacroSeries:
    """Read a ``date,value`` CSV into a validated :class:`MacroSeries`."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)

    periods: list[pd.Period] = []
    vals: list[float] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "value"]:
            raise ValidationError(f"{name}: expected header 'date,value' in {path.name}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ValidationError(f"{name}: {path.name}:{lineno}: expected two fields")
            date = _parse_date(row[0].strip(), f"{path.name}:{lineno}")
            try:
                value = float(row[1])
            except ValueError:
                raise ValidationError(
                    f"{name}: {path.name}:{lineno}: non-numeric value {row[1]!r}"
                ) from None
            periods.append(_period_for(date, frequency, name))
            vals.append(value)

    if not periods:
        raise ValidationError(f"{name}: empty series in {path.name}")
    idx = pd.PeriodIndex(periods)
    if idx.has_duplicates:
        dup = idx[idx.duplicated()][0]
        raise ValidationError(f"{name}: duplicate period {dup}")
    if not idx.is_monotonic_increasing:
        raise ValidationError(f"{name}: dates must be strictly increasing")
    values = pd.Series(vals, index=idx, name=name, dtype=float)
    return MacroSeries(name=name, frequency=frequency, values=values, transform_kind=transform_kind)


def load_topic_dictionary(path: str | Path) -> TopicDictionary:
    """Read the topic dictionary JSON and validate its shape."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    topics = raw.get("topics")
    terms = raw.get("terms")
    if not isinstance(topics, list) or not topics:
        raise ValidationError(f"{path.name}: 'topics' must be a non-empty list")
    if len(set(topics)) != len(topics):
        raise ValidationError(f"{path.name}: topic names must be unique")
    if not isinstance(terms, dict) or not terms:
        raise ValidationError(f"{path.name}: 'terms' must be a non-empty object")

    k = len(topics)
    parsed: dict[str, tuple[tuple[int, float], ...]] = {}
    for term, entries in terms.items():
        if not entries:
            raise ValidationError(f"{path.name}: term {term!r} maps to no topic")
        out = []
        for entry in entries:
            idx, weight = int(entry[0]), float(entry[1])
            if not 0 <= idx < k:
                raise ValidationError(f"{path.name}: term {term!r} topic index {idx} out of range")
            if weight < 0:
                raise ValidationError(f"{path.name}: term {term!r} has negative weight")
            out.append((idx, weight))
        parsed[" ".join(str(term).split())] = tuple(out)
    return TopicDictionary(topics=tuple(str(t) for t in topics), terms=parsed)


def load_metatopic_map(path: str | Path, topics: Sequence[str]) -> MetatopicMap:
    """Read a metatopic JSON and check it partitions ``topics`` exactly."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or not raw:
        raise ValidationError(f"{path.name}: expected an object of metatopic -> topic list")

    assignments: dict[str, str] = {}
    for metatopic, members in raw.items():
        for topic in members:
            if topic in assignments:
                raise ValidationError(
                    f"{path.name}: topic {topic!r} assigned to both "
                    f"{assignments[topic]!r} and {metatopic!r}"
                )
            assignments[topic] = metatopic

    topic_set = set(topics)
    extra = sorted(set(assignments) - topic_set)
    missing = sorted(topic_set - set(assignments))
    if extra:
        raise ValidationError(f"{path.name}: unknown topics in map: {extra[:5]}")
    if missing:
        raise ValidationError(f"{path.name}: topics missing from map: {missing[:5]}")
    return MetatopicMap(metatopics=tuple(raw.keys()), assignments=assignments)


def align(
    series_list: Iterable[MacroSeries],
    frequency: str,
    agg: Mapping[str, str] | None = None,
) -> pd.DataFrame:
    """Join series onto a common calendar at ``frequency``.

    Monthly series are aggregated to quarters with a per-series rule from
    ``agg``: ``"last"`` (default, value of the quarter's final month) or
    ``"mean"`` (average of a complete quarter). Quarters with missing months
    under the rule are omitted rather than imputed. The panel covers the
    intersection of the series' dates; columns are sorted by name so the
    result does not depend on the order of ``series_list``.
    """
    if frequency not in (MONTHLY, QUARTERLY):
        raise ValidationError(f"unknown frequency {frequency!r}")
    agg = dict(agg or {})

    columns: dict[str, pd.Series] = {}
    for series in series_list:
        if series.frequency == frequency:
            values = series.values
        elif series.frequency == MONTHLY and frequency == QUARTERLY:
            values = _monthly_to_quarterly(series.values, agg.get(series.name, "last"))
        else:
            raise ValidationError(
                f"{series.name}: cannot convert {series.frequency} to {frequency}"
            )
        if series.name in columns:
            if not columns[series.name].equals(values):
                raise ValidationError(f"duplicate series name {series.name!r} with different data")
            continue
        columns[series.name] = values

    if not columns:
        raise ValidationError("no series to align")
    common = None
    for values in columns.values():
        common = values.index if common is None else common.intersection(values.index)
    if len(common) == 0:
        raise ValidationError("series have no overlapping dates")

    panel = pd.DataFrame(
        {name: columns[name].loc[common] for name in sorted(columns)}, index=common
    )
    return panel


def _monthly_to_quarterly(values: pd.Series, rule: str) -> pd.Series:
    if rule not in ("last", "mean"):
        raise ValidationError(f"unknown quarterly aggregation rule {rule!r}")
    quarters = values.index.asfreq("Q")
    frame = pd.DataFrame({"value": values.to_numpy(), "quarter": quarters, "month": values.index.month})
    out_idx: list[pd.Period] = []
    out_val: list[float] = []
    for quarter, group in frame.groupby("quarter", sort=True):
        if rule == "last":
            last_month = quarter.asfreq("M", how="end")
            sel = group[group["month"] == last_month.month]
            if sel.empty:
                continue
            out_val.append(float(sel["value"].iloc[0]))
        else:
            if len(group) != 3:
                continue
            out_val.append(float(group["value"].mean()))
        out_idx.append(quarter)
    return pd.Series(out_val, index=pd.PeriodIndex(out_idx, freq="Q"), dtype=float)
