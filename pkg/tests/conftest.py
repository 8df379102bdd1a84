import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from textspread.ingest import TopicDictionary

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def lexicon_paths():
    return DATA / "positive.txt", DATA / "negative.txt"


@pytest.fixture
def two_topic_dictionary():
    """Unigram weight-1 dictionary over topics A and B."""
    return TopicDictionary(
        topics=("A", "B"),
        terms={"alpha": ((0, 1.0),), "aleph": ((0, 1.0),), "beta": ((1, 1.0),), "bet": ((1, 1.0),)},
    )


def write_jsonl(path: Path, records: list[dict]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path


def month(spec: str) -> pd.Period:
    return pd.Period(spec, freq="M")


def months(start: str, n: int) -> pd.PeriodIndex:
    return pd.period_range(month(start), periods=n, freq="M")
