"""Seeded synthetic corpora, attention processes, and macro series with planted
structure, so the full pipeline can be verified end to end without licensed data.

Generated vocabulary words are consonant-only strings, which the preprocessing
lemmatizer maps to themselves; a generated corpus therefore round-trips through
the text pipeline to exactly the token draws it encodes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ValidationError
from .ingest import ARITH_DIFF, LEVEL, LOG_DIFF, MONTHLY, Document, MacroSeries, TopicDictionary

# no vowels, and none of s/d/g so suffix stripping never fires
_WORD_ALPHABET = "bcfhjklmnpqrtvwxz"


def _word(index: int, prefix: str, length: int = 4) -> str:
    chars = []
    value = index
    for _ in range(length):
        value, rem = divmod(value, len(_WORD_ALPHABET))
        chars.append(_WORD_ALPHABET[rem])
    return prefix + "".join(chars)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic generator. All randomness flows from ``seed``."""

    seed: int = 0
    T: int = 300
    K: int = 180
    sparsity: int = 10
    snr: float | None = 5.0
    start: str = "1973-01"
    train_months: int = 180
    backward_months: int = 0  # history before the training window
    ar: float = 0.8
    logit_scale: float = 1.0
    weight_scale: float | None = None  # defaults to K
    intercept: float = 0.5
    docs_per_month: int = 8
    tokens_per_month: int = 2000
    vocab_per_topic: int = 3
    n_metatopics: int = 5
    sentiment_state_scale: float = 0.6
    macro_links: tuple[tuple[str, float], ...] = (("EMP", -2.0), ("IPM", -6.0))

    def __post_init__(self):
        if self.sparsity > self.K:
            raise ValidationError("sparsity cannot exceed the number of topics")
        if self.snr is not None and self.snr <= 0:
            raise ValidationError("snr must be positive")
        if self.backward_months + self.train_months > self.T:
            raise ValidationError("backward_months + train_months exceeds T")

    @property
    def months(self) -> pd.PeriodIndex:
        return pd.period_range(pd.Period(self.start, freq="M"), periods=self.T, freq="M")

    @property
    def topics(self) -> tuple[str, ...]:
        width = len(str(self.K - 1))
        return tuple(f"topic_{k:0{width}d}" for k in range(self.K))

    @property
    def training_window(self) -> tuple[pd.Period, pd.Period]:
        months = self.months
        return (
            months[self.backward_months],
            months[self.backward_months + self.train_months - 1],
        )


@dataclass(frozen=True)
class SynthAttention:
    """Simplex attention paths plus the planted linear target."""

    attention: pd.DataFrame
    weights: np.ndarray
    planted: np.ndarray
    intercept: float
    target: pd.Series
    signal: pd.Series  # noiseless component, for oracle comparisons
    noise_scale: float


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    return expo / expo.sum(axis=1, keepdims=True)


def gen_attention(cfg: SynthConfig) -> SynthAttention:
    """Serially correlated attention rows and a sparse linear target.

    Logits follow a stationary AR(1) around topic-specific levels; rows are
    softmax shares. The target is ``intercept + attention @ w + noise`` with
    noise scaled to the configured signal-to-noise ratio.
    """
    rng = np.random.default_rng([cfg.seed, 1])
    base = rng.normal(0.0, 1.0, cfg.K)
    innovations = rng.normal(0.0, 1.0, (cfg.T, cfg.K))
    x = np.zeros((cfg.T, cfg.K))
    damp = math.sqrt(1.0 - cfg.ar**2)
    x[0] = innovations[0]
    for t in range(1, cfg.T):
        x[t] = cfg.ar * x[t - 1] + damp * innovations[t]
    theta = _softmax_rows(base + cfg.logit_scale * x)

    planted = np.sort(rng.choice(cfg.K, size=cfg.sparsity, replace=False))
    signs = rng.choice((-1.0, 1.0), size=cfg.sparsity)
    weights = np.zeros(cfg.K)
    # scale each planted weight by the inverse share volatility so every
    # planted topic carries a comparable slice of the signal variance
    vol = theta[:, planted].std(axis=0)
    vol = np.where(vol > 0, vol, 1.0)
    unit = cfg.weight_scale if cfg.weight_scale is not None else 1.0
    weights[planted] = signs * unit * rng.uniform(0.75, 1.25, cfg.sparsity) / vol

    signal = cfg.intercept + theta @ weights
    if cfg.snr is None or math.isinf(cfg.snr):
        sigma = 0.0
    else:
        sigma = float(np.std(theta @ weights)) / math.sqrt(cfg.snr)
    noise = sigma * rng.normal(0.0, 1.0, cfg.T)

    months = cfg.months
    return SynthAttention(
        attention=pd.DataFrame(theta, index=months, columns=list(cfg.topics)),
        weights=weights,
        planted=planted,
        intercept=cfg.intercept,
        target=pd.Series(signal + noise, index=months, dtype=float),
        signal=pd.Series(signal, index=months, dtype=float),
        noise_scale=sigma,
    )


def gen_dictionary(cfg: SynthConfig) -> TopicDictionary:
    """Unigram dictionary with ``vocab_per_topic`` unit-weight words per topic."""
    terms = {}
    for k in range(cfg.K):
        for j in range(cfg.vocab_per_topic):
            terms[_word(k * cfg.vocab_per_topic + j, "t")] = ((k, 1.0),)
    return TopicDictionary(topics=cfg.topics, terms=terms)


@dataclass(frozen=True)
class SynthCorpus:
    documents: list[Document]
    dictionary: TopicDictionary
    realized_attention: pd.DataFrame  # exact token shares the corpus encodes
    positive_words: tuple[str, ...]
    negative_words: tuple[str, ...]


def gen_corpus(cfg: SynthConfig, attention: pd.DataFrame | None = None) -> SynthCorpus:
    """Documents whose token draws realize the attention matrix within sampling error.

    Sentiment words (outside the topic dictionary) are mixed in with a slowly
    moving positive share so the sentiment pipeline has signal to measure.
    """
    if attention is None:
        attention = gen_attention(cfg).attention
    rng = np.random.default_rng([cfg.seed, 2])
    dictionary = gen_dictionary(cfg)
    vocab = np.array(
        [[_word(k * cfg.vocab_per_topic + j, "t") for j in range(cfg.vocab_per_topic)]
         for k in range(cfg.K)]
    )
    pos_words = tuple(_word(i, "p") for i in range(8))
    neg_words = tuple(_word(i, "n") for i in range(8))

    sentiment_state = 0.0
    docs: list[Document] = []
    realized = np.zeros((len(attention), cfg.K))
    for ti, (month, row) in enumerate(attention.iterrows()):
        counts = rng.multinomial(cfg.tokens_per_month, row.to_numpy())
        realized[ti] = counts / counts.sum()
        topic_ids = np.repeat(np.arange(cfg.K), counts)
        rng.shuffle(topic_ids)
        chunks = np.array_split(topic_ids, cfg.docs_per_month)

        sentiment_state = 0.9 * sentiment_state + rng.normal(0.0, cfg.sentiment_state_scale)
        p_pos = 1.0 / (1.0 + math.exp(-sentiment_state))
        for di, chunk in enumerate(chunks):
            words = [vocab[k][rng.integers(cfg.vocab_per_topic)] for k in chunk]
            n_sent = int(rng.integers(2, 6))
            for _ in range(n_sent):
                pool = pos_words if rng.random() < p_pos else neg_words
                words.append(pool[rng.integers(len(pool))])
            day = 1 + (di * 27) // max(cfg.docs_per_month, 1)
            docs.append(
                Document(
                    id=f"{month}-{di:03d}",
                    date=pd.Period(month, freq="M").to_timestamp().date().replace(day=day),
                    title=f"synthetic article {month}-{di:03d}",
                    body=" ".join(words),
                )
            )
    return SynthCorpus(
        documents=docs,
        dictionary=dictionary,
        realized_attention=pd.DataFrame(
            realized, index=attention.index, columns=attention.columns
        ),
        positive_words=pos_words,
        negative_words=neg_words,
    )


def gen_macro(cfg: SynthConfig, target: pd.Series) -> dict[str, MacroSeries]:
    """Macro series whose future growth loads on the lagged target.

    Log-level series follow ``log Y[t+1] = log Y[t] + (drift + link * y[t] + eps)/1200``
    so a one-point move in the target shifts annualized growth by ``link``.
    Includes an arithmetic-difference unemployment-style series and a 0/1
    recession indicator marking the target's upper quintile.
    """
    rng = np.random.default_rng([cfg.seed, 3])
    months = target.index
    centered = target - target.mean()
    out: dict[str, MacroSeries] = {}
    for name, link in cfg.macro_links:
        shocks = rng.normal(0.0, 1.0, len(months))
        log_level = np.empty(len(months))
        log_level[0] = math.log(100.0)
        for t in range(1, len(months)):
            growth = 2.0 + link * centered.iloc[t - 1] + shocks[t]
            log_level[t] = log_level[t - 1] + growth / 1200.0
        out[name] = MacroSeries(
            name=name,
            frequency=MONTHLY,
            values=pd.Series(np.exp(log_level), index=months, name=name),
            transform_kind=LOG_DIFF,
        )

    shocks = rng.normal(0.0, 0.8, len(months))
    uer = np.empty(len(months))
    uer[0] = 6.0
    for t in range(1, len(months)):
        uer[t] = uer[t - 1] + (0.4 * centered.iloc[t - 1] + shocks[t]) / 12.0
    out["UER"] = MacroSeries(
        name="UER",
        frequency=MONTHLY,
        values=pd.Series(uer, index=months, name="UER"),
        transform_kind=ARITH_DIFF,
    )

    threshold = target.quantile(0.8)
    out["NBER"] = MacroSeries(
        name="NBER",
        frequency=MONTHLY,
        values=(target > threshold).astype(float).rename("NBER"),
        transform_kind=LEVEL,
    )

    spread = 0.3 * centered + 0.1 * rng.normal(0.0, 1.0, len(months))
    out["GZF"] = MacroSeries(
        name="GZF",
        frequency=MONTHLY,
        values=pd.Series(1.0 + spread.to_numpy(), index=months, name="GZF"),
        transform_kind=LEVEL,
    )
    return out


def gen_metatopics(cfg: SynthConfig) -> dict[str, list[str]]:
    """Round-robin partition of the synthetic topics into named groups."""
    names = [f"group_{i}" for i in range(cfg.n_metatopics)]
    groups: dict[str, list[str]] = {n: [] for n in names}
    for k, topic in enumerate(cfg.topics):
        groups[names[k % cfg.n_metatopics]].append(topic)
    return groups


def write_corpus(documents: list[Document], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in documents:
            fh.write(
                json.dumps(
                    {
                        "id": doc.id,
                        "date": doc.date.isoformat(),
                        "title": doc.title,
                        "body": doc.body,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def write_dictionary(dictionary: TopicDictionary, path: str | Path) -> None:
    payload = {
        "topics": list(dictionary.topics),
        "terms": {term: [[k, w] for k, w in entries] for term, entries in dictionary.terms.items()},
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


def write_macro_csv(series: MacroSeries, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("date,value\n")
        for period, value in series.values.items():
            fh.write(f"{period.to_timestamp().date().isoformat()},{value!r}\n")


def synth_bundle(cfg: SynthConfig, out_dir: str | Path) -> dict:
    """Write every input file the CLI pipeline needs, plus a ready run config.

    The target series is built from the corpus's realized token shares, so the
    projection step sees exactly the configured signal-to-noise ratio.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    attn = gen_attention(cfg)
    corpus = gen_corpus(cfg, attn.attention)

    realized_signal = cfg.intercept + corpus.realized_attention.to_numpy() @ attn.weights
    noise_rng = np.random.default_rng([cfg.seed, 4])
    if cfg.snr is None or math.isinf(cfg.snr):
        sigma = 0.0
    else:
        sigma = float(np.std(realized_signal - cfg.intercept)) / math.sqrt(cfg.snr)
    target = pd.Series(
        realized_signal + sigma * noise_rng.normal(0.0, 1.0, len(realized_signal)),
        index=corpus.realized_attention.index,
        name="EBP",
    )

    write_corpus(corpus.documents, out / "corpus.jsonl")
    write_dictionary(corpus.dictionary, out / "dictionary.json")
    (out / "metatopics.json").write_text(
        json.dumps(gen_metatopics(cfg), indent=1, sort_keys=True), encoding="utf-8"
    )
    (out / "lexicon_positive.txt").write_text("\n".join(corpus.positive_words) + "\n", "utf-8")
    (out / "lexicon_negative.txt").write_text("\n".join(corpus.negative_words) + "\n", "utf-8")

    ebp = MacroSeries("EBP", MONTHLY, target, LEVEL)
    write_macro_csv(ebp, out / "ebp.csv")
    macro = gen_macro(cfg, target)
    macro_cfg = {"EBP": {"path": "ebp.csv", "frequency": MONTHLY, "transform": LEVEL}}
    for name, series in macro.items():
        filename = f"{name.lower()}.csv"
        write_macro_csv(series, out / filename)
        macro_cfg[name] = {
            "path": filename,
            "frequency": series.frequency,
            "transform": series.transform_kind,
        }

    start, end = cfg.training_window
    modes = ["IS", "OOS"] + (["BACKWARD"] if cfg.backward_months else [])
    batteries = [
        {
            "name": "modern",
            "share_sample": True,
            "shap": ["GZF", "EBP_HAT", "EBP_HAT_RES"],
            "specs": [
                {
                    "name": f"{dep}_h{h}",
                    "dependent": dep,
                    "kind": "ols",
                    "horizon": h,
                    "lags": 3,
                    "nw_lags": 3,
                    "regressors": ["GZF", "EBP_HAT", "EBP_HAT_RES"],
                }
                for dep in ("EMP", "IPM", "UER")
                for h in (3, 12)
            ]
            + [
                {
                    "name": "REC_h3",
                    "dependent": "NBER",
                    "kind": "probit",
                    "horizon": 3,
                    "lags": 0,
                    "nw_lags": 12,
                    "regressors": ["GZF", "EBP_HAT", "EBP_HAT_RES"],
                }
            ],
        }
    ]
    panel = {
        "EBP_HAT": {"projection": "ebp_topics", "mode": "OOS"},
        "EBP_HAT_RES": {"difference": ["EBP", "EBP_HAT"]},
        "GZF": {"macro": "GZF"},
        "EBP": {"macro": "EBP"},
    }
    tables = {
        "table1_fit": "run/diagnostics.csv",
        "table2_emp": "run/forecast_modern_EMP_h3.csv",
        "table3_metatopics": "run/metatopic_summary.csv",
        "table8_events": "run/events.csv",
    }
    decompose = {
        "projection": "ebp_topics",
        "events": [["synthetic panic", str(end + 12)]],
        "recessions": [str(end + 24)],
    }
    if cfg.backward_months:
        # the historical battery estimates only where the backward series exists
        panel["EBP_HAT_BWD"] = {"projection": "ebp_topics", "mode": "BACKWARD"}
        batteries.append(
            {
                "name": "historical",
                "share_sample": True,
                "shap": ["EBP_HAT_BWD"],
                "specs": [
                    {
                        "name": f"{dep}_hist_h3",
                        "dependent": dep,
                        "kind": "ols",
                        "horizon": 3,
                        "lags": 3,
                        "nw_lags": 3,
                        "regressors": ["EBP_HAT_BWD", "GZF"],
                    }
                    for dep in ("EMP", "UER")
                ],
            }
        )
        tables["table7_hist"] = "run/forecast_historical_EMP_hist_h3.csv"
        history_start = cfg.months[0]
        decompose["events"] = [["synthetic panic", str(history_start + 20)]]
        decompose["recessions"] = [str(history_start + 30)]
        decompose["events_mode"] = "BACKWARD"

    run_config = {
        "seed": cfg.seed,
        "out": "run",
        "target": "EBP",
        "inputs": {
            "corpus": "corpus.jsonl",
            "dictionary": "dictionary.json",
            "metatopics": "metatopics.json",
            "lexicon_positive": "lexicon_positive.txt",
            "lexicon_negative": "lexicon_negative.txt",
            "macro": macro_cfg,
        },
        "training": {"start": str(start), "end": str(end)},
        "projections": [
            {"name": "ebp_topics", "features": "attention", "target": "EBP", "modes": modes},
            {"name": "ebp_sent", "features": "sent_lm", "target": "EBP", "modes": ["OOS"]},
        ],
        "decompose": decompose,
        "panel": panel,
        "batteries": batteries,
        "report": {"tables": tables},
    }
    (out / "run_config.json").write_text(
        json.dumps(run_config, indent=1, sort_keys=True), encoding="utf-8"
    )
    return run_config
