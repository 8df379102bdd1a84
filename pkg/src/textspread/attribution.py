"""Shapley attribution of regression predictions plus metatopic decompositions.

The value function is mean-imputation over the estimation sample: a feature
outside the coalition is fixed at its sample mean. For a linear model this
makes the Shapley value of feature j on observation i exactly
``w_j * (x_ij - mean_j)``; probit attributions are computed on the linear
index and rescaled per observation onto the probability scale so additivity
holds there too. ``shap_brute_force`` enumerates all coalitions and is kept
as an audit oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.special import ndtr

from .errors import EstimationError, ValidationError
from .econometrics import PROBIT, RegressionFit
from .ingest import MetatopicMap
from .projector import LassoFit, ProjectionResult


@dataclass(frozen=True)
class ShapReport:
    """Per-observation attributions with normalized mean-absolute importances."""

    columns: tuple[str, ...]
    base_value: float
    attributions: pd.DataFrame
    importance: pd.Series
    normalized_importance: pd.Series
    predictions: np.ndarray


def _linear_parts(fit: RegressionFit | LassoFit, X: pd.DataFrame | None):
    if isinstance(fit, LassoFit):
        if X is None:
            raise ValidationError("attribution of a lasso fit needs the feature matrix")
        names = list(X.columns) if isinstance(X, pd.DataFrame) else [
            f"x{j}" for j in range(np.asarray(X).shape[1])
        ]
        frame = pd.DataFrame(np.asarray(X, dtype=float), columns=names)
        return frame, pd.Series(fit.weights, index=names), float(fit.intercept), "linear"
    if X is None:
        X = fit.design
    weights = fit.params.drop(labels=["const"], errors="ignore")
    intercept = float(fit.params.get("const", 0.0))
    frame = X[list(weights.index)].astype(float)
    return frame, weights, intercept, ("probit" if fit.kind == PROBIT else "linear")


def shap_regression(fit: RegressionFit | LassoFit, X: pd.DataFrame | None = None) -> ShapReport:
    """Exact Shapley attributions for a fitted linear or probit-index model.

    Importance ``I_j`` is the mean absolute attribution; the normalized
    importances are percentages summing to 100.
    """
    frame, weights, intercept, kind = _linear_parts(fit, X)
    means = frame.mean(axis=0)
    centered = frame - means
    phi = centered * weights  # N x p, exact for the mean-imputation value function

    base_index = float(intercept + means @ weights)
    index = frame.to_numpy() @ weights.to_numpy() + intercept

    if kind == "probit":
        base = float(ndtr(base_index))
        preds = ndtr(index)
        gaps = index - base_index
        # common per-observation rescale keeps additivity exact on the
        # probability scale; the limit at a zero gap is the normal density
        with np.errstate(invalid="ignore", divide="ignore"):
            factor = np.where(
                np.abs(gaps) > 1e-300,
                (preds - base) / gaps,
                math.exp(-0.5 * base_index**2) / math.sqrt(2.0 * math.pi),
            )
        phi = phi * factor[:, None]
    else:
        base = base_index
        preds = index

    importance = phi.abs().mean(axis=0)
    total = float(importance.sum())
    if total <= 0.0:
        raise EstimationError("all attributions are zero; importances undefined")
    return ShapReport(
        columns=tuple(frame.columns),
        base_value=base,
        attributions=phi,
        importance=importance,
        normalized_importance=100.0 * importance / total,
        predictions=np.asarray(preds, dtype=float),
    )


def shap_brute_force(
    predict: Callable[[np.ndarray], float],
    x: np.ndarray,
    background: np.ndarray,
) -> np.ndarray:
    """Exhaustive-coalition Shapley values with mean-imputation, for audits.

    ``predict`` maps one feature vector to a scalar; features outside the
    coalition are fixed at ``background``. Cost is ``2^n`` model calls.
    """
    x = np.asarray(x, dtype=float)
    background = np.asarray(background, dtype=float)
    n = len(x)
    if n > 20:
        raise ValidationError("brute-force enumeration is limited to 20 features")

    def value(subset: frozenset[int]) -> float:
        z = background.copy()
        for j in subset:
            z[j] = x[j]
        return float(predict(z))

    cache: dict[frozenset[int], float] = {}

    def cached(subset: frozenset[int]) -> float:
        if subset not in cache:
            cache[subset] = value(subset)
        return cache[subset]

    phi = np.zeros(n)
    others = list(range(n))
    for j in range(n):
        rest = [k for k in others if k != j]
        for size in range(n):
            weight = math.factorial(size) * math.factorial(n - 1 - size) / math.factorial(n)
            for subset in combinations(rest, size):
                s = frozenset(subset)
                phi[j] += weight * (cached(s | {j}) - cached(s))
    return phi


def _weights_by_topic(fit: LassoFit, topics: Sequence[str]) -> pd.Series:
    if len(topics) != len(fit.weights):
        raise ValidationError(
            f"fit has {len(fit.weights)} weights but {len(topics)} topic names given"
        )
    return pd.Series(fit.weights, index=list(topics), dtype=float)


def metatopic_weights(fit: LassoFit, topics: Sequence[str], mapping: MetatopicMap) -> pd.Series:
    """Aggregate original-scale topic weights within each metatopic."""
    weights = _weights_by_topic(fit, topics)
    missing = [t for t in topics if t not in mapping.assignments]
    if missing:
        raise ValidationError(f"topics missing from metatopic map: {missing[:5]}")
    sums = {m: 0.0 for m in mapping.metatopics}
    for topic, value in weights.items():
        sums[mapping.assignments[topic]] += float(value)
    return pd.Series(sums, index=list(mapping.metatopics), dtype=float)


def explained_variance(
    fit: LassoFit,
    attention: pd.DataFrame,
    mapping: MetatopicMap,
    window: tuple[pd.Period, pd.Period] | None = None,
) -> pd.Series:
    """Within-metatopic weighted attention covariance, normalized to percent.

    Each metatopic's share is ``w_M' Cov(f_M) w_M`` over the evaluation window
    divided by the sum of those terms across metatopics (cross-metatopic
    covariance is excluded by construction).
    """
    weights = _weights_by_topic(fit, attention.columns)
    if window is None:
        window = fit.window
    frame = attention
    if window is not None:
        frame = attention.loc[(attention.index >= window[0]) & (attention.index <= window[1])]
    if len(frame) < 2:
        raise ValidationError("need at least two months to compute covariances")

    contributions = {}
    for metatopic in mapping.metatopics:
        members = [t for t in attention.columns if mapping.assignments.get(t) == metatopic]
        if not members:
            contributions[metatopic] = 0.0
            continue
        sub = frame[members].to_numpy(dtype=float)
        w = weights[members].to_numpy()
        cov = np.cov(sub, rowvar=False, ddof=1)
        cov = np.atleast_2d(cov)
        contributions[metatopic] = float(w @ cov @ w)
    total = sum(contributions.values())
    if total == 0.0:
        raise EstimationError("all within-metatopic variance terms are zero")
    return pd.Series(
        {m: 100.0 * v / total for m, v in contributions.items()},
        index=list(mapping.metatopics),
        dtype=float,
    )


@dataclass(frozen=True)
class MetatopicDecomposition:
    """Per-month metatopic components of a projection plus residual series."""

    components: pd.DataFrame  # months x metatopics
    intercepts: pd.Series  # stale intercept per month
    projected: pd.Series  # the projection the components add up to
    residual: pd.Series  # target - projected
    component_residuals: pd.DataFrame  # target - component, per metatopic


def metatopic_series(
    projection: ProjectionResult,
    attention: pd.DataFrame,
    mapping: MetatopicMap,
    target: pd.Series,
) -> MetatopicDecomposition:
    """Split each month's projection into stale-weight metatopic components.

    For every month, the component of metatopic M is the dot product of the
    stale weights of M's topics with that month's attention; the stale
    intercept plus the components reproduces the projection.
    """
    member_idx: dict[str, np.ndarray] = {}
    for metatopic in mapping.metatopics:
        members = [
            j for j, t in enumerate(attention.columns) if mapping.assignments.get(t) == metatopic
        ]
        member_idx[metatopic] = np.asarray(members, dtype=int)

    months = [m for m in projection.values.index if m in attention.index]
    if not months:
        raise ValidationError("projection and attention share no months")
    rows = np.zeros((len(months), len(mapping.metatopics)))
    intercepts = np.zeros(len(months))
    for i, month in enumerate(months):
        fit = projection.fits[projection.provenance[month]]
        theta = attention.loc[month].to_numpy(dtype=float)
        intercepts[i] = fit.intercept
        for j, metatopic in enumerate(mapping.metatopics):
            idx = member_idx[metatopic]
            if len(idx):
                rows[i, j] = float(fit.weights[idx] @ theta[idx])

    index = pd.PeriodIndex(months, freq="M")
    components = pd.DataFrame(rows, index=index, columns=list(mapping.metatopics))
    projected = projection.values.loc[index]
    target_aligned = target.reindex(index).astype(float)
    return MetatopicDecomposition(
        components=components,
        intercepts=pd.Series(intercepts, index=index),
        projected=projected,
        residual=target_aligned - projected,
        component_residuals=components.rsub(target_aligned, axis=0),
    )


@dataclass(frozen=True)
class EventWindow:
    name: str
    month: pd.Period
    mean: float | None
    n_months: int
    partial: bool
    excluded: bool


@dataclass(frozen=True)
class EventReport:
    events: tuple[EventWindow, ...]
    recession_mean: float | None
    all_other_mean: float
    window: int
    metadata: dict


def event_window_average(
    series: pd.Series,
    events: Sequence[tuple[str, pd.Period]],
    recessions: Sequence[pd.Period] = (),
    window: int = 12,
    sample: tuple[pd.Period, pd.Period] | None = None,
) -> EventReport:
    """Average the series over the months strictly before each event.

    Each event's mean covers the ``window`` months before the event month.
    Recession starts are pooled into one pre-recession mean. "All other
    months" averages the sample dates outside every event and recession
    lookback; the per-recession means are kept in the metadata since pooling
    is only one way to aggregate them.
    """
    if sample is None:
        sample = (series.index[0], series.index[-1])
    lo, hi = sample

    def lookback(month: pd.Period) -> pd.PeriodIndex:
        return pd.period_range(month - window, month - 1, freq="M")

    rows: list[EventWindow] = []
    used: set[pd.Period] = set()
    for name, month in events:
        month = pd.Period(month, freq="M")
        back = lookback(month)
        present = back[back.isin(series.index)]
        used.update(back)
        if len(present) == 0:
            rows.append(EventWindow(name, month, None, 0, partial=True, excluded=True))
            continue
        rows.append(
            EventWindow(
                name,
                month,
                float(series.loc[present].mean()),
                len(present),
                partial=len(present) < window,
                excluded=False,
            )
        )

    recession_months: list[pd.Period] = []
    per_recession: dict[str, float] = {}
    for month in recessions:
        month = pd.Period(month, freq="M")
        back = lookback(month)
        present = back[back.isin(series.index)]
        used.update(back)
        if len(present):
            recession_months.extend(present)
            per_recession[str(month)] = float(series.loc[present].mean())
    recession_mean = (
        float(series.loc[pd.PeriodIndex(sorted(set(recession_months)), freq="M")].mean())
        if recession_months
        else None
    )

    in_sample = series.loc[(series.index >= lo) & (series.index <= hi)]
    other = in_sample[~in_sample.index.isin(used)]
    if other.empty:
        raise ValidationError("no months left outside the event lookbacks")
    return EventReport(
        events=tuple(rows),
        recession_mean=recession_mean,
        all_other_mean=float(other.mean()),
        window=window,
        metadata={
            "recession_aggregation": "pooled months; per-event means in 'per_recession'",
            "per_recession": per_recession,
        },
    )


def rolling_metatopic_weights(
    projection: ProjectionResult, topics: Sequence[str], mapping: MetatopicMap
) -> pd.DataFrame:
    """Aggregate metatopic weights of every window fit, indexed by window end."""
    ends = sorted(projection.fits)
    rows = [metatopic_weights(projection.fits[e], topics, mapping) for e in ends]
    return pd.DataFrame(rows, index=pd.PeriodIndex(ends, freq="M"))
