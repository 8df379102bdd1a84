"""Lasso projection of a target series onto attention features.

The solver minimizes ``(1/2T) * ||X w + a - y||^2 + lam * ||w||_1`` by cyclic
coordinate descent on internally standardized features (weights are reported
on the original scale, the intercept is unpenalized). The penalty is chosen by
five-fold cross-validation on contiguous time blocks and then augmented by a
fixed extra penalty of 1e-5 by default.

Window protocols:

* IS: training-window fitted values, then refit through month t and predict t
* OOS: refit through t-1 and apply the stale weights to month t
* BACKWARD: one fit on the training window applied to every earlier month
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd
from numba import njit

from .errors import EstimationError, ValidationError

log = logging.getLogger(__name__)

IS = "IS"
OOS = "OOS"
BACKWARD = "BACKWARD"

DEFAULT_EXTRA_PENALTY = 1e-5
DEFAULT_TOL = 1e-9
DEFAULT_MAX_SWEEPS = 10_000
DEFAULT_MIN_OBS = 24


@njit(cache=True)
def _cd_solve(G, b, lam, w, q, tol, max_sweeps, objective):  # pragma: no cover - jitted
    """Cyclic coordinate descent on the Gram form of the standardized problem.

    ``G = Xs.T Xs / T``, ``b = Xs.T yc / T``; ``w`` and ``q = G w`` are updated
    in place. ``objective`` (len max_sweeps) receives the penalized objective
    after each sweep up to an additive constant ``0.5 * var(y)``. Returns the
    number of sweeps run.

    Stops when the largest coordinate update falls below ``tol`` or when the
    float objective stops strictly decreasing: every real update lowers the
    objective by ``0.5 * gjj * delta^2``, so a flat float objective means the
    remaining moves are below numerical resolution (this bounds ridge-walking
    on exactly collinear features, where share columns sum to one).
    """
    n = b.shape[0]
    members = np.empty(n, dtype=np.int64)
    sweeps = 0
    prev_full = np.inf
    while sweeps < max_sweeps:
        # full sweep over every coordinate
        max_delta = 0.0
        for j in range(n):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            rho = b[j] - q[j] + gjj * w[j]
            if rho > lam:
                wj = (rho - lam) / gjj
            elif rho < -lam:
                wj = (rho + lam) / gjj
            else:
                wj = 0.0
            delta = wj - w[j]
            if delta != 0.0:
                w[j] = wj
                for kk in range(n):
                    q[kk] += G[kk, j] * delta
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        l1 = 0.0
        quad = 0.0
        for j in range(n):
            l1 += abs(w[j])
            quad += w[j] * (0.5 * q[j] - b[j])
        objective[sweeps] = quad + lam * l1
        sweeps += 1
        if max_delta < tol or objective[sweeps - 1] >= prev_full:
            break
        prev_full = objective[sweeps - 1]

        # cycle on the current active set before the next full sweep
        n_active = 0
        for j in range(n):
            if w[j] != 0.0:
                members[n_active] = j
                n_active += 1
        prev_in = objective[sweeps - 1]
        while sweeps < max_sweeps and n_active > 0:
            inner_delta = 0.0
            for jj in range(n_active):
                j = members[jj]
                gjj = G[j, j]
                rho = b[j] - q[j] + gjj * w[j]
                if rho > lam:
                    wj = (rho - lam) / gjj
                elif rho < -lam:
                    wj = (rho + lam) / gjj
                else:
                    wj = 0.0
                delta = wj - w[j]
                if delta != 0.0:
                    w[j] = wj
                    for kk in range(n):
                        q[kk] += G[kk, j] * delta
                    if abs(delta) > inner_delta:
                        inner_delta = abs(delta)
            l1 = 0.0
            quad = 0.0
            for j in range(n):
                l1 += abs(w[j])
                quad += w[j] * (0.5 * q[j] - b[j])
            objective[sweeps] = quad + lam * l1
            sweeps += 1
            if inner_delta < tol or objective[sweeps - 1] >= prev_in:
                break
            prev_in = objective[sweeps - 1]
    return sweeps


@njit(cache=True)
def _cd_path(G, b, lambdas, tol, max_sweeps):  # pragma: no cover - jitted
    """Warm-started coordinate descent along a descending penalty path."""
    n = b.shape[0]
    n_lam = lambdas.shape[0]
    W = np.zeros((n_lam, n))
    w = np.zeros(n)
    q = np.zeros(n)
    scratch = np.zeros(max_sweeps)
    for li in range(n_lam):
        _cd_solve(G, b, lambdas[li], w, q, tol, max_sweeps, scratch)
        for j in range(n):
            W[li, j] = w[j]
    return W


@dataclass(frozen=True)
class LassoFit:
    """One converged lasso fit with its internal standardization."""

    weights: np.ndarray
    intercept: float
    penalty: float
    window: tuple[pd.Period, pd.Period] | None = None
    feature_means: np.ndarray | None = None
    feature_scales: np.ndarray | None = None
    dropped: tuple[int, ...] = ()
    cv_penalty: float | None = None
    n_sweeps: int = 0
    objective_path: np.ndarray | None = None

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.weights)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X @ self.weights + self.intercept


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    dropped = scales == 0.0
    safe = np.where(dropped, 1.0, scales)
    return (X - means) / safe, means, safe, dropped


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _contiguous_folds(n: int, folds: int) -> list[np.ndarray]:
    return [block for block in np.array_split(np.arange(n), folds) if len(block)]


def lambda_grid_for(X, y, n_lambdas: int = 100, span: float = 1e-4) -> np.ndarray:
    """Descending log-spaced penalty grid from the full-shrinkage threshold."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    Xs, _, _, _ = _standardize(X)
    lam_max = float(np.max(np.abs(Xs.T @ (y - y.mean())))) / len(y)
    if lam_max <= 0.0:
        return np.array([])
    return np.geomspace(lam_max, span * lam_max, n_lambdas)


def fit_lasso(
    X,
    y,
    *,
    lam: float | None = None,
    lambda_grid: np.ndarray | None = None,
    n_lambdas: int = 100,
    folds: int = 5,
    extra_penalty: float = DEFAULT_EXTRA_PENALTY,
    penalty_mode: str = "additive",
    tol: float = DEFAULT_TOL,
    cv_tol: float = 1e-5,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    min_obs: int = DEFAULT_MIN_OBS,
    window: tuple[pd.Period, pd.Period] | None = None,
) -> LassoFit:
    """Fit the lasso projection on one data window.

    With ``lam`` given, that exact penalty is used. Otherwise the penalty is
    selected by ``folds``-fold cross-validation on contiguous time blocks over
    ``lambda_grid`` (by minimum mean validation MSE, ties to the larger
    penalty) and then combined with ``extra_penalty`` according to
    ``penalty_mode``: "additive" adds it, "fixed" uses ``extra_penalty``
    outright, "none" uses the selected value alone.

    The returned fit always converges at ``tol``; the fold fits used only to
    rank penalties run at the looser ``cv_tol``, which leaves the selection
    unchanged but avoids burning sweeps on deep-overfit grid points.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    T, n_feat = X.shape
    if len(y) != T:
        raise ValidationError(f"X has {T} rows but y has {len(y)}")
    if lam is None and T < min_obs:
        raise EstimationError(f"window has {T} observations, fewer than min_obs={min_obs}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValidationError("non-finite values in lasso inputs")
    if penalty_mode not in ("additive", "fixed", "none"):
        raise ValidationError(f"unknown penalty_mode {penalty_mode!r}")

    Xs, means, scales, dropped_mask = _standardize(X)
    if dropped_mask.any():
        log.warning("dropping %d constant feature(s)", int(dropped_mask.sum()))
    yc = y - y.mean()
    G = (Xs.T @ Xs) / T
    bvec = (Xs.T @ yc) / T

    cv_lam: float | None = None
    if lam is None:
        if lambda_grid is None:
            lambda_grid = lambda_grid_for(X, y, n_lambdas=n_lambdas)
        lambda_grid = np.asarray(lambda_grid, dtype=float)
        if len(lambda_grid) == 0:
            # target carries no signal at all: fully shrunk fit
            lam = extra_penalty if penalty_mode != "none" else 0.0
        else:
            cv_lam = _cross_validate(X, y, lambda_grid, folds, max(tol, cv_tol), max_sweeps)
            if penalty_mode == "additive":
                lam = cv_lam + extra_penalty
            elif penalty_mode == "fixed":
                lam = extra_penalty
            else:
                lam = cv_lam

    w = np.zeros(n_feat)
    q = np.zeros(n_feat)
    objective = np.zeros(max_sweeps)
    sweeps = int(_cd_solve(G, bvec, lam, w, q, tol, max_sweeps, objective))

    weights = w / scales
    weights[dropped_mask] = 0.0
    intercept = float(y.mean() - means @ weights)
    return LassoFit(
        weights=weights,
        intercept=intercept,
        penalty=float(lam),
        window=window,
        feature_means=means,
        feature_scales=scales,
        dropped=tuple(np.flatnonzero(dropped_mask)),
        cv_penalty=cv_lam,
        n_sweeps=sweeps,
        objective_path=objective[:sweeps].copy(),
    )


def _cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    lambdas: np.ndarray,
    folds: int,
    tol: float,
    max_sweeps: int,
) -> float:
    T = len(y)
    folds = max(2, min(folds, T // 2))
    mse = np.zeros((folds, len(lambdas)))
    for fi, val_idx in enumerate(_contiguous_folds(T, folds)):
        mask = np.ones(T, dtype=bool)
        mask[val_idx] = False
        X_tr, y_tr = X[mask], y[mask]
        X_va, y_va = X[val_idx], y[val_idx]
        Xs, means, scales, dropped = _standardize(X_tr)
        yc = y_tr - y_tr.mean()
        G = (Xs.T @ Xs) / len(y_tr)
        bvec = (Xs.T @ yc) / len(y_tr)
        W = _cd_path(G, bvec, lambdas, tol, max_sweeps)
        W = W / scales
        W[:, dropped] = 0.0
        intercepts = y_tr.mean() - W @ means
        preds = X_va @ W.T + intercepts
        mse[fi] = np.mean((preds - y_va[:, None]) ** 2, axis=0)
    # grid is descending, so argmin breaks ties toward the larger penalty
    return float(lambdas[int(np.argmin(mse.mean(axis=0)))])


def kkt_residuals(fit: LassoFit, X, y) -> tuple[np.ndarray, np.ndarray]:
    """Subgradient correlations ``xs_j . r / T`` on the standardized problem.

    Returns (correlations, active mask). At convergence the correlation is
    within the penalty for inactive features and equals ``penalty * sign(w)``
    for active ones.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    Xs = (X - fit.feature_means) / fit.feature_scales
    ws = fit.weights * fit.feature_scales
    r = (y - y.mean()) - Xs @ ws
    corr = Xs.T @ r / len(y)
    return corr, ws != 0.0


def max_kkt_violation(fit: LassoFit, X, y) -> float:
    """Largest violation of the stationarity conditions, for convergence audits."""
    corr, active = kkt_residuals(fit, X, y)
    lam = fit.penalty
    viol = 0.0
    for j in range(len(corr)):
        if j in fit.dropped:
            continue
        if active[j]:
            viol = max(viol, abs(corr[j] - lam * np.sign(fit.weights[j] * fit.feature_scales[j])))
        else:
            viol = max(viol, max(0.0, abs(corr[j]) - lam))
    return float(viol)


@dataclass(frozen=True)
class ProjectionResult:
    """A dated projection with per-month model provenance.

    ``provenance[t]`` is the window-end month of the fit that produced the
    value at ``t``. For IS months inside the training window the provenance is
    the training-window end; afterwards it equals ``t`` (IS) or ``t-1`` (OOS).
    BACKWARD months all share the fixed training window end.
    """

    mode: str
    values: pd.Series
    provenance: pd.Series
    fits: Mapping[pd.Period, LassoFit]
    skipped: tuple[pd.Period, ...] = ()

    @property
    def training_fit(self) -> LassoFit:
        first = self.provenance.iloc[0]
        return self.fits[first]


def _check_window_coverage(
    attention: pd.DataFrame, target: pd.Series, start: pd.Period, end: pd.Period
) -> pd.PeriodIndex:
    window = pd.period_range(start, end, freq="M")
    for name, idx in (("attention", attention.index), ("target", target.index)):
        missing = window.difference(idx)
        if len(missing):
            raise ValidationError(
                f"training window not fully covered by {name}: missing {list(missing[:4])}"
            )
    return window


def _feature_frame(attention: pd.DataFrame) -> pd.DataFrame:
    if not isinstance(attention.index, pd.PeriodIndex):
        raise ValidationError("attention matrix must be indexed by monthly periods")
    if attention.index.has_duplicates or not attention.index.is_monotonic_increasing:
        raise ValidationError("attention index must be sorted and unique")
    return attention


def expanding_project(
    attention: pd.DataFrame,
    target: pd.Series,
    training_window: tuple[pd.Period, pd.Period],
    mode: str = OOS,
    **lasso_kwargs,
) -> ProjectionResult:
    """Expanding-window projection in IS or OOS mode.

    The IS series covers the training window (fitted values of the
    training-window model) and every later month with a refit through that
    month. The OOS series starts at the first post-training month and uses the
    stale model fit through the prior month. Months missing the attention row
    (or, for refits, the target) are skipped and reported.
    """
    if mode not in (IS, OOS):
        raise ValidationError(f"mode must be IS or OOS, got {mode!r}")
    attention = _feature_frame(attention)
    start, end = (pd.Period(p, freq="M") for p in training_window)
    _check_window_coverage(attention, target, start, end)

    fits: dict[pd.Period, LassoFit] = {}

    def fit_through(last: pd.Period) -> LassoFit:
        if last not in fits:
            months = attention.index[(attention.index >= start) & (attention.index <= last)]
            months = months.intersection(target.index)
            fits[last] = fit_lasso(
                attention.loc[months].to_numpy(),
                target.loc[months].to_numpy(),
                window=(start, last),
                **lasso_kwargs,
            )
        return fits[last]

    values: dict[pd.Period, float] = {}
    provenance: dict[pd.Period, pd.Period] = {}
    skipped: list[pd.Period] = []

    training_fit = fit_through(end)
    if mode == IS:
        window_months = attention.index[(attention.index >= start) & (attention.index <= end)]
        preds = training_fit.predict(attention.loc[window_months].to_numpy())
        for month, value in zip(window_months, preds):
            values[month] = float(value)
            provenance[month] = end

    post = attention.index[attention.index > end]
    for month in post:
        if mode == IS:
            if month not in target.index:
                skipped.append(month)
                continue
            fit = fit_through(month)
            provenance[month] = month
        else:
            fit = fit_through(month - 1)
            provenance[month] = month - 1
        values[month] = float(fit.predict(attention.loc[month].to_numpy()[None, :])[0])

    months = pd.PeriodIndex(sorted(values), freq="M")
    return ProjectionResult(
        mode=mode,
        values=pd.Series([values[m] for m in months], index=months, dtype=float),
        provenance=pd.Series([provenance[m] for m in months], index=months),
        fits=fits,
        skipped=tuple(skipped),
    )


def backward_project(
    attention: pd.DataFrame,
    target: pd.Series,
    training_window: tuple[pd.Period, pd.Period],
    **lasso_kwargs,
) -> ProjectionResult:
    """Project a model trained on the modern window onto all earlier months."""
    attention = _feature_frame(attention)
    start, end = (pd.Period(p, freq="M") for p in training_window)
    _check_window_coverage(attention, target, start, end)

    history = attention.index[attention.index < start]
    if len(history) == 0:
        raise ValidationError("no attention rows before the training window")

    window_months = attention.index[(attention.index >= start) & (attention.index <= end)]
    window_months = window_months.intersection(target.index)
    fit = fit_lasso(
        attention.loc[window_months].to_numpy(),
        target.loc[window_months].to_numpy(),
        window=(start, end),
        **lasso_kwargs,
    )
    preds = fit.predict(attention.loc[history].to_numpy())
    return ProjectionResult(
        mode=BACKWARD,
        values=pd.Series(preds, index=history, dtype=float),
        provenance=pd.Series([end] * len(history), index=history),
        fits={end: fit},
    )


@dataclass(frozen=True)
class FitDiagnostics:
    """Table-style diagnostics of a projection against its target."""

    beta: float
    alpha: float
    se_beta: float
    se_alpha: float
    r2: float
    rmse: float
    mae: float
    T: int
    nw_lags: int


def fit_diagnostics(
    target: pd.Series, projected: pd.Series, nw_lags: int | None = None
) -> FitDiagnostics:
    """Regress the target on the projection with serial-correlation-robust errors.

    The lag count defaults to ``floor(T**0.25)``. RMSE and MAE are computed on
    the raw gap ``target - projected``, not on the regression residuals.
    """
    from .econometrics import ols_nw

    common = target.index.intersection(projected.index)
    if len(common) < 8:
        raise ValidationError(f"only {len(common)} overlapping dates, need at least 8")
    y = target.loc[common].astype(float)
    yhat = projected.loc[common].astype(float)
    if float(np.var(yhat.to_numpy())) <= 1e-300:
        raise EstimationError("projection has no variance; diagnostics undefined")
    T = len(common)
    lags = int(math.floor(T ** 0.25)) if nw_lags is None else int(nw_lags)
    X = pd.DataFrame({"const": np.ones(T), "projected": yhat.to_numpy()}, index=common)
    fit = ols_nw(y, X, nw_lags=lags)
    gap = y.to_numpy() - yhat.to_numpy()
    return FitDiagnostics(
        beta=float(fit.params["projected"]),
        alpha=float(fit.params["const"]),
        se_beta=float(fit.se["projected"]),
        se_alpha=float(fit.se["const"]),
        r2=float(fit.r2),
        rmse=float(np.sqrt(np.mean(gap**2))),
        mae=float(np.mean(np.abs(gap))),
        T=T,
        nw_lags=lags,
    )


def fit_log_frame(result: ProjectionResult) -> pd.DataFrame:
    """Per-window fit summary: penalty, intercept, and selection counts."""
    rows = []
    for window_end in sorted(result.fits):
        fit = result.fits[window_end]
        w = fit.weights
        rows.append(
            {
                "window_end": str(window_end),
                "lambda": fit.penalty,
                "intercept": fit.intercept,
                "n_selected": int(np.count_nonzero(w)),
                "n_positive": int(np.sum(w > 0)),
                "n_negative": int(np.sum(w < 0)),
            }
        )
    return pd.DataFrame(rows, columns=["window_end", "lambda", "intercept", "n_selected", "n_positive", "n_negative"])


def projection_frame(result: ProjectionResult) -> pd.DataFrame:
    """Projection series as a flat ``date,value,mode,window_end`` table."""
    return pd.DataFrame(
        {
            "date": [str(m) for m in result.values.index],
            "value": result.values.to_numpy(),
            "mode": result.mode,
            "window_end": [str(result.provenance[m]) for m in result.values.index],
        }
    )
