"""Growth transforms, OLS with Newey-West covariance, and probit recession models.

The HAC covariance uses Bartlett weights ``1 - l/(L+1)`` on the moment
contributions (``x_t * resid_t`` for OLS, score contributions for probit), so
``L = 0`` collapses to the heteroskedasticity-robust sandwich.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.special import log_ndtr, ndtr

from .errors import EstimationError, ValidationError
from .ingest import ARITH_DIFF, LOG_DIFF, MONTHLY, QUARTERLY, MacroSeries

log = logging.getLogger(__name__)

OLS = "ols"
PROBIT = "probit"

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def annualization_constant(frequency: str) -> float:
    return 1200.0 if frequency == MONTHLY else 400.0


def _full_range(values: pd.Series) -> pd.Series:
    idx = pd.period_range(values.index[0], values.index[-1], freq=values.index.freq)
    return values.reindex(idx)


def nabla(series: MacroSeries, h: int, annualization: float | None = None) -> pd.Series:
    """Annualized h-period-ahead growth, indexed by the forecast date t.

    Log series: ``c/(h+1) * ln(Y[t+h]/Y[t-1])``; arithmetic-difference series:
    ``c/(h+1) * (Y[t+h]-Y[t-1]) / 100`` so the units stay an annualized point
    change. The ``t-1`` base allows nowcasting when Y[t] is unobserved.
    """
    if h < 0:
        raise ValidationError("horizon must be >= 0")
    c = annualization if annualization is not None else annualization_constant(series.frequency)
    values = _full_range(series.values)
    ahead = values.shift(-h)
    base = values.shift(1)
    if series.transform_kind == LOG_DIFF:
        if ((values <= 0) & values.notna()).any():
            raise ValidationError(f"{series.name}: log transform needs positive values")
        out = (c / (h + 1)) * np.log(ahead / base)
    elif series.transform_kind == ARITH_DIFF:
        out = (c / (h + 1)) * (ahead - base) / 100.0
    else:
        raise ValidationError(f"{series.name}: level series has no growth transform")
    out = out.dropna()
    out.name = f"nabla{h}_{series.name}"
    return out


def bartlett_weights(lags: int) -> np.ndarray:
    """Kernel weights ``1 - l/(L+1)`` for l = 1..L."""
    if lags < 0:
        raise ValidationError("lag count must be >= 0")
    l = np.arange(1, lags + 1, dtype=float)
    return 1.0 - l / (lags + 1.0)


def _hac_moment_matrix(U: np.ndarray, lags: int) -> np.ndarray:
    """Long-run covariance of moment contributions with Bartlett weighting."""
    T = U.shape[0]
    S = U.T @ U
    for lag, weight in enumerate(bartlett_weights(lags), start=1):
        if lag >= T:
            break
        A = U[lag:].T @ U[:-lag]
        S += weight * (A + A.T)
    return S / T


def _check_full_rank(X: np.ndarray, names: Sequence[str]) -> None:
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        _, _, pivots = scipy.linalg.qr(X, pivoting=True, mode="economic")
        culprits = [names[j] for j in pivots[rank:]]
        raise EstimationError(f"design matrix is rank deficient; collinear columns: {culprits}")


@dataclass(frozen=True)
class RegressionFit:
    """Point estimates with a HAC covariance and fit statistics."""

    kind: str
    params: pd.Series
    cov: pd.DataFrame
    se: pd.Series
    r2: float
    T: int
    nw_lags: int
    residuals: np.ndarray
    fitted: np.ndarray
    design: pd.DataFrame
    y: pd.Series
    loglik: float | None = None
    loglik_path: tuple[float, ...] = ()


def _clean_sample(y: pd.Series, X: pd.DataFrame) -> tuple[pd.Series, pd.DataFrame]:
    joined = X.join(y.rename("__y__"), how="inner").dropna()
    if joined.empty:
        raise ValidationError("no complete observations after listwise deletion")
    return joined["__y__"], joined.drop(columns="__y__")


def ols_nw(y: pd.Series, X: pd.DataFrame, nw_lags: int) -> RegressionFit:
    """OLS point estimates with Newey-West standard errors.

    Rows with any missing cell are dropped listwise. The covariance is
    ``T (X'X)^-1 S (X'X)^-1`` with S the Bartlett-weighted long-run moment
    covariance of ``x_t * e_t``; the reported R^2 is unadjusted.
    """
    y, X = _clean_sample(y, X)
    names = list(X.columns)
    Xm = X.to_numpy(dtype=float)
    yv = y.to_numpy(dtype=float)
    T = len(yv)
    _check_full_rank(Xm, names)

    XtX = Xm.T @ Xm
    beta = np.linalg.solve(XtX, Xm.T @ yv)
    fitted = Xm @ beta
    resid = yv - fitted

    S = _hac_moment_matrix(Xm * resid[:, None], nw_lags)
    bread = np.linalg.inv(XtX)
    cov = T * bread @ S @ bread
    cov = (cov + cov.T) / 2.0

    sst = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / sst if sst > 0 else float("nan")
    return RegressionFit(
        kind=OLS,
        params=pd.Series(beta, index=names),
        cov=pd.DataFrame(cov, index=names, columns=names),
        se=pd.Series(np.sqrt(np.diag(cov)), index=names),
        r2=r2,
        T=T,
        nw_lags=nw_lags,
        residuals=resid,
        fitted=fitted,
        design=X,
        y=y,
    )


def _probit_parts(q_index: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Log-likelihood terms and their first two derivatives wrt the index.

    ``q_index`` is ``(2y-1) * x'b``. Uses the stable inverse-Mills form so the
    tails do not underflow.
    """
    lp = log_ndtr(q_index)
    d1 = np.exp(-0.5 * q_index**2 - lp) / _SQRT_2PI
    d2 = -d1 * (q_index + d1)
    return lp, d1, d2


def probit_nw(
    y: pd.Series,
    X: pd.DataFrame,
    nw_lags: int,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> RegressionFit:
    """Probit MLE via Newton iterations with a HAC sandwich on the scores.

    The log-likelihood is non-decreasing across iterations (step halving).
    Raises on perfect separation and on non-convergence.
    """
    y, X = _clean_sample(y, X)
    names = list(X.columns)
    Xm = X.to_numpy(dtype=float)
    yv = y.to_numpy(dtype=float)
    if not np.isin(yv, (0.0, 1.0)).all():
        raise ValidationError("probit dependent variable must be 0/1")
    if yv.min() == yv.max():
        raise EstimationError("probit dependent variable has no variation")
    T = len(yv)
    _check_full_rank(Xm, names)

    q = 2.0 * yv - 1.0
    beta = np.zeros(Xm.shape[1])
    loglik_path: list[float] = []

    m = Xm @ beta
    loglik = float(log_ndtr(q * m).sum())
    for _ in range(max_iter):
        loglik_path.append(loglik)
        lp, d1, d2 = _probit_parts(q * m)
        grad = Xm.T @ (q * d1)
        if np.max(np.abs(grad)) < tol:
            break
        if np.all((m > 0) == (yv == 1)) and np.min(np.abs(m)) > 8.0:
            raise EstimationError("perfect separation in probit sample")
        neg_hess = Xm.T @ (-d2[:, None] * Xm)
        try:
            step = np.linalg.solve(neg_hess, grad)
        except np.linalg.LinAlgError:
            raise EstimationError("singular Hessian in probit iteration") from None

        improved = False
        scale = 1.0
        for _ in range(60):
            cand = beta + scale * step
            m_cand = Xm @ cand
            ll_cand = float(log_ndtr(q * m_cand).sum())
            if ll_cand > loglik:
                beta, m, loglik = cand, m_cand, ll_cand
                improved = True
                break
            scale /= 2.0
        if not improved:
            break  # numerical plateau; the gradient check below decides

    lp, d1, d2 = _probit_parts(q * m)
    grad = Xm.T @ (q * d1)
    grad_norm = float(np.max(np.abs(grad)))
    if np.all((m > 0) == (yv == 1)) and float(lp.sum()) > -1e-4:
        # likelihood pinned at its unattainable supremum of zero
        raise EstimationError("perfect separation in probit sample")
    if grad_norm >= math.sqrt(tol):
        raise EstimationError(
            f"probit did not converge after {max_iter} iterations (gradient norm {grad_norm:.3e})"
        )
    loglik_path.append(float(lp.sum()))

    scores = Xm * (q * d1)[:, None]
    S = _hac_moment_matrix(scores, nw_lags)
    neg_hess = Xm.T @ (-d2[:, None] * Xm)
    bread = np.linalg.inv(neg_hess)
    cov = bread @ (T * S) @ bread
    cov = (cov + cov.T) / 2.0

    p1 = yv.mean()
    ll_null = T * (p1 * math.log(p1) + (1.0 - p1) * math.log(1.0 - p1))
    fitted = ndtr(m)
    return RegressionFit(
        kind=PROBIT,
        params=pd.Series(beta, index=names),
        cov=pd.DataFrame(cov, index=names, columns=names),
        se=pd.Series(np.sqrt(np.diag(cov)), index=names),
        r2=1.0 - float(lp.sum()) / ll_null,
        T=T,
        nw_lags=nw_lags,
        residuals=yv - fitted,
        fitted=fitted,
        design=X,
        y=y,
        loglik=float(lp.sum()),
        loglik_path=tuple(loglik_path),
    )


def recession_indicator(series: MacroSeries, h: int, rule: str = "any") -> pd.Series:
    """0/1 target equal to 1 when the window t..t+h contains a recession month.

    ``rule="terminal"`` instead marks only month t+h. Windows touching a gap
    in the input become missing and drop out at estimation time.
    """
    if rule not in ("any", "terminal"):
        raise ValidationError(f"unknown recession rule {rule!r}")
    values = _full_range(series.values)
    if not values.dropna().isin((0.0, 1.0)).all():
        raise ValidationError(f"{series.name}: recession indicator must be 0/1")
    if rule == "terminal":
        out = values.shift(-h)
    else:
        # forward-looking max over t..t+h
        out = values[::-1].rolling(window=h + 1, min_periods=h + 1).max()[::-1]
    out = out.dropna()
    out.name = f"recession{h}_{series.name}"
    return out


@dataclass(frozen=True)
class ForecastSpec:
    """One named forecasting regression."""

    name: str
    dependent: str
    horizon: int
    regressors: tuple[str, ...]
    kind: str = OLS
    lags: int = 3
    nw_lags: int = 3
    annualization: float | None = None
    recession_rule: str = "any"

    def __post_init__(self):
        if self.kind not in (OLS, PROBIT):
            raise ValidationError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == OLS and self.horizon < 1:
            raise ValidationError(f"{self.name}: forecasting horizon must be >= 1")
        if self.lags < 0 or self.nw_lags < 0:
            raise ValidationError(f"{self.name}: lag counts must be >= 0")


def build_design(
    spec: ForecastSpec, series_map: Mapping[str, MacroSeries], panel: pd.DataFrame
) -> tuple[pd.Series, pd.DataFrame]:
    """Dependent and design matrix (with intercept) for one spec, listwise-clean."""
    if spec.dependent not in series_map:
        raise ValidationError(f"{spec.name}: unknown dependent {spec.dependent!r}")
    dep = series_map[spec.dependent]
    missing = [r for r in spec.regressors if r not in panel.columns]
    if missing:
        raise ValidationError(f"{spec.name}: regressors not in panel: {missing}")

    if spec.kind == OLS:
        y = nabla(dep, spec.horizon, spec.annualization)
        cols: dict[str, pd.Series] = {}
        one_period = nabla(dep, 0, spec.annualization)
        for i in range(1, spec.lags + 1):
            cols[f"{spec.dependent}_dlag{i}"] = one_period.shift(i)
    else:
        y = recession_indicator(dep, spec.horizon, spec.recession_rule)
        cols = {}

    X = pd.DataFrame(cols) if cols else pd.DataFrame(index=y.index)
    X = X.join(panel[list(spec.regressors)], how="outer")
    X.insert(0, "const", 1.0)
    y, X = _clean_sample(y, X)
    return y, X


@dataclass(frozen=True)
class BatteryEntry:
    name: str
    spec: ForecastSpec
    fit: RegressionFit | None
    error: str | None = None


def run_forecast_battery(
    specs: Sequence[ForecastSpec],
    series_map: Mapping[str, MacroSeries],
    panel: pd.DataFrame,
    share_sample: bool = True,
) -> list[BatteryEntry]:
    """Fit every spec; a failed spec reports its error and does not abort the rest.

    With ``share_sample`` the specs whose dependents share a frequency are
    estimated on the intersection of their feasible samples, so horizons that
    reach further ahead clamp the common sample end.
    """
    designs: dict[str, tuple[pd.Series, pd.DataFrame]] = {}
    failures: dict[str, str] = {}
    for spec in specs:
        try:
            designs[spec.name] = build_design(spec, series_map, panel)
        except (ValidationError, EstimationError, KeyError) as exc:
            failures[spec.name] = str(exc)

    if share_sample:
        by_freq: dict[str, list[str]] = {}
        for spec in specs:
            if spec.name in designs:
                by_freq.setdefault(series_map[spec.dependent].frequency, []).append(spec.name)
        for names in by_freq.values():
            common = None
            for name in names:
                idx = designs[name][0].index
                common = idx if common is None else common.intersection(idx)
            for name in names:
                y, X = designs[name]
                designs[name] = (y.loc[common], X.loc[common])

    entries: list[BatteryEntry] = []
    for spec in specs:
        if spec.name in failures:
            entries.append(BatteryEntry(spec.name, spec, None, failures[spec.name]))
            continue
        y, X = designs[spec.name]
        try:
            if spec.kind == OLS:
                fit = ols_nw(y, X, spec.nw_lags)
            else:
                fit = probit_nw(y, X, spec.nw_lags)
            entries.append(BatteryEntry(spec.name, spec, fit))
        except (ValidationError, EstimationError) as exc:
            entries.append(BatteryEntry(spec.name, spec, None, str(exc)))
    return entries


def significance_stars(coef: float, se: float) -> str:
    """Two-sided normal stars at the 10/5/1 percent levels."""
    if se <= 0 or not math.isfinite(se):
        return ""
    z = abs(coef / se)
    if z >= 2.5758293035489004:
        return "***"
    if z >= 1.959963984540054:
        return "**"
    if z >= 1.6448536269514722:
        return "*"
    return ""


def regression_table(fit: RegressionFit, shap_rows: Mapping[str, float] | None = None) -> pd.DataFrame:
    """Paper-style column: one row per regressor plus R2/T (and SHAP) footers."""
    rows = []
    for name in fit.params.index:
        if name == "const":
            continue
        rows.append(
            {
                "regressor": name,
                "coef": float(fit.params[name]),
                "se": float(fit.se[name]),
                "stars": significance_stars(float(fit.params[name]), float(fit.se[name])),
            }
        )
    if "const" in fit.params.index:
        rows.append(
            {
                "regressor": "const",
                "coef": float(fit.params["const"]),
                "se": float(fit.se["const"]),
                "stars": significance_stars(float(fit.params["const"]), float(fit.se["const"])),
            }
        )
    rows.append({"regressor": "R2", "coef": fit.r2, "se": np.nan, "stars": ""})
    rows.append({"regressor": "T", "coef": float(fit.T), "se": np.nan, "stars": ""})
    for name, value in (shap_rows or {}).items():
        rows.append({"regressor": f"SHAP({name})", "coef": value, "se": np.nan, "stars": ""})
    return pd.DataFrame(rows, columns=["regressor", "coef", "se", "stars"])
