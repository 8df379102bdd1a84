import numpy as np
import pandas as pd
import pytest

from textspread.errors import EstimationError, ValidationError
from textspread.projector import (
    BACKWARD,
    IS,
    OOS,
    backward_project,
    expanding_project,
    fit_diagnostics,
    fit_lasso,
    fit_log_frame,
    lambda_grid_for,
    max_kkt_violation,
)
from textspread.syndata import SynthConfig, gen_attention

from conftest import month, months


def orthonormal_design(rng, T, N):
    """Columns with zero mean and X'X/T = I, so the lasso has a closed form."""
    raw = rng.normal(size=(T, N + 1))
    raw[:, 0] = 1.0
    q, _ = np.linalg.qr(raw)
    return np.sqrt(T) * q[:, 1:]


def soft(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


class TestFitLasso:
    def test_matches_soft_threshold_oracle_on_orthonormal_design(self, rng):
        T, N = 200, 20
        X = orthonormal_design(rng, T, N)
        w_true = np.zeros(N)
        w_true[:5] = [2.0, -1.0, 0.5, 0.2, -0.05]
        y = X @ w_true + 0.3 * rng.normal(size=T) + 1.7
        lam = 0.1
        fit = fit_lasso(X, y, lam=lam)
        oracle = soft(X.T @ y / T, lam)
        assert np.max(np.abs(fit.weights - oracle)) < 1e-10
        assert max_kkt_violation(fit, X, y) < 1e-8

    def test_full_shrinkage_above_lambda_max(self, rng):
        X = rng.normal(size=(60, 6))
        y = rng.normal(size=60) + 4.2
        lam_max = lambda_grid_for(X, y)[0]
        fit = fit_lasso(X, y, lam=lam_max * 1.000001)
        assert np.all(fit.weights == 0.0)
        assert fit.intercept == pytest.approx(y.mean())

    def test_ols_limit_single_centered_feature(self, rng):
        x = rng.normal(size=80)
        x = x - x.mean()
        y = 1.5 * x + 0.2 * rng.normal(size=80)
        fit = fit_lasso(x[:, None], y, lam=0.0)
        expected = np.cov(x, y, ddof=0)[0, 1] / np.var(x)
        assert fit.weights[0] == pytest.approx(expected, abs=1e-10)

    def test_kkt_holds_after_cross_validation(self, rng):
        for trial in range(5):
            X = rng.normal(size=(90, 12))
            w = np.zeros(12)
            w[[1, 4, 7]] = [1.0, -2.0, 0.5]
            y = X @ w + 0.5 * rng.normal(size=90)
            fit = fit_lasso(X, y)
            assert max_kkt_violation(fit, X, y) < 1e-8

    def test_objective_monotone_across_sweeps(self, rng):
        X = rng.normal(size=(100, 30))
        y = rng.normal(size=100)
        fit = fit_lasso(X, y, lam=0.01)
        diffs = np.diff(fit.objective_path)
        assert np.all(diffs <= 1e-12)

    def test_constant_feature_dropped_with_zero_weight(self, rng, caplog):
        X = rng.normal(size=(50, 3))
        X[:, 1] = 7.0
        y = X[:, 0] * 2.0 + rng.normal(size=50)
        with caplog.at_level("WARNING"):
            fit = fit_lasso(X, y, lam=0.01)
        assert fit.weights[1] == 0.0
        assert fit.dropped == (1,)
        assert "constant feature" in caplog.text

    def test_non_finite_inputs_rejected(self, rng):
        X = rng.normal(size=(40, 2))
        y = rng.normal(size=40)
        X[3, 1] = np.nan
        with pytest.raises(ValidationError, match="non-finite"):
            fit_lasso(X, y, lam=0.1)

    def test_min_obs_enforced_for_cv_fits(self, rng):
        X = rng.normal(size=(10, 2))
        y = rng.normal(size=10)
        with pytest.raises(EstimationError, match="fewer than min_obs"):
            fit_lasso(X, y)

    def test_additive_extra_penalty(self, rng):
        X = rng.normal(size=(60, 4))
        y = X[:, 0] + 0.1 * rng.normal(size=60)
        fit = fit_lasso(X, y, extra_penalty=1e-5, penalty_mode="additive")
        assert fit.penalty == pytest.approx(fit.cv_penalty + 1e-5)
        fixed = fit_lasso(X, y, extra_penalty=1e-5, penalty_mode="fixed")
        assert fixed.penalty == 1e-5

    def test_constant_target_yields_intercept_only(self, rng):
        X = rng.normal(size=(40, 3))
        y = np.full(40, 2.5)
        fit = fit_lasso(X, y, min_obs=24)
        assert np.all(fit.weights == 0.0)
        assert fit.intercept == pytest.approx(2.5)


def planted_problem(seed, T=120, K=12, train=72, snr=20.0):
    cfg = SynthConfig(seed=seed, T=T, K=K, sparsity=3, snr=snr, train_months=train)
    return cfg, gen_attention(cfg)


class TestExpandingProject:
    def test_oos_starts_first_post_training_month(self):
        cfg, syn = planted_problem(1)
        res = expanding_project(syn.attention, syn.target, cfg.training_window, mode=OOS, min_obs=24)
        assert res.values.index[0] == cfg.training_window[1] + 1
        assert all(res.provenance[m] == m - 1 for m in res.values.index)

    def test_is_training_values_equal_training_model_fit(self):
        cfg, syn = planted_problem(2)
        start, end = cfg.training_window
        res = expanding_project(syn.attention, syn.target, (start, end), mode=IS, min_obs=24)
        training_fit = res.fits[end]
        inside = res.values[res.values.index <= end]
        expected = training_fit.predict(syn.attention.loc[inside.index].to_numpy())
        assert np.allclose(inside.to_numpy(), expected)
        post = res.values.index[res.values.index > end]
        assert all(res.provenance[m] == m for m in post)

    def test_oos_causal_under_future_target_perturbation(self):
        cfg, syn = planted_problem(3)
        res = expanding_project(syn.attention, syn.target, cfg.training_window, mode=OOS, min_obs=24)
        t = res.values.index[5]
        bumped = syn.target.copy()
        bumped.loc[bumped.index >= t] += 9.9
        res2 = expanding_project(syn.attention, bumped, cfg.training_window, mode=OOS, min_obs=24)
        assert res2.values.loc[t] == res.values.loc[t]

    def test_nesting_is_at_window_end_equals_oos_next_month_on_copied_row(self):
        cfg, syn = planted_problem(4)
        start, end = cfg.training_window
        attention = syn.attention.copy()
        attention.loc[end + 1] = attention.loc[end].to_numpy()
        attention = attention.sort_index()
        is_res = expanding_project(attention, syn.target, (start, end), mode=IS, min_obs=24)
        oos_res = expanding_project(attention, syn.target, (start, end), mode=OOS, min_obs=24)
        assert oos_res.values.loc[end + 1] == is_res.values.loc[end]

    def test_target_gap_month_skipped_in_is_mode(self):
        cfg, syn = planted_problem(5)
        start, end = cfg.training_window
        gap_month = end + 3
        target = syn.target.drop(gap_month)
        res = expanding_project(syn.attention, target, (start, end), mode=IS, min_obs=24)
        assert gap_month in res.skipped
        assert gap_month not in res.values.index

    def test_attention_gap_month_absent_from_output(self):
        cfg, syn = planted_problem(6)
        start, end = cfg.training_window
        gap_month = end + 4
        attention = syn.attention.drop(index=gap_month)
        res = expanding_project(attention, syn.target, (start, end), mode=OOS, min_obs=24)
        assert gap_month not in res.values.index

    def test_training_window_coverage_enforced(self):
        cfg, syn = planted_problem(7)
        start, end = cfg.training_window
        attention = syn.attention.drop(index=start + 5)
        with pytest.raises(ValidationError, match="not fully covered"):
            expanding_project(attention, syn.target, (start, end), mode=OOS, min_obs=24)

    def test_fit_log_columns(self):
        cfg, syn = planted_problem(8, T=90, train=72)
        res = expanding_project(syn.attention, syn.target, cfg.training_window, mode=OOS, min_obs=24)
        frame = fit_log_frame(res)
        assert list(frame.columns) == [
            "window_end", "lambda", "intercept", "n_selected", "n_positive", "n_negative",
        ]
        assert (frame["n_selected"] == frame["n_positive"] + frame["n_negative"]).all()


class TestBackwardProject:
    def test_covers_only_pre_training_months(self):
        cfg, syn = planted_problem(9)
        start, end = month("1976-01"), month("1982-12")
        res = backward_project(syn.attention, syn.target, (start, end), min_obs=24)
        assert res.values.index.max() == start - 1
        assert res.values.index.min() == syn.attention.index.min()
        assert res.mode == BACKWARD
        assert (res.provenance == end).all()

    def test_gap_months_get_no_value(self):
        cfg, syn = planted_problem(10)
        start, end = month("1976-01"), month("1982-12")
        gap = month("1974-03")
        attention = syn.attention.drop(index=gap)
        res = backward_project(attention, syn.target, (start, end), min_obs=24)
        assert gap not in res.values.index
        assert month("1974-02") in res.values.index

    def test_constant_attention_gives_constant_series(self):
        idx = months("1970-01", 60)
        theta = np.full((60, 4), 0.25)
        attention = pd.DataFrame(theta, index=idx, columns=list("abcd"))
        rng = np.random.default_rng(0)
        target = pd.Series(rng.normal(size=60), index=idx)
        res = backward_project(attention, target, (month("1972-01"), month("1974-12")), min_obs=24)
        assert res.values.nunique() == 1

    def test_requires_history(self):
        cfg, syn = planted_problem(11)
        with pytest.raises(ValidationError, match="before the training window"):
            backward_project(syn.attention, syn.target, cfg.training_window, min_obs=24)

    def test_backward_causal_under_target_perturbation(self):
        cfg, syn = planted_problem(12)
        start, end = month("1976-01"), month("1982-12")
        res = backward_project(syn.attention, syn.target, (start, end), min_obs=24)
        bumped = syn.target.copy()
        bumped.loc[bumped.index < start] += 5.0  # pre-training target is never used
        res2 = backward_project(syn.attention, bumped, (start, end), min_obs=24)
        pd.testing.assert_series_equal(res.values, res2.values)


class TestFitDiagnostics:
    def test_identity_projection(self):
        idx = months("1990-01", 40)
        y = pd.Series(np.sin(np.arange(40.0)), index=idx)
        diag = fit_diagnostics(y, y.copy())
        assert diag.beta == pytest.approx(1.0, abs=1e-12)
        assert diag.alpha == pytest.approx(0.0, abs=1e-12)
        assert diag.r2 == pytest.approx(1.0, abs=1e-12)
        assert diag.rmse == 0.0 and diag.mae == 0.0

    def test_matches_two_variable_normal_equations_oracle(self, rng):
        idx = months("1990-01", 8)
        yhat = pd.Series(rng.normal(size=8), index=idx)
        y = pd.Series(0.5 + 1.3 * yhat.to_numpy() + 0.1 * rng.normal(size=8), index=idx)
        diag = fit_diagnostics(y, yhat)
        # closed-form two-variable OLS
        x = yhat.to_numpy()
        beta = ((x - x.mean()) @ (y.to_numpy() - y.to_numpy().mean())) / ((x - x.mean()) @ (x - x.mean()))
        alpha = y.to_numpy().mean() - beta * x.mean()
        assert diag.beta == pytest.approx(beta, abs=1e-12)
        assert diag.alpha == pytest.approx(alpha, abs=1e-12)
        assert diag.T == 8
        assert diag.nw_lags == 1  # floor(8**0.25)

    def test_requires_eight_overlapping_dates(self):
        idx = months("1990-01", 7)
        y = pd.Series(np.arange(7.0), index=idx)
        with pytest.raises(ValidationError, match="at least 8"):
            fit_diagnostics(y, y.copy())

    def test_degenerate_projection_variance_rejected(self):
        idx = months("1990-01", 20)
        y = pd.Series(np.arange(20.0), index=idx)
        flat = pd.Series(np.ones(20), index=idx)
        with pytest.raises(EstimationError, match="no variance"):
            fit_diagnostics(y, flat)

    def test_rmse_mae_use_raw_gap_not_regression_residuals(self):
        idx = months("1990-01", 30)
        rng = np.random.default_rng(1)
        yhat = pd.Series(rng.normal(size=30), index=idx)
        y = 2.0 * yhat + 1.0  # perfect regression fit, nonzero raw gap
        diag = fit_diagnostics(y, yhat)
        gap = (y - yhat).to_numpy()
        assert diag.r2 == pytest.approx(1.0, abs=1e-12)
        assert diag.rmse == pytest.approx(np.sqrt(np.mean(gap**2)))
        assert diag.mae == pytest.approx(np.mean(np.abs(gap)))


class TestSupportRecoverySmoke:
    def test_planted_support_recovered(self):
        hits = 0
        for seed in range(5):
            cfg = SynthConfig(seed=seed, T=150, K=40, sparsity=4, snr=8.0, train_months=150)
            syn = gen_attention(cfg)
            fit = fit_lasso(syn.attention.to_numpy(), syn.target.to_numpy())
            if set(syn.planted).issubset(set(fit.selected)):
                hits += 1
        assert hits >= 4
