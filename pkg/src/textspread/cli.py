"""Subcommand pipeline runner: synth -> vectorize -> project -> decompose ->
forecast -> report.

All commands read one declarative JSON config (paths are resolved relative to
the config file) and write CSV artifacts plus a JSON manifest into the run
directory. Writes are atomic (temp file + rename) and outputs carry no
wall-clock state, so a rerun with the same inputs is byte-identical.

Exit codes: 0 ok, 2 config/validation error, 3 estimation failure,
4 missing upstream artifact.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import attribution, sentiment, syndata, text_pipeline
from .econometrics import ForecastSpec, regression_table, run_forecast_battery
from .errors import EstimationError, ValidationError
from .ingest import (
    MONTHLY,
    QUARTERLY,
    MacroSeries,
    load_corpus,
    load_macro,
    load_metatopic_map,
    load_topic_dictionary,
)
from .projector import (
    BACKWARD,
    IS,
    OOS,
    LassoFit,
    ProjectionResult,
    backward_project,
    expanding_project,
    fit_diagnostics,
    fit_log_frame,
    projection_frame,
)

log = logging.getLogger("textspread")

_FLOAT_FORMAT = "%.17g"


class ArtifactMissing(FileNotFoundError):
    """An artifact a previous pipeline step should have produced is absent."""


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    frame.to_csv(tmp, index=False, float_format=_FLOAT_FORMAT)
    os.replace(tmp, path)


def _write_json(payload, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _require_artifact(path: Path) -> Path:
    if not path.exists():
        raise ArtifactMissing(str(path))
    return path


class RunContext:
    """Resolved config plus the run directory layout."""

    def __init__(self, config_path: str | Path, out_override: str | None = None):
        self.config_path = Path(config_path)
        if not self.config_path.exists():
            raise ValidationError(f"config file not found: {self.config_path}")
        try:
            self.config = json.loads(self.config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
        self.base = self.config_path.parent
        out = out_override or self.config.get("out", "run")
        self.out = Path(out) if Path(out).is_absolute() else self.base / out
        self.out.mkdir(parents=True, exist_ok=True)

    def path(self, relative: str) -> Path:
        p = Path(relative)
        return p if p.is_absolute() else self.base / p

    def input_path(self, key: str) -> Path:
        inputs = self.config.get("inputs", {})
        if key not in inputs or inputs[key] is None:
            raise ValidationError(f"config inputs.{key} is not set")
        p = self.path(inputs[key])
        if not p.exists():
            raise ValidationError(f"config inputs.{key}: no such file {p}")
        return p

    def artifact(self, name: str) -> Path:
        return _require_artifact(self.out / name)

    def training_window(self) -> tuple[pd.Period, pd.Period]:
        training = self.config.get("training")
        if not training:
            raise ValidationError("config is missing the 'training' window")
        start = pd.Period(training["start"], freq="M")
        end = pd.Period(training["end"], freq="M")
        if end < start:
            raise ValidationError("training window is not well ordered")
        return start, end

    def macro_series(self) -> dict[str, MacroSeries]:
        macro_cfg = self.config.get("inputs", {}).get("macro", {})
        if not macro_cfg:
            raise ValidationError("config inputs.macro is empty")
        out: dict[str, MacroSeries] = {}
        for name, entry in macro_cfg.items():
            path = self.path(entry["path"])
            if not path.exists():
                raise ValidationError(f"config inputs.macro.{name}: no such file {path}")
            out[name] = load_macro(
                path,
                name,
                frequency=entry.get("frequency", MONTHLY),
                transform_kind=entry.get("transform", "level"),
            )
        return out


def _month_strings(index: pd.PeriodIndex) -> list[str]:
    return [str(m) for m in index]


def _read_artifact_csv(path: Path) -> pd.DataFrame:
    # exact float round-trip so downstream stages see the written values bit-for-bit
    return pd.read_csv(_require_artifact(path), float_precision="round_trip")


def _read_month_value_csv(path: Path, value_col: str = "value") -> pd.Series:
    frame = _read_artifact_csv(path)
    series = pd.Series(
        frame[value_col].to_numpy(dtype=float),
        index=pd.PeriodIndex(frame["month"], freq="M"),
    )
    return series.sort_index()


def _read_wide_csv(path: Path, column: str) -> pd.DataFrame:
    frame = _read_artifact_csv(path)
    order = list(dict.fromkeys(frame[column]))
    wide = frame.pivot(index="month", columns=column, values=frame.columns[-1])
    wide = wide[order]
    wide.index = pd.PeriodIndex(wide.index, freq="M")
    wide.columns.name = None
    return wide.sort_index()


def _read_projection_csv(path: Path) -> tuple[pd.Series, pd.Series, str]:
    frame = _read_artifact_csv(path)
    idx = pd.PeriodIndex(frame["date"], freq="M")
    values = pd.Series(frame["value"].to_numpy(dtype=float), index=idx)
    provenance = pd.Series(pd.PeriodIndex(frame["window_end"], freq="M"), index=idx)
    mode = str(frame["mode"].iloc[0]) if len(frame) else ""
    return values, provenance, mode


def _load_projection_result(
    ctx: RunContext, name: str, mode: str, feature_names: list[str], window_start: pd.Period
) -> ProjectionResult:
    """Rebuild a projection from its CSV artifacts (weights, fit log, series)."""
    values, provenance, _ = _read_projection_csv(ctx.artifact(f"projection_{name}_{mode}.csv"))
    fitlog = _read_artifact_csv(ctx.out / f"fit_log_{name}_{mode}.csv")
    weights_frame = _read_artifact_csv(ctx.out / f"weights_{name}_{mode}.csv")

    fits: dict[pd.Period, LassoFit] = {}
    sparse: dict[str, dict[str, float]] = {}
    for _, row in weights_frame.iterrows():
        sparse.setdefault(str(row["window_end"]), {})[str(row["feature"])] = float(row["weight"])
    for _, row in fitlog.iterrows():
        end = pd.Period(row["window_end"], freq="M")
        w = np.zeros(len(feature_names))
        for feature, value in sparse.get(str(row["window_end"]), {}).items():
            w[feature_names.index(feature)] = value
        fits[end] = LassoFit(
            weights=w,
            intercept=float(row["intercept"]),
            penalty=float(row["lambda"]),
            window=(window_start, end),
        )
    return ProjectionResult(mode=mode, values=values, provenance=provenance, fits=fits)


# ---------------------------------------------------------------- subcommands


def cmd_synth(ctx: RunContext, seed: int | None) -> int:
    cfg_raw = dict(ctx.config.get("synth", {}))
    if seed is not None:
        cfg_raw["seed"] = seed
    cfg = syndata.SynthConfig(**cfg_raw)
    bundle_dir = ctx.out
    syndata.synth_bundle(cfg, bundle_dir)
    log.info("synthetic bundle written to %s", bundle_dir)
    return 0


def cmd_vectorize(ctx: RunContext) -> int:
    corpus_path = ctx.input_path("corpus")
    dictionary = load_topic_dictionary(ctx.input_path("dictionary"))
    lexicon = sentiment.load_lexicon(
        ctx.input_path("lexicon_positive"), ctx.input_path("lexicon_negative")
    )
    stop_cfg = ctx.config.get("inputs", {}).get("stopwords")
    stopwords = text_pipeline.load_stopwords(ctx.path(stop_cfg) if stop_cfg else None)

    date_range = None
    range_cfg = ctx.config.get("inputs", {}).get("corpus_range")
    if range_cfg:
        import datetime as dt

        date_range = (dt.date.fromisoformat(range_cfg[0]), dt.date.fromisoformat(range_cfg[1]))

    docs, report = load_corpus(corpus_path, date_range)
    article_tokens = [(doc.month, text_pipeline.preprocess(doc.body, stopwords)) for doc in docs]

    pools: dict[pd.Period, list[str]] = {}
    for month, tokens in article_tokens:
        pools.setdefault(month, []).extend(tokens)
    months = [text_pipeline.TokenizedMonth(m, tuple(pools[m])) for m in sorted(pools)]

    attention = text_pipeline.compute_attention(months, dictionary)
    long = attention.stack().rename("share").reset_index()
    long.columns = ["month", "topic", "share"]
    long["month"] = long["month"].astype(str)
    _write_csv(long, ctx.out / "attention.csv")

    lm = sentiment.sentiment_lm(((m.month, m.tokens) for m in months), lexicon)
    lm_frame = pd.DataFrame(
        {
            "month": _month_strings(lm.values.index),
            "value": lm.values.to_numpy(),
            "flagged": [int(m in lm.zero_months) for m in lm.values.index],
        }
    )
    _write_csv(lm_frame, ctx.out / "sent_lm.csv")

    topic_sent = sentiment.topic_sentiment(article_tokens, lexicon, dictionary)
    ts_long = topic_sent.stack().rename("value").reset_index()
    ts_long.columns = ["month", "topic", "value"]
    ts_long["month"] = ts_long["month"].astype(str)
    _write_csv(ts_long, ctx.out / "topic_sentiment.csv")

    _write_json(
        {
            "loaded": report.loaded,
            "dropped_empty": report.dropped_empty,
            "dropped_out_of_range": report.dropped_out_of_range,
            "gap_months": [str(m) for m in report.gap_months],
            "attention_months": len(attention),
        },
        ctx.out / "ingest_report.json",
    )
    log.info("vectorize: %d months, %d topics", len(attention), attention.shape[1])
    return 0


def _projection_features(ctx: RunContext, kind: str) -> pd.DataFrame:
    if kind == "attention":
        return _read_wide_csv(ctx.out / "attention.csv", "topic")
    if kind == "sent_lm":
        series = _read_month_value_csv(ctx.out / "sent_lm.csv")
        return series.to_frame(name="sent_lm")
    raise ValidationError(f"unknown projection feature source {kind!r}")


def cmd_project(ctx: RunContext) -> int:
    series_map = ctx.macro_series()
    start, end = ctx.training_window()
    projections = ctx.config.get("projections")
    if not projections:
        raise ValidationError("config has no 'projections' entries")

    lasso_cfg = ctx.config.get("lasso", {})
    diag_rows = []
    for entry in projections:
        name = entry["name"]
        target_name = entry.get("target") or ctx.config.get("target")
        if target_name not in series_map:
            raise ValidationError(f"projection {name!r}: unknown target {target_name!r}")
        target = series_map[target_name].values
        features = _projection_features(ctx, entry.get("features", "attention"))
        training = (
            (pd.Period(entry["training"][0], freq="M"), pd.Period(entry["training"][1], freq="M"))
            if "training" in entry
            else (start, end)
        )

        for mode in entry.get("modes", [OOS]):
            if mode == BACKWARD:
                result = backward_project(features, target, training, **lasso_cfg)
            else:
                result = expanding_project(features, target, training, mode=mode, **lasso_cfg)

            _write_csv(projection_frame(result), ctx.out / f"projection_{name}_{mode}.csv")
            _write_csv(fit_log_frame(result), ctx.out / f"fit_log_{name}_{mode}.csv")
            weight_rows = []
            for window_end in sorted(result.fits):
                fit = result.fits[window_end]
                for j in fit.selected:
                    weight_rows.append(
                        {
                            "window_end": str(window_end),
                            "feature": features.columns[j],
                            "weight": fit.weights[j],
                        }
                    )
            _write_csv(
                pd.DataFrame(weight_rows, columns=["window_end", "feature", "weight"]),
                ctx.out / f"weights_{name}_{mode}.csv",
            )

            for segment, subset in _diagnostic_segments(result, training):
                common = target.index.intersection(subset.index)
                if len(common) < 8:
                    continue
                diag = fit_diagnostics(target.loc[common], subset.loc[common])
                diag_rows.append(
                    {
                        "projection": name,
                        "mode": mode,
                        "segment": segment,
                        "beta": diag.beta,
                        "alpha": diag.alpha,
                        "se_beta": diag.se_beta,
                        "se_alpha": diag.se_alpha,
                        "R2": diag.r2,
                        "T": diag.T,
                        "RMSE": diag.rmse,
                        "MAE": diag.mae,
                    }
                )
            log.info("projected %s mode=%s (%d months)", name, mode, len(result.values))

    _write_csv(
        pd.DataFrame(
            diag_rows,
            columns=[
                "projection", "mode", "segment", "beta", "alpha",
                "se_beta", "se_alpha", "R2", "T", "RMSE", "MAE",
            ],
        ),
        ctx.out / "diagnostics.csv",
    )
    return 0


def _diagnostic_segments(result: ProjectionResult, training) -> list[tuple[str, pd.Series]]:
    start, end = training
    values = result.values
    if result.mode == IS:
        return [
            ("training", values[(values.index >= start) & (values.index <= end)]),
            ("full", values),
            ("post", values[values.index > end]),
        ]
    if result.mode == OOS:
        return [("post", values)]
    return [("historical", values)]


def cmd_decompose(ctx: RunContext) -> int:
    cfg = ctx.config.get("decompose")
    if not cfg:
        raise ValidationError("config has no 'decompose' section")
    name = cfg.get("projection")
    if not name:
        raise ValidationError("decompose.projection is not set")

    dictionary = load_topic_dictionary(ctx.input_path("dictionary"))
    mapping = load_metatopic_map(ctx.input_path("metatopics"), dictionary.topics)
    attention = _read_wide_csv(ctx.out / "attention.csv", "topic")
    feature_names = list(attention.columns)
    start, _ = ctx.training_window()

    series_mode = cfg.get("series_mode", OOS)
    series_proj = _load_projection_result(ctx, name, series_mode, feature_names, start)

    target_name = cfg.get("target") or ctx.config.get("target")
    series_map = ctx.macro_series()
    if target_name not in series_map:
        raise ValidationError(f"decompose: unknown target {target_name!r}")
    target = series_map[target_name].values

    decomp = attribution.metatopic_series(series_proj, attention, mapping, target)
    comp_long = decomp.components.stack().rename("value").reset_index()
    comp_long.columns = ["date", "metatopic", "value"]
    comp_long["date"] = comp_long["date"].astype(str)
    _write_csv(comp_long, ctx.out / "metatopic_series.csv")

    summary_mode = cfg.get("summary_mode", IS)
    try:
        summary_proj = _load_projection_result(ctx, name, summary_mode, feature_names, start)
    except ArtifactMissing:
        summary_proj = series_proj
    latest = max(summary_proj.fits)
    latest_fit = summary_proj.fits[latest]
    weights_m = attribution.metatopic_weights(latest_fit, feature_names, mapping)
    variance = attribution.explained_variance(latest_fit, attention, mapping)
    _write_csv(
        pd.DataFrame(
            {
                "metatopic": list(weights_m.index),
                "explained_variance": variance.to_numpy(),
                "raw_weight": weights_m.to_numpy(),
            }
        ),
        ctx.out / "metatopic_summary.csv",
    )

    rolling = attribution.rolling_metatopic_weights(summary_proj, feature_names, mapping)
    roll_long = rolling.stack().rename("weight").reset_index()
    roll_long.columns = ["window_end", "metatopic", "weight"]
    roll_long["window_end"] = roll_long["window_end"].astype(str)
    _write_csv(roll_long, ctx.out / "rolling_weights.csv")

    topic_sent = _read_wide_csv(ctx.out / "topic_sentiment.csv", "topic")
    sent_a = sentiment.sentiment_weighted(topic_sent, series_proj)
    _write_csv(
        pd.DataFrame({"month": _month_strings(sent_a.index), "value": sent_a.to_numpy()}),
        ctx.out / "sent_a.csv",
    )

    events_cfg = cfg.get("events", [])
    if events_cfg:
        events_mode = cfg.get("events_mode", series_mode)
        if events_mode == series_mode:
            events_values = series_proj.values
        else:
            events_values, _, _ = _read_projection_csv(
                ctx.out / f"projection_{name}_{events_mode}.csv"
            )
        recessions = [pd.Period(p, freq="M") for p in cfg.get("recessions", [])]
        report = attribution.event_window_average(
            events_values,
            [(str(label), pd.Period(month, freq="M")) for label, month in events_cfg],
            recessions=recessions,
            window=int(cfg.get("window", 12)),
        )
        rows = [
            {"event": ev.name, "window_mean": np.nan if ev.mean is None else ev.mean}
            for ev in report.events
        ]
        if report.recession_mean is not None:
            rows.append({"event": "NBER Recessions", "window_mean": report.recession_mean})
        rows.append({"event": "All Other Months", "window_mean": report.all_other_mean})
        _write_csv(pd.DataFrame(rows, columns=["event", "window_mean"]), ctx.out / "events.csv")
    return 0


def _build_panel(ctx: RunContext, series_map: dict[str, MacroSeries]) -> pd.DataFrame:
    panel_cfg = ctx.config.get("panel", {})
    resolved: dict[str, pd.Series] = {}
    pending = dict(panel_cfg)
    guard = len(pending) + 1
    while pending and guard:
        guard -= 1
        for key in list(pending):
            entry = pending[key]
            if "macro" in entry:
                src = entry["macro"]
                if src not in series_map:
                    raise ValidationError(f"panel.{key}: unknown macro series {src!r}")
                resolved[key] = series_map[src].values
                del pending[key]
            elif "projection" in entry:
                values, _, _ = _read_projection_csv(
                    ctx.out / f"projection_{entry['projection']}_{entry.get('mode', OOS)}.csv"
                )
                resolved[key] = values
                del pending[key]
            elif "difference" in entry:
                a, b = entry["difference"]
                if a in resolved and b in resolved:
                    left, right = resolved[a], resolved[b]
                    common = left.index.intersection(right.index)
                    resolved[key] = left.loc[common] - right.loc[common]
                    del pending[key]
            else:
                raise ValidationError(f"panel.{key}: unknown source {entry!r}")
    if pending:
        raise ValidationError(f"panel entries could not be resolved: {sorted(pending)}")
    if not resolved:
        raise ValidationError("config has no 'panel' section")
    index = None
    for series in resolved.values():
        index = series.index if index is None else index.union(series.index)
    return pd.DataFrame({k: v.reindex(index) for k, v in resolved.items()}, index=index)


def _quarterly_panel(panel: pd.DataFrame) -> pd.DataFrame:
    # final-month-of-quarter values, matching the "last" aggregation rule
    ends = panel.index[panel.index.month.isin((3, 6, 9, 12))]
    quarterly = panel.loc[ends]
    quarterly.index = ends.asfreq("Q")
    return quarterly


def cmd_forecast(ctx: RunContext) -> int:
    batteries = ctx.config.get("batteries")
    if not batteries:
        raise ValidationError("config has no 'batteries' entries")
    series_map = ctx.macro_series()
    panel = _build_panel(ctx, series_map)
    panel_q = _quarterly_panel(panel)

    for battery in batteries:
        bname = battery["name"]
        specs = []
        for raw in battery.get("specs", []):
            specs.append(
                ForecastSpec(
                    name=raw["name"],
                    dependent=raw["dependent"],
                    horizon=int(raw["horizon"]),
                    regressors=tuple(raw.get("regressors", ())),
                    kind=raw.get("kind", "ols"),
                    lags=int(raw.get("lags", 3)),
                    nw_lags=int(raw.get("nw_lags", 3)),
                    annualization=raw.get("annualization"),
                    recession_rule=raw.get("recession_rule", "any"),
                )
            )
        freqs = {series_map[s.dependent].frequency for s in specs if s.dependent in series_map}
        use_panel = panel_q if freqs == {QUARTERLY} else panel
        entries = run_forecast_battery(
            specs, series_map, use_panel, share_sample=bool(battery.get("share_sample", True))
        )
        shap_names = battery.get("shap", [])
        errors = {}
        for entry in entries:
            if entry.fit is None:
                errors[entry.name] = entry.error
                continue
            shap_rows = {}
            if shap_names:
                report = attribution.shap_regression(entry.fit)
                for sname in shap_names:
                    if sname in report.normalized_importance.index:
                        shap_rows[sname] = float(report.normalized_importance[sname])
            _write_csv(
                regression_table(entry.fit, shap_rows),
                ctx.out / f"forecast_{bname}_{entry.name}.csv",
            )
        if errors:
            _write_json(errors, ctx.out / f"forecast_{bname}_errors.json")
            log.warning("battery %s: %d spec(s) failed", bname, len(errors))
    return 0


def cmd_report(ctx: RunContext) -> int:
    report_cfg = ctx.config.get("report", {})
    tables = report_cfg.get("tables", {})
    if not tables:
        raise ValidationError("config report.tables is empty")

    report_dir = ctx.out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    manifest: dict = {
        "config_sha256": _sha256(ctx.config_path),
        "inputs": {},
        "tables": {},
    }
    inputs_cfg = ctx.config.get("inputs", {})
    for key, value in sorted(inputs_cfg.items()):
        if key == "macro":
            for name, entry in sorted(value.items()):
                path = ctx.path(entry["path"])
                if path.exists():
                    manifest["inputs"][f"macro.{name}"] = _sha256(path)
        elif isinstance(value, str):
            path = ctx.path(value)
            if path.exists():
                manifest["inputs"][key] = _sha256(path)

    sources = {name: ctx.path(rel) for name, rel in sorted(tables.items())}
    for src in sources.values():
        _require_artifact(src)
    for table_name, src in sources.items():
        dest = report_dir / f"{table_name}.csv"
        tmp = dest.with_name(dest.name + ".tmp")
        shutil.copyfile(src, tmp)
        os.replace(tmp, dest)
        manifest["tables"][table_name] = {"file": dest.name, "sha256": _sha256(dest)}

    _write_json(manifest, report_dir / "manifest.json")
    log.info("report bundle at %s (%d tables)", report_dir, len(tables))
    return 0


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textspread",
        description="news-attention reconstruction of credit-spread series",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synth", "vectorize", "project", "decompose", "forecast", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--out", default=None, help="override the output directory")
        if name == "synth":
            p.add_argument("--seed", type=int, default=None, help="override the synth seed")
    return parser


_DISPATCH = {
    "vectorize": cmd_vectorize,
    "project": cmd_project,
    "decompose": cmd_decompose,
    "forecast": cmd_forecast,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        ctx = RunContext(args.config, args.out)
        if args.command == "synth":
            return cmd_synth(ctx, args.seed)
        return _DISPATCH[args.command](ctx)
    except ArtifactMissing as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 4
    except (ValidationError, FileNotFoundError, KeyError, TypeError) as exc:
        print(f"config/validation error: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"estimation failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
