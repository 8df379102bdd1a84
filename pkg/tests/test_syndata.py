import json

import numpy as np
import pandas as pd
import pytest

from textspread.errors import ValidationError
from textspread.ingest import load_corpus, load_topic_dictionary
from textspread.projector import expanding_project, fit_diagnostics
from textspread.syndata import (
    SynthConfig,
    gen_attention,
    gen_corpus,
    gen_dictionary,
    gen_macro,
    synth_bundle,
    write_corpus,
    write_dictionary,
)
from textspread.text_pipeline import compute_attention, tokenize_by_month


class TestGenAttention:
    def test_rows_on_simplex(self):
        syn = gen_attention(SynthConfig(seed=0, T=50, K=20, sparsity=5))
        theta = syn.attention.to_numpy()
        assert np.all(theta >= 0)
        assert np.allclose(theta.sum(axis=1), 1.0, atol=1e-12)

    def test_infinite_snr_gives_perfect_training_fit(self):
        cfg = SynthConfig(seed=1, T=80, K=10, sparsity=3, snr=None, train_months=60)
        syn = gen_attention(cfg)
        result = expanding_project(
            syn.attention, syn.target, cfg.training_window, mode="IS", min_obs=24
        )
        window = result.values.index <= cfg.training_window[1]
        diag = fit_diagnostics(syn.target, result.values[window])
        assert diag.r2 > 0.999

    def test_seed_reproducibility_byte_identical(self):
        cfg = SynthConfig(seed=7, T=40, K=8, sparsity=2)
        one = gen_attention(cfg)
        two = gen_attention(cfg)
        assert one.attention.to_csv() == two.attention.to_csv()
        assert one.target.to_csv() == two.target.to_csv()
        assert np.array_equal(one.weights, two.weights)

    def test_snr_controls_noise_scale(self):
        low = gen_attention(SynthConfig(seed=3, T=200, K=10, sparsity=3, snr=1.0))
        high = gen_attention(SynthConfig(seed=3, T=200, K=10, sparsity=3, snr=100.0))
        assert low.noise_scale > high.noise_scale

    def test_sparsity_bound_validated(self):
        with pytest.raises(ValidationError):
            SynthConfig(K=5, sparsity=6)


class TestGenCorpus:
    def test_single_topic_vocabulary_yields_degenerate_row(self):
        cfg = SynthConfig(seed=0, T=6, K=3, sparsity=1, docs_per_month=2, tokens_per_month=300)
        idx = cfg.months
        attention = pd.DataFrame(
            np.tile([1.0, 0.0, 0.0], (6, 1)), index=idx, columns=list(cfg.topics)
        )
        corpus = gen_corpus(cfg, attention)
        months = tokenize_by_month(corpus.documents)
        recovered = compute_attention(months, corpus.dictionary)
        assert np.allclose(recovered.iloc[:, 0].to_numpy(), 1.0)

    def test_60_40_mix_recovered_within_sampling_error(self):
        cfg = SynthConfig(
            seed=4, T=12, K=2, sparsity=1, docs_per_month=5, tokens_per_month=10_000,
            vocab_per_topic=2,
        )
        attention = pd.DataFrame(
            np.tile([0.6, 0.4], (12, 1)), index=cfg.months, columns=list(cfg.topics)
        )
        corpus = gen_corpus(cfg, attention)
        recovered = compute_attention(tokenize_by_month(corpus.documents), corpus.dictionary)
        assert np.max(np.abs(recovered.to_numpy() - attention.to_numpy())) < 0.02

    def test_pipeline_attention_equals_realized_shares_exactly(self):
        cfg = SynthConfig(seed=5, T=10, K=6, sparsity=2, docs_per_month=3, tokens_per_month=500)
        corpus = gen_corpus(cfg)
        recovered = compute_attention(tokenize_by_month(corpus.documents), corpus.dictionary)
        assert np.max(np.abs(recovered.to_numpy() - corpus.realized_attention.to_numpy())) == 0.0

    def test_convergence_with_token_budget(self):
        gaps = []
        for tokens in (1000, 4000, 16000):
            cfg = SynthConfig(
                seed=6, T=8, K=4, sparsity=2, docs_per_month=4, tokens_per_month=tokens
            )
            syn = gen_attention(cfg)
            corpus = gen_corpus(cfg, syn.attention)
            recovered = compute_attention(tokenize_by_month(corpus.documents), corpus.dictionary)
            gaps.append(np.abs(recovered.to_numpy() - syn.attention.to_numpy()).mean())
        assert gaps[2] < gaps[0]

    def test_generated_files_validate_against_ingest_schema(self, tmp_path):
        cfg = SynthConfig(seed=7, T=6, K=4, sparsity=2, docs_per_month=3, tokens_per_month=200)
        corpus = gen_corpus(cfg)
        write_corpus(corpus.documents, tmp_path / "c.jsonl")
        write_dictionary(corpus.dictionary, tmp_path / "d.json")
        docs, report = load_corpus(tmp_path / "c.jsonl")
        assert report.loaded == len(corpus.documents)
        loaded = load_topic_dictionary(tmp_path / "d.json")
        assert loaded.topics == corpus.dictionary.topics
        assert loaded.terms == dict(corpus.dictionary.terms)


class TestGenMacro:
    def test_link_coefficient_recovered_by_regression(self):
        cfg = SynthConfig(seed=8, T=400, K=6, sparsity=2, snr=10.0, macro_links=(("EMP", -2.0),))
        syn = gen_attention(cfg)
        macro = gen_macro(cfg, syn.target)
        from textspread.econometrics import ForecastSpec, build_design, ols_nw

        panel = pd.DataFrame({"Y": syn.target}, index=syn.target.index)
        spec = ForecastSpec(name="emp", dependent="EMP", horizon=1, regressors=("Y",), lags=0, nw_lags=3)
        y, X = build_design(spec, macro, panel)
        fit = ols_nw(y, X, nw_lags=3)
        # the planted link is -2 on the centered target at horizon 1
        assert fit.params["Y"] == pytest.approx(-2.0, abs=0.5)

    def test_recession_indicator_is_binary(self):
        cfg = SynthConfig(seed=9, T=60, K=4, sparsity=2)
        syn = gen_attention(cfg)
        macro = gen_macro(cfg, syn.target)
        assert set(np.unique(macro["NBER"].values.to_numpy())) <= {0.0, 1.0}


class TestSynthBundle:
    def test_bundle_writes_inputs_and_config(self, tmp_path):
        cfg = SynthConfig(
            seed=10, T=30, K=4, sparsity=2, train_months=24, docs_per_month=2,
            tokens_per_month=200, n_metatopics=2,
        )
        run_config = synth_bundle(cfg, tmp_path)
        for name in (
            "corpus.jsonl", "dictionary.json", "metatopics.json",
            "lexicon_positive.txt", "lexicon_negative.txt", "ebp.csv", "run_config.json",
        ):
            assert (tmp_path / name).exists(), name
        stored = json.loads((tmp_path / "run_config.json").read_text())
        assert stored == run_config
        metatopics = json.loads((tmp_path / "metatopics.json").read_text())
        members = [t for v in metatopics.values() for t in v]
        assert sorted(members) == sorted(cfg.topics)

    def test_bundle_deterministic(self, tmp_path):
        cfg = SynthConfig(seed=11, T=20, K=3, sparsity=1, train_months=12,
                          docs_per_month=2, tokens_per_month=150, n_metatopics=2)
        synth_bundle(cfg, tmp_path / "a")
        synth_bundle(cfg, tmp_path / "b")
        for name in ("corpus.jsonl", "dictionary.json", "ebp.csv", "emp.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
