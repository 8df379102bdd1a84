"""Reconstruct a credit-market series from monthly news-topic attention and run
the projection, forecasting, attribution, and sentiment batteries on it."""

from .errors import EstimationError, ValidationError
from .ingest import (
    Document,
    IngestReport,
    MacroSeries,
    MetatopicMap,
    TopicDictionary,
    align,
    load_corpus,
    load_macro,
    load_metatopic_map,
    load_topic_dictionary,
)
from .text_pipeline import (
    TokenizedMonth,
    article_attention,
    compute_attention,
    lemmatize,
    load_stopwords,
    preprocess,
    tokenize_by_month,
)
from .sentiment import (
    SentimentLexicon,
    load_lexicon,
    polarity,
    sentiment_lm,
    sentiment_weighted,
    topic_sentiment,
)
from .projector import (
    LassoFit,
    ProjectionResult,
    backward_project,
    expanding_project,
    fit_diagnostics,
    fit_lasso,
    max_kkt_violation,
)
from .econometrics import (
    ForecastSpec,
    RegressionFit,
    bartlett_weights,
    nabla,
    ols_nw,
    probit_nw,
    recession_indicator,
    run_forecast_battery,
)
from .attribution import (
    MetatopicDecomposition,
    ShapReport,
    event_window_average,
    explained_variance,
    metatopic_series,
    metatopic_weights,
    rolling_metatopic_weights,
    shap_brute_force,
    shap_regression,
)
from .syndata import SynthConfig, gen_attention, gen_corpus, gen_macro, synth_bundle

__version__ = "0.1.0"
