"""Unsupervised, context-aware quality-phrase tagging from attention maps.

Pipeline: mine per-document core phrases as silver labels, crop attention-map
features for candidate spans, train a small CNN span classifier, tag new
sentences, and evaluate by phrase ranking, keyphrase extraction and span
tagging.
"""

from .corpus import Document, SentenceTokens, load_corpus, tokenize_and_split, is_stopword
from .labelgen import Span, SpanLabel, mine_core_phrases, sample_negatives, gazetteer_match
from .attnfeat import (
    AttentionTensor,
    SpanFeature,
    extract_span_feature,
    generate_synthetic_corpus,
    make_provider,
)
from .classifier import ModelParams, TrainConfig, ModelCheckpoint, forward, train
from .tagger import Prediction, enumerate_spans, tag_sentence, tag_corpus
from .evaluate import (
    EvalReport,
    rank_phrases_global,
    tfidf_rank_document,
    evaluate_keyphrase,
    evaluate_tagging,
)

__version__ = "0.1.0"
