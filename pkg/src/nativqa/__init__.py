"""NativQA: construct, validate, and benchmark native question-answering
datasets harvested from search engines via a human-in-the-loop workflow."""

from .annotation import (
    AgreementReport,
    AnnotationResult,
    advance,
    edit_agreement_rate,
    fleiss_kappa,
    normalized_levenshtein,
    resolve_pair,
)
from .collection import CollectionConfig, collect, filter_by_language
from .corpus import (
    CollectionRun,
    Locale,
    QAPair,
    Query,
    Topic,
    dedup_key,
    normalize_text,
    token_count,
)
from .domains import DomainRecord, aggregate_label, extract_domain, filter_reliable
from .evaluation import (
    build_finetune_records,
    build_zero_shot_prompt,
    evaluate_testset,
    llm_judge_rating,
    parse_model_response,
)
from .metrics import bleu, embedding_f1, rouge1_f
from .queries import build_seed_set, expand_query, ingest_seeds
from .splits import SplitSpec, corpus_stats, export_dataset, stratified_split

__version__ = "0.1.0"

__all__ = [
    "AgreementReport",
    "AnnotationResult",
    "CollectionConfig",
    "CollectionRun",
    "DomainRecord",
    "Locale",
    "QAPair",
    "Query",
    "SplitSpec",
    "Topic",
    "advance",
    "aggregate_label",
    "bleu",
    "build_finetune_records",
    "build_seed_set",
    "build_zero_shot_prompt",
    "collect",
    "corpus_stats",
    "dedup_key",
    "edit_agreement_rate",
    "embedding_f1",
    "evaluate_testset",
    "expand_query",
    "export_dataset",
    "extract_domain",
    "filter_by_language",
    "filter_reliable",
    "fleiss_kappa",
    "ingest_seeds",
    "llm_judge_rating",
    "normalize_text",
    "normalized_levenshtein",
    "parse_model_response",
    "resolve_pair",
    "rouge1_f",
    "stratified_split",
    "token_count",
]
