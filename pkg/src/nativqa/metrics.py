"""Lexical and embedding-based similarity metrics for answer evaluation.

BLEU here is sentence-level: modified n-gram precision up to order 4 with
uniform 1/4 weights and the standard brevity penalty; higher orders get
add-one smoothing so short-but-correct answers are not zeroed out. ROUGE-1
is the clipped unigram-overlap F measure. The embedding F1 consumes token
vectors from a pluggable, language-specific encoder and aggregates them with
greedy-max cosine matching.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

import numpy as np

BLEU_MAX_ORDER = 4


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypothesis: str, reference: str) -> float:
    """Sentence BLEU with uniform weights and add-one smoothing for n >= 2."""
    hyp = hypothesis.split()
    ref = reference.split()
    if not hyp or not ref:
        return 0.0

    log_sum = 0.0
    for n in range(1, BLEU_MAX_ORDER + 1):
        hyp_counts = _ngrams(hyp, n)
        ref_counts = _ngrams(ref, n)
        matched = sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
        total = max(0, len(hyp) - n + 1)
        if n == 1:
            if matched == 0:
                return 0.0
            precision = matched / total
        else:
            precision = (matched + 1) / (total + 1)
        log_sum += math.log(precision) / BLEU_MAX_ORDER

    brevity = 1.0 if len(hyp) >= len(ref) else math.exp(1.0 - len(ref) / len(hyp))
    return brevity * math.exp(log_sum)


def rouge1_f(hypothesis: str, reference: str) -> float:
    """Clipped unigram overlap F measure; 0 when either side is empty."""
    hyp = Counter(hypothesis.split())
    ref = Counter(reference.split())
    hyp_total = sum(hyp.values())
    ref_total = sum(ref.values())
    if hyp_total == 0 or ref_total == 0:
        return 0.0
    overlap = sum(min(count, ref[token]) for token, count in hyp.items())
    precision = overlap / hyp_total
    recall = overlap / ref_total
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def embedding_f1(
    hyp_vectors: Sequence[Sequence[float]], ref_vectors: Sequence[Sequence[float]]
) -> float:
    """Greedy-max cosine matching aggregated into an F1 score.

    Recall averages, over reference tokens, the best similarity to any
    hypothesis token; precision mirrors it over hypothesis tokens.
    """
    hyp = np.asarray(hyp_vectors, dtype=float)
    ref = np.asarray(ref_vectors, dtype=float)
    if hyp.size == 0 or ref.size == 0:
        raise ValueError("embedding_f1 needs non-empty vector lists")
    if hyp.ndim != 2 or ref.ndim != 2 or hyp.shape[1] != ref.shape[1]:
        raise ValueError(
            f"vector dimension mismatch: {hyp.shape} vs {ref.shape}"
        )
    hyp_norm = hyp / np.maximum(np.linalg.norm(hyp, axis=1, keepdims=True), 1e-12)
    ref_norm = ref / np.maximum(np.linalg.norm(ref, axis=1, keepdims=True), 1e-12)
    similarity = hyp_norm @ ref_norm.T  # hyp x ref
    precision = float(similarity.max(axis=1).mean())
    recall = float(similarity.max(axis=0).mean())
    if precision + recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
