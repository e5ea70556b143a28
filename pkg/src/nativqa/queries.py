"""Seed-query ingestion, LLM query expansion, and the de-duplicated seed set.

The seed set fed to harvesting is the union of manually written queries and
LLM-synthesized variants, de-duplicated by exact string matching. Manual
entries win ties so human-authored topic coverage survives expansion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import (
    Locale,
    MalformedRecordError,
    Query,
    Topic,
    ValidationError,
    dedup_key,
    make_query,
    normalize_text,
    read_jsonl,
)
from .providers import LLMProvider, parse_string_list

log = logging.getLogger(__name__)

RECOMMENDED_BATCH_RANGE = (10, 50)

EXPANSION_SYSTEM_PROMPT = "You are an expert for query expansion."

EXPANSION_USER_TEMPLATE = (
    "For the following query, please try to expand it. "
    "Please provide output in a list in a JSON format.\n"
    "Query: {query}\n"
    "Expanded Queries:"
)


@dataclass(frozen=True)
class SeedBatch:
    """One author's seed queries for one (locale, topic)."""

    locale: Locale
    topic: Topic
    author: str
    queries: tuple[str, ...]

    def __post_init__(self):
        if not self.queries:
            raise ValidationError("seed batch must contain at least one query")


@dataclass(frozen=True)
class ExpansionRequest:
    query: Query
    fanout: int = 10

    def __post_init__(self):
        if self.fanout < 1:
            raise ValidationError("fanout must be >= 1")


def ingest_seeds(batch: SeedBatch) -> list[Query]:
    """Turn a seed batch into manual Queries, dropping in-batch duplicates.

    Empty strings are dropped with a warning; a batch where nothing survives
    normalization is rejected outright.
    """
    lo, hi = RECOMMENDED_BATCH_RANGE
    if not lo <= len(batch.queries) <= hi:
        log.warning(
            "seed batch for %s/%s has %d queries (recommended %d-%d)",
            batch.locale.key, batch.topic.name, len(batch.queries), lo, hi,
        )
    out: list[Query] = []
    seen: set[str] = set()
    for raw in batch.queries:
        if not normalize_text(raw):
            log.warning("dropping empty seed query from author %s", batch.author)
            continue
        query = make_query(raw, batch.locale, batch.topic, provenance="manual", iteration=0)
        key = dedup_key(query)
        if key in seen:
            continue
        seen.add(key)
        out.append(query)
    if not out:
        raise ValidationError("seed batch is empty after normalization")
    return out


def build_expansion_prompt(query: Query) -> tuple[str, str]:
    return EXPANSION_SYSTEM_PROMPT, EXPANSION_USER_TEMPLATE.format(query=query.text)


def expand_query(
    req: ExpansionRequest,
    provider: LLMProvider,
    temperature: float = 0.0,
) -> list[Query]:
    """Ask the provider for similar queries; never aborts on a bad payload.

    Returns up to ``fanout`` synthesized Queries, de-duplicated within the
    response and against the input query. An unparseable payload yields an
    empty list plus a logged diagnostic.
    """
    system, user = build_expansion_prompt(req.query)
    raw = provider.chat(system, user, temperature=temperature)
    items, warnings = parse_string_list(raw)
    for msg in warnings:
        log.warning("expansion of %r: %s", req.query.text, msg)
    input_key = dedup_key(req.query)
    out: list[Query] = []
    seen: set[str] = {input_key}
    for text in items:
        if len(out) >= req.fanout:
            break
        try:
            query = make_query(
                text, req.query.locale, req.query.topic, provenance="synthesized", iteration=0
            )
        except MalformedRecordError:
            log.warning("expansion of %r: dropped empty item", req.query.text)
            continue
        key = dedup_key(query)
        if key in seen:
            continue
        seen.add(key)
        out.append(query)
    return out


def build_seed_set(manual: list[Query], synthesized: list[Query]) -> list[Query]:
    """Union with exact-match de-duplication; manual entries win ties.

    Order is deterministic: manual queries in input order, then surviving
    synthesized queries in input order.
    """
    locales = {q.locale for q in manual} | {q.locale for q in synthesized}
    if len(locales) > 1:
        raise ValidationError(f"mixed locales in seed set: {sorted(l.key for l in locales)}")
    out: list[Query] = []
    seen: set[str] = set()
    for query in manual:
        key = dedup_key(query)
        if key not in seen:
            seen.add(key)
            out.append(query)
    for query in synthesized:
        key = dedup_key(query)
        if key not in seen:
            seen.add(key)
            out.append(query)
    return out


@dataclass
class SeedFileReport:
    """Ingestion summary: per-locale and total seed counts."""

    per_locale: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.per_locale.values())


def load_seed_file(
    path: str | Path,
    tiers: dict[str, str] | None = None,
) -> tuple[dict[str, list[Query]], SeedFileReport]:
    """Read per-line seed records {text, topic, language, location, author}.

    Returns queries grouped by locale key plus an ingestion report. ``tiers``
    maps locale keys to resource tiers (default "medium").
    """
    tiers = tiers or {}
    batches: dict[tuple, list[str]] = {}
    authors: dict[tuple, str] = {}
    for rec in read_jsonl(path):
        locale = Locale(
            rec["language"], rec["location"],
            tiers.get(f"{rec['language']}-{rec['location']}", "medium"),
        )
        group = (locale, rec["topic"])
        batches.setdefault(group, []).append(rec["text"])
        authors.setdefault(group, rec.get("author", "unknown"))
    grouped: dict[str, list[Query]] = {}
    report = SeedFileReport()
    for (locale, topic), texts in batches.items():
        batch = SeedBatch(locale, Topic(topic), authors[(locale, topic)], tuple(texts))
        queries = ingest_seeds(batch)
        merged = build_seed_set(grouped.get(locale.key, []) , queries)
        grouped[locale.key] = merged
        report.per_locale[locale.key] = len(merged)
    return grouped, report
